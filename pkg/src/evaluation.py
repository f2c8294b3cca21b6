"""
Bag scoring, FPR-constrained threshold tuning and detection metrics.

A bag is flagged when its maximum segment score is strictly greater than
the threshold t. The threshold is tuned on clean data: among the observed
clean scores, the smallest t whose false-positive rate FP(t)/N does not
exceed the target is chosen, since it gives the highest recall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.config import TARGET_FPR
from src.errors import ConfigError, EmptyInputError, UndefinedMetricError
from src.formats import BagRecord
from src.model import MilModel

logger = logging.getLogger(__name__)

GRANULARITIES = ("bag", "segment")


@dataclass
class ScoreRow:
    bag_id: str
    corrupted: bool
    segment_scores: np.ndarray
    kinds: Optional[list[str]] = None

    @property
    def score(self) -> float:
        return bag_score(self.segment_scores)


@dataclass
class ScoreTable:
    """One row per bag: truth, per-segment scores and corruption kinds."""
    rows: list[ScoreRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.rows])

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.corrupted for r in self.rows], dtype=bool)

    def clean(self) -> "ScoreTable":
        return ScoreTable([r for r in self.rows if not r.corrupted])

    def units(self, granularity: str = "bag") -> np.ndarray:
        """Scores of every bag, or of every segment of every bag."""
        if granularity == "bag":
            return self.scores
        if granularity == "segment":
            if not self.rows:
                return np.zeros(0)
            return np.concatenate([r.segment_scores for r in self.rows])
        raise ConfigError(f"Unknown granularity {granularity!r}; expected one of {GRANULARITIES}")


@dataclass
class ThresholdResult:
    threshold: float
    achieved_fpr: float
    target_fpr: float
    granularity: str
    n_clean: int


@dataclass
class RecallResult:
    recall: float
    true_positives: list[str]
    true_negatives: list[str]
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass
class KindRecall:
    n_bags: int
    detected: int

    @property
    def recall(self) -> float:
        return self.detected / self.n_bags


@dataclass
class MetricsReport:
    model: str
    threshold: float
    recall_at_fpr: float
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int
    per_kind: dict[str, KindRecall] = field(default_factory=dict)
    roc: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def fpr(self) -> float:
        negatives = self.fp + self.tn
        return self.fp / negatives if negatives else 0.0


def bag_score(segment_scores: Sequence[float]) -> float:
    """Bag score is the maximum segment score."""
    if len(segment_scores) == 0:
        raise EmptyInputError("Cannot score an empty bag")
    return float(np.max(segment_scores))


def score_bags(model: MilModel, features: np.ndarray, records: list[BagRecord]) -> ScoreTable:
    """Score every segment of every bag with a trained model."""
    if len(features) != len(records):
        raise ConfigError(f"{len(features)} feature bags but {len(records)} bag records")
    return ScoreTable([
        ScoreRow(r.bag_id, r.corrupted, model.segment_scores(x), r.kinds)
        for x, r in zip(features, records)
    ])


def tune_threshold(clean_scores: Sequence[float], target_fpr: float = TARGET_FPR,
                   granularity: str = "bag") -> ThresholdResult:
    """
    Smallest observed clean score t with FP(t)/N <= target_fpr.

    FP(t) counts clean units scoring strictly above t, so it is
    non-increasing in t and the largest observed score is always feasible.
    """
    scores = np.sort(np.asarray(clean_scores, dtype=np.float64))
    if scores.size == 0:
        raise EmptyInputError("Threshold tuning needs at least one clean score")
    if not 0.0 <= target_fpr <= 1.0:
        raise ConfigError(f"Target FPR must lie in [0, 1], got {target_fpr}")

    n = scores.size
    candidates = np.unique(scores)
    fp = n - np.searchsorted(scores, candidates, side="right")
    feasible = np.flatnonzero(fp / n <= target_fpr)
    if feasible.size:
        best = int(feasible[0])
        t, fp_t = float(candidates[best]), int(fp[best])
    else:
        t, fp_t = float(scores[-1]), 0

    logger.info(f"Tuned {granularity} threshold {t:.6g}: FPR {fp_t}/{n} (target {target_fpr})")
    return ThresholdResult(t, fp_t / n, target_fpr, granularity, n)


def tune_on_table(table: ScoreTable, target_fpr: float = TARGET_FPR,
                  granularity: str = "bag") -> ThresholdResult:
    """Tune on the clean bags of a score table."""
    return tune_threshold(table.clean().units(granularity), target_fpr, granularity)


def recall_at_fpr(table: ScoreTable, t: float) -> RecallResult:
    """Recall of corrupted bags under h_t(B) = [max_i f(i) > t]."""
    tp, fn, fp, tn = [], [], [], []
    for row in table.rows:
        flagged = row.score > t
        if row.corrupted:
            (tp if flagged else fn).append(row.bag_id)
        else:
            (fp if flagged else tn).append(row.bag_id)

    if not tp and not fn:
        raise UndefinedMetricError("Recall is undefined without corrupted bags")
    return RecallResult(len(tp) / (len(tp) + len(fn)), tp, tn, len(tp), len(fp), len(tn), len(fn))


def roc_auc(table: ScoreTable) -> tuple[list[tuple[float, float, float]], float]:
    """
    ROC curve over every distinct score (strict >) and its trapezoidal AUC.

    Returns:
        ([(fpr, tpr, threshold), ...] from (0, 0) to (1, 1), AUC)
    """
    scores, labels = table.scores, table.labels
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both corrupted and clean bags")

    values, inverse = np.unique(scores, return_inverse=True)
    pos = np.bincount(inverse, weights=labels.astype(np.float64), minlength=len(values))[::-1]
    neg = np.bincount(inverse, weights=(~labels).astype(np.float64), minlength=len(values))[::-1]
    # units strictly above the i-th largest distinct score
    tpr = np.concatenate([[0.0], np.cumsum(pos)[:-1]]) / n_pos
    fpr = np.concatenate([[0.0], np.cumsum(neg)[:-1]]) / n_neg

    points = [(float(f), float(t), float(v)) for f, t, v in zip(fpr, tpr, values[::-1])]
    points.append((1.0, 1.0, float("-inf")))

    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
    return points, auc


def per_kind_report(table: ScoreTable, t: float) -> dict[str, KindRecall]:
    """Recall within each corruption kind; kinds with no bags are absent."""
    report: dict[str, KindRecall] = {}
    for row in table.rows:
        for kind in row.kinds or []:
            entry = report.setdefault(kind, KindRecall(0, 0))
            entry.n_bags += 1
            entry.detected += int(row.score > t)
    return dict(sorted(report.items()))


def evaluate(table: ScoreTable, t: float, model: str) -> MetricsReport:
    """Recall, AUC, confusion counts and per-kind recall at threshold t."""
    recall = recall_at_fpr(table, t)
    roc, auc = roc_auc(table)
    report = MetricsReport(
        model=model,
        threshold=t,
        recall_at_fpr=recall.recall,
        auc=auc,
        tp=recall.tp,
        fp=recall.fp,
        tn=recall.tn,
        fn=recall.fn,
        per_kind=per_kind_report(table, t),
        roc=roc,
    )
    logger.info(
        f"[{model}] recall {report.recall_at_fpr:.4f} at t={t:.6g} "
        f"(FPR {report.fpr:.4f}), AUC {auc:.4f}"
    )
    return report
