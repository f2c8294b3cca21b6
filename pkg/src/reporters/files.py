import csv
import json
import logging
from pathlib import Path

from src.formats import FORMAT_VERSION
from .base import BaseReporter, RunReport

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
ROC_FILE = "roc.csv"
PER_KIND_FILE = "per_kind.csv"
TRAIN_LOG_FILE = "train_log.csv"
COMPARISON_FILE = "comparison.csv"
THRESHOLD_FILE = "threshold.json"


def _num(value) -> str:
    # repr keeps every float digit so reruns are byte-identical
    return repr(float(value)) if isinstance(value, float) else str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_num(v) for v in row])


class FileReporter(BaseReporter):
    """Write plot-ready CSV tables and threshold.json into the run's output directory."""

    name = "files"

    def is_configured(self) -> bool:
        return True

    async def publish(self, report: RunReport) -> bool:
        if report.out_dir is None:
            logger.warning(f"[{self.name}] No output directory, skipping")
            return False

        out = Path(report.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            written = []

            if report.metrics is not None:
                self.write_metrics(out, report)
                written += [METRICS_FILE, ROC_FILE, PER_KIND_FILE]
            if report.train_log:
                self.write_train_log(out, report)
                written.append(TRAIN_LOG_FILE)
            if report.comparison:
                self.write_comparison(out, report)
                written.append(COMPARISON_FILE)
            if report.threshold is not None:
                self.write_threshold(out, report)
                written.append(THRESHOLD_FILE)

            logger.info(f"[{self.name}] Wrote {', '.join(written) or 'nothing'} to {out}")
            return True

        except OSError as e:
            logger.error(f"[{self.name}] Could not write to {out}: {e}")
            return False

    def write_metrics(self, out: Path, report: RunReport) -> None:
        m = report.metrics
        rows = [
            ["recall_at_fpr", m.model, m.recall_at_fpr],
            ["auc", m.model, m.auc],
            ["threshold", m.model, m.threshold],
            ["fpr", m.model, m.fpr],
            ["tp", m.model, m.tp],
            ["fp", m.model, m.fp],
            ["tn", m.model, m.tn],
            ["fn", m.model, m.fn],
        ]
        rows += [["kind_recall", kind, k.recall] for kind, k in m.per_kind.items()]
        _write_csv(out / METRICS_FILE, ["metric", "name", "value"], rows)
        _write_csv(out / ROC_FILE, ["fpr", "tpr", "threshold"], [list(p) for p in m.roc])
        _write_csv(
            out / PER_KIND_FILE,
            ["kind", "n_bags", "detected", "recall"],
            [[kind, k.n_bags, k.detected, k.recall] for kind, k in m.per_kind.items()],
        )

    def write_train_log(self, out: Path, report: RunReport) -> None:
        _write_csv(
            out / TRAIN_LOG_FILE,
            ["epoch", "mean_loss", "val_auc", "val_recall_at_fpr", "wall_ms"],
            [[e.epoch, e.mean_loss, e.val_auc, e.val_recall_at_fpr, e.wall_ms]
             for e in report.train_log],
        )

    def write_comparison(self, out: Path, report: RunReport) -> None:
        _write_csv(
            out / COMPARISON_FILE,
            ["model", "checkpoint", "auc", "recall_at_fpr", "threshold", "fpr"],
            [[m.model, checkpoint, m.auc, m.recall_at_fpr, m.threshold, m.fpr]
             for checkpoint, m in report.comparison],
        )

    def write_threshold(self, out: Path, report: RunReport) -> None:
        t = report.threshold
        payload = {
            "version": FORMAT_VERSION,
            "checkpoint": report.checkpoint or report.model,
            "granularity": t.granularity,
            "target_fpr": t.target_fpr,
            "threshold": t.threshold,
            "achieved_fpr": t.achieved_fpr,
            "n_clean": t.n_clean,
        }
        (out / THRESHOLD_FILE).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
