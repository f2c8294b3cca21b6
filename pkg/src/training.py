"""
Mini-batch MIL training with validation-based model selection.

Each batch pairs corrupted bags (weak label 1) with normal bags (weak
label 0). After every epoch the model is scored on the validation split
and the epoch with the best selection metric is kept.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, TypeVar

import numpy as np

from src.config import (
    ATTENTION_DIM,
    DROPOUT_RATE,
    EPOCHS,
    HIDDEN_DIMS,
    PAIRS_PER_BATCH,
    REG_LAMBDA,
    SEED,
    TARGET_FPR,
)
from src.errors import ConfigError, DivergenceError, FormatError
from src.evaluation import recall_at_fpr, roc_auc, score_bags, tune_on_table
from src.formats import BagRecord
from src.model import AttentionHead, DropoutSpec, FcHead, MilModel, attention_objective, deep_mil_objective
from src.optim import OPTIMIZERS, make_optimizer
from src.rng import SplitMix64

logger = logging.getLogger(__name__)

T = TypeVar("T")

MODEL_KINDS = ("deep-mil", "attention")
DEFAULT_OPTIMIZER = {"deep-mil": "adagrad", "attention": "adam"}
SELECTION_METRICS = ("auc", "recall")


@dataclass
class TrainConfig:
    model: str = "deep-mil"
    hidden_dims: list[int] = field(default_factory=lambda: list(HIDDEN_DIMS))
    attention_dim: int = ATTENTION_DIM
    epochs: int = EPOCHS
    pairs_per_batch: int = PAIRS_PER_BATCH
    batches_per_epoch: Optional[int] = None  # None = one pass over corrupted bags
    optimizer: Optional[str] = None  # None = adagrad for deep-mil, adam for attention
    lr: Optional[float] = None
    reg_lambda: float = REG_LAMBDA
    dropout: float = DROPOUT_RATE
    seed: int = SEED
    selection_metric: str = "auc"
    target_fpr: float = TARGET_FPR

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown train options: {sorted(unknown)}")
        return cls(**data)

    @property
    def optimizer_name(self) -> str:
        return self.optimizer or DEFAULT_OPTIMIZER[self.model]

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"Unknown model {self.model!r}; expected one of {MODEL_KINDS}")
        if self.optimizer_name not in OPTIMIZERS:
            raise ConfigError(f"Unknown optimizer {self.optimizer_name!r}")
        if self.selection_metric not in SELECTION_METRICS:
            raise ConfigError(f"Unknown selection metric {self.selection_metric!r}")
        if self.epochs < 0 or self.pairs_per_batch < 1:
            raise ConfigError("epochs must be >= 0 and pairs_per_batch >= 1")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ConfigError(f"Invalid hidden dims {self.hidden_dims}")
        if self.model == "attention" and self.attention_dim < 1:
            raise ConfigError("Attention model needs attention_dim >= 1")
        DropoutSpec(self.dropout)


@dataclass
class BagSet:
    """Feature bags of one split with their records."""
    features: np.ndarray  # (n_bags, segments, dim)
    records: list[BagRecord]

    def weak_indices(self, label: int) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.label == label]

    def truth(self) -> np.ndarray:
        return np.array([r.corrupted for r in self.records], dtype=bool)


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    val_auc: float
    val_recall_at_fpr: float
    wall_ms: float


@dataclass
class TrainState:
    """Everything needed to continue training bit-exactly."""
    epoch: int
    model: MilModel
    optimizer: Any
    rng_state: int
    best_model: MilModel
    best_metric: float
    best_epoch: int
    log: list[EpochLog] = field(default_factory=list)


def sample_batch(corrupted: Sequence[T], normal: Sequence[T], rng: SplitMix64,
                 n_pairs: int = PAIRS_PER_BATCH) -> list[tuple[T, T]]:
    """
    Draw n_pairs (corrupted, normal) pairs.

    Each pool is sampled without replacement when it holds at least n_pairs
    items, otherwise with replacement. Corrupted draws come first; the i-th
    corrupted draw is paired with the i-th normal draw.
    """
    if not corrupted or not normal:
        raise ConfigError("Batch sampling needs at least one corrupted and one normal bag")

    def draw(pool: Sequence[T]) -> list[T]:
        if len(pool) >= n_pairs:
            return [pool[i] for i in rng.permutation(len(pool))[:n_pairs]]
        return [pool[rng.randint(0, len(pool) - 1)] for _ in range(n_pairs)]

    picked_a = draw(corrupted)
    picked_n = draw(normal)
    return list(zip(picked_a, picked_n))


def validation_metrics(model: MilModel, val: BagSet, target_fpr: float) -> tuple[float, float]:
    """(AUC, recall at tuned FPR) of a model on a validation split."""
    table = score_bags(model, val.features, val.records)
    _, auc = roc_auc(table)
    threshold = tune_on_table(table, target_fpr)
    return auc, recall_at_fpr(table, threshold.threshold).recall


def _check_split(name: str, bags: BagSet, truth: bool) -> None:
    labels = bags.truth() if truth else np.array([r.label for r in bags.records], dtype=bool)
    if len(labels) == 0 or labels.all() or not labels.any():
        raise ConfigError(f"The {name} split needs both corrupted and normal bags")


def init_state(config: TrainConfig, in_dim: int) -> TrainState:
    rng = SplitMix64(config.seed)
    dims = [in_dim, *config.hidden_dims, 1]
    attention_dim = config.attention_dim if config.model == "attention" else 0
    model = MilModel.initialize(dims, rng, attention_dim)
    optimizer = make_optimizer(config.optimizer_name, model.parameters(), config.lr)
    return TrainState(0, model, optimizer, rng.state, model.copy(), -math.inf, 0)


def _train_batch(config: TrainConfig, state: TrainState, train: BagSet,
                 rng: SplitMix64, dropout: DropoutSpec) -> float:
    pairs = sample_batch(train.weak_indices(1), train.weak_indices(0), rng, config.pairs_per_batch)
    head = state.model.head
    x = train.features

    if config.model == "deep-mil":
        batch = [(x[a], x[n]) for a, n in pairs]
        masks = None
        if dropout.rate > 0:
            masks = [(dropout.masks(rng, len(xa), head), dropout.masks(rng, len(xn), head))
                     for xa, xn in batch]
        loss, grads = deep_mil_objective(batch, state.model, config.reg_lambda, masks)
    else:
        batch = [bag for a, n in pairs for bag in ((x[a], 1), (x[n], 0))]
        masks = None
        if dropout.rate > 0:
            masks = [dropout.masks(rng, len(xb), head) for xb, _ in batch]
        loss, grads = attention_objective(batch, state.model, config.reg_lambda, masks)

    if not math.isfinite(loss):
        raise DivergenceError(f"Loss became {loss} at epoch {state.epoch + 1}")
    state.optimizer.step(state.model.parameters(), grads.tensors)
    return loss


def train(config: TrainConfig, train_set: BagSet, val_set: BagSet,
          resume: Optional[TrainState] = None, stop_after: Optional[int] = None) -> TrainState:
    """
    Train a MIL model and keep the best validation epoch.

    Args:
        config: Training hyperparameters
        train_set: Bags with weak labels used for batches
        val_set: Bags used for model selection
        resume: State from an interrupted run to continue
        stop_after: Stop once this epoch has finished (for checkpointed runs)

    Returns:
        Final training state; best_model holds the selected checkpoint
    """
    config.validate()
    _check_split("train", train_set, truth=False)
    _check_split("validation", val_set, truth=True)

    in_dim = train_set.features.shape[2]
    state = resume or init_state(config, in_dim)
    if state.model.head.dims[0] != in_dim:
        raise ConfigError(f"Model expects {state.model.head.dims[0]}-dim features, got {in_dim}")

    rng = SplitMix64()
    rng.state = state.rng_state
    dropout = DropoutSpec(config.dropout)
    n_batches = config.batches_per_epoch or max(
        1, math.ceil(len(train_set.weak_indices(1)) / config.pairs_per_batch)
    )
    last_epoch = config.epochs if stop_after is None else min(stop_after, config.epochs)

    logger.info(
        f"[{config.model}] {len(train_set.records)} train / {len(val_set.records)} validation bags, "
        f"{n_batches} batches/epoch, optimizer {config.optimizer_name}"
    )

    while state.epoch < last_epoch:
        started = time.perf_counter()
        losses = [_train_batch(config, state, train_set, rng, dropout) for _ in range(n_batches)]
        state.epoch += 1
        state.rng_state = rng.state

        auc, recall = validation_metrics(state.model, val_set, config.target_fpr)
        entry = EpochLog(
            epoch=state.epoch,
            mean_loss=float(np.mean(losses)),
            val_auc=auc,
            val_recall_at_fpr=recall,
            wall_ms=(time.perf_counter() - started) * 1000.0,
        )
        state.log.append(entry)

        metric = auc if config.selection_metric == "auc" else recall
        if metric > state.best_metric:
            state.best_metric, state.best_epoch = metric, state.epoch
            state.best_model = state.model.copy()

        logger.info(
            f"[{config.model}] epoch {entry.epoch}: loss {entry.mean_loss:.5f} "
            f"val AUC {auc:.4f} val recall {recall:.4f}"
            + (" *" if state.best_epoch == state.epoch else "")
        )

    return state


def _model_meta(model: MilModel) -> dict:
    return {"dims": model.head.dims,
            "attention_dim": model.attention.dim if model.attention is not None else 0}


def _model_from_arrays(meta: dict, arrays: list[np.ndarray]) -> MilModel:
    n_fc = 2 * (len(meta["dims"]) - 1)
    head = FcHead(weights=arrays[0:n_fc:2], biases=arrays[1:n_fc:2])
    attention = AttentionHead(arrays[n_fc], arrays[n_fc + 1]) if meta["attention_dim"] else None
    return MilModel(head, attention)


def save_resume_state(path: Path, state: TrainState) -> None:
    """Persist a TrainState as a numpy .npz archive."""
    opt = state.optimizer
    meta = {
        "epoch": state.epoch,
        "rng_state": str(state.rng_state),
        "best_metric": state.best_metric,
        "best_epoch": state.best_epoch,
        "log": [asdict(e) for e in state.log],
        "model": _model_meta(state.model),
        "optimizer": {k: v for k, v in asdict(opt).items() if not isinstance(v, list)}
        | {"name": opt.name},
    }
    arrays = {}
    for prefix, items in (("param", state.model.parameters()),
                          ("best", state.best_model.parameters()),
                          ("opt", opt.arrays())):
        for i, a in enumerate(items):
            arrays[f"{prefix}_{i}"] = a
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta)), **arrays)


def load_resume_state(path: Path) -> TrainState:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"Resume state not found: {path}")
    with np.load(path) as archive:
        meta = json.loads(str(archive["meta"]))

        def group(prefix: str) -> list[np.ndarray]:
            keys = sorted((k for k in archive.files if k.startswith(prefix + "_")),
                          key=lambda k: int(k.split("_")[1]))
            return [archive[k].copy() for k in keys]

        params, best, opt_arrays = group("param"), group("best"), group("opt")

    model = _model_from_arrays(meta["model"], params)
    opt_meta = dict(meta["optimizer"])
    name = opt_meta.pop("name")
    if name == "adagrad":
        optimizer = OPTIMIZERS[name](accumulators=opt_arrays, **opt_meta)
    else:
        half = len(opt_arrays) // 2
        optimizer = OPTIMIZERS[name](m=opt_arrays[:half], v=opt_arrays[half:], **opt_meta)

    return TrainState(
        epoch=meta["epoch"],
        model=model,
        optimizer=optimizer,
        rng_state=int(meta["rng_state"]),
        best_model=_model_from_arrays(meta["model"], best),
        best_metric=meta["best_metric"],
        best_epoch=meta["best_epoch"],
        log=[EpochLog(**e) for e in meta["log"]],
    )
