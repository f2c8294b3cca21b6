"""
Segment scoring head, MIL losses and their exact gradients.

The head is a stack of fully connected layers: ReLU on hidden layers,
logistic sigmoid on the single output. Two bag-level objectives train it:

- Deep MIL ranking: hinge between the top-scoring segment of a corrupted
  bag and the top-scoring segment of a normal bag.
- Attention MIL: the last hidden activations of a bag are pooled with
  softmax attention and classified with the head's output layer, trained
  with binary cross-entropy on the bag label.

Parameters are kept in one fixed order (W1, b1, W2, b2, ..., then V, w of
the attention head) shared by gradients, optimisers and checkpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.config import DROPOUT_RATE
from src.errors import ConfigError, EmptyInputError, NumericError, ShapeError
from src.rng import SplitMix64

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


def sigmoid(x):
    """Logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _xavier(rng: SplitMix64, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform_array(-limit, limit, (fan_out, fan_in))


@dataclass
class FcHead:
    """Fully connected scoring head f; weights[l] has shape (out, in)."""
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def hidden_width(self) -> int:
        """Width M of the last hidden layer (the attended layer)."""
        return self.dims[-2]

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "FcHead":
        return cls(
            weights=[np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:])],
            biases=[np.zeros(o) for o in dims[1:]],
        )

    @classmethod
    def initialize(cls, dims: Sequence[int], rng: SplitMix64) -> "FcHead":
        """Glorot-uniform weights, zero biases."""
        if len(dims) < 3 or dims[-1] != 1:
            raise ConfigError(f"Head dims must be in_dim -> hidden... -> 1, got {list(dims)}")
        return cls(
            weights=[_xavier(rng, o, i) for i, o in zip(dims[:-1], dims[1:])],
            biases=[np.zeros(o) for o in dims[1:]],
        )


@dataclass
class AttentionHead:
    """Attention pooling parameters: V is (L, M), w is (L,)."""
    V: np.ndarray
    w: np.ndarray

    @property
    def dim(self) -> int:
        return self.V.shape[0]

    @classmethod
    def initialize(cls, attention_dim: int, width: int, rng: SplitMix64) -> "AttentionHead":
        if attention_dim < 1:
            raise ConfigError(f"Attention dim must be >= 1, got {attention_dim}")
        return cls(
            V=_xavier(rng, attention_dim, width),
            w=_xavier(rng, 1, attention_dim)[0],
        )


@dataclass
class MilModel:
    """Scoring head plus optional attention pooling."""
    head: FcHead
    attention: Optional[AttentionHead] = None

    @property
    def kind(self) -> str:
        return "attention" if self.attention is not None else "deep-mil"

    @classmethod
    def initialize(cls, dims: Sequence[int], rng: SplitMix64,
                   attention_dim: int = 0) -> "MilModel":
        head = FcHead.initialize(dims, rng)
        attention = None
        if attention_dim:
            attention = AttentionHead.initialize(attention_dim, head.hidden_width, rng)
        return cls(head, attention)

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in checkpoint order (views, not copies)."""
        params = []
        for w, b in zip(self.head.weights, self.head.biases):
            params.extend([w, b])
        if self.attention is not None:
            params.extend([self.attention.V, self.attention.w])
        return params

    def copy(self) -> "MilModel":
        return MilModel(
            FcHead([w.copy() for w in self.head.weights], [b.copy() for b in self.head.biases]),
            None if self.attention is None else AttentionHead(self.attention.V.copy(),
                                                              self.attention.w.copy()),
        )

    def segment_scores(self, x: np.ndarray) -> np.ndarray:
        """Inference-time score f(i) of every segment of a bag."""
        return fc_forward(self.head, x)


@dataclass
class GradientSet:
    """One gradient array per parameter, in MilModel.parameters() order."""
    tensors: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, model: MilModel) -> "GradientSet":
        return cls([np.zeros_like(p) for p in model.parameters()])

    def add_(self, other: "GradientSet") -> None:
        for mine, theirs in zip(self.tensors, other.tensors):
            mine += theirs


@dataclass
class DropoutSpec:
    """Inverted dropout on hidden activations."""
    rate: float = DROPOUT_RATE

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"Dropout rate must be in [0, 1), got {self.rate}")

    def masks(self, rng: SplitMix64, n_rows: int, head: FcHead) -> Optional[list[np.ndarray]]:
        """Draw one scaled keep-mask per hidden layer, or None when rate is 0."""
        if self.rate == 0.0:
            return None
        keep = 1.0 / (1.0 - self.rate)
        return [
            np.where(rng.random_array((n_rows, width)) >= self.rate, keep, 0.0)
            for width in head.dims[1:-1]
        ]


@dataclass
class _Cache:
    inputs: list[np.ndarray]  # input to every layer (after dropout)
    pre: list[np.ndarray]  # hidden pre-activations
    masks: Optional[list[np.ndarray]]
    scores: np.ndarray


def _check_input(head: FcHead, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.dims[0]:
        raise ShapeError(f"Expected (n, {head.dims[0]}) features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("Non-finite values in head input")
    return x


def _forward(head: FcHead, x: np.ndarray, masks: Optional[list[np.ndarray]] = None) -> _Cache:
    a = _check_input(head, x)
    inputs, pre = [a], []
    for layer in range(head.n_layers - 1):
        q = a @ head.weights[layer].T + head.biases[layer]
        a = np.maximum(q, 0.0)
        if masks is not None:
            a = a * masks[layer]
        pre.append(q)
        inputs.append(a)
    out = a @ head.weights[-1].T + head.biases[-1]
    return _Cache(inputs, pre, masks, sigmoid(out[:, 0]))


def _backward(head: FcHead, cache: _Cache, d_out: np.ndarray,
              d_hidden: Optional[np.ndarray] = None) -> list[np.ndarray]:
    """
    Backpropagate through the head.

    Args:
        d_out: gradient w.r.t. the output pre-activation of every row, shape (n,)
        d_hidden: extra gradient w.r.t. the last hidden activation, shape (n, M)

    Returns:
        [dW1, db1, dW2, db2, ...]
    """
    grads: list[np.ndarray] = []
    dq = d_out[:, None]
    for layer in range(head.n_layers - 1, -1, -1):
        grads = [dq.T @ cache.inputs[layer], dq.sum(axis=0)] + grads
        if layer == 0:
            break
        da = dq @ head.weights[layer]
        if layer == head.n_layers - 1 and d_hidden is not None:
            da = da + d_hidden
        if cache.masks is not None:
            da = da * cache.masks[layer - 1]
        # ReLU derivative taken as 0 at 0
        dq = da * (cache.pre[layer - 1] > 0)
    return grads


def fc_forward(head: FcHead, x: np.ndarray, masks: Optional[list[np.ndarray]] = None):
    """
    Score segment features with the head.

    Args:
        x: one feature vector (dim,) or a matrix of them (n, dim)
        masks: per-hidden-layer dropout masks for training, None at inference

    Returns:
        A float for a single vector, else an (n,) array of scores in (0, 1)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(_forward(head, x[None, :], masks).scores[0])
    return _forward(head, x, masks).scores


def ranking_hinge_loss(scores_a: Sequence[float], scores_n: Sequence[float]) -> float:
    """max(0, 1 - max(corrupted scores) + max(normal scores))."""
    if len(scores_a) == 0 or len(scores_n) == 0:
        raise EmptyInputError("Hinge loss needs at least one segment score per bag")
    return max(0.0, 1.0 - float(np.max(scores_a)) + float(np.max(scores_n)))


def weight_penalty(head: FcHead) -> float:
    """Squared Frobenius norm of all weight matrices (biases excluded)."""
    return float(sum(np.sum(w * w) for w in head.weights))


def _add_weight_decay(head: FcHead, grads: list[np.ndarray], lam: float) -> None:
    if lam:
        for layer, w in enumerate(head.weights):
            grads[2 * layer] += 2.0 * lam * w


def deep_mil_objective(pairs, model: MilModel, lam: float, masks=None,
                       with_grad: bool = True) -> tuple[float, Optional[GradientSet]]:
    """
    Ranking objective (1/z) * sum(HL_j) + lam * ||W||^2 and its gradient.

    Args:
        pairs: sequence of (corrupted bag features, normal bag features)
        masks: optional per-pair (masks_a, masks_n) dropout masks

    Returns:
        (loss, gradients or None)
    """
    if len(pairs) == 0:
        raise EmptyInputError("Objective needs at least one (corrupted, normal) pair")

    head = model.head
    z = len(pairs)
    total = 0.0
    grads = GradientSet.zeros_like(model) if with_grad else None

    for j, (xa, xn) in enumerate(pairs):
        masks_a, masks_n = masks[j] if masks is not None else (None, None)
        cache_a = _forward(head, xa, masks_a)
        cache_n = _forward(head, xn, masks_n)
        if len(cache_a.scores) == 0 or len(cache_n.scores) == 0:
            raise EmptyInputError(f"Pair {j} has an empty bag")

        # argmax breaks ties on the lowest segment index
        ia = int(np.argmax(cache_a.scores))
        i_n = int(np.argmax(cache_n.scores))
        sa, sn = cache_a.scores[ia], cache_n.scores[i_n]
        hinge = max(0.0, 1.0 - sa + sn)
        total += hinge

        if with_grad and hinge > 0.0:
            d_a = np.zeros(len(cache_a.scores))
            d_a[ia] = -sa * (1.0 - sa) / z
            d_n = np.zeros(len(cache_n.scores))
            d_n[i_n] = sn * (1.0 - sn) / z
            for part in (_backward(head, cache_a, d_a), _backward(head, cache_n, d_n)):
                for mine, theirs in zip(grads.tensors, part):
                    mine += theirs

    loss = total / z + lam * weight_penalty(head)
    if with_grad:
        _add_weight_decay(head, grads.tensors, lam)
    return loss, grads


def batch_objective(pairs, model: MilModel, lam: float, masks=None) -> float:
    return deep_mil_objective(pairs, model, lam, masks, with_grad=False)[0]


def backward(pairs, model: MilModel, lam: float, masks=None) -> GradientSet:
    return deep_mil_objective(pairs, model, lam, masks, with_grad=True)[1]


def attention_pool(h: np.ndarray, att: AttentionHead) -> tuple[np.ndarray, np.ndarray]:
    """
    Softmax attention pooling of instance embeddings.

    Args:
        h: (K, M) instance embeddings
        att: attention parameters

    Returns:
        (z, a): pooled (M,) vector and (K,) attention weights
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise EmptyInputError(f"Attention pooling needs a non-empty (K, M) bag, got {h.shape}")
    if h.shape[1] != att.V.shape[1]:
        raise ShapeError(f"Embedding width {h.shape[1]} != attention width {att.V.shape[1]}")
    z, a, _ = _attention_forward(h, att)
    return z, a


def _attention_forward(h: np.ndarray, att: AttentionHead):
    u = np.tanh(h @ att.V.T)
    logits = u @ att.w
    e = np.exp(logits - logits.max())
    a = e / e.sum()
    return a @ h, a, u


def attention_bag_loss(z: np.ndarray, label: int, w_clf: np.ndarray, b_clf) -> float:
    """Binary cross-entropy of sigmoid(w_clf . z + b_clf) against a bag label."""
    z = np.asarray(z, dtype=np.float64)
    w_clf = np.asarray(w_clf, dtype=np.float64).reshape(-1)
    if z.shape != w_clf.shape:
        raise ShapeError(f"Pooled vector {z.shape} does not match classifier {w_clf.shape}")
    p = float(sigmoid(np.array([w_clf @ z + float(np.ravel(b_clf)[0])]))[0])
    return _bce(p, label)


def _bce(p: float, label: int) -> float:
    p = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(label * np.log(p) + (1 - label) * np.log(1.0 - p))


def attention_objective(bags, model: MilModel, lam: float, masks=None,
                        with_grad: bool = True) -> tuple[float, Optional[GradientSet]]:
    """
    Mean bag BCE through attention pooling + lam * ||W||^2, and its gradient.

    Args:
        bags: sequence of (bag features (K, dim), label)
        masks: optional per-bag dropout masks
    """
    if model.attention is None:
        raise ConfigError("Attention objective needs a model with an attention head")
    if len(bags) == 0:
        raise EmptyInputError("Objective needs at least one bag")

    head, att = model.head, model.attention
    w_out, b_out = head.weights[-1][0], head.biases[-1][0]
    n = len(bags)
    total = 0.0
    grads = GradientSet.zeros_like(model) if with_grad else None

    for j, (x, label) in enumerate(bags):
        cache = _forward(head, x, masks[j] if masks is not None else None)
        h = cache.inputs[-1]
        z, a, u = _attention_forward(h, att)
        p = float(sigmoid(np.array([w_out @ z + b_out]))[0])
        total += _bce(p, label)

        if not with_grad or not PROB_CLAMP < p < 1.0 - PROB_CLAMP:
            continue

        dq = (p - label) / n
        dz = dq * w_out
        # softmax backward
        da = h @ dz
        ds = a * (da - a @ da)
        d_pre = np.outer(ds, att.w) * (1.0 - u * u)
        d_h = np.outer(a, dz) + d_pre @ att.V

        part = _backward(head, cache, np.zeros(len(h)), d_hidden=d_h)
        part[-2] = part[-2] + dq * z[None, :]
        part[-1] = part[-1] + dq
        part.extend([d_pre.T @ h, u.T @ ds])
        for mine, theirs in zip(grads.tensors, part):
            mine += theirs

    loss = total / n + lam * weight_penalty(head)
    if with_grad:
        _add_weight_decay(head, grads.tensors, lam)
    return loss, grads
