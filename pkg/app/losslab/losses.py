"""
Batch losses over age distributions with analytic gradients.

Every loss takes an N×L logit matrix and N class labels in 1..L and returns
the batch-mean value, the gradient with respect to the logits and the raw
partials with respect to the probabilities. Top-K membership and the
per-sample K are computed on the forward pass and held constant when
differentiating; pass ``outside`` to freeze a membership explicitly.

The mean term carries the 1/2 of the squared error itself, so a reported
``lambda1`` multiplies ``(m - y)^2 / 2``.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from losslab.distribution import (
    adaptive_k_rows,
    check_labels,
    outside_mask,
    rank_rows,
    softmax_rows,
)
from losslab.exceptions import InputError, ShapeError

# Floor applied before taking logs so underflowed probabilities stay finite.
PROB_FLOOR = 1e-300

_EMPTY_INT = np.zeros(0, dtype=np.int64)
_EMPTY_FLOAT = np.zeros(0, dtype=np.float64)


class LossKind(str, enum.Enum):
    """The loss combinations compared in the ablation table."""
    SOFTMAX = 'softmax'
    MEAN_SOFTMAX = 'mean+softmax'
    VARIANCE_SOFTMAX = 'variance+softmax'
    MEAN_VARIANCE = 'mean-variance'
    RESIDUE_SOFTMAX = 'residue+softmax'
    AMR = 'amr'

    @property
    def uses_k(self):
        return self in (LossKind.RESIDUE_SOFTMAX, LossKind.AMR)


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        for name in ('lambda1', 'lambda2'):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise InputError(f'{name} must be finite and >= 0, got {value}')
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class KMode:
    """Either a fixed top-K size or the label-adaptive ``max(2, rank)``."""
    k: int = None

    @classmethod
    def fixed(cls, k):
        if int(k) != k or k < 1:
            raise InputError(f'fixed k must be a positive integer, got {k}')
        return cls(int(k))

    @classmethod
    def adaptive(cls):
        return cls(None)

    @classmethod
    def parse(cls, text):
        text = str(text).strip().lower()
        if text == 'adaptive':
            return cls.adaptive()
        try:
            k = int(text)
        except ValueError:
            raise InputError(f"k mode must be 'adaptive' or an integer, got {text!r}")
        return cls.fixed(k)

    @property
    def is_adaptive(self):
        return self.k is None

    def check(self, n_classes):
        if not self.is_adaptive and not 1 <= self.k <= n_classes:
            raise InputError(f'fixed k={self.k} outside 1..{n_classes}')

    def __str__(self):
        return 'adaptive' if self.is_adaptive else str(self.k)


@dataclass(frozen=True, eq=False)
class LossTerm:
    """One loss component evaluated on a batch."""
    value: float
    grad: np.ndarray
    grad_probs: np.ndarray
    per_sample: np.ndarray
    per_sample_k: np.ndarray = field(default_factory=lambda: _EMPTY_INT)
    per_sample_rank: np.ndarray = field(default_factory=lambda: _EMPTY_INT)

    def __iter__(self):
        yield self.value
        yield self.grad


@dataclass(frozen=True, eq=False)
class LossBreakdown:
    total: float
    softmax_term: float
    mean_term: float
    tail_term: float
    per_sample_residue: np.ndarray
    per_sample_k: np.ndarray
    grad_logits: np.ndarray
    weights: LossWeights
    per_sample_rank: np.ndarray = field(default_factory=lambda: _EMPTY_INT)

    def recomposed(self):
        """Weighted sum of the components; equals ``total`` up to rounding."""
        return (
            self.softmax_term
            + self.weights.lambda1 * self.mean_term
            + self.weights.lambda2 * self.tail_term
        )


def _prepare(logits, labels=None):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or 0 in logits.shape:
        raise ShapeError(f'expected a non-empty N×L logit matrix, got {logits.shape}')
    probs = softmax_rows(logits)
    if labels is None:
        return logits, probs, None
    labels = check_labels(labels, logits.shape[1])
    if labels.size != logits.shape[0]:
        raise ShapeError(
            f'{labels.size} labels for {logits.shape[0]} rows of logits'
        )
    return logits, probs, labels


def _through_softmax(probs, grad_probs):
    """Chain probability partials through the row-wise softmax Jacobian."""
    centre = np.sum(probs * grad_probs, axis=1, keepdims=True)
    return probs * (grad_probs - centre)


def _classes(n_classes):
    return np.arange(1, n_classes + 1, dtype=np.float64)


def cross_entropy_loss(logits, labels):
    logits, probs, labels = _prepare(logits, labels)
    n = logits.shape[0]
    rows = np.arange(n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    per_sample = -log_probs[rows, labels - 1]

    onehot = np.zeros_like(probs)
    onehot[rows, labels - 1] = 1.0
    grad_probs = np.zeros_like(probs)
    grad_probs[rows, labels - 1] = -1.0 / (n * np.maximum(probs[rows, labels - 1], PROB_FLOOR))
    return LossTerm(
        value=float(per_sample.mean()),
        grad=(probs - onehot) / n,
        grad_probs=grad_probs,
        per_sample=per_sample,
    )


def mean_loss(logits, labels):
    """Half squared error between the expected class and the label."""
    logits, probs, labels = _prepare(logits, labels)
    n = logits.shape[0]
    classes = _classes(probs.shape[1])
    diff = probs @ classes - labels
    grad_probs = diff[:, np.newaxis] * classes[np.newaxis, :] / n
    per_sample = 0.5 * diff ** 2
    return LossTerm(
        value=float(per_sample.sum() / n),
        grad=_through_softmax(probs, grad_probs),
        grad_probs=grad_probs,
        per_sample=per_sample,
    )


def residue_entropy(probs, outside):
    """Per-row entropy of the mass outside top-K, with ``0 log 0 = 0``."""
    probs = np.asarray(probs, dtype=np.float64)
    safe = np.maximum(probs, PROB_FLOOR)
    return -np.where(outside, probs * np.log(safe), 0.0).sum(axis=1)


def residue_loss(logits, labels, kmode, outside=None):
    """
    Entropy of the probability mass left outside each sample's top-K.

    In adaptive mode ``K_i = max(2, rank of y_i)`` so the label is always
    inside and its partial is exactly zero.
    """
    logits, probs, labels = _prepare(logits, labels)
    n, n_classes = probs.shape
    ranks = rank_rows(probs, labels)
    if outside is None:
        if kmode.is_adaptive:
            ks = adaptive_k_rows(probs, labels)
        else:
            kmode.check(n_classes)
            ks = np.full(n, kmode.k, dtype=np.int64)
        outside = outside_mask(probs, ks)
    else:
        outside = np.asarray(outside, dtype=bool)
        if outside.shape != probs.shape:
            raise ShapeError(
                f'membership mask {outside.shape} does not match logits {probs.shape}'
            )
        ks = n_classes - outside.sum(axis=1)

    per_sample = residue_entropy(probs, outside)
    safe = np.maximum(probs, PROB_FLOOR)
    grad_probs = np.where(outside, -(1.0 + np.log(safe)) / n, 0.0)
    return LossTerm(
        value=float(per_sample.sum() / n),
        grad=_through_softmax(probs, grad_probs),
        grad_probs=grad_probs,
        per_sample=per_sample,
        per_sample_k=np.asarray(ks, dtype=np.int64),
        per_sample_rank=ranks,
    )


def variance_loss(logits):
    """
    Mean variance of the predicted distributions.

    The variance is evaluated in its scale-invariant form (moments divided by
    the row sum), so the probability partial on the simplex is
    ``((j - m)^2 - sigma^2) / N``.
    """
    logits, probs, _ = _prepare(logits)
    n = logits.shape[0]
    classes = _classes(probs.shape[1])
    total = probs.sum(axis=1, keepdims=True)
    mean = (probs @ classes)[:, np.newaxis] / total
    spread = (classes[np.newaxis, :] - mean) ** 2
    per_sample = np.sum(probs * spread, axis=1) / total[:, 0]
    grad_probs = (spread - per_sample[:, np.newaxis]) / (total * n)
    return LossTerm(
        value=float(per_sample.sum() / n),
        grad=_through_softmax(probs, grad_probs),
        grad_probs=grad_probs,
        per_sample=per_sample,
    )


def amr_loss(logits, labels, weights, kmode, outside=None):
    """Softmax loss plus weighted mean and adaptive (or fixed-K) residue loss."""
    softmax_term = cross_entropy_loss(logits, labels)
    mean_term = mean_loss(logits, labels)
    residue_term = residue_loss(logits, labels, kmode, outside=outside)
    return LossBreakdown(
        total=(
            softmax_term.value
            + weights.lambda1 * mean_term.value
            + weights.lambda2 * residue_term.value
        ),
        softmax_term=softmax_term.value,
        mean_term=mean_term.value,
        tail_term=residue_term.value,
        per_sample_residue=residue_term.per_sample,
        per_sample_k=residue_term.per_sample_k,
        grad_logits=(
            softmax_term.grad
            + weights.lambda1 * mean_term.grad
            + weights.lambda2 * residue_term.grad
        ),
        weights=weights,
        per_sample_rank=residue_term.per_sample_rank,
    )


def mv_loss(logits, labels, weights):
    """Mean-variance baseline: softmax loss plus weighted mean and variance."""
    softmax_term = cross_entropy_loss(logits, labels)
    mean_term = mean_loss(logits, labels)
    variance_term = variance_loss(logits)
    return LossBreakdown(
        total=(
            softmax_term.value
            + weights.lambda1 * mean_term.value
            + weights.lambda2 * variance_term.value
        ),
        softmax_term=softmax_term.value,
        mean_term=mean_term.value,
        tail_term=variance_term.value,
        per_sample_residue=_EMPTY_FLOAT,
        per_sample_k=_EMPTY_INT,
        grad_logits=(
            softmax_term.grad
            + weights.lambda1 * mean_term.grad
            + weights.lambda2 * variance_term.grad
        ),
        weights=weights,
    )


def compute_loss(kind, logits, labels, weights, kmode):
    """
    Evaluate one ablation row's loss.

    Only the row's own components are evaluated; the others are reported as
    zero with zero weight, so ``recomposed()`` always matches ``total``. Rows
    without a residue term leave ``per_sample_k`` empty.
    """
    kind = LossKind(kind)
    if kind is LossKind.AMR:
        return amr_loss(logits, labels, weights, kmode)
    if kind is LossKind.MEAN_VARIANCE:
        return mv_loss(logits, labels, weights)

    softmax_term = cross_entropy_loss(logits, labels)
    total, grad = softmax_term.value, softmax_term.grad
    lambda1 = lambda2 = mean_value = tail_value = 0.0
    residue = None
    if kind is LossKind.MEAN_SOFTMAX:
        lambda1 = weights.lambda1
        term = mean_loss(logits, labels)
        mean_value = term.value
        total, grad = total + lambda1 * term.value, grad + lambda1 * term.grad
    elif kind is LossKind.VARIANCE_SOFTMAX:
        lambda2 = weights.lambda2
        term = variance_loss(logits)
        tail_value = term.value
        total, grad = total + lambda2 * term.value, grad + lambda2 * term.grad
    elif kind.uses_k:
        lambda2 = weights.lambda2
        residue = residue_loss(logits, labels, kmode)
        tail_value = residue.value
        total, grad = total + lambda2 * residue.value, grad + lambda2 * residue.grad

    return LossBreakdown(
        total=total,
        softmax_term=softmax_term.value,
        mean_term=mean_value,
        tail_term=tail_value,
        per_sample_residue=residue.per_sample if residue is not None else _EMPTY_FLOAT,
        per_sample_k=residue.per_sample_k if residue is not None else _EMPTY_INT,
        grad_logits=grad,
        weights=LossWeights(lambda1, lambda2),
        per_sample_rank=residue.per_sample_rank if residue is not None else _EMPTY_INT,
    )
