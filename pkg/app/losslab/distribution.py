"""
Softmax age distributions and their summaries.

Age classes are numbered 1..L everywhere in this module; the dataset layer
owns the ``class = age + 1`` mapping. Ranking ties go to the smaller class
index.
"""
import enum
from dataclasses import dataclass

import numpy as np

from losslab.exceptions import InputError, ShapeError

SUM_TOLERANCE = 1e-9


def _freeze(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class AgeDistribution:
    """Probability of each age class for one sample."""
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ShapeError(f'expected a non-empty vector, got {probs.shape}')
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise InputError('probabilities must be finite and non-negative')
        if abs(probs.sum() - 1.0) > SUM_TOLERANCE:
            raise InputError(f'probabilities sum to {probs.sum()!r}, not 1')
        object.__setattr__(self, 'probs', _freeze(probs))

    @property
    def n_classes(self):
        return self.probs.size

    @property
    def classes(self):
        return np.arange(1, self.n_classes + 1, dtype=np.float64)


@dataclass(frozen=True)
class TopKSelection:
    """Classes kept by top-K pooling and the residue left outside it."""
    k: int
    inside: frozenset
    outside: frozenset


class KRegime(str, enum.Enum):
    OVER_CENTRALIZED = 'over-centralized'
    CENTRALIZED = 'centralized'
    DECENTRALIZED = 'decentralized'


def softmax_rows(logits):
    """Row-wise softmax of an N×L logit matrix, max-subtracted."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeError(f'expected an N×L matrix, got {logits.shape}')
    if not np.all(np.isfinite(logits)):
        raise InputError('logits must be finite')
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax(logits):
    """Softmax of one logit vector as an :class:`AgeDistribution`."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ShapeError(f'expected a logit vector, got {logits.shape}')
    return AgeDistribution(softmax_rows(logits[np.newaxis, :])[0])


def expected_age(d):
    """Mean class index ``m = sum_j j * p_j``."""
    return float(np.dot(d.classes, d.probs))


def distribution_variance(d):
    m = expected_age(d)
    return float(np.dot(d.probs, (d.classes - m) ** 2))


def _check_label(label, n_classes):
    if not 1 <= label <= n_classes:
        raise InputError(f'label {label} outside classes 1..{n_classes}')


def check_labels(labels, n_classes):
    """Validate a label vector against ``n_classes``; returns an int array."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f'expected a label vector, got {labels.shape}')
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise InputError('labels must be integer class indices')
    labels = labels.astype(np.int64)
    bad = (labels < 1) | (labels > n_classes)
    if np.any(bad):
        raise InputError(
            f'label {labels[bad][0]} outside classes 1..{n_classes}'
        )
    return labels


def rank_rows(probs, labels):
    """1-based rank of each row's label under descending probability."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = check_labels(labels, probs.shape[1])
    rows = np.arange(probs.shape[0])
    p_label = probs[rows, labels - 1][:, np.newaxis]
    classes = np.arange(1, probs.shape[1] + 1)[np.newaxis, :]
    better = (probs > p_label) | ((probs == p_label) & (classes < labels[:, np.newaxis]))
    return better.sum(axis=1) + 1


def rank_of(d, label):
    """Position of ``label`` when classes are sorted by probability."""
    _check_label(label, d.n_classes)
    return int(rank_rows(d.probs[np.newaxis, :], [label])[0])


def ranking_order(probs):
    """Zero-based class columns of each row, best first (ties: lower index)."""
    probs = np.asarray(probs, dtype=np.float64)
    return np.argsort(-probs, axis=1, kind='stable')


def outside_mask(probs, ks):
    """Boolean N×L mask of the classes left outside each row's top-K."""
    probs = np.asarray(probs, dtype=np.float64)
    ks = np.broadcast_to(np.asarray(ks, dtype=np.int64), (probs.shape[0],))
    n_classes = probs.shape[1]
    if np.any(ks < 1) or np.any(ks > n_classes):
        raise InputError(f'k must lie in 1..{n_classes}')
    order = ranking_order(probs)
    position = np.empty_like(order)
    np.put_along_axis(
        position, order, np.arange(n_classes)[np.newaxis, :], axis=1
    )
    return position >= ks[:, np.newaxis]


def top_k_indices(d, k):
    if not 1 <= k <= d.n_classes:
        raise InputError(f'k={k} outside 1..{d.n_classes}')
    order = ranking_order(d.probs[np.newaxis, :])[0] + 1
    return TopKSelection(
        k=k,
        inside=frozenset(int(c) for c in order[:k]),
        outside=frozenset(int(c) for c in order[k:]),
    )


def adaptive_k_rows(probs, labels):
    """
    Per-row ``K = max(2, rank of the label)``.

    Capped at L so a two-class problem never asks for a third class.
    """
    ranks = rank_rows(probs, labels)
    return np.minimum(np.maximum(ranks, 2), np.asarray(probs).shape[1])


def adaptive_k(d, label):
    _check_label(label, d.n_classes)
    return int(adaptive_k_rows(d.probs[np.newaxis, :], [label])[0])


def k_regime(d, label, k):
    """Classify a fixed ``k`` against the label's position in ``d``."""
    if not 1 <= k <= d.n_classes:
        raise InputError(f'k={k} outside 1..{d.n_classes}')
    if k < rank_of(d, label):
        return KRegime.OVER_CENTRALIZED
    if k > adaptive_k(d, label):
        return KRegime.DECENTRALIZED
    return KRegime.CENTRALIZED
