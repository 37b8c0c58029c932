"""
Evaluation metrics: MAE and the apparent-age epsilon-error.

The epsilon-error ``1 - exp(-(pred - mu)^2 / (2 sigma^2))`` comes from the
ChaLearn LAP 2016 apparent-age competition, which scores a prediction
against the mean and standard deviation of the human age annotations.
Predictions stay continuous unless ``round_predictions`` is set.
"""
from dataclasses import dataclass

import numpy as np

from losslab.distribution import expected_age, softmax, softmax_rows
from losslab.exceptions import InputError


@dataclass(frozen=True)
class EvalResult:
    mae: float
    eps_error: float
    n: int

    def __post_init__(self):
        if not self.mae >= 0:
            raise InputError(f'MAE must be >= 0, got {self.mae}')
        if not 0 <= self.eps_error <= 1:
            raise InputError(f'epsilon-error must lie in [0, 1], got {self.eps_error}')


def predict_age(logits):
    """Expected class of one logit row."""
    return expected_age(softmax(logits))


def predict_ages(logits):
    probs = softmax_rows(logits)
    return probs @ np.arange(1, probs.shape[1] + 1, dtype=np.float64)


def _paired(predictions, truths):
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape or predictions.ndim != 1:
        raise InputError(
            f'predictions {predictions.shape} and truths {truths.shape} do not pair up'
        )
    if not predictions.size:
        raise InputError('cannot score an empty set of predictions')
    return predictions, truths


def mae(predictions, truths):
    predictions, truths = _paired(predictions, truths)
    return float(np.mean(np.abs(predictions - truths)))


def epsilon_error(pred, mu, sigma):
    """Pointwise epsilon-error; accepts scalars or equal-shaped arrays."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if not np.all(sigma > 0):
        raise InputError('sigma must be positive')
    error = 1.0 - np.exp(
        -(np.asarray(pred, dtype=np.float64) - mu) ** 2 / (2.0 * sigma ** 2)
    )
    return float(error) if error.ndim == 0 else error


def mean_epsilon_error(predictions, mus, sigmas):
    predictions, mus = _paired(predictions, mus)
    return float(np.mean(epsilon_error(predictions, mus, sigmas)))


def evaluate(logits, labels, sigmas, round_predictions=False, clamp=False):
    """
    Score logits against class labels.

    ``clamp`` limits predictions to the valid class range before scoring,
    ``round_predictions`` snaps them to the nearest class.
    """
    predictions = predict_ages(logits)
    if clamp:
        predictions = np.clip(predictions, 1.0, float(np.asarray(logits).shape[1]))
    if round_predictions:
        predictions = np.round(predictions)
    return EvalResult(
        mae=mae(predictions, labels),
        eps_error=mean_epsilon_error(predictions, labels, sigmas),
        n=int(predictions.size),
    )
