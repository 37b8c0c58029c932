"""
Feed-forward network that maps feature vectors to age-class logits.

Weights are stored ``(out, in)`` so the last layer is the ``L×M`` matrix
theta of ``z = f(x) theta^T``. Hidden layers use ReLU, the output layer is
linear. Parameters are immutable; :func:`sgd_step` returns a new set.
"""
import json
import logging
from dataclasses import dataclass

import numpy as np

from losslab import FORMAT_VERSION
from losslab.exceptions import (
    EvaluationError,
    InputError,
    ShapeError,
    UsageError,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'losslab-mlp'
DEFAULT_LAYER_SIZES = (64, 64, 32, 70)


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Weights and biases of every layer (also used for their gradients)."""
    weights: tuple
    biases: tuple

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if not weights or len(weights) != len(biases):
            raise ShapeError('need one bias vector per weight matrix')
        for index, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(
                    f'layer {index}: weights {w.shape} and bias {b.shape} disagree'
                )
            if index and w.shape[1] != weights[index - 1].shape[0]:
                raise ShapeError(
                    f'layer {index} expects width {w.shape[1]}, '
                    f'previous layer emits {weights[index - 1].shape[0]}'
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise EvaluationError(f'layer {index} holds non-finite values')
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'biases', biases)

    @property
    def layer_sizes(self):
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_classes(self):
        return self.weights[-1].shape[0]

    def flatten(self):
        """All parameters as one vector, layer by layer, weights before bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend((w.ravel(), b))
        return np.concatenate(parts)

    def unflatten(self, vector):
        """Parameters shaped like ``self`` filled from ``vector``."""
        vector = np.asarray(vector, dtype=np.float64)
        weights, biases, offset = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vector[offset:offset + w.size].reshape(w.shape))
            offset += w.size
            biases.append(vector[offset:offset + b.size])
            offset += b.size
        if offset != vector.size:
            raise ShapeError(f'expected {offset} values, got {vector.size}')
        return MlpParams(tuple(weights), tuple(biases))


@dataclass(frozen=True, eq=False)
class ForwardCache:
    params: MlpParams
    activations: tuple
    pre_activations: tuple


@dataclass(frozen=True)
class SgdConfig:
    base_lr: float = 0.001
    batch_size: int = 64
    epochs: int = 100
    decay_every: int = 15
    decay_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.base_lr > 0:
            raise InputError(f'base_lr must be positive, got {self.base_lr}')
        for name in ('batch_size', 'epochs', 'decay_every'):
            if int(getattr(self, name)) < 1:
                raise InputError(f'{name} must be a positive integer')
        if not 0 < self.decay_factor <= 1:
            raise InputError(f'decay_factor must lie in (0, 1], got {self.decay_factor}')


def lr_at(epoch, cfg):
    """Step schedule: ``base_lr * decay_factor ** (epoch // decay_every)``."""
    if epoch < 0:
        raise InputError(f'epoch must be >= 0, got {epoch}')
    return cfg.base_lr * cfg.decay_factor ** (epoch // cfg.decay_every)


def init_params(layer_sizes, rng):
    """Glorot-uniform weights and zero biases drawn from ``rng``."""
    layer_sizes = tuple(int(size) for size in layer_sizes)
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise InputError(f'invalid layer sizes {layer_sizes}')
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(weights), tuple(biases))


def forward(params, features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.layer_sizes[0]:
        raise ShapeError(
            f'features {features.shape} do not match input width '
            f'{params.layer_sizes[0]}'
        )
    activations, pre_activations = [features], []
    last = len(params.weights) - 1
    a = features
    for index, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre_activations.append(z)
        a = z if index == last else np.maximum(z, 0.0)
        activations.append(a)
    if not np.all(np.isfinite(a)):
        raise EvaluationError('forward pass produced non-finite logits')
    cache = ForwardCache(params, tuple(activations), tuple(pre_activations))
    return a, cache


def backward(params, cache, grad_logits):
    """Gradients of the loss with respect to every parameter."""
    if cache.params is not params:
        raise UsageError('forward cache belongs to a different parameter set')
    grad = np.asarray(grad_logits, dtype=np.float64)
    if grad.shape != cache.activations[-1].shape:
        raise ShapeError(
            f'gradient {grad.shape} does not match logits {cache.activations[-1].shape}'
        )
    weight_grads, bias_grads = [], []
    for index in reversed(range(len(params.weights))):
        previous = cache.activations[index]
        weight_grads.append(grad.T @ previous)
        bias_grads.append(grad.sum(axis=0))
        if index:
            grad = (grad @ params.weights[index]) * (cache.pre_activations[index - 1] > 0)
    return MlpParams(tuple(reversed(weight_grads)), tuple(reversed(bias_grads)))


def sgd_step(params, grads, lr):
    """Plain SGD: ``p - lr * g`` for every parameter."""
    if lr < 0:
        raise InputError(f'learning rate must be >= 0, got {lr}')
    if params.layer_sizes != grads.layer_sizes:
        raise ShapeError(
            f'gradient layers {grads.layer_sizes} do not match {params.layer_sizes}'
        )
    return MlpParams(
        tuple(w - lr * g for w, g in zip(params.weights, grads.weights)),
        tuple(b - lr * g for b, g in zip(params.biases, grads.biases)),
    )


def train_epoch(params, batches, lr, loss_fn):
    """
    One pass of SGD over ``batches``.

    ``loss_fn(logits, labels)`` must return a loss breakdown with
    ``grad_logits``. Returns the new parameters and ``(batch size,
    breakdown)`` pairs.
    """
    results = []
    for batch in batches:
        logits, cache = forward(params, batch.features)
        breakdown = loss_fn(logits, batch.labels)
        grads = backward(params, cache, breakdown.grad_logits)
        params = sgd_step(params, grads, lr)
        results.append((len(batch.labels), breakdown))
    return params, results


def save_params(params, path):
    """
    Write a JSON checkpoint::

        {"format": "losslab-mlp", "version": 1,
         "layers": [{"rows": out, "cols": in,
                     "weights": [row-major values], "bias": [values]}]}
    """
    layers = [
        {
            'rows': int(w.shape[0]),
            'cols': int(w.shape[1]),
            'weights': w.ravel().tolist(),
            'bias': b.tolist(),
        }
        for w, b in zip(params.weights, params.biases)
    ]
    document = {
        'format': CHECKPOINT_FORMAT,
        'version': FORMAT_VERSION,
        'layers': layers,
    }
    with open(path, 'w') as handle:
        json.dump(document, handle)
    logger.debug('Saved %s parameters to %s', params.layer_sizes, path)


def load_params(path):
    with open(path) as handle:
        document = json.load(handle)
    if document.get('format') != CHECKPOINT_FORMAT:
        raise InputError(f'{path} is not a network checkpoint')
    if document.get('version') != FORMAT_VERSION:
        raise InputError(
            f'unsupported checkpoint version {document.get("version")}'
        )
    weights, biases = [], []
    for layer in document['layers']:
        weights.append(
            np.array(layer['weights'], dtype=np.float64).reshape(layer['rows'], layer['cols'])
        )
        biases.append(np.array(layer['bias'], dtype=np.float64))
    return MlpParams(tuple(weights), tuple(biases))
