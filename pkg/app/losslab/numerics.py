"""
Dense linear algebra helpers, seeded random streams and a finite-difference
gradient oracle shared by the rest of the lab.
"""
import numpy as np

from losslab.exceptions import EvaluationError, InputError, ShapeError

# 2-D float64 ndarray, row-major.
DenseMatrix = np.ndarray

DEFAULT_STEP = 1e-5

_UINT64 = 2 ** 64


def as_matrix(values, rows=None, cols=None):
    """Return ``values`` as a finite float64 matrix, reshaping when asked."""
    matrix = np.array(values, dtype=np.float64)
    if rows is not None or cols is not None:
        if rows is None or cols is None:
            raise InputError('rows and cols must be given together')
        if matrix.size != rows * cols:
            raise ShapeError(
                f'{matrix.size} values cannot fill a {rows}x{cols} matrix'
            )
        matrix = matrix.reshape(rows, cols)
    if matrix.ndim != 2 or 0 in matrix.shape:
        raise ShapeError(f'expected a non-empty 2-D matrix, got {matrix.shape}')
    if not np.all(np.isfinite(matrix)):
        raise InputError('matrix holds NaN or infinite values')
    return matrix


def matmul(a, b):
    """Matrix product with a readable error on mismatched shapes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f'cannot multiply {a.shape} by {b.shape}'
        )
    return a @ b


class RngStream:
    """
    Seeded random stream on the Philox counter-based generator.

    The 128-bit Philox key is ``seed`` in the low word and the stream index in
    the high word, so ``RngStream(seed, i)`` for different ``i`` are
    independent streams of one master seed. A stream is single-owner state.
    """

    def __init__(self, seed, stream=0):
        seed = int(seed)
        stream = int(stream)
        if not 0 <= seed < _UINT64:
            raise InputError(f'seed must fit in 64 unsigned bits, got {seed}')
        if not 0 <= stream < _UINT64:
            raise InputError(f'stream index out of range: {stream}')
        self.seed = seed
        self.stream = stream
        self._generator = np.random.Generator(
            np.random.Philox(key=seed + (stream << 64))
        )

    def __repr__(self):
        return f'RngStream(seed={self.seed}, stream={self.stream})'

    def derive(self, stream):
        """Independent stream ``(seed, stream)`` of the same master seed."""
        return RngStream(self.seed, stream)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._generator.uniform(low, high, size)

    def normal(self, scale=1.0, size=None):
        return self._generator.normal(0.0, scale, size)

    def integers(self, low, high, size=None):
        """Integers in the closed range [low, high]."""
        return self._generator.integers(low, high, size=size, endpoint=True)

    def permutation(self, n):
        return self._generator.permutation(n)


def finite_diff_grad(f, x, h=DEFAULT_STEP):
    """
    Central-difference gradient of the scalar function ``f`` at ``x``.

    ``x`` may have any shape; the result has the same shape. Raises
    :class:`EvaluationError` naming the coordinate whose perturbation made
    ``f`` non-finite.
    """
    if not h > 0:
        raise InputError(f'step must be positive, got {h}')
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for index in np.ndindex(*x.shape):
        saved = x[index]
        x[index] = saved + h
        upper = float(f(x))
        x[index] = saved - h
        lower = float(f(x))
        x[index] = saved
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise EvaluationError(
                f'non-finite value when perturbing coordinate {index}',
                coordinate=index,
            )
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-12):
    """Largest absolute deviation scaled by the larger gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
