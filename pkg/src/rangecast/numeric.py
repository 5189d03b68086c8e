"""Dense float64 kernel: matrix product, activations, seeded RNG.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
helpers here only add the shape checking and the determinism guarantees the
rest of the package relies on.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("sigmoid", "tanh", "linear")


class ShapeError(ValueError):
    """Raised when operand dimensions are incompatible."""


class ParameterError(ValueError):
    """Raised for out-of-range arguments."""


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a 2-D float64 array, optionally reshaping."""
    m = np.array(values, dtype=np.float64)
    if rows is not None or cols is not None:
        m = m.reshape(rows if rows is not None else -1, cols if cols is not None else -1)
    elif m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    # Split by sign so exp never overflows.
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def apply_activation(m, kind: str, derivative: bool = False) -> np.ndarray:
    """Elementwise activation (or its derivative) of ``m``.

    ``kind`` is one of ``"sigmoid"``, ``"tanh"`` or ``"linear"``. Derivatives
    are taken with respect to the pre-activation input.
    """
    m = np.asarray(m, dtype=np.float64)
    if kind == "sigmoid":
        s = sigmoid(m)
        return s * (1.0 - s) if derivative else s
    if kind == "tanh":
        t = np.tanh(m)
        return 1.0 - t * t if derivative else t
    if kind == "linear":
        return np.ones_like(m) if derivative else m.copy()
    raise ParameterError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


class SeededRng:
    """Deterministic generator: numpy PCG64 seeded from a 64-bit integer.

    Normal draws use numpy's ziggurat transform of the PCG64 stream, so a
    given seed yields the same sequence on every platform numpy supports.
    """

    def __init__(self, seed: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, index: int) -> "SeededRng":
        """Independent generator for sub-task ``index`` (e.g. one ensemble path)."""
        child = SeededRng.__new__(SeededRng)
        child.seed = self.seed
        child._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, int(index)]))
        )
        return child

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def gaussian_draws(rng: SeededRng, mean: float, std: float, n) -> np.ndarray:
    """``n`` i.i.d. normal draws (``n`` may be a shape tuple)."""
    if std < 0:
        raise ParameterError(f"std must be >= 0, got {std}")
    z = rng.normal(n)
    if std == 0:
        return np.full_like(z, float(mean))
    return mean + std * z
