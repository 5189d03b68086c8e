"""Random-walk price model ``x_t = x_{t-1} + w_t``.

Fitting estimates the mean and (population) standard deviation of one-step
differences. Forecasts come in two flavours: single-point, which always
conditions on the true previous price, and multi-point, which rolls its own
forecasts forward for ``k`` steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numeric import ParameterError, SeededRng, gaussian_draws

DRIFT_MODES = ("zero", "fitted")


class EstimationError(ValueError):
    """Raised when a statistic is undefined (e.g. zero variance)."""


@dataclass(frozen=True)
class RandomWalkModel:
    mu_hat: float
    sigma_hat: float
    drift_mode: str = "zero"

    def __post_init__(self):
        if not self.sigma_hat >= 0:
            raise ParameterError(f"sigma_hat must be >= 0, got {self.sigma_hat}")
        if self.drift_mode not in DRIFT_MODES:
            raise ParameterError(f"drift_mode must be one of {DRIFT_MODES}, got {self.drift_mode!r}")

    @property
    def drift(self) -> float:
        """Per-step mean increment actually used for forecasting."""
        return self.mu_hat if self.drift_mode == "fitted" else 0.0


@dataclass
class WalkPath:
    x: np.ndarray
    draws: np.ndarray
    t0: int = 0
    seed: int | None = None


def fit(train_series, drift_mode: str = "zero") -> RandomWalkModel:
    x = np.asarray(train_series, dtype=np.float64).ravel()
    if x.size < 3:
        raise ParameterError(f"fit needs at least 3 observations, got {x.size}")
    d = np.diff(x)
    return RandomWalkModel(float(np.mean(d)), float(np.std(d)), drift_mode)


def predict_single_point(model: RandomWalkModel, series, stochastic: bool = False, rng: SeededRng | None = None):
    """One-step forecasts for ``series[1:]``, each conditioned on the true previous value.

    Deterministic mode returns ``series[:-1] + drift``: the lag copy.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size < 2:
        raise ParameterError(f"series needs at least 2 values, got {x.size}")
    out = x[:-1] + model.drift
    if stochastic and model.sigma_hat > 0:
        if rng is None:
            raise ParameterError("stochastic prediction needs an rng")
        out = out + gaussian_draws(rng, 0.0, model.sigma_hat, out.size)
    return out


def _increments(model: RandomWalkModel, k: int, stochastic: bool, rng: SeededRng | None) -> np.ndarray:
    if stochastic:
        if rng is None:
            raise ParameterError("stochastic prediction needs an rng")
        return gaussian_draws(rng, model.drift, model.sigma_hat, k)
    return np.full(k, model.drift)


def predict_multi_point(
    model: RandomWalkModel, start_value: float, k: int, rng: SeededRng | None = None, stochastic: bool = False
) -> np.ndarray:
    """Roll ``x_{t+1} = x_t + w`` forward ``k`` steps from ``start_value``.

    The returned path excludes ``start_value``. Deterministic mode uses the
    drift as every increment.
    """
    if k < 1:
        raise ParameterError(f"horizon must be >= 1, got {k}")
    return float(start_value) + np.cumsum(_increments(model, k, stochastic, rng))


def simulate(model: RandomWalkModel, x0: float, t_steps: int, rng: SeededRng) -> WalkPath:
    """``x0`` followed by ``t_steps`` cumulative increments (length ``t_steps + 1``)."""
    if t_steps < 1:
        raise ParameterError(f"t_steps must be >= 1, got {t_steps}")
    w = gaussian_draws(rng, model.drift, model.sigma_hat, t_steps)
    x = np.empty(t_steps + 1)
    x[0] = x0
    x[1:] = x0 + np.cumsum(w)
    return WalkPath(x, w, 0, rng.seed)


def _ensemble_blocks(model: RandomWalkModel, x0: float, t_steps: int, n_paths: int, rng: SeededRng):
    """Yield ``(offset, paths)`` blocks; block ``b`` draws from ``rng.derive(b)``."""
    if n_paths < 1:
        raise ParameterError(f"n_paths must be >= 1, got {n_paths}")
    if t_steps < 1:
        raise ParameterError(f"t_steps must be >= 1, got {t_steps}")
    block = max(1, 4_000_000 // t_steps)
    for b, s in enumerate(range(0, n_paths, block)):
        n = min(block, n_paths - s)
        w = gaussian_draws(rng.derive(b), model.drift, model.sigma_hat, (n, t_steps))
        yield s, x0 + np.cumsum(w, axis=1)


def simulate_ensemble(model: RandomWalkModel, x0: float, t_steps: int, n_paths: int, rng: SeededRng) -> np.ndarray:
    """``(n_paths, t_steps + 1)`` array of independent walks.

    Paths are generated in blocks from ``rng.derive(block)`` so the result
    does not depend on memory limits; block order is fixed.
    """
    out = np.empty((n_paths, t_steps + 1))
    out[:, 0] = x0
    for s, paths in _ensemble_blocks(model, x0, t_steps, n_paths, rng):
        out[s : s + len(paths), 1:] = paths
    return out


def autocorr_analytic(t: int, k: int) -> float:
    """Ensemble autocorrelation of a driftless walk, ``1 / sqrt(1 + k/t)``."""
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    if k < 0:
        raise ParameterError(f"k must be >= 0, got {k}")
    return 1.0 / math.sqrt(1.0 + k / t)


def autocorr_empirical(model: RandomWalkModel, t: int, k: int, n_paths: int, rng: SeededRng) -> float:
    """Pearson correlation of ``(x_t, x_{t+k})`` across ``n_paths`` walks from 0.

    This is a cross-sectional (ensemble) estimate at fixed times, which is
    what the closed form describes; a single-path estimator would not be.
    """
    if n_paths < 1000:
        raise ParameterError(f"n_paths must be >= 1000, got {n_paths}")
    if model.drift_mode != "zero":
        raise ParameterError("empirical autocorrelation requires drift_mode='zero'")
    if t < 1 or k < 0:
        raise ParameterError(f"need t >= 1 and k >= 0, got t={t}, k={k}")
    if k == 0:
        return 1.0
    a, b = np.empty(n_paths), np.empty(n_paths)
    for s, paths in _ensemble_blocks(model, 0.0, t + k, n_paths, rng):
        a[s : s + len(paths)] = paths[:, t - 1]
        b[s : s + len(paths)] = paths[:, t + k - 1]
    if np.std(a) == 0 or np.std(b) == 0:
        raise EstimationError("degenerate ensemble variance; correlation undefined")
    return float(np.corrcoef(a, b)[0, 1])
