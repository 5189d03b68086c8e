import math

import numpy as np
import pytest

from rangecast.numeric import ParameterError, SeededRng
from rangecast.randomwalk import (
    EstimationError,
    RandomWalkModel,
    autocorr_analytic,
    autocorr_empirical,
    fit,
    predict_multi_point,
    predict_single_point,
    simulate,
    simulate_ensemble,
)


def test_fit_constant_increments():
    m = fit([1, 2, 3, 4])
    assert (m.mu_hat, m.sigma_hat) == (1.0, 0.0)


def test_fit_symmetric_increments():
    m = fit([0, 1, 0, 1, 0])
    assert (m.mu_hat, m.sigma_hat) == (0.0, 1.0)


def test_fit_recovers_sigma():
    path = simulate(RandomWalkModel(0.0, 3.0), 0.0, 100_000, SeededRng(31))
    assert abs(fit(path.x).sigma_hat - 3.0) < 0.05


def test_fit_too_short():
    with pytest.raises(ParameterError):
        fit([1.0, 2.0])


def test_single_point_is_lag_copy():
    m = RandomWalkModel(0.0, 1.0)
    assert predict_single_point(m, [5, 7, 6]).tolist() == [5.0, 7.0]


def test_single_point_with_drift():
    m = RandomWalkModel(1.0, 0.0, "fitted")
    assert predict_single_point(m, [10, 10]).tolist() == [11.0]


def test_single_point_zero_sigma_stochastic_collapses():
    m = RandomWalkModel(0.5, 0.0, "fitted")
    x = [3.0, 4.0, 2.0, 8.0]
    np.testing.assert_array_equal(
        predict_single_point(m, x, stochastic=True, rng=SeededRng(1)), predict_single_point(m, x)
    )


def test_single_point_conditions_on_truth():
    m = RandomWalkModel(0.0, 2.0)
    x = np.array([1.0, 5.0, -3.0, 4.0])
    draws = predict_single_point(m, x, stochastic=True, rng=SeededRng(8)) - x[:-1]
    np.testing.assert_allclose(draws, 2.0 * SeededRng(8).normal(3), rtol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_lag_copy_identity_on_random_series(seed):
    x = np.cumsum(np.random.default_rng(seed).normal(size=300)) + 1000
    for drift in (0.0, 0.25):
        m = RandomWalkModel(drift, 1.0, "fitted" if drift else "zero")
        np.testing.assert_array_equal(predict_single_point(m, x), x[:-1] + drift)


def test_multi_point_flat_without_drift():
    assert predict_multi_point(RandomWalkModel(0.0, 1.0), 100.0, 5).tolist() == [100.0] * 5


def test_multi_point_linear_drift():
    assert predict_multi_point(RandomWalkModel(2.0, 1.0, "fitted"), 0.0, 3).tolist() == [2.0, 4.0, 6.0]


def test_multi_point_differences_replay_draws():
    m = RandomWalkModel(0.3, 1.5, "fitted")
    path = predict_multi_point(m, 10.0, 25, SeededRng(17), stochastic=True)
    expected = 0.3 + 1.5 * SeededRng(17).normal(25)
    np.testing.assert_allclose(np.diff(np.concatenate([[10.0], path])), expected, rtol=1e-12, atol=1e-12)


def test_multi_point_error_grows_with_horizon():
    # Averaged over segments, a flat forecast drifts further from a walk as the horizon grows.
    x = np.cumsum(np.random.default_rng(3).normal(size=60_000))
    m = RandomWalkModel(0.0, 1.0)
    errs = []
    for k in (1, 2, 4, 8, 16):
        starts = np.arange(0, x.size - k, k)
        fc = np.stack([predict_multi_point(m, x[s], k) for s in starts])
        truth = np.stack([x[s + 1 : s + 1 + k] for s in starts])
        errs.append(np.mean(np.abs(fc - truth)))
    assert all(b > a for a, b in zip(errs, errs[1:]))


def test_multi_point_horizon_validation():
    with pytest.raises(ParameterError):
        predict_multi_point(RandomWalkModel(0.0, 1.0), 1.0, 0)


def test_simulate_zero_noise():
    assert simulate(RandomWalkModel(0.0, 0.0), 7.0, 4, SeededRng(0)).x.tolist() == [7.0] * 5


def test_simulate_is_cumulative_sum_of_draws():
    p = simulate(RandomWalkModel(0.0, 2.0), 3.0, 50, SeededRng(5))
    np.testing.assert_array_equal(p.x[1:], 3.0 + np.cumsum(p.draws))
    np.testing.assert_allclose(np.diff(p.x), p.draws, rtol=1e-12, atol=1e-12)


def test_ensemble_mean_and_variance():
    paths = simulate_ensemble(RandomWalkModel(0.0, 2.0), 5.0, 100, 100_000, SeededRng(99))
    d = paths[:, 100] - 5.0
    assert abs(d.mean()) < 3 * math.sqrt(400 / d.size)
    assert abs(d.var() / 400.0 - 1) < 0.03


def test_ensemble_is_deterministic():
    m = RandomWalkModel(0.0, 1.0)
    a = simulate_ensemble(m, 0.0, 10, 50, SeededRng(4))
    np.testing.assert_array_equal(a, simulate_ensemble(m, 0.0, 10, 50, SeededRng(4)))


def test_autocorr_analytic_values():
    assert autocorr_analytic(5, 0) == 1.0
    assert autocorr_analytic(7, 7) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert autocorr_analytic(10_000, 1) == pytest.approx(0.99995, abs=1e-6)
    with pytest.raises(ParameterError):
        autocorr_analytic(0, 1)


@pytest.mark.parametrize("t,k,tol", [(200, 20, 0.02), (10, 30, 0.03)])
def test_autocorr_empirical_matches_closed_form(t, k, tol):
    r = autocorr_empirical(RandomWalkModel(0.0, 1.0), t, k, 50_000, SeededRng(t * 1000 + k))
    assert abs(r - autocorr_analytic(t, k)) < tol


def test_autocorr_empirical_edge_cases():
    m = RandomWalkModel(0.0, 1.0)
    assert autocorr_empirical(m, 10, 0, 1000, SeededRng(0)) == 1.0
    with pytest.raises(ParameterError):
        autocorr_empirical(m, 10, 1, 999, SeededRng(0))
    with pytest.raises(ParameterError):
        autocorr_empirical(RandomWalkModel(0.0, 1.0, "fitted"), 10, 1, 1000, SeededRng(0))
    with pytest.raises(EstimationError):
        autocorr_empirical(RandomWalkModel(0.0, 0.0), 10, 1, 1000, SeededRng(0))


def test_autocorr_empirical_uses_the_ensemble_columns():
    m = RandomWalkModel(0.0, 1.5)
    paths = simulate_ensemble(m, 0.0, 30, 3000, SeededRng(12))
    expected = np.corrcoef(paths[:, 20], paths[:, 30])[0, 1]
    assert autocorr_empirical(m, 20, 10, 3000, SeededRng(12)) == pytest.approx(expected, rel=1e-12)
