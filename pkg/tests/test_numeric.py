import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangecast.numeric import (
    ParameterError,
    SeededRng,
    ShapeError,
    apply_activation,
    gaussian_draws,
    identity,
    matmul,
)


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def test_matmul_identity():
    m = np.array([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(matmul(identity(2), m), m)


def test_matmul_row_by_column():
    assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])).tolist() == [[11.0]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(2, 5))
        lhs, rhs = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_activation_points():
    assert apply_activation(np.array([0.0]), "sigmoid")[0] == 0.5
    assert apply_activation(np.array([0.0]), "tanh", derivative=True)[0] == 1.0
    np.testing.assert_array_equal(apply_activation(np.array([2.5]), "linear", True), [1.0])


def test_sigmoid_derivative_matches_central_difference():
    x = np.linspace(-6, 6, 25)
    h = 1e-6
    fd = (apply_activation(x + h, "sigmoid") - apply_activation(x - h, "sigmoid")) / (2 * h)
    np.testing.assert_allclose(apply_activation(x, "sigmoid", True), fd, atol=1e-8)


@pytest.mark.parametrize("kind", ["sigmoid", "tanh", "linear"])
def test_every_derivative_matches_finite_differences(kind):
    x = np.random.default_rng(5).uniform(-4, 4, 100)
    h = 1e-6
    fd = (apply_activation(x + h, kind) - apply_activation(x - h, kind)) / (2 * h)
    np.testing.assert_allclose(apply_activation(x, kind, True), fd, atol=1e-7)


@settings(max_examples=200)
@given(st.floats(min_value=-18, max_value=18, allow_nan=False))
def test_activation_ranges(x):
    # Beyond |x| ~ 19 (tanh) and ~ 37 (sigmoid) float64 rounds onto the bound.
    s = apply_activation(np.array([x]), "sigmoid")[0]
    t = apply_activation(np.array([x]), "tanh")[0]
    assert 0 < s < 1
    assert -1 < t < 1


@given(st.floats(min_value=-1e300, max_value=1e300, allow_nan=False))
def test_activation_ranges_closed_everywhere(x):
    assert 0 <= apply_activation(np.array([x]), "sigmoid")[0] <= 1
    assert -1 <= apply_activation(np.array([x]), "tanh")[0] <= 1


def test_sigmoid_large_inputs_do_not_overflow():
    with np.errstate(over="raise"):
        s = apply_activation(np.array([-800.0, 800.0]), "sigmoid")
    assert s[0] == 0.0 and s[1] == 1.0


def test_unknown_activation():
    with pytest.raises(ParameterError):
        apply_activation(np.zeros(2), "relu")


def test_zero_std_draws():
    assert gaussian_draws(SeededRng(9), 5.0, 0.0, 3).tolist() == [5.0, 5.0, 5.0]


def test_negative_std_rejected():
    with pytest.raises(ParameterError):
        gaussian_draws(SeededRng(0), 0.0, -1.0, 3)


def test_draw_moments():
    z = gaussian_draws(SeededRng(2024), 0.0, 1.0, 100_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02


def test_same_seed_same_sequence():
    a = gaussian_draws(SeededRng(77), 1.0, 2.0, 50)
    b = gaussian_draws(SeededRng(77), 1.0, 2.0, 50)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, gaussian_draws(SeededRng(78), 1.0, 2.0, 50))


def test_derived_generators_are_independent_and_reproducible():
    r = SeededRng(5)
    np.testing.assert_array_equal(r.derive(3).normal(4), SeededRng(5).derive(3).normal(4))
    assert not np.array_equal(r.derive(3).normal(4), r.derive(4).normal(4))


def test_seed_range():
    with pytest.raises(ParameterError):
        SeededRng(-1)
    SeededRng(2**64 - 1)
