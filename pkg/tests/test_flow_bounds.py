import numpy as np
import pytest

from quadsub.errors import NoOrderFound, SingularSpaceNonTrivial
from quadsub.catalog import get_entry
from quadsub.flow_bounds import (
    averaged_form,
    lambda_min_curve,
    small_time_window,
    taylor_coefficients,
    taylor_order,
)
from quadsub.slope_fit import log_grid
from quadsub.symbol_core import hamiltonian_flow


def davies_averaged(t, sign=1.0):
    # exp(s H_{x^2}) maps xi to xi - 2 s x, so J = int (xi - 2 s x)^2 ds.
    return np.array([[4.0 * t ** 3 / 3.0, -sign * t ** 2], [-sign * t ** 2, t]])


def test_averaged_form_of_harmonic_is_linear(harmonic):
    np.testing.assert_allclose(averaged_form(harmonic, 0.05).G.G, 0.05 * np.eye(2), rtol=1e-12)


def test_averaged_form_at_zero(davies):
    form = averaged_form(davies, 0.0)
    np.testing.assert_array_equal(form.G.G, np.zeros((2, 2)))


@pytest.mark.parametrize("t", [1e-3, 1e-2, 0.1, 1.0])
def test_averaged_form_of_davies(davies, t):
    np.testing.assert_allclose(averaged_form(davies, t).G.G, davies_averaged(t), rtol=1e-10, atol=1e-16)
    np.testing.assert_allclose(
        averaged_form(davies, t, reverse=True).G.G, davies_averaged(t, sign=-1.0), rtol=1e-10, atol=1e-16
    )


@pytest.mark.parametrize("t", [-0.1, 1.5])
def test_averaged_form_time_range(davies, t):
    with pytest.raises(ValueError):
        averaged_form(davies, t)


def test_harmonic_slope_is_one(harmonic):
    report = lambda_min_curve(harmonic, log_grid(1e-3, 1e-2, 10))
    assert report.slope == pytest.approx(1.0, abs=1e-6)
    assert report.prefactor == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("reverse", [False, True])
def test_davies_slope_is_three(davies, reverse):
    report = lambda_min_curve(davies, log_grid(1e-3, 1e-2, 25), reverse=reverse)
    assert report.slope == pytest.approx(3.0, abs=0.1)
    assert report.r_squared > 0.999
    assert report.extra["k0_expected"] == 3
    assert report.extra["min_increment_eig"] >= -1e-15


def test_kfp_slope_is_three(kfp):
    report = lambda_min_curve(kfp, log_grid(1e-3, 1e-2, 25))
    assert report.slope == pytest.approx(3.0, abs=0.15)


def test_chain_slope_is_five(chain):
    report = lambda_min_curve(chain, log_grid(*small_time_window(2), 25))
    assert report.slope == pytest.approx(5.0, abs=0.15)
    assert report.extra["k0_expected"] == 5


def test_small_time_window_moves_with_k0():
    assert small_time_window(0) == small_time_window(1) == (1e-3, 1e-2)
    assert small_time_window(2) == pytest.approx((3e-3, 3e-2))
    assert small_time_window(5) == pytest.approx((1e-2, 0.1))


def test_lambda_min_curve_rejects_degenerate(degenerate):
    with pytest.raises(SingularSpaceNonTrivial):
        lambda_min_curve(degenerate, log_grid(1e-3, 1e-2, 5))


def test_lambda_min_curve_grid_range(davies):
    with pytest.raises(ValueError):
        lambda_min_curve(davies, [0.05, 0.2])


def test_taylor_coefficients_of_davies(davies):
    np.testing.assert_allclose(taylor_coefficients(davies, [1.0, 0.0], 3), [0.0, 0.0, 4.0, 0.0])


@pytest.mark.parametrize(
    "name, X, expected",
    [
        ("davies", [1.0, 0.0], (1, 4.0)),
        ("davies", [0.0, 1.0], (0, 1.0)),
        ("kfp", [1.0, 0.0, 0.0, 0.0], (1, 0.25)),
        ("chain", [0.0, 1.0, 0.0, 0.0], (2, 1.0)),
    ],
)
def test_taylor_order(name, X, expected):
    order = taylor_order(get_entry(name).symbol, np.array(X))
    assert order.j == expected[0]
    assert order.a == pytest.approx(expected[1])


def test_taylor_order_order_is_at_most_k0(chain):
    rng = np.random.default_rng(3)
    for _ in range(10):
        X = rng.standard_normal(4)
        assert taylor_order(chain, X / np.linalg.norm(X)).j <= 2


def test_taylor_order_needs_unit_vector(davies):
    with pytest.raises(ValueError):
        taylor_order(davies, np.array([2.0, 0.0]))


def test_no_order_found_is_a_convergence_error():
    assert issubclass(NoOrderFound, Exception)
    assert NoOrderFound.exit_code == 4


@pytest.mark.parametrize(
    "name, X",
    [
        ("davies", [1.0, 0.0]),
        ("davies", [0.0, 1.0]),
        ("kfp", [1.0, 0.0, 0.0, 0.0]),
        ("chain", [0.0, 1.0, 0.0, 0.0]),
    ],
)
def test_taylor_order_matches_finite_differences(name, X):
    q = get_entry(name).symbol
    X = np.array(X)
    order = taylor_order(q, X)

    def along_flow(t):
        Xt = hamiltonian_flow(q.imag_part(), t) @ X
        return Xt @ q.Q_re @ Xt

    def even_quotient(h):
        # Odd Taylor terms cancel; the next even one is O(h^2).
        return (along_flow(h) + along_flow(-h)) / (2.0 * h ** (2 * order.j))

    h = 1e-2
    extrapolated = (4.0 * even_quotient(h / 2) - even_quotient(h)) / 3.0
    assert extrapolated == pytest.approx(order.a, rel=1e-4)
