import math

import numpy as np
import pytest

from quadsub.errors import BasisOverflow, CutoffTooSmall
from quadsub.hermite_galerkin import (
    HermiteVector,
    basis,
    calibrate_c0,
    coefficient_decay,
    contraction_norm,
    hermite_functions,
    hermite_tail_sum,
    quantize,
    semigroup_apply,
    seminorm_blowup_report,
    smoothing_norm_report,
    subelliptic_constant,
    sup_norm,
    weighted_seminorm,
)
from quadsub.slope_fit import log_grid


def test_basis_sizes_and_ordering():
    assert basis(1, 4).size == 5
    assert basis(2, 3).size == 10
    assert basis(3, 2).size == math.comb(5, 3)
    small, large = basis(2, 2), basis(2, 3)
    assert large.indices[: small.size] == small.indices
    assert large.block_size(2) == small.size
    assert list(large.degrees) == sorted(large.degrees)
    assert large.indices[:3] == ((0, 0), (0, 1), (1, 0))


def test_basis_overflow():
    with pytest.raises(BasisOverflow):
        basis(3, 200)


def test_basis_eigenvalues():
    np.testing.assert_array_equal(basis(2, 1).eigenvalues, [2.0, 4.0, 4.0])


def test_harmonic_quantization_is_diagonal(harmonic, harmonic_2d):
    for q, N in ((harmonic, 12), (harmonic_2d, 6)):
        G = quantize(q, N)
        np.testing.assert_array_equal(G.matrix, np.diag(G.basis.eigenvalues))


def test_davies_quantization_entries(davies):
    # D^2 + i x^2 with x = (a + a^+)/sqrt(2), D = -i (a - a^+)/sqrt(2).
    M = quantize(davies, 8).matrix
    assert M[0, 0] == pytest.approx(0.5 + 0.5j)
    assert M[2, 0] == pytest.approx((-0.5 + 0.5j) * math.sqrt(2.0))
    assert M[1, 0] == 0


@pytest.mark.parametrize("name", ["davies", "kfp", "chain"])
def test_adjoint_is_conjugate_symbol(name):
    from quadsub.catalog import get_entry

    q = get_entry(name).symbol
    N = 10 if q.n == 1 else 6
    M = quantize(q, N).matrix
    np.testing.assert_array_equal(quantize(q.conjugate(), N).matrix, M.conj().T)


@pytest.mark.parametrize("name", ["davies", "kfp", "chain"])
def test_galerkin_matrix_is_accretive(name):
    from quadsub.catalog import get_entry

    q = get_entry(name).symbol
    G = quantize(q, 12 if q.n == 1 else 6)
    assert G.hermitian_part_min() >= -1e-10


def test_quantize_minimum_cutoff(davies):
    with pytest.raises(ValueError):
        quantize(davies, 3)


def test_contraction_norm(harmonic, davies):
    assert contraction_norm(quantize(harmonic, 10), 0.1) == pytest.approx(math.exp(-0.1), rel=1e-12)
    assert contraction_norm(quantize(davies, 20), 0.2) <= 1.0 + 1e-8


def test_semigroup_on_ground_state(harmonic):
    G = quantize(harmonic, 10)
    u = HermiteVector.ground_state(basis(1, 10))
    out = semigroup_apply(G, 0.3, u)
    assert out.coefficients[0] == pytest.approx(math.exp(-0.3))
    np.testing.assert_allclose(out.coefficients[1:], 0.0, atol=1e-15)


def test_semigroup_embeds_smaller_vectors(davies):
    G = quantize(davies, 20)
    u = HermiteVector.uniform(basis(1, 6))
    out = semigroup_apply(G, 0.1, u)
    assert out.basis.N == 20
    assert out.norm <= u.norm


def test_vectors():
    b = basis(2, 4)
    u = HermiteVector.uniform(b, 2)
    assert u.norm == pytest.approx(1.0)
    assert np.count_nonzero(u.coefficients) == b.block_size(2)
    r1, r2 = HermiteVector.random(b, seed=5), HermiteVector.random(b, seed=5)
    np.testing.assert_array_equal(r1.coefficients, r2.coefficients)
    with pytest.raises(ValueError):
        HermiteVector(b, np.ones(3))
    with pytest.raises(ValueError):
        HermiteVector.ground_state(basis(2, 6)).embed(b)


def test_harmonic_smoothing_norm_slope(harmonic):
    t = log_grid(0.03, 0.3, 8)
    report = smoothing_norm_report(harmonic, 40, 20, [1], t)[1]
    assert report.slope == pytest.approx(-1.0, abs=0.05)
    assert report.extra["expected_slope"] == -1
    assert report.extra["stable"]
    assert report.extra["max_rel_change"] == pytest.approx(0.0, abs=1e-12)


def test_observation_cutoff_at_most_half(harmonic):
    with pytest.raises(ValueError):
        smoothing_norm_report(harmonic, 20, 11, [1], [0.1, 0.2])


def test_harmonic_coefficient_decay_is_exact(harmonic):
    t = log_grid(0.05, 0.3, 6)
    u = HermiteVector.uniform(basis(1, 40), 20)
    rates, report = coefficient_decay(harmonic, u, t, 40, 20)
    np.testing.assert_allclose(rates, 2.0 * t, rtol=1e-8)
    assert report.slope == pytest.approx(1.0, abs=1e-6)


def test_harmonic_subelliptic_constant(harmonic):
    # ||(1 + P) u|| <= ||P u|| + ||u|| with equality on eigenfunctions.
    assert 0.99 <= subelliptic_constant(harmonic, 40, 20, 0.0) <= 1.0 + 1e-9
    shifted = subelliptic_constant(harmonic, 40, 20, 10.0)
    assert 0.0 < shifted <= 1.0 + 1e-9


def test_hermite_functions_are_orthonormal():
    x = np.linspace(-14.0, 14.0, 4001)
    psi = hermite_functions(10, x)
    gram = psi @ psi.T * (x[1] - x[0])
    np.testing.assert_allclose(gram, np.eye(11), atol=1e-8)
    assert hermite_functions(0, np.array([0.0]))[0, 0] == pytest.approx(math.pi ** -0.25)


def test_hermite_functions_stay_finite_far_out():
    psi = hermite_functions(200, np.array([-40.0, 0.0, 40.0]))
    assert np.all(np.isfinite(psi))


def test_sup_norm_of_ground_state():
    u = HermiteVector.ground_state(basis(1, 4))
    assert sup_norm(u) == pytest.approx(math.pi ** -0.25, rel=1e-3)


def test_weighted_seminorm_of_ground_state():
    u = HermiteVector.ground_state(basis(1, 6))
    # x psi_0 = psi_1 / sqrt(2) and psi_0' = -psi_1 / sqrt(2).
    assert weighted_seminorm(u, (1,), (0,)).l2 == pytest.approx(1.0 / math.sqrt(2.0))
    assert weighted_seminorm(u, (0,), (1,)).l2 == pytest.approx(1.0 / math.sqrt(2.0))
    # x psi_0' = -psi_0 / 2 - psi_2 / sqrt(2).
    assert weighted_seminorm(u, (1,), (1,)).l2 == pytest.approx(math.sqrt(0.75))


def test_weighted_seminorm_detects_truncation():
    b = basis(1, 6)
    coeffs = np.zeros(b.size)
    coeffs[-1] = 1.0
    with pytest.raises(CutoffTooSmall):
        weighted_seminorm(HermiteVector(b, coeffs), (1,), (0,))


def test_weighted_seminorm_order_limit():
    with pytest.raises(ValueError):
        weighted_seminorm(HermiteVector.ground_state(basis(1, 10)), (4,), (3,))


def test_seminorm_report_for_ground_state(harmonic):
    u = HermiteVector.ground_state(basis(1, 20))
    report = seminorm_blowup_report(harmonic, (1,), (0,), log_grid(0.01, 0.1, 5), 20, u=u)
    assert report.extra["bound"] == pytest.approx(1.5)
    assert report.extra["within_bound"]
    assert report.extra["max_sup_to_l2"] > 0


def test_seminorm_operator_norm_on_harmonic(harmonic):
    # ||x e^{-tH}|| on the |alpha| <= N_obs block cannot grow as t increases.
    report = seminorm_blowup_report(harmonic, (1,), (0,), log_grid(0.01, 0.1, 5), 20, 10)
    assert report.extra["bound"] == pytest.approx(1.5)
    assert report.extra["exponent"] >= -1e-9
    assert report.extra["within_bound"]
    assert "max_sup_to_l2" not in report.extra
    assert all(b <= a * (1.0 + 1e-12) for a, b in zip(report.values, report.values[1:]))


def test_coefficient_decay_fit_degrees(harmonic):
    u = HermiteVector.uniform(basis(1, 40), 20)
    _, report = coefficient_decay(harmonic, u, [0.05, 0.1], 40, 20)
    assert report.extra["fit_degrees"] == [2, 10]
    with pytest.raises(ValueError):
        coefficient_decay(harmonic, u, [0.05, 0.1], 40, 20, fit_degrees=(10, 30))


def test_hermite_tail_sum():
    assert hermite_tail_sum(1.0, 1) == pytest.approx(1.0 / (1.0 - math.exp(-1.0)))
    y = 1e-3
    direct = np.sum(np.exp(-y * np.arange(40000))) ** 2
    assert hermite_tail_sum(y, 2) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ValueError):
        hermite_tail_sum(0.0, 1)


def test_harmonic_c0_is_one(harmonic):
    t = log_grid(1e-2, 1e-1, 5)
    assert calibrate_c0(harmonic, 20, 10, t, side="left") == 1.0
    assert calibrate_c0(harmonic, 20, 10, t, side="right") == 1.0


def test_c0_side_must_be_known(harmonic):
    with pytest.raises(ValueError):
        calibrate_c0(harmonic, 20, 10, [0.1, 0.2], side="middle")


@pytest.mark.slow
def test_davies_smoothing_norms(davies):
    t = log_grid(0.4, 0.55, 8)
    reports = smoothing_norm_report(davies, 320, 160, [1, 2, 3], t)
    for k, report in reports.items():
        assert report.slope == pytest.approx(-3.0 * k, abs=0.45 * k)
        assert report.extra["stable"]


@pytest.mark.slow
def test_davies_coefficient_decay(davies):
    t = log_grid(0.1, 0.2, 8)
    u = HermiteVector.uniform(basis(1, 320), 160)
    _, report = coefficient_decay(davies, u, t, 320, 160)
    assert report.extra["fit_degrees"] == [20, 80]
    assert report.slope == pytest.approx(3.0, abs=0.45)


@pytest.mark.slow
def test_davies_subelliptic_constant_is_bounded_in_lambda(davies):
    constants = {}
    for lam in (0.0, 1.0, -1.0, 10.0, -10.0):
        coarse = subelliptic_constant(davies, 160, 40, lam)
        fine = subelliptic_constant(davies, 160, 80, lam)
        assert abs(fine - coarse) / coarse < 0.10
        constants[lam] = fine
    assert max(constants.values()) <= 3.0 * constants[0.0]


@pytest.mark.slow
def test_davies_c0_is_finite(davies):
    C0 = calibrate_c0(davies, 160, 80, log_grid(0.4, 0.55, 8))
    assert 1.0 <= C0 <= 2.0 ** 30


@pytest.mark.slow
@pytest.mark.parametrize("mu, nu", [((1,), (0,)), ((0,), (1,)), ((1,), (1,))])
def test_davies_seminorm_exponents(davies, mu, nu):
    u = HermiteVector.ground_state(basis(1, 160))
    report = seminorm_blowup_report(davies, mu, nu, log_grid(0.4, 0.55, 8), 160, u=u)
    assert report.extra["within_bound"]
    operator = seminorm_blowup_report(davies, mu, nu, log_grid(0.4, 0.55, 8), 160, 80)
    assert operator.extra["within_bound"]
