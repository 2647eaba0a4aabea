import json

import numpy as np
import pytest

from quadsub.errors import SymbolError
from quadsub.symbol_core import (
    QuadraticSymbol,
    RealQuadForm,
    SymplecticConvention,
    bargmann_transform,
    conjugate_by_bargmann,
    hamilton_map,
    hamiltonian_flow,
    holomorphic_gradient_point,
    phi0,
    phi0_from_phase,
    poisson_derivative,
    restricted_real_part,
    symplectic_matrix,
)


def test_symplectic_matrix_layout():
    np.testing.assert_array_equal(symplectic_matrix(1), [[0.0, -1.0], [1.0, 0.0]])
    J = symplectic_matrix(2)
    np.testing.assert_array_equal(J @ J, -np.eye(4))


def test_symbol_inputs_are_symmetrized():
    q = QuadraticSymbol(n=1, Q_re=[[1.0, 0.4], [0.0, 1.0]], Q_im=[[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(q.Q_re, [[1.0, 0.2], [0.2, 1.0]])
    np.testing.assert_array_equal(q.Q_im, [[0.0, 0.5], [0.5, 0.0]])


def test_symbol_rejects_non_accretive_real_part():
    with pytest.raises(SymbolError) as info:
        QuadraticSymbol(n=1, Q_re=np.diag([1.0, -1.0]), Q_im=np.zeros((2, 2)))
    assert info.value.exit_code == 2


def test_symbol_rejects_wrong_shape():
    with pytest.raises(SymbolError):
        QuadraticSymbol(n=2, Q_re=np.eye(2), Q_im=np.zeros((2, 2)))


def test_from_json_round_trip(kfp):
    restored = QuadraticSymbol.from_json(json.dumps(kfp.to_dict()))
    np.testing.assert_array_equal(restored.Q, kfp.Q)


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        '{"Q_re": [[1, 0], [0, 1]]}',
        '{"n": 1.5, "Q_re": [[1, 0], [0, 1]], "Q_im": [[0, 0], [0, 0]]}',
        '{"n": 1, "Q_re": [[1, 0], [0, "x"]], "Q_im": [[0, 0], [0, 0]]}',
    ],
)
def test_from_json_errors_are_symbol_errors(text):
    with pytest.raises(SymbolError):
        QuadraticSymbol.from_json(text)


def test_negated_symbol_skips_accretivity(davies):
    minus = davies.negated()
    np.testing.assert_array_equal(minus.Q, -davies.Q)
    assert not minus.check_accretive
    with pytest.raises(SymbolError):
        QuadraticSymbol(1, -davies.Q_re, davies.Q_im)


def test_harmonic_hamilton_map(harmonic):
    F = hamilton_map(harmonic)
    np.testing.assert_array_equal(F.F, [[0.0, 1.0], [-1.0, 0.0]])
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(F.F).imag), [-1.0, 1.0])


def test_davies_hamilton_eigenvalues(davies):
    eig = np.linalg.eigvals(hamilton_map(davies).F)
    np.testing.assert_allclose(np.abs(eig), [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(eig ** 2, [-1j, -1j], atol=1e-12)


@pytest.mark.parametrize("name", ["harmonic", "davies", "kfp", "chain"])
def test_hamilton_map_identities(name):
    from quadsub.catalog import get_entry

    q = get_entry(name).symbol
    F = hamilton_map(q)
    assert F.skew_residual() < 1e-12
    assert F.polarization_residual(q) < 1e-12


def test_poisson_derivative_of_x_squared_along_xi_squared():
    # H_{xi^2} = 2 xi d_x, so H_{xi^2} x^2 = 4 x xi.
    g = RealQuadForm(np.diag([1.0, 0.0]))
    f = RealQuadForm(np.diag([0.0, 1.0]))
    np.testing.assert_array_equal(poisson_derivative(g, f).G, [[0.0, 2.0], [2.0, 0.0]])


def test_poisson_derivative_dimension_mismatch():
    with pytest.raises(SymbolError):
        poisson_derivative(RealQuadForm(np.eye(2)), RealQuadForm(np.eye(4)))


def test_hamiltonian_flow_of_harmonic_is_rotation(harmonic):
    flow = hamiltonian_flow(harmonic.real_part(), np.pi / 4)
    np.testing.assert_allclose(flow, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-12)


def test_hamiltonian_flow_preserves_generator(kfp):
    f = kfp.imag_part()
    flow = hamiltonian_flow(f, 0.37)
    np.testing.assert_allclose(flow.T @ f.G @ flow, f.G, atol=1e-12)
    J = symplectic_matrix(2)
    np.testing.assert_allclose(flow.T @ J @ flow, J, atol=1e-12)


def test_bargmann_transform_is_complex_symplectic():
    for n in (1, 2, 3):
        assert bargmann_transform(n).symplectic_residual() < 1e-12


@pytest.mark.parametrize("x", [np.array([0.3 + 0.7j]), np.array([-1.2 + 0.1j, 0.5 - 2.0j])])
def test_phi0_matches_phase_maximum(x):
    assert phi0_from_phase(x) == pytest.approx(phi0(x), abs=1e-8)
    assert phi0(x) == pytest.approx(0.5 * np.sum(np.abs(x) ** 2))


def test_conjugated_symbol_is_complex_symmetric(kfp):
    Q_tilde = conjugate_by_bargmann(kfp)
    np.testing.assert_allclose(Q_tilde, Q_tilde.T, atol=1e-14)


def test_restricted_real_part_is_non_negative(davies, kfp):
    rng = np.random.default_rng(7)
    for q in (davies, kfp):
        for _ in range(20):
            x = rng.standard_normal(q.n) + 1j * rng.standard_normal(q.n)
            assert restricted_real_part(q, x) >= -1e-12


def test_restricted_real_part_of_harmonic_is_norm_squared(harmonic):
    # Lambda_Phi0 is the image of R^2 under kappa_T, where q(y, eta) = y^2 + eta^2 = 2 |x|^2.
    x = np.array([0.6 - 0.8j])
    value = restricted_real_part(harmonic, x)
    assert value == pytest.approx(2.0, rel=1e-12)


def test_symplectic_convention_sigma():
    convention = SymplecticConvention(1)
    # sigma((x, xi), (y, eta)) = xi y - x eta
    assert convention.sigma(np.array([2.0, 3.0]), np.array([5.0, 7.0])) == pytest.approx(3.0 * 5.0 - 2.0 * 7.0)
    J = convention.J_sigma
    np.testing.assert_array_equal(J.T, -J)
    np.testing.assert_array_equal(convention.sigma(np.eye(2), np.eye(2)), J)


@pytest.mark.parametrize("name", ["davies", "kfp", "chain"])
def test_conjugated_symbol_composed_with_bargmann_is_q(name):
    from quadsub.catalog import get_entry

    q = get_entry(name).symbol
    kappa = bargmann_transform(q.n)
    Q_tilde = conjugate_by_bargmann(q)
    rng = np.random.default_rng(11)
    for _ in range(10):
        Y = rng.standard_normal(2 * q.n) + 1j * rng.standard_normal(2 * q.n)
        Z = kappa.apply(Y)
        assert Z @ Q_tilde @ Z == pytest.approx(Y @ q.Q @ Y, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_bargmann_image_of_real_space_is_lambda_phi0(n):
    kappa = bargmann_transform(n)
    rng = np.random.default_rng(3)
    for _ in range(10):
        Z = kappa.apply(rng.standard_normal(2 * n))
        x, xi = Z[:n], Z[n:]
        np.testing.assert_allclose(xi, holomorphic_gradient_point(0.5 * np.eye(2 * n), x), atol=1e-14)
        np.testing.assert_allclose(xi, -1j * x.conj(), atol=1e-14)


def test_hamiltonian_flow_group_law(kfp):
    f = kfp.imag_part()
    s, t = 0.21, 0.34
    np.testing.assert_allclose(hamiltonian_flow(f, s) @ hamiltonian_flow(f, t), hamiltonian_flow(f, s + t), atol=1e-12)
    np.testing.assert_allclose(hamiltonian_flow(f, t) @ hamiltonian_flow(f, -t), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(hamiltonian_flow(f, 0.0), np.eye(4), atol=1e-15)
