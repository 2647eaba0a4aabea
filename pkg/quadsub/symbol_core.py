"""
Phase-space conventions, quadratic symbols and Hamilton maps.

Coordinates are X = (x, xi) with the x-block first. The symplectic form is
sigma(X, Y) = xi.y - x.eta = X^T J_sigma Y with J_sigma = [[0, -I], [I, 0]],
and the Hamilton map of q is F = J_sigma^{-1} Q = [[0, I], [-I, 0]] Q, so that
q(X, Y) = sigma(X, F Y). The Hamilton field of a real quadratic form f is
H_f = 2 F_f.

The Bargmann side uses the phase phi(x, y) = (i/2)(x^2 + y^2) - i sqrt(2) x.y,
for which Phi_0(x) = |x|^2 / 2 and
kappa_T(y, eta) = ((y - i eta)/sqrt(2), (eta - i y)/sqrt(2)).
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .errors import SymbolError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
IDENTITY_TOL = 1e-12


def symplectic_matrix(n: int) -> np.ndarray:
    """J_sigma = [[0, -I], [I, 0]] on R^{2n}."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def hamilton_matrix(n: int) -> np.ndarray:
    """J_sigma^{-1} = [[0, I], [-I, 0]]; maps the matrix of a form to its Hamilton map."""
    return -symplectic_matrix(n)


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _as_square(M: Any, size: int, name: str) -> np.ndarray:
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise SymbolError(f"{name} must be a square matrix, got shape {arr.shape}")
    if arr.shape[0] != size:
        raise SymbolError(f"{name} must be {size}x{size}, got {arr.shape[0]}x{arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise SymbolError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SymplecticConvention:
    """sigma(X, Y) = X^T J_sigma Y; on matrices, the Gram matrix of sigma over their columns."""

    n: int

    @property
    def J_sigma(self) -> np.ndarray:
        return symplectic_matrix(self.n)

    def sigma(self, X: np.ndarray, Y: np.ndarray) -> Union[complex, np.ndarray]:
        return np.asarray(X).T @ self.J_sigma @ np.asarray(Y)


@dataclass(frozen=True, eq=False)
class RealQuadForm:
    """Real quadratic form X -> X^T G X on R^{2n}."""

    G: np.ndarray

    def __post_init__(self) -> None:
        G = np.asarray(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] % 2:
            raise SymbolError(f"quadratic form matrix must be 2n x 2n, got shape {G.shape}")
        object.__setattr__(self, "G", _symmetrize(G))

    @property
    def n(self) -> int:
        return self.G.shape[0] // 2

    def value(self, X: np.ndarray) -> float:
        X = np.asarray(X)
        return X @ self.G @ X

    def hamilton_map(self) -> np.ndarray:
        return hamilton_matrix(self.n) @ self.G


@dataclass(frozen=True, eq=False)
class QuadraticSymbol:
    """
    Complex quadratic symbol q = X^T (Q_re + i Q_im) X on R^{2n}.

    Inputs are symmetrized on construction. Re q must be positive
    semi-definite unless ``check_accretive`` is False, which is reserved for
    the backward evolution of -q.
    """

    n: int
    Q_re: np.ndarray
    Q_im: np.ndarray
    check_accretive: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise SymbolError(f"n must be a positive integer, got {self.n}")
        size = 2 * int(self.n)
        Q_re = _symmetrize(_as_square(self.Q_re, size, "Q_re"))
        Q_im = _symmetrize(_as_square(self.Q_im, size, "Q_im"))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "Q_re", Q_re)
        object.__setattr__(self, "Q_im", Q_im)

        if self.check_accretive:
            scale = np.linalg.norm(Q_re, 2)
            lowest = np.linalg.eigvalsh(Q_re)[0] if size else 0.0
            if lowest < -PSD_TOL * scale:
                raise SymbolError(
                    f"Re q must be positive semi-definite; smallest eigenvalue {lowest:.3e}"
                )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QuadraticSymbol":
        try:
            n = data["n"]
            Q_re = data["Q_re"]
            Q_im = data.get("Q_im")
        except (KeyError, TypeError, AttributeError) as e:
            raise SymbolError(f"symbol object must have keys n, Q_re, Q_im: {e}") from e
        if not isinstance(n, int) or isinstance(n, bool):
            raise SymbolError(f"n must be an integer, got {n!r}")
        if Q_im is None:
            Q_im = np.zeros((2 * n, 2 * n))
        try:
            return cls(n=n, Q_re=Q_re, Q_im=Q_im)
        except (TypeError, ValueError) as e:
            if isinstance(e, SymbolError):
                raise
            raise SymbolError(f"could not read symbol matrices: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "QuadraticSymbol":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise SymbolError(f"malformed symbol JSON: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "Q_re": self.Q_re.tolist(), "Q_im": self.Q_im.tolist()}

    @property
    def Q(self) -> np.ndarray:
        return self.Q_re + 1j * self.Q_im

    def value(self, X: np.ndarray) -> complex:
        X = np.asarray(X)
        return X @ self.Q @ X

    def bilinear(self, X: np.ndarray, Y: np.ndarray) -> complex:
        return np.asarray(X) @ self.Q @ np.asarray(Y)

    def real_part(self) -> RealQuadForm:
        return RealQuadForm(self.Q_re)

    def imag_part(self) -> RealQuadForm:
        return RealQuadForm(self.Q_im)

    def conjugate(self) -> "QuadraticSymbol":
        return QuadraticSymbol(self.n, self.Q_re, -self.Q_im, self.check_accretive)

    def scaled(self, c: float) -> "QuadraticSymbol":
        return QuadraticSymbol(self.n, c * self.Q_re, c * self.Q_im, self.check_accretive and c >= 0)

    def negated(self) -> "QuadraticSymbol":
        """-q; Re(-q) is negative semi-definite so the accretivity check is skipped."""
        return QuadraticSymbol(self.n, -self.Q_re, -self.Q_im, check_accretive=False)


@dataclass(frozen=True, eq=False)
class HamiltonMap:
    F_re: np.ndarray
    F_im: np.ndarray

    @property
    def F(self) -> np.ndarray:
        return self.F_re + 1j * self.F_im

    @property
    def n(self) -> int:
        return self.F_re.shape[0] // 2

    def skew_residual(self) -> float:
        """max |sigma(F e_j, e_k) + sigma(e_j, F e_k)| over basis pairs."""
        sigma = SymplecticConvention(self.n).sigma
        eye = np.eye(2 * self.n)
        return float(np.max(np.abs(sigma(self.F, eye) + sigma(eye, self.F))))

    def polarization_residual(self, q: QuadraticSymbol) -> float:
        """max |sigma(e_j, F e_k) - q(e_j, e_k)| over basis pairs."""
        sigma = SymplecticConvention(self.n).sigma
        return float(np.max(np.abs(sigma(np.eye(2 * self.n), self.F) - q.Q)))


@dataclass(frozen=True, eq=False)
class CanonicalTransform:
    """Complex linear map (y, eta) -> (x, xi) on C^{2n}."""

    A: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(Y)

    def inverse(self) -> "CanonicalTransform":
        return CanonicalTransform(np.linalg.inv(self.A))

    def symplectic_residual(self) -> float:
        convention = SymplecticConvention(self.n)
        return float(np.max(np.abs(convention.sigma(self.A, self.A) - convention.J_sigma)))


def hamilton_map(q: QuadraticSymbol) -> HamiltonMap:
    """
    Hamilton map F = J_sigma^{-1} (Q_re + i Q_im) of q.

    Args:
        q: quadratic symbol

    Returns:
        HamiltonMap with sigma(X, F Y) = q(X, Y)
    """
    Omega = hamilton_matrix(q.n)
    hmap = HamiltonMap(F_re=Omega @ q.Q_re, F_im=Omega @ q.Q_im)
    scale = max(1.0, float(np.max(np.abs(q.Q))))
    assert hmap.skew_residual() <= IDENTITY_TOL * scale, "Hamilton map is not sigma-skew"
    assert hmap.polarization_residual(q) <= IDENTITY_TOL * scale, "Hamilton map polarization failed"
    return hmap


def poisson_derivative(g: RealQuadForm, f: RealQuadForm) -> RealQuadForm:
    """
    Poisson derivative H_f g of a quadratic form g along the Hamilton field of f.

    With H_f = f'_xi . d_x - f'_x . d_xi the result has matrix
    2 (G F_f + F_f^T G), F_f = [[0, I], [-I, 0]] (matrix of f).
    """
    if g.G.shape != f.G.shape:
        raise SymbolError(f"dimension mismatch: {g.G.shape} vs {f.G.shape}")
    F_f = f.hamilton_map()
    return RealQuadForm(2.0 * (g.G @ F_f + F_f.T @ g.G))


def hamiltonian_flow(f: RealQuadForm, t: float) -> np.ndarray:
    """Time-t flow exp(2 t F_f) of the Hamilton field of f."""
    return expm(2.0 * t * f.hamilton_map())


def bargmann_transform(n: int) -> CanonicalTransform:
    """kappa_T(y, eta) = ((y - i eta)/sqrt(2), (eta - i y)/sqrt(2))."""
    eye = np.eye(n)
    A = np.block([[eye, -1j * eye], [-1j * eye, eye]]) / np.sqrt(2.0)
    return CanonicalTransform(A)


def bargmann_phase(x: np.ndarray, y: np.ndarray) -> complex:
    """phi(x, y) = (i/2)(x^2 + y^2) - i sqrt(2) x.y (bilinear, no conjugation)."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return 0.5j * (x @ x + y @ y) - 1j * np.sqrt(2.0) * (x @ y)


def phi0(x: np.ndarray) -> float:
    """Phi_0(x) = |x|^2 / 2."""
    x = np.asarray(x, dtype=complex)
    return 0.5 * float(np.vdot(x, x).real)


def phi0_from_phase(x: np.ndarray) -> float:
    """sup over real y of -Im phi(x, y), found by direct maximization."""
    x = np.asarray(x, dtype=complex)
    result = minimize(
        lambda y: bargmann_phase(x, y).imag,
        x0=np.zeros(x.shape[0]),
        method="BFGS",
        options={"gtol": 1e-12},
    )
    return float(-result.fun)


def conjugate_by_bargmann(q: QuadraticSymbol) -> np.ndarray:
    """
    Matrix of q~ = q o kappa_T^{-1} on C^{2n}.

    Returns:
        complex symmetric 2n x 2n matrix Q~ with q~(Z) = Z^T Q~ Z
    """
    A_inv = bargmann_transform(q.n).inverse().A
    Q_tilde = A_inv.T @ q.Q @ A_inv
    return 0.5 * (Q_tilde + Q_tilde.T)


def holomorphic_gradient_point(P: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    (2/i) dPhi/dx at x for Phi(x) = v^T P v, v = (Re x, Im x).

    Uses d/dx = (d/dRe x - i d/dIm x) / 2, exact for quadratic Phi.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    v = np.concatenate([x.real, x.imag])
    grad = 2.0 * P @ v
    d_x = 0.5 * (grad[:n] - 1j * grad[n:])
    return (2.0 / 1j) * d_x


def restricted_real_part(q: QuadraticSymbol, x: np.ndarray, P: Optional[np.ndarray] = None) -> float:
    """
    Re q~(x, (2/i) dPhi/dx(x)) on Lambda_Phi, with Phi_0 when P is omitted.

    Non-negative on Lambda_Phi0 whenever Re q >= 0.
    """
    if P is None:
        P = 0.5 * np.eye(2 * q.n)
    x = np.asarray(x, dtype=complex)
    Z = np.concatenate([x, holomorphic_gradient_point(P, x)])
    return float((Z @ conjugate_by_bargmann(q) @ Z).real)
