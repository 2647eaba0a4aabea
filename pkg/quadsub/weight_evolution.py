"""
Weight evolution G_t and the evolved Bargmann weight Phi_t.

G_t is computed three ways: the matrix Riccati equation, the closed form
G_t(X) = (1/2) sigma(X, tan(2tF) X) for real symbols, and extraction from the
plane exp(2itF)(R^{2n}) = {X + i H_{G_t} X}. Phi_t is the critical value of
-Im phi(x, y) - eta.Im y + G_t(Re y, eta).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh, expm

from .errors import (
    DegenerateCriticalPoint,
    PlaneNotGraph,
    SymbolError,
    TanSingular,
    WeightBlowup,
)
from .flow_bounds import averaged_form
from .singular_space import k0_index
from .slope_fit import SlopeFitReport, fit_power_law
from .symbol_core import (
    QuadraticSymbol,
    bargmann_phase,
    hamilton_map,
    hamilton_matrix,
    hamiltonian_flow,
    restricted_real_part,
    symplectic_matrix,
)

logger = logging.getLogger(__name__)

DEFAULT_RK4_STEP = 1e-4
MAX_RK4_STEP = 1e-3
DEFAULT_WEIGHT_WINDOW = 0.3
BLOWUP_NORM = 1e6
STEP_HALVING_TOL = 1e-10
TAN_INVERSE_LIMIT = 1e8
GRAPH_COND_LIMIT = 1e10
CRITICAL_COND_LIMIT = 1e10
CONSISTENCY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class WeightForm:
    t: float
    Gamma: np.ndarray
    # cond(cos 2tF) for the closed form, ||A^{-1}|| for the plane extraction
    condition: Optional[float] = None

    @property
    def n(self) -> int:
        return self.Gamma.shape[0] // 2

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.Gamma)[0])


@dataclass(frozen=True, eq=False)
class PhiForm:
    """Phi_t(x) = v^T P v with v = (Re x, Im x); excess is P - P_0 as computed."""

    t: float
    P: np.ndarray
    excess: np.ndarray

    @property
    def n(self) -> int:
        return self.P.shape[0] // 2

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=complex)
        v = np.concatenate([x.real, x.imag])
        return float(v @ self.P @ v)

    def gap(self) -> np.ndarray:
        """P - P_0 with P_0 = I/2 the matrix of Phi_0."""
        return self.excess


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _riccati_rhs(Gamma: np.ndarray, Q_re: np.ndarray, F_im: np.ndarray, Omega: np.ndarray) -> np.ndarray:
    F_gamma = Omega @ Gamma
    return Q_re + 2.0 * (Gamma @ F_im + F_im.T @ Gamma) - 4.0 * F_gamma.T @ Q_re @ F_gamma


def _integrate(q: QuadraticSymbol, times: np.ndarray, h: float) -> List[np.ndarray]:
    Q_re = q.Q_re
    F_im = hamilton_map(q).F_im
    Omega = hamilton_matrix(q.n)
    Gamma = np.zeros_like(Q_re)
    snapshots = []
    t_now = 0.0
    for t_next in times:
        span = t_next - t_now
        steps = int(np.ceil(span / h - 1e-12)) if span > 0 else 0
        if steps:
            dt = span / steps
            for _ in range(steps):
                k1 = _riccati_rhs(Gamma, Q_re, F_im, Omega)
                k2 = _riccati_rhs(Gamma + 0.5 * dt * k1, Q_re, F_im, Omega)
                k3 = _riccati_rhs(Gamma + 0.5 * dt * k2, Q_re, F_im, Omega)
                k4 = _riccati_rhs(Gamma + dt * k3, Q_re, F_im, Omega)
                Gamma = _sym(Gamma + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            if not np.all(np.isfinite(Gamma)) or np.linalg.norm(Gamma, 2) > BLOWUP_NORM:
                logger.warning(f"Riccati weight left the validity window before t={t_next:.4f}")
                partial = [WeightForm(t=float(s), Gamma=G) for s, G in zip(times, snapshots)]
                raise WeightBlowup(f"||Gamma|| > {BLOWUP_NORM:g} before t={t_next}", report=partial)
        snapshots.append(Gamma.copy())
        t_now = t_next
    return snapshots


def weight_riccati(
    q: QuadraticSymbol,
    t_end: float,
    h: float = DEFAULT_RK4_STEP,
    t_grid: Optional[Sequence[float]] = None,
    check_step: bool = True,
) -> List[WeightForm]:
    """
    Integrate dGamma/dt = Q_re + 2(Gamma F_im + F_im^T Gamma) - 4 F_Gamma^T Q_re F_Gamma,
    F_Gamma = [[0, I], [-I, 0]] Gamma, Gamma(0) = 0, by classical RK4.

    Args:
        q: quadratic symbol
        t_end: final time in (0, 0.3]
        h: maximal step, at most 1e-3
        t_grid: snapshot times in [0, t_end] (default: 0 and t_end)
        check_step: rerun with h/2 and require agreement to 1e-10

    Returns:
        list of WeightForm, one per snapshot time

    Raises:
        WeightBlowup: ||Gamma|| exceeded 1e6; partial snapshots are attached
    """
    if not 0 < t_end <= DEFAULT_WEIGHT_WINDOW:
        raise ValueError(f"t_end must lie in (0, {DEFAULT_WEIGHT_WINDOW}], got {t_end}")
    if not 0 < h <= MAX_RK4_STEP:
        raise ValueError(f"RK4 step must lie in (0, {MAX_RK4_STEP}], got {h}")

    times = np.array([0.0, t_end] if t_grid is None else sorted(t_grid), dtype=float)
    if times[0] < 0 or times[-1] > t_end + 1e-15:
        raise ValueError(f"snapshot times must lie in [0, {t_end}]")

    snapshots = _integrate(q, times, h)
    if check_step:
        halved = _integrate(q, times, 0.5 * h)
        scale = max(1.0, float(np.linalg.norm(snapshots[-1], 2)))
        change = max(float(np.max(np.abs(a - b))) for a, b in zip(snapshots, halved))
        logger.debug(f"Riccati step-halving change {change:.2e} (h={h:g})")
        assert change < STEP_HALVING_TOL * scale, f"RK4 step {h} not resolved: halving changed Gamma by {change:.2e}"

    return [WeightForm(t=float(t), Gamma=G) for t, G in zip(times, snapshots)]


def matrix_tan(M: np.ndarray) -> np.ndarray:
    """tan(M) = -i (e^{2iM} - I)(e^{2iM} + I)^{-1}."""
    E = expm(2j * M)
    eye = np.eye(M.shape[0])
    denominator = E + eye
    inverse = np.linalg.inv(denominator)
    if np.linalg.norm(inverse, 2) > TAN_INVERSE_LIMIT:
        raise TanSingular(f"||(e^(2iM) + I)^-1|| exceeds {TAN_INVERSE_LIMIT:g}")
    return -1j * (E - eye) @ inverse


def weight_closed_form_real(q: QuadraticSymbol, t: float) -> WeightForm:
    """
    Gamma = sym((1/2) J_sigma tan(2tF)) for a real symbol.

    Raises:
        SymbolError: Im q is not zero
        TanSingular: cos(2tF) is numerically singular
    """
    if np.any(q.Q_im != 0):
        raise SymbolError("closed-form weight requires Im q = 0")
    F = hamilton_map(q).F_re
    M = 2.0 * t * F
    tan = matrix_tan(M)
    condition = float(np.linalg.cond(expm(1j * M) + expm(-1j * M)))
    Gamma = _sym(0.5 * symplectic_matrix(q.n) @ tan.real)
    return WeightForm(t=float(t), Gamma=Gamma, condition=condition)


def lagrangian_weight(q: QuadraticSymbol, t: float) -> WeightForm:
    """
    Read Gamma off the plane exp(2itF)(R^{2n}) = {X + iK X}, K = B A^{-1},
    where U = exp(2itF) = A + iB, and K = 2 [[0, I], [-I, 0]] Gamma.

    Raises:
        PlaneNotGraph: A is singular, so the plane is not a graph over R^{2n}
    """
    F = hamilton_map(q).F
    U = expm(2j * t * F)
    A, B = U.real, U.imag
    if np.linalg.cond(A) > GRAPH_COND_LIMIT:
        raise PlaneNotGraph(f"Re exp(2itF) is singular at t={t}")
    A_inv = np.linalg.inv(A)
    K = B @ A_inv
    Gamma = _sym(0.5 * symplectic_matrix(q.n) @ K)

    residual = float(np.max(np.abs(K - 2.0 * hamilton_matrix(q.n) @ Gamma)))
    assert residual < CONSISTENCY_TOL * max(1.0, float(np.max(np.abs(K)))), (
        f"plane is not of the form X + iH_G X (residual {residual:.2e})"
    )
    return WeightForm(t=float(t), Gamma=Gamma, condition=float(np.linalg.norm(A_inv, 2)))


def _phase_functional(Gamma: np.ndarray, w: np.ndarray) -> float:
    """-Im phi(x, y) - eta.Im y + G_t(Re y, eta) at w = (Re x, Im x, Re y, Im y, eta)."""
    n = Gamma.shape[0] // 2
    a, b, c, d, eta = (w[k * n:(k + 1) * n] for k in range(5))
    x = a + 1j * b
    y = c + 1j * d
    re_y_eta = np.concatenate([c, eta])
    return float(-bargmann_phase(x, y).imag - eta @ d + re_y_eta @ Gamma @ re_y_eta)


@lru_cache(maxsize=8)
def _base_phase_matrix(n: int) -> np.ndarray:
    """The phase at Gamma = 0 polarized on basis vectors into a 5n x 5n matrix."""
    size = 5 * n
    zero = np.zeros((2 * n, 2 * n))
    eye = np.eye(size)
    diag = np.array([_phase_functional(zero, eye[i]) for i in range(size)])
    M = np.diag(diag)
    for i in range(size):
        for j in range(i + 1, size):
            value = 0.5 * (_phase_functional(zero, eye[i] + eye[j]) - diag[i] - diag[j])
            M[i, j] = M[j, i] = value
    M.setflags(write=False)
    return M


def _weight_block(Gamma: np.ndarray) -> np.ndarray:
    """Gamma placed on the (Re y, eta) entries of z = (Re y, Im y, eta)."""
    n = Gamma.shape[0] // 2
    E = np.zeros((3 * n, 3 * n))
    idx = np.r_[0:n, 2 * n:3 * n]
    E[np.ix_(idx, idx)] = Gamma
    return E


def phi_from_weight(w: WeightForm) -> PhiForm:
    """
    Critical value over z = (Re y, Im y, eta) of the weighted phase, as a
    quadratic form in (Re x, Im x).

    With M the polarized phase at Gamma = 0, A = M_zz, C = M_zx and E the
    weight block, the Schur complement splits as

        P = (M_xx - C^T A^{-1} C) + (A^{-1} C)^T E ((A + E)^{-1} C)

    The first term is the matrix of Phi_0. The second is P - P_0, formed
    without subtracting two O(1) matrices, so it keeps its relative accuracy
    when Gamma is small.

    Raises:
        DegenerateCriticalPoint: the stationarity block has condition number > 1e10
    """
    n = w.n
    M = _base_phase_matrix(n)
    x_part = slice(0, 2 * n)
    z_part = slice(2 * n, 5 * n)
    A = M[z_part, z_part]
    C = M[z_part, x_part]
    E = _weight_block(_sym(w.Gamma))
    M_zz = A + E
    if np.linalg.cond(M_zz) > CRITICAL_COND_LIMIT:
        raise DegenerateCriticalPoint(f"stationarity system is singular at t={w.t}")
    base = np.linalg.solve(A, C)
    shifted = np.linalg.solve(M_zz, C)
    P0 = M[x_part, x_part] - C.T @ base
    excess = _sym(base.T @ E @ shifted)
    return PhiForm(t=w.t, P=_sym(P0) + excess, excess=excess)


def _curve_values(
    q: QuadraticSymbol, t: np.ndarray, h: float, measure: Callable[[WeightForm], float]
) -> List[float]:
    """measure() on the Riccati weights; a blow-up carries the values reached so far."""
    try:
        forms = weight_riccati(q, float(t[-1]), h=h, t_grid=t)
    except WeightBlowup as e:
        done = e.report or []
        partial = {"t_grid": [f.t for f in done], "values": [measure(f) for f in done]}
        raise WeightBlowup(str(e), report=partial) from e
    return [measure(f) for f in forms]


def _phi_gap_min(form: WeightForm) -> float:
    return float(np.linalg.eigvalsh(phi_from_weight(form).gap())[0])


def _phi_backward_gap_min(form: WeightForm) -> float:
    return float(np.linalg.eigvalsh(-phi_from_weight(form).gap())[0])


def weight_lambda_curve(q: QuadraticSymbol, t_grid: Sequence[float], h: float = DEFAULT_RK4_STEP) -> SlopeFitReport:
    """Slope of lambda_min(Gamma_t) from the Riccati route; 2 k0 + 1 is expected."""
    k0 = k0_index(q)
    t = np.asarray(t_grid, dtype=float)
    expected = 2 * k0 + 1
    values = _curve_values(q, t, h, lambda form: form.lambda_min)
    report = fit_power_law(t, values, exponent=expected, bound="lower")
    report.extra["k0_expected"] = expected
    return report


def phi_gap_curve(q: QuadraticSymbol, t_grid: Sequence[float], h: float = DEFAULT_RK4_STEP) -> SlopeFitReport:
    """Slope of lambda_min(P(t) - I/2); Phi_t >= Phi_0 + t^{2k0+1}/C |x|^2 predicts 2 k0 + 1."""
    k0 = k0_index(q)
    t = np.asarray(t_grid, dtype=float)
    expected = 2 * k0 + 1
    report = fit_power_law(t, _curve_values(q, t, h, _phi_gap_min), exponent=expected, bound="lower")
    report.extra["k0_expected"] = expected
    return report


def phi_decay_check(q: QuadraticSymbol, t_grid: Sequence[float], h: float = DEFAULT_RK4_STEP) -> SlopeFitReport:
    """
    Backward weight: run the pipeline for -q and fit lambda_min(I/2 - P~(t)),
    which decays like t^{2k0+1}.
    """
    k0 = k0_index(q)
    t = np.asarray(t_grid, dtype=float)
    expected = 2 * k0 + 1
    gaps = _curve_values(q.negated(), t, h, _phi_backward_gap_min)
    report = fit_power_law(t, gaps, exponent=expected, bound="lower")
    report.extra["k0_expected"] = expected
    logger.info(f"backward weight gap slope {report.slope:.4f} (expected {expected})")
    return report


def hj_residual(q: QuadraticSymbol, t: float, xs: np.ndarray, h: float = 1e-4) -> float:
    """
    max over xs of |d/dt Phi_t(x) - Re q~(x, (2/i) dPhi_t/dx(x))|, with the time
    derivative by central differences.
    """
    if t - h < 0:
        raise ValueError(f"need t >= h for a central difference, got t={t}, h={h}")
    plus = phi_from_weight(lagrangian_weight(q, t + h))
    minus = phi_from_weight(lagrangian_weight(q, t - h))
    here = phi_from_weight(lagrangian_weight(q, t))
    worst = 0.0
    for x in np.atleast_2d(xs):
        dphi_dt = (plus.value(x) - minus.value(x)) / (2.0 * h)
        worst = max(worst, abs(dphi_dt - restricted_real_part(q, x, here.P)))
    return worst


def route_agreement(
    q: QuadraticSymbol,
    t_grid: Sequence[float],
    h: float = DEFAULT_RK4_STEP,
    closed_form: Optional[bool] = None,
) -> float:
    """
    Max entrywise difference between the Riccati and plane weights, and also
    the closed form when ``closed_form`` is set (default: whenever Im q = 0).
    """
    if closed_form is None:
        closed_form = not np.any(q.Q_im)
    t = np.asarray(sorted(t_grid), dtype=float)
    riccati = weight_riccati(q, float(t[-1]), h=h, t_grid=t)
    worst = 0.0
    for form in riccati:
        worst = max(worst, float(np.max(np.abs(form.Gamma - lagrangian_weight(q, form.t).Gamma))))
        if closed_form:
            worst = max(worst, float(np.max(np.abs(form.Gamma - weight_closed_form_real(q, form.t).Gamma))))
    return worst


def gronwall_constant(q: QuadraticSymbol, t_grid: Sequence[float], h: float = DEFAULT_RK4_STEP) -> float:
    """
    Smallest C with G_t(exp(t H_{-Im q}) X) >= J~(t, X) / C on the grid, where
    J~ is the averaged form along the reversed flow. G_t comes from the Riccati
    route.
    """
    t = np.asarray(sorted(t_grid), dtype=float)
    constant = 0.0
    im_part = q.imag_part()
    for form in weight_riccati(q, float(t[-1]), h=h, t_grid=t):
        flow = hamiltonian_flow(im_part, -form.t)
        pulled = _sym(flow.T @ form.Gamma @ flow)
        J_rev = averaged_form(q, form.t, reverse=True).G.G
        ratio = eigh(J_rev, pulled, eigvals_only=True)[-1]
        constant = max(constant, float(ratio))
    return constant


def phi_monotone_check(q: QuadraticSymbol, t_grid: Sequence[float]) -> float:
    """Smallest eigenvalue of P(t_{i+1}) - P(t_i); non-negative when Phi_t grows in t."""
    t = np.asarray(sorted(t_grid), dtype=float)
    gaps = [phi_from_weight(lagrangian_weight(q, ti)).gap() for ti in t]
    return min(float(np.linalg.eigvalsh(b - a)[0]) for a, b in zip(gaps[:-1], gaps[1:]))
