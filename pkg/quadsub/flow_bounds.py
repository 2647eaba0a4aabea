"""
Averaged form J(t, X) = int_0^t Re q(exp(s H_{Im q}) X) ds and the
small-time lower bound lambda_min(J(t)) >= t^{2 k0 + 1} / C.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm

from .errors import NoOrderFound, QuadratureNotConverged
from .singular_space import k0_index, poisson_tower
from .slope_fit import SlopeFitReport, fit_power_law
from .symbol_core import QuadraticSymbol, RealQuadForm, hamilton_map

logger = logging.getLogger(__name__)

GAUSS_ORDER = 10
QUADRATURE_RTOL = 1e-11
MAX_PANEL_DOUBLINGS = 16
TAYLOR_TOL = 1e-10
DEFAULT_FLOW_WINDOW = (1e-3, 1e-2)
FLOW_T_MAX = 0.1

_NODES, _WEIGHTS = leggauss(GAUSS_ORDER)


def small_time_window(k0: int) -> Tuple[float, float]:
    """
    Default fitting window for the t^{2 k0 + 1} exponents.

    The window moves right by a factor 3 for every k0 above 1 so that the
    smallest eigenvalue stays well above rounding in matrices of size ~t.
    """
    factor = 3.0 ** max(k0 - 1, 0)
    hi = min(DEFAULT_FLOW_WINDOW[1] * factor, FLOW_T_MAX)
    lo = min(DEFAULT_FLOW_WINDOW[0] * factor, hi / 10.0)
    return lo, hi


@dataclass(frozen=True, eq=False)
class AveragedForm:
    t: float
    G: RealQuadForm

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.G.G)[0])


class TaylorOrder(NamedTuple):
    j: int
    a: float


def _panel_sum(Q_re: np.ndarray, F_im: np.ndarray, t: float, panels: int) -> np.ndarray:
    total = np.zeros_like(Q_re)
    width = t / panels
    for p in range(panels):
        left = p * width
        for node, weight in zip(_NODES, _WEIGHTS):
            s = left + 0.5 * width * (node + 1.0)
            flow = expm(2.0 * s * F_im)
            total += 0.5 * width * weight * (flow.T @ Q_re @ flow)
    return total


def averaged_form(q: QuadraticSymbol, t: float, reverse: bool = False) -> AveragedForm:
    """
    Matrix of J(t, .) by composite Gauss-Legendre quadrature.

    Args:
        q: quadratic symbol
        t: end time in [0, 1]
        reverse: integrate along exp(s H_{-Im q}) instead (the J~ variant)

    Returns:
        AveragedForm with a symmetrized matrix

    Raises:
        QuadratureNotConverged: panel doubling did not settle within 16 rounds
    """
    if not 0 <= t <= 1:
        raise ValueError(f"averaged_form needs 0 <= t <= 1, got {t}")
    if t == 0:
        return AveragedForm(t=0.0, G=RealQuadForm(np.zeros_like(q.Q_re)))

    F_im = hamilton_map(q).F_im
    if reverse:
        F_im = -F_im

    panels = 1
    current = _panel_sum(q.Q_re, F_im, t, panels)
    for doubling in range(MAX_PANEL_DOUBLINGS):
        panels *= 2
        refined = _panel_sum(q.Q_re, F_im, t, panels)
        change = np.linalg.norm(refined - current)
        scale = np.linalg.norm(refined)
        current = refined
        if change <= QUADRATURE_RTOL * scale or scale == 0:
            logger.debug(f"averaged_form t={t:.3e}: converged with {panels} panels")
            return AveragedForm(t=float(t), G=RealQuadForm(current))
        logger.debug(f"averaged_form t={t:.3e}: doubling {doubling}, relative change {change / scale:.2e}")

    logger.warning(f"averaged_form t={t:.3e}: no convergence after {MAX_PANEL_DOUBLINGS} doublings")
    raise QuadratureNotConverged(f"Gauss-Legendre panels did not converge at t={t}")


def _check_grid(t_grid: Sequence[float], upper: float) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("t grid must be a 1-D array with at least 2 points")
    if np.any(t <= 0) or np.any(t > upper):
        raise ValueError(f"t grid must lie in (0, {upper}]")
    return t


def lambda_min_curve(
    q: QuadraticSymbol,
    t_grid: Sequence[float],
    reverse: bool = False,
) -> SlopeFitReport:
    """
    Fit the log-log slope of lambda_min(J(t)) on the grid; 2 k0 + 1 is expected.

    Also records the smallest eigenvalue of the increments J(t_{i+1}) - J(t_i),
    which must stay non-negative.
    """
    k0 = k0_index(q)
    t = _check_grid(t_grid, FLOW_T_MAX)

    forms = [averaged_form(q, float(ti), reverse=reverse) for ti in t]
    values = [form.lambda_min for form in forms]
    increments = [
        float(np.linalg.eigvalsh(b.G.G - a.G.G)[0]) for a, b in zip(forms[:-1], forms[1:])
    ]

    expected = 2 * k0 + 1
    report = fit_power_law(t, values, exponent=expected, bound="lower")
    report.extra["k0_expected"] = expected
    report.extra["min_increment_eig"] = min(increments)
    logger.info(f"lambda_min(J) slope {report.slope:.4f} (expected {expected}, reverse={reverse})")
    return report


def taylor_coefficients(q: QuadraticSymbol, X: np.ndarray, order: int) -> np.ndarray:
    """c_m = (H_{Im q}^m Re q)(X) / m! for m = 0..order."""
    X = np.asarray(X, dtype=float)
    return np.array([X @ G @ X / math.factorial(m) for m, G in enumerate(poisson_tower(q, order))])


def taylor_order(q: QuadraticSymbol, X: np.ndarray, tol: float = TAYLOR_TOL) -> TaylorOrder:
    """
    Leading order of t -> Re q(exp(t H_{Im q}) X) at t = 0.

    Returns (j, a) with a = c_{2j} the first even Taylor coefficient above tol.

    Raises:
        NoOrderFound: every coefficient through order 2 k0 vanishes
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (2 * q.n,):
        raise ValueError(f"X must be a vector of length {2 * q.n}")
    if abs(np.linalg.norm(X) - 1.0) > 1e-12:
        raise ValueError("taylor_order expects a unit vector")

    k0 = k0_index(q)
    coeffs = taylor_coefficients(q, X, 2 * k0)
    for j in range(k0 + 1):
        if coeffs[2 * j] > tol:
            lower = np.abs(coeffs[: 2 * j])
            assert np.all(lower <= tol), f"non-zero Taylor coefficient below order {2 * j}: {lower}"
            return TaylorOrder(j=j, a=float(coeffs[2 * j]))

    raise NoOrderFound(f"all Taylor coefficients through order {2 * k0} vanish at X={X.tolist()}")
