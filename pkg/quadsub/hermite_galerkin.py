"""
Hermite-Galerkin realization of q^w and the operator estimates measured on it.

The basis {psi_alpha : |alpha| <= N} is ordered by |alpha| and then
lexicographically, so the block |alpha| <= N_obs is a leading principal block
and a smaller basis is a prefix of a larger one.

Dense kernels (matrix exponential, singular values, Cholesky solves) run on
torch tensors in complex128 on the selected device.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy import sparse
from scipy import stats
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .errors import (
    BasisOverflow,
    CutoffTooSmall,
    ExpmNotConverged,
    InsufficientDecayRange,
    NoStableC0,
)
from .singular_space import k0_index
from .slope_fit import SlopeFitReport, fit_power_law
from .symbol_core import QuadraticSymbol

logger = logging.getLogger(__name__)

BASIS_SIZE_LIMIT = 200_000
MIN_BUILD_CUTOFF = 4
HALVING_TOL = 1e-10
CONTRACTION_SLACK = 1e-8
COEFFICIENT_FLOOR = 1e-13
MIN_DECAY_POINTS = 5
CUTOFF_LAYER_TOL = 1e-8
STABILITY_RTOL = 0.10
MAX_C0_POWER = 30
SUP_GRID_POINTS = 400
MAX_SEMINORM_ORDER = 6
DEFAULT_DEVICE = "cpu"

# Unit weights of (a, a^dagger) in sqrt(2) x, sqrt(2) D and sqrt(2) d/dx.
POSITION = (1.0, 1.0)
MOMENTUM = (-1j, 1j)
DERIVATIVE = (1.0, -1.0)


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class HermiteBasis:
    n: int
    N: int
    indices: Tuple[Tuple[int, ...], ...]
    positions: Dict[Tuple[int, ...], int]

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([sum(alpha) for alpha in self.indices])

    @property
    def eigenvalues(self) -> np.ndarray:
        """lambda_alpha = 2|alpha| + n, eigenvalues of D^2 + x^2."""
        return 2.0 * self.degrees + self.n

    def block_size(self, N_obs: int) -> int:
        if not 0 <= N_obs <= self.N:
            raise ValueError(f"N_obs must lie in [0, {self.N}], got {N_obs}")
        return math.comb(N_obs + self.n, self.n)

    def describe(self) -> Dict[str, object]:
        return {"n": self.n, "N": self.N, "size": self.size, "ordering": "graded-lexicographic"}


@lru_cache(maxsize=32)
def basis(n: int, N: int) -> HermiteBasis:
    """
    Graded basis {alpha in N^n : |alpha| <= N}.

    Raises:
        BasisOverflow: more than 2e5 basis elements
    """
    if n < 1 or N < 0:
        raise ValueError(f"need n >= 1 and N >= 0, got n={n}, N={N}")
    size = math.comb(N + n, n)
    if size > BASIS_SIZE_LIMIT:
        raise BasisOverflow(f"Hermite basis with n={n}, N={N} has {size} elements (limit {BASIS_SIZE_LIMIT})")
    indices = tuple(alpha for d in range(N + 1) for alpha in _compositions(d, n))
    logger.debug(f"built Hermite basis n={n}, N={N}, size={size}")
    return HermiteBasis(n=n, N=N, indices=indices, positions={a: i for i, a in enumerate(indices)})


@dataclass(frozen=True, eq=False)
class HermiteVector:
    basis: HermiteBasis
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=np.complex128)
        if coeffs.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} coefficients, got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("Hermite coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "HermiteVector":
        return HermiteVector(self.basis, self.coefficients / self.norm)

    def embed(self, target: HermiteBasis) -> "HermiteVector":
        """Zero-pad into a basis with the same n and a cutoff at least as large."""
        if target.n != self.basis.n or target.N < self.basis.N:
            raise ValueError(f"cannot embed N={self.basis.N} into N={target.N}")
        padded = np.zeros(target.size, dtype=np.complex128)
        padded[: self.basis.size] = self.coefficients
        return HermiteVector(target, padded)

    @classmethod
    def ground_state(cls, b: HermiteBasis) -> "HermiteVector":
        coeffs = np.zeros(b.size, dtype=np.complex128)
        coeffs[0] = 1.0
        return cls(b, coeffs)

    @classmethod
    def uniform(cls, b: HermiteBasis, N: Optional[int] = None) -> "HermiteVector":
        """Equal coefficients on |alpha| <= N, normalized."""
        coeffs = np.zeros(b.size, dtype=np.complex128)
        coeffs[: b.block_size(b.N if N is None else N)] = 1.0
        return cls(b, coeffs).normalized()

    @classmethod
    def random(cls, b: HermiteBasis, N: Optional[int] = None, seed: int = 0) -> "HermiteVector":
        rng = np.random.default_rng(seed)
        m = b.block_size(b.N if N is None else N)
        coeffs = np.zeros(b.size, dtype=np.complex128)
        coeffs[:m] = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        return cls(b, coeffs).normalized()


@dataclass(frozen=True, eq=False)
class GalerkinOperator:
    """Matrix of q^w on the basis |alpha| <= N_build; entry [beta, alpha] = (q^w psi_alpha, psi_beta)."""

    n: int
    N_build: int
    basis: HermiteBasis
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.size

    def hermitian_part_min(self) -> float:
        H = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(H)[0])


def _ladder(alpha: Tuple[int, ...], j: int, up: bool) -> Tuple[Optional[Tuple[int, ...]], int]:
    """a_j or a_j^dagger on psi_alpha: target index and the integer under the square root."""
    if up:
        factor = alpha[j] + 1
        shift = 1
    else:
        factor = alpha[j]
        shift = -1
        if factor == 0:
            return None, 0
    target = alpha[:j] + (alpha[j] + shift,) + alpha[j + 1:]
    return target, factor


def _assemble(entries: List[list], size: int) -> sparse.coo_matrix:
    rows, cols, vals = entries
    return sparse.coo_matrix(
        (
            np.asarray(vals, dtype=np.complex128),
            (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)),
        ),
        shape=(size, size),
    )


def _product_entries(b: HermiteBasis, first, j: int, second, k: int, coef: complex, out: List[list]) -> None:
    """
    Entries of coef * op1_j op2_k (op2 acts first), each op a unit-weight
    combination of a and a^dagger; the 1/sqrt(2) factors give the overall 1/2.
    """
    rows, cols, vals = out
    for col, alpha in enumerate(b.indices):
        for s2, w2 in ((False, second[0]), (True, second[1])):
            mid, f2 = _ladder(alpha, k, s2)
            if mid is None:
                continue
            for s1, w1 in ((False, first[0]), (True, first[1])):
                beta, f1 = _ladder(mid, j, s1)
                if beta is None:
                    continue
                row = b.positions.get(beta)
                if row is None:
                    continue
                rows.append(row)
                cols.append(col)
                vals.append(coef * 0.5 * (w1 * w2) * math.sqrt(f1 * f2))


def weyl_matrix(G: np.ndarray, b: HermiteBasis) -> np.ndarray:
    """
    Hermitian matrix of the Weyl quantization of the real form X^T G X,

        sum G_xx[j,k] x_j x_k + G_xixi[j,k] D_j D_k + G_xxi[j,k] (x_j D_k + D_k x_j).
    """
    n = b.n
    G_xx, G_xxi, G_xixi = G[:n, :n], G[:n, n:], G[n:, n:]
    out: List[list] = [[], [], []]
    for j in range(n):
        for k in range(n):
            if G_xx[j, k]:
                _product_entries(b, POSITION, j, POSITION, k, G_xx[j, k], out)
            if G_xixi[j, k]:
                _product_entries(b, MOMENTUM, j, MOMENTUM, k, G_xixi[j, k], out)
            if G_xxi[j, k]:
                _product_entries(b, POSITION, j, MOMENTUM, k, G_xxi[j, k], out)
                _product_entries(b, MOMENTUM, k, POSITION, j, G_xxi[j, k], out)
    M = _assemble(out, b.size).toarray()
    return 0.5 * (M + M.conj().T)


def quantize(q: QuadraticSymbol, N_build: int) -> GalerkinOperator:
    """
    Galerkin matrix of q^w = (Re q)^w + i (Im q)^w on |alpha| <= N_build.

    Matrix elements are exact compressions: intermediate states above the
    cutoff are kept, so for x^2 + xi^2 the result is diag(2|alpha| + n).

    Raises:
        BasisOverflow: the basis has more than 2e5 elements
    """
    if N_build < MIN_BUILD_CUTOFF:
        raise ValueError(f"N_build must be at least {MIN_BUILD_CUTOFF}, got {N_build}")
    b = basis(q.n, N_build)
    matrix = weyl_matrix(q.Q_re, b) + 1j * weyl_matrix(q.Q_im, b)
    logger.debug(f"quantized symbol on {b.size} Hermite functions (N_build={N_build})")
    return GalerkinOperator(n=q.n, N_build=N_build, basis=b, matrix=matrix)


def _tensor(M: np.ndarray, device: str) -> torch.Tensor:
    return torch.as_tensor(M, dtype=torch.complex128, device=device)


@torch.inference_mode()
def semigroup_matrix(G: GalerkinOperator, t: float, device: str = DEFAULT_DEVICE) -> np.ndarray:
    """exp(-t M) by scaling and squaring."""
    if t < 0:
        raise ValueError(f"semigroup needs t >= 0, got {t}")
    return torch.linalg.matrix_exp(-t * _tensor(G.matrix, device)).cpu().numpy()


def semigroup_apply(
    G: GalerkinOperator, t: float, u: HermiteVector, device: str = DEFAULT_DEVICE
) -> HermiteVector:
    """
    exp(-t M) u, certified by comparing with (exp(-t M / 2))^2 u.

    Raises:
        ExpmNotConverged: the halving check or the contraction bound failed
    """
    if u.basis.n != G.n:
        raise ValueError(f"vector has n={u.basis.n}, operator has n={G.n}")
    if u.basis.N != G.N_build:
        u = u.embed(G.basis)
    if t == 0:
        return u

    full = semigroup_matrix(G, t, device) @ u.coefficients
    half = semigroup_matrix(G, 0.5 * t, device)
    halved = half @ (half @ u.coefficients)
    u_norm = u.norm
    mismatch = float(np.linalg.norm(full - halved))
    if mismatch > HALVING_TOL * max(u_norm, 1e-300):
        logger.warning(f"matrix exponential halving check failed at t={t}: {mismatch:.2e}")
        raise ExpmNotConverged(f"exp(-tM)u and (exp(-tM/2))^2 u differ by {mismatch:.2e}")
    result = HermiteVector(G.basis, full)
    if result.norm > u_norm * (1.0 + CONTRACTION_SLACK):
        raise ExpmNotConverged(f"semigroup is not contractive at t={t}: {result.norm} > {u_norm}")
    return result


def contraction_norm(G: GalerkinOperator, t: float, device: str = DEFAULT_DEVICE) -> float:
    """||exp(-t M)||_2."""
    with torch.inference_mode():
        E = torch.linalg.matrix_exp(-t * _tensor(G.matrix, device))
        return float(torch.linalg.svdvals(E)[0])


def _check_cutoffs(N_build: int, N_obs: int) -> None:
    if not 0 <= N_obs <= N_build // 2:
        raise ValueError(f"need N_obs <= N_build / 2, got N_obs={N_obs}, N_build={N_build}")


@torch.inference_mode()
def _smoothing_norms(
    G: GalerkinOperator, N_obs: int, k_list: Sequence[int], t_grid: np.ndarray, device: str
) -> np.ndarray:
    m = G.basis.block_size(N_obs)
    lam = torch.as_tensor(G.basis.eigenvalues, dtype=torch.float64, device=device)
    M = _tensor(G.matrix, device)
    norms = np.zeros((len(k_list), len(t_grid)))
    for i, t in enumerate(t_grid):
        block = torch.linalg.matrix_exp(-float(t) * M)[:, :m]
        for r, k in enumerate(k_list):
            weighted = (lam ** k).to(torch.complex128)[:, None] * block
            norms[r, i] = float(torch.linalg.svdvals(weighted)[0])
    return norms


def _relative_change(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(b - a) / np.maximum(np.abs(a), 1e-300)))


def smoothing_norm_report(
    q: QuadraticSymbol,
    N_build: int,
    N_obs: int,
    k_list: Sequence[int],
    t_grid: Sequence[float],
    device: str = DEFAULT_DEVICE,
    check_doubling: bool = True,
) -> Dict[int, SlopeFitReport]:
    """
    ||P^k exp(-t q^w)|| on inputs |alpha| <= N_obs, P = D^2 + x^2, with the
    log-log slope per k; -(2 k0 + 1) k is expected.

    The N_build -> 2 N_build comparison is recorded as ``stable`` in each
    report's extras.
    """
    _check_cutoffs(N_build, N_obs)
    k0 = k0_index(q)
    t = np.asarray(t_grid, dtype=float)
    norms = _smoothing_norms(quantize(q, N_build), N_obs, k_list, t, device)
    doubled = _smoothing_norms(quantize(q, 2 * N_build), N_obs, k_list, t, device) if check_doubling else None

    reports = {}
    for r, k in enumerate(k_list):
        expected = -(2 * k0 + 1) * k
        report = fit_power_law(t, norms[r], exponent=expected, bound="upper")
        report.extra["expected_slope"] = expected
        if doubled is not None:
            change = _relative_change(norms[r], doubled[r])
            report.extra["max_rel_change"] = change
            report.extra["stable"] = change < STABILITY_RTOL
            if change >= STABILITY_RTOL:
                logger.warning(f"||P^{k} e^(-tq)|| changed by {change:.1%} under N_build doubling")
        reports[k] = report
    return reports


def coefficient_decay(
    q: QuadraticSymbol,
    u: HermiteVector,
    t_grid: Sequence[float],
    N_build: int,
    N_obs: Optional[int] = None,
    device: str = DEFAULT_DEVICE,
    fit_degrees: Optional[Tuple[int, int]] = None,
) -> Tuple[np.ndarray, SlopeFitReport]:
    """
    Exponential decay rate r(t) of |a_alpha(t)| in |alpha|, a(t) = exp(-t q^w) u,
    and the log-log slope of r(t); 2 k0 + 1 is expected.

    The rate is fitted on degrees fit_degrees = (lo, hi), by default
    (N_obs // 8, N_obs // 2): low degrees carry the transient of u and the
    top of the observation window feels the truncation.

    Raises:
        InsufficientDecayRange: fewer than 5 coefficients above 1e-13 in the fit range
    """
    if abs(u.norm - 1.0) > 1e-10:
        raise ValueError("coefficient_decay expects a normalized vector")
    k0 = k0_index(q)
    G = quantize(q, N_build)
    if N_obs is None:
        N_obs = N_build // 2
    _check_cutoffs(N_build, N_obs)
    lo, hi = fit_degrees if fit_degrees is not None else (N_obs // 8, N_obs // 2)
    if not 0 <= lo < hi <= N_obs:
        raise ValueError(f"fit degrees must satisfy 0 <= lo < hi <= {N_obs}, got ({lo}, {hi})")
    degrees = G.basis.degrees
    window = (degrees >= lo) & (degrees <= hi)

    t = np.asarray(t_grid, dtype=float)
    rates = np.zeros(t.size)
    for i, ti in enumerate(t):
        magnitudes = np.abs(semigroup_apply(G, float(ti), u, device).coefficients)
        usable = window & (magnitudes > COEFFICIENT_FLOOR)
        if usable.sum() < MIN_DECAY_POINTS:
            raise InsufficientDecayRange(
                f"only {int(usable.sum())} coefficients above {COEFFICIENT_FLOOR:g} at t={ti}"
            )
        fit = stats.linregress(degrees[usable], np.log(magnitudes[usable]))
        rates[i] = max(-fit.slope, 0.0)
        logger.debug(f"decay rate at t={ti:.4f}: {rates[i]:.6e} over {int(usable.sum())} coefficients")

    expected = 2 * k0 + 1
    report = fit_power_law(t, rates, exponent=expected, bound="lower")
    report.extra["k0_expected"] = expected
    report.extra["fit_degrees"] = [int(lo), int(hi)]
    return rates, report


@torch.inference_mode()
def _generalized_top(AhA: torch.Tensor, weight_sqrt: torch.Tensor, theta: float) -> float:
    m = AhA.shape[0]
    eye = torch.eye(m, dtype=AhA.dtype, device=AhA.device)
    B = AhA / theta + eye / (1.0 - theta)
    L = torch.linalg.cholesky(B)
    X = torch.linalg.solve_triangular(L, torch.diag(weight_sqrt), upper=False)
    return float(torch.linalg.svdvals(X)[0] ** 2)


def subelliptic_constant(
    q: QuadraticSymbol,
    N_build: int,
    N_obs: int,
    lam: float,
    device: str = DEFAULT_DEVICE,
) -> float:
    """
    c(N, lambda) = max over u in the |alpha| <= N_obs block of
    ||Lambda^{2 delta} u|| / (||(q^w - i lambda) u|| + ||u||), delta = 1/(2 k0 + 1),
    Lambda^{2 delta} = diag((1 + lambda_alpha)^delta).

    Uses (a + b)^2 = min over theta in (0, 1) of a^2/theta + b^2/(1 - theta), so
    c^2 is the max over theta of the top generalized eigenvalue of
    (Lambda^{4 delta}, A^H A / theta + I / (1 - theta)).
    """
    _check_cutoffs(N_build, N_obs)
    k0 = k0_index(q)
    delta = 1.0 / (2 * k0 + 1)
    G = quantize(q, N_build)
    m = G.basis.block_size(N_obs)

    shifted = G.matrix[:, :m] - 1j * lam * np.eye(G.size, m)
    weights = (1.0 + G.basis.eigenvalues[:m]) ** delta
    with torch.inference_mode():
        A = _tensor(shifted, device)
        AhA = A.conj().T @ A
        weight_sqrt = torch.as_tensor(weights, dtype=torch.complex128, device=device)

    def objective(s: float) -> float:
        return -_generalized_top(AhA, weight_sqrt, float(expit(s)))

    grid = np.linspace(-14.0, 14.0, 57)
    values = np.array([-objective(s) for s in grid])
    best = int(np.argmax(values))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    refined = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    top = max(values[best], -refined.fun)
    logger.debug(f"subelliptic constant lambda={lam}: theta={expit(refined.x):.6f}, c^2={top:.6e}")
    return float(math.sqrt(top))


def _ladder_matrix(b: HermiteBasis, j: int, weights: Tuple[complex, complex]) -> sparse.csr_matrix:
    """(w_a a_j + w_dagger a_j^dagger) / sqrt(2) on basis b, truncated at its top layer."""
    rows, cols, vals = [], [], []
    for col, alpha in enumerate(b.indices):
        for up, w in ((False, weights[0]), (True, weights[1])):
            target, factor = _ladder(alpha, j, up)
            if target is None:
                continue
            row = b.positions.get(target)
            if row is None:
                continue
            rows.append(row)
            cols.append(col)
            vals.append(w * math.sqrt(factor / 2.0))
    return _assemble([rows, cols, vals], b.size).tocsr()


def _monomial_action(b: HermiteBasis, mu: Sequence[int], nu: Sequence[int], columns: np.ndarray) -> np.ndarray:
    """x^mu d^nu applied to the columns (coefficients on b); d^nu acts first."""
    out = columns
    for j, power in enumerate(nu):
        D = _ladder_matrix(b, j, DERIVATIVE)
        for _ in range(power):
            out = D @ out
    for j, power in enumerate(mu):
        X = _ladder_matrix(b, j, POSITION)
        for _ in range(power):
            out = X @ out
    return out


def _check_multi_indices(n: int, mu: Sequence[int], nu: Sequence[int]) -> int:
    if len(mu) != n or len(nu) != n or min(list(mu) + list(nu)) < 0:
        raise ValueError(f"mu and nu must be non-negative multi-indices of length {n}")
    order = sum(mu) + sum(nu)
    if order > MAX_SEMINORM_ORDER:
        raise ValueError(f"|mu| + |nu| must be at most {MAX_SEMINORM_ORDER}, got {order}")
    return order


def hermite_functions(N: int, x: np.ndarray) -> np.ndarray:
    """
    psi_0..psi_N at the points x, shape (N + 1, len(x)).

    Uses psi_{k+1} = sqrt(2/(k+1)) x psi_k - sqrt(k/(k+1)) psi_{k-1} with a
    running log-scale so large |x| neither overflows nor underflows early.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((N + 1, x.size))
    log_scale = -0.5 * x ** 2
    prev = np.zeros_like(x)
    cur = np.full_like(x, np.pi ** -0.25)
    out[0] = cur * np.exp(log_scale)
    for k in range(N):
        nxt = math.sqrt(2.0 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e150
        if np.any(big):
            factor = np.where(big, np.abs(cur), 1.0)
            cur = cur / factor
            prev = prev / factor
            log_scale = log_scale + np.log(factor)
        with np.errstate(divide="ignore"):
            out[k + 1] = np.sign(cur) * np.exp(np.log(np.abs(cur)) + log_scale)
    return out


def sup_norm(u: HermiteVector, points: int = SUP_GRID_POINTS) -> float:
    """max |u(x)| on the uniform grid [-L, L]^n, L = sqrt(2N) + 4."""
    b = u.basis
    half_width = math.sqrt(2.0 * b.N) + 4.0
    grid = np.linspace(-half_width, half_width, points)
    table = hermite_functions(b.N, grid)
    tensor = np.zeros((b.N + 1,) * b.n, dtype=np.complex128)
    tensor[tuple(np.array(b.indices).T)] = u.coefficients
    values = tensor
    for _ in range(b.n):
        values = np.tensordot(values, table, axes=([0], [0]))
    return float(np.max(np.abs(values)))


class Seminorm(NamedTuple):
    l2: float
    sup: float


def weighted_seminorm(u: HermiteVector, mu: Sequence[int], nu: Sequence[int]) -> Seminorm:
    """
    ||x^mu d^nu u|| in L^2 (ladder action on coefficients) and its grid sup-norm.

    Raises:
        CutoffTooSmall: the top two graded layers of the result carry more than
            1e-8 of its norm
    """
    order = _check_multi_indices(u.basis.n, mu, nu)
    wide = basis(u.basis.n, u.basis.N + order)
    coeffs = _monomial_action(wide, mu, nu, u.embed(wide).coefficients)
    result = HermiteVector(wide, coeffs)

    total = result.norm
    if total > 0:
        top = np.linalg.norm(coeffs[wide.degrees >= wide.N - 1])
        if top > CUTOFF_LAYER_TOL * total:
            raise CutoffTooSmall(f"top layers carry {top / total:.2e} of the seminorm; raise the cutoff")
    return Seminorm(l2=total, sup=sup_norm(result))


def seminorm_blowup_report(
    q: QuadraticSymbol,
    mu: Sequence[int],
    nu: Sequence[int],
    t_grid: Sequence[float],
    N_build: int,
    N_obs: Optional[int] = None,
    u: Optional[HermiteVector] = None,
    device: str = DEFAULT_DEVICE,
) -> SlopeFitReport:
    """
    Small-t growth of ||x^mu d^nu exp(-t q^w) u||, either for a given u or as
    the operator norm over the |alpha| <= N_obs block. The measured exponent
    (minus the slope) is compared with (2 k0 + 1)/2 (|mu| + |nu| + 2n).
    """
    order = _check_multi_indices(q.n, mu, nu)
    k0 = k0_index(q)
    bound = (2 * k0 + 1) / 2.0 * (order + 2 * q.n)
    G = quantize(q, N_build)
    t = np.asarray(t_grid, dtype=float)
    values = []
    sup_ratio = 0.0

    if u is None:
        if N_obs is None:
            N_obs = N_build // 2
        _check_cutoffs(N_build, N_obs)
        m = G.basis.block_size(N_obs)
        wide = basis(q.n, N_build + order)
        for ti in t:
            columns = np.zeros((wide.size, m), dtype=np.complex128)
            columns[: G.size] = semigroup_matrix(G, float(ti), device)[:, :m]
            image = _monomial_action(wide, mu, nu, columns)
            values.append(float(np.linalg.norm(image, 2)))
    else:
        for ti in t:
            seminorm = weighted_seminorm(semigroup_apply(G, float(ti), u, device), mu, nu)
            values.append(seminorm.l2)
            sup_ratio = max(sup_ratio, seminorm.sup / seminorm.l2)

    report = fit_power_law(t, values)
    exponent = -report.slope
    report.extra.update({"exponent": exponent, "bound": bound, "within_bound": exponent <= bound + 0.2})
    if u is not None:
        report.extra["max_sup_to_l2"] = sup_ratio
    return report


def hermite_tail_sum(y: float, n: int) -> float:
    """F(y) = sum over alpha in N^n of exp(-y |alpha|) = (1 - e^{-y})^{-n}."""
    if y <= 0:
        raise ValueError(f"hermite_tail_sum needs y > 0, got {y}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return float((-math.expm1(-y)) ** (-n))


@torch.inference_mode()
def _semigroup_blocks(G: GalerkinOperator, N_obs: int, t_grid: np.ndarray, device: str) -> List[torch.Tensor]:
    """Columns |alpha| <= N_obs of exp(-t G) for every t, computed once per cutoff."""
    m = G.basis.block_size(N_obs)
    M = _tensor(G.matrix, device)
    return [torch.linalg.matrix_exp(-float(t) * M)[:, :m] for t in t_grid]


@torch.inference_mode()
def _composition_norms(
    G: GalerkinOperator,
    blocks: List[torch.Tensor],
    t_grid: np.ndarray,
    C0: float,
    power: int,
    side: str,
    device: str,
) -> Optional[np.ndarray]:
    lam = G.basis.eigenvalues
    norms = np.zeros(t_grid.size)
    for i, (t, block) in enumerate(zip(t_grid, blocks)):
        m = block.shape[1]
        s = t ** power / C0
        exponents = s * (lam if side == "left" else lam[:m])
        if exponents.max() > 700:
            return None
        scale = torch.as_tensor(np.exp(exponents), dtype=torch.complex128, device=device)
        op = scale[:, None] * block if side == "left" else block * scale[None, :]
        norms[i] = float(torch.linalg.svdvals(op)[0])
    return norms


def calibrate_c0(
    q: QuadraticSymbol,
    N_build: int,
    N_obs: int,
    t_grid: Sequence[float],
    side: str = "left",
    device: str = DEFAULT_DEVICE,
) -> float:
    """
    Smallest C_0 = 2^m, m <= 30, such that with s(t) = t^{2k0+1}/C_0 the norm of
    exp(s P) exp(-t q^w) (side="left") or exp(-t q^w) exp(s P) (side="right")
    on the |alpha| <= N_obs block stays <= 2 on the grid, at N_build and at
    2 N_build, with less than 10% change between the two.

    Raises:
        NoStableC0: no such C_0 up to 2^30
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    _check_cutoffs(N_build, N_obs)
    k0 = k0_index(q)
    power = 2 * k0 + 1
    t = np.asarray(t_grid, dtype=float)
    coarse = quantize(q, N_build)
    fine = quantize(q, 2 * N_build)
    coarse_blocks = _semigroup_blocks(coarse, N_obs, t, device)
    fine_blocks = None

    for m in range(MAX_C0_POWER + 1):
        C0 = float(2 ** m)
        a = _composition_norms(coarse, coarse_blocks, t, C0, power, side, device)
        if a is None or np.any(a > 2.0):
            continue
        if fine_blocks is None:
            fine_blocks = _semigroup_blocks(fine, N_obs, t, device)
        b = _composition_norms(fine, fine_blocks, t, C0, power, side, device)
        if b is None or np.any(b > 2.0):
            continue
        if _relative_change(a, b) < STABILITY_RTOL:
            logger.info(f"calibrated C0 = 2^{m} ({side}), max norm {max(a.max(), b.max()):.4f}")
            return C0
    raise NoStableC0(f"no N-stable C0 <= 2^{MAX_C0_POWER}")
