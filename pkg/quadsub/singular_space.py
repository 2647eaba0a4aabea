"""
Singular space S, the index k0, and the dynamic (Poisson-derivative)
characterization of S.

S is the null space of the stacked Kalman-type matrix
[Q_re; Q_re Im F; ...; Q_re (Im F)^{2n-1}], which has the same kernel as
[Re F (Im F)^j]_j because J_sigma is invertible.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np
from scipy.linalg import null_space, subspace_angles, svdvals

from .errors import SingularSpaceNonTrivial
from .symbol_core import QuadraticSymbol, hamilton_map, poisson_derivative

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10
MAX_RANK_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis of a real subspace, stored as columns."""

    columns: np.ndarray

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    def projector(self) -> np.ndarray:
        return self.columns @ self.columns.T


@dataclass
class SingularReport:
    dim_S: int
    k0: Union[int, str]
    ranks: List[int]

    def to_dict(self) -> Dict[str, object]:
        return {"dim_S": self.dim_S, "k0": self.k0, "ranks": list(self.ranks)}


def _check_tol(tol: float) -> None:
    if not 0 < tol <= MAX_RANK_TOL:
        raise ValueError(f"rank tolerance must lie in (0, {MAX_RANK_TOL}], got {tol}")


def _normalized(block: np.ndarray) -> np.ndarray:
    scale = np.linalg.norm(block, 2)
    return block / scale if scale > 0 else block


def _relative_rank(M: np.ndarray, tol: float) -> int:
    s = svdvals(M)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def kalman_blocks(q: QuadraticSymbol, j_max: Optional[int] = None) -> List[np.ndarray]:
    """Blocks Q_re (Im F)^j for j = 0..j_max (default 2n-1), each scaled to unit norm."""
    if j_max is None:
        j_max = 2 * q.n - 1
    F_im = hamilton_map(q).F_im
    blocks = []
    current = q.Q_re.copy()
    for _ in range(j_max + 1):
        blocks.append(_normalized(current))
        current = current @ F_im
    return blocks


def singular_space(q: QuadraticSymbol, tol: float = DEFAULT_RANK_TOL) -> SubspaceBasis:
    """
    Orthonormal basis of S = intersection of Ker[Re F (Im F)^j], j < 2n.

    Singular values below tol * sigma_max are treated as zero.
    """
    _check_tol(tol)
    stacked = np.vstack(kalman_blocks(q))
    basis = null_space(stacked, rcond=tol)
    logger.debug(f"singular space: dim {basis.shape[1]} in R^{2 * q.n}")
    return SubspaceBasis(basis)


def singular_report(q: QuadraticSymbol, tol: float = DEFAULT_RANK_TOL) -> SingularReport:
    """Ranks of the stacked blocks through j = 0..2n-1, dim S and k0."""
    _check_tol(tol)
    size = 2 * q.n
    blocks = kalman_blocks(q)
    ranks = []
    for j in range(len(blocks)):
        ranks.append(_relative_rank(np.vstack(blocks[: j + 1]), tol))
    dim_S = size - ranks[-1]
    k0: Union[int, str] = "undefined"
    if dim_S == 0:
        k0 = next(j for j, r in enumerate(ranks) if r == size)
    logger.debug(f"Kalman ranks {ranks}, dim S = {dim_S}, k0 = {k0}")
    return SingularReport(dim_S=dim_S, k0=k0, ranks=ranks)


def k0_index(q: QuadraticSymbol, tol: float = DEFAULT_RANK_TOL) -> int:
    """
    Smallest j such that the stacked blocks through power j have full rank.

    Raises:
        SingularSpaceNonTrivial: when S != {0}; the report is attached.
    """
    report = singular_report(q, tol)
    if report.dim_S > 0:
        raise SingularSpaceNonTrivial(
            f"singular space has dimension {report.dim_S}; k0 is undefined", report=report
        )
    return int(report.k0)


def poisson_tower(q: QuadraticSymbol, k_max: int) -> List[np.ndarray]:
    """Matrices of H_{Im q}^k Re q for k = 0..k_max."""
    forms = [q.real_part()]
    im_part = q.imag_part()
    for _ in range(k_max):
        forms.append(poisson_derivative(forms[-1], im_part))
    return [f.G for f in forms]


def singular_space_dynamic(
    q: QuadraticSymbol, tol: float = DEFAULT_RANK_TOL, k_max: Optional[int] = None
) -> SubspaceBasis:
    """
    S as the common null space of the iterated Poisson derivatives
    H_{Im q}^k Re q, k = 0..k_max.

    The default k_max = 2(2n-1) covers every product (Im F^a)^T Q_re Im F^b
    with a, b <= 2n-1.
    """
    _check_tol(tol)
    min_k = 2 * q.n - 1
    if k_max is None:
        k_max = 2 * min_k
    if k_max < min_k:
        raise ValueError(f"k_max must be at least 2n-1 = {min_k}, got {k_max}")
    stacked = np.vstack([_normalized(G) for G in poisson_tower(q, k_max)])
    return SubspaceBasis(null_space(stacked, rcond=tol))


def same_span(a: SubspaceBasis, b: SubspaceBasis, tol: float = 1e-8) -> bool:
    """True when both bases span the same subspace (principal angles below tol)."""
    if a.dim != b.dim:
        return False
    if a.dim == 0:
        return True
    return bool(np.max(subspace_angles(a.columns, b.columns)) < tol)
