import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from metrics.functions.connection import HStarField, PointFrame, frame_partials, h_star_field
from metrics.functions.exceptions import FrameError
from metrics.functions.metric import FinslerMetricSpec
from metrics.functions.quadrature import SphereRule, integrate_sphere
from torsion.functions.exceptions import SolverError

logger = logging.getLogger(__name__)

SOLVABLE = 'solvable'
NOT_SOLVABLE = 'not_solvable'
RIEMANNIAN_DEGENERATE = 'riemannian_degenerate'
INCONCLUSIVE = 'inconclusive'

VERDICTS = [
    (SOLVABLE, 'Solvable'),
    (NOT_SOLVABLE, 'Not Solvable'),
    (RIEMANNIAN_DEGENERATE, 'Riemannian Degenerate'),
    (INCONCLUSIVE, 'Inconclusive'),
]

FRAME_ORTHONORMAL = 'orthonormal'
FRAME_ORIGINAL = 'original'
FRAME_ADAPTED = 'adapted'

DEFAULT_RANK_RTOL = 1e-8
DEFAULT_DEGENERACY_THRESHOLD = 1e-10
DEFAULT_CONDITION_LIMIT = 1e12
TIE_TOLERANCE = 1e-12


@lru_cache(maxsize=None)
def index_pairs(n: int) -> Tuple[Tuple[int, int], ...]:
    """Lexicographic pairs (a, b), a < b, zero based: 12, 13, ..., 1n, 23, ..."""
    return tuple((a, b) for a in range(n) for b in range(a + 1, n))


@lru_cache(maxsize=None)
def pair_positions(n: int) -> Dict[Tuple[int, int], int]:
    return {pair: p for p, pair in enumerate(index_pairs(n))}


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


def dimension_from_pairs(P: int) -> int:
    n = int(round((1 + math.sqrt(1 + 8 * P)) / 2))
    if pair_count(n) != P:
        raise SolverError(f"{P} is not a binomial coefficient C(n,2)")
    return n


def basis_label(index: int, n: int) -> str:
    """Label of mu_kl^j for the sequence number j*C(n,2) + pair(k,l)"""
    P = pair_count(n)
    j, p = divmod(index, P)
    k, l = index_pairs(n)[p]
    return f"mu_{k + 1}{l + 1}^{j + 1}"


def component_label(index: int, n: int) -> str:
    P = pair_count(n)
    c, p = divmod(index, P)
    a, b = index_pairs(n)[p]
    return f"T_{a + 1}{b + 1}^{c + 1}"


@dataclass
class TorsionTensor:
    """Components T_ab^c, a < b, stored at c*C(n,2) + pair(a,b)"""

    dimension: int
    components: np.ndarray
    frame: str = FRAME_ORTHONORMAL

    @classmethod
    def zero(cls, n: int, frame: str = FRAME_ORTHONORMAL) -> 'TorsionTensor':
        return cls(n, np.zeros(n * pair_count(n)), frame)

    @classmethod
    def from_full(cls, full: np.ndarray, frame: str = FRAME_ORTHONORMAL) -> 'TorsionTensor':
        """From an array [c, a, b]; the part antisymmetric in (a, b) is kept"""
        n = full.shape[0]
        P = pair_count(n)
        components = np.empty(n * P)
        for p, (a, b) in enumerate(index_pairs(n)):
            components[np.arange(n) * P + p] = 0.5 * (full[:, a, b] - full[:, b, a])
        return cls(n, components, frame)

    def full(self) -> np.ndarray:
        n = self.dimension
        P = pair_count(n)
        result = np.zeros((n, n, n))
        for p, (a, b) in enumerate(index_pairs(n)):
            values = self.components[np.arange(n) * P + p]
            result[:, a, b] = values
            result[:, b, a] = -values
        return result

    def component(self, a: int, b: int, c: int) -> float:
        """T_ab^c with one-based indices and the sign extension"""
        return float(self.full()[c - 1, a - 1, b - 1])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.components ** 2)))

    def as_dict(self) -> Dict[str, float]:
        return {component_label(i, self.dimension): float(v) for i, v in enumerate(self.components)}


@dataclass
class GramReport:
    matrix: np.ndarray
    singular_values: np.ndarray
    rank: int
    d: int
    big_system_rank: int
    maximal_rank: bool
    wang_bound_satisfied: bool
    degenerate: bool
    rtol: float

    @property
    def dimension(self) -> int:
        return dimension_from_pairs(self.matrix.shape[0])

    @property
    def zero_curvature(self) -> bool:
        return self.maximal_rank

    def as_dict(self) -> dict:
        return {
            'matrix': self.matrix.tolist(),
            'singular_values': self.singular_values.tolist(),
            'rank': self.rank,
            'd': self.d,
            'big_system_rank': self.big_system_rank,
            'maximal_rank': self.maximal_rank,
            'zero_curvature': self.zero_curvature,
            'wang_bound_satisfied': self.wang_bound_satisfied,
            'degenerate': self.degenerate,
            'rtol': self.rtol,
        }


@dataclass
class ResidualStats:
    rms: float
    max: float
    residual_l2: float
    hstar_l2: float
    ratio: float
    threshold: float

    @property
    def solvable(self) -> bool:
        return self.ratio < self.threshold

    def as_dict(self) -> dict:
        return {
            'rms': self.rms,
            'max': self.max,
            'residual_l2': self.residual_l2,
            'hstar_l2': self.hstar_l2,
            'ratio': self.ratio,
            'threshold': self.threshold,
            'solvable': self.solvable,
        }


@dataclass
class SolveOutcome:
    verdict: Optional[str]
    torsion: TorsionTensor
    coefficients: np.ndarray
    subsystem: List[int] = field(default_factory=list)
    unique_connection: bool = False
    condition_number: Optional[float] = None
    ill_conditioned: bool = False
    path: str = 'gram'
    torsion_original: Optional[TorsionTensor] = None
    residual: Optional[ResidualStats] = None

    def as_dict(self) -> dict:
        n = self.torsion.dimension
        return {
            'verdict': self.verdict,
            'path': self.path,
            'torsion': self.torsion.as_dict(),
            'torsion_original': self.torsion_original.as_dict() if self.torsion_original else None,
            'torsion_norm': self.torsion.norm(),
            'coefficients': {basis_label(i, n): float(r) for i, r in enumerate(self.coefficients)},
            'subsystem': [basis_label(i, n) for i in self.subsystem],
            'unique_connection': self.unique_connection,
            'condition_number': self.condition_number,
            'ill_conditioned': self.ill_conditioned,
            'residual': self.residual.as_dict() if self.residual else None,
        }


def _f_from_gradient(nodes: np.ndarray, dF_dy: np.ndarray) -> np.ndarray:
    n = nodes.shape[0]
    return np.array([nodes[a] * dF_dy[b] - nodes[b] * dF_dy[a] for a, b in index_pairs(n)])


def f_values(m: FinslerMetricSpec, x, frame: PointFrame, rule: SphereRule) -> np.ndarray:
    """f_ab = y^a dF/dy^b - y^b dF/dy^a at the mu* nodes, one row per pair in lexicographic order"""
    _, dF_dy, _ = frame_partials(m, x, frame, rule)
    return _f_from_gradient(rule.nodes, dF_dy)


def energy_scale(m: FinslerMetricSpec, x, frame: PointFrame, rule: SphereRule) -> float:
    """Integral of F~^2 over S*, the reference scale of the degeneracy test"""
    F, _, _ = frame_partials(m, x, frame, rule)
    return float(integrate_sphere(rule, F ** 2))


def gram_f(f_vals: np.ndarray, rule: SphereRule, rtol: float = DEFAULT_RANK_RTOL,
           scale: Optional[float] = None,
           degeneracy_threshold: float = DEFAULT_DEGENERACY_THRESHOLD) -> GramReport:
    """Gram matrix of the f_ab against mu*, with rank, isometry dimension and bound checks"""
    P = f_vals.shape[0]
    n = dimension_from_pairs(P)
    products = np.einsum('pk,qk->kpq', f_vals, f_vals)
    G = integrate_sphere(rule, products)
    G = 0.5 * (G + G.T)
    singular_values = linalg.svdvals(G)
    sigma_max = float(singular_values[0]) if P else 0.0

    scale = rule.area if scale is None else scale
    degenerate = sigma_max < degeneracy_threshold * scale
    rank = 0 if degenerate else int(np.sum(singular_values > rtol * sigma_max))
    d = P - rank
    wang_limit = pair_count(n - 1)
    report = GramReport(
        matrix=G,
        singular_values=singular_values,
        rank=rank,
        d=d,
        big_system_rank=n * rank,
        maximal_rank=rank == P,
        wang_bound_satisfied=degenerate or d <= wang_limit,
        degenerate=degenerate,
        rtol=rtol,
    )
    if not report.wang_bound_satisfied:
        logger.warning(f"Isometry dimension d={d} exceeds the bound {wang_limit} for a non-quadratic indicatrix")
    return report


def _signed(G: np.ndarray, n: int, row: int, a: int, b: int) -> float:
    """G[row, pair(a, b)] with f_ba = -f_ab and f_aa = 0"""
    if a == b:
        return 0.0
    if a < b:
        return G[row, pair_positions(n)[(a, b)]]
    return -G[row, pair_positions(n)[(b, a)]]


def torsion_map_basis(G_f: np.ndarray) -> np.ndarray:
    """
    Rows are T(mu_kl^j) in V, ordered by sequence number j*C(n,2) + pair(k,l);
    T_ab^c(mu_kl^j) = 1/2 (d_cj G[kl,ab] + d_aj G[kl,cb] - d_bj G[kl,ca]).
    """
    G_f = np.asarray(G_f, dtype=float)
    P = G_f.shape[0]
    n = dimension_from_pairs(P)
    Ts = np.zeros((n * P, n * P))
    for j in range(n):
        for kl in range(P):
            row = Ts[j * P + kl]
            for p, (a, b) in enumerate(index_pairs(n)):
                for c in range(n):
                    value = 0.0
                    if c == j:
                        value += G_f[kl, p]
                    if a == j:
                        value += _signed(G_f, n, kl, c, b)
                    if b == j:
                        value -= _signed(G_f, n, kl, c, a)
                    row[c * P + p] = 0.5 * value
    return Ts


def sigma_values(f_vals: np.ndarray) -> np.ndarray:
    """
    sigma[i, c*C(n,2) + pair(a,b), node] = 1/2 (d_ic f_ab + d_ia f_cb - d_ib f_ca),
    the coefficient of T_ab^c in the i-th constraint.
    """
    P, count = f_vals.shape
    n = dimension_from_pairs(P)
    full = np.zeros((n, n, count))
    for p, (a, b) in enumerate(index_pairs(n)):
        full[a, b] = f_vals[p]
        full[b, a] = -f_vals[p]
    sigma = np.zeros((n, n * P, count))
    for p, (a, b) in enumerate(index_pairs(n)):
        for c in range(n):
            column = c * P + p
            sigma[c, column] += 0.5 * full[a, b]
            sigma[a, column] += 0.5 * full[c, b]
            sigma[b, column] -= 0.5 * full[c, a]
    return sigma


def torsion_map_direct(f_vals: np.ndarray, rule: SphereRule) -> np.ndarray:
    """T(mu_kl^j) by quadrature of f_kl sigma_j, independent of the Gram assembly"""
    P = f_vals.shape[0]
    n = dimension_from_pairs(P)
    sigma = sigma_values(f_vals)
    products = np.einsum('pk,jck->kjpc', f_vals, sigma)
    return integrate_sphere(rule, products).reshape(n * P, n * P)


def contract_sigma(torsion: TorsionTensor, f_vals: np.ndarray) -> np.ndarray:
    """sum over a<b, c of T_ab^c sigma_(c;i)^(ab), shape (n, nodes)"""
    P = f_vals.shape[0]
    n = dimension_from_pairs(P)
    full_f = np.zeros((n, n, f_vals.shape[1]))
    for p, (a, b) in enumerate(index_pairs(n)):
        full_f[a, b] = f_vals[p]
        full_f[b, a] = -f_vals[p]
    T = torsion.full()
    return 0.25 * np.einsum('iab,abk->ik', T, full_f) + 0.5 * np.einsum('cib,cbk->ik', T, full_f)


def select_subsystem(Ts: np.ndarray, rtol: float = DEFAULT_RANK_RTOL,
                     expected_rank: Optional[int] = None) -> List[int]:
    """
    Greedy diagonal pivoting on the Gram matrix of the basis images (pivoted Cholesky of
    Ts Ts^T), carried out as pivoted Gram-Schmidt on the images so the stopping test works
    on norms: stop once the largest remaining norm is <= rtol * the largest image norm.
    Equal pivots go to the lowest index.
    """
    residual = np.array(Ts, dtype=float)
    size = residual.shape[0]
    if size == 0:
        return []
    norms = np.linalg.norm(residual, axis=1)
    max_norm = float(norms.max())
    if max_norm <= 0:
        return []

    cutoff = rtol * max_norm
    available = np.ones(size, dtype=bool)
    basis, selected = [], []
    for _ in range(size):
        candidates = np.where(available, norms, -np.inf)
        best = float(candidates.max())
        if best <= cutoff:
            break
        index = int(np.flatnonzero(candidates >= best * (1.0 - TIE_TOLERANCE))[0])
        q = residual[index] / best
        # re-orthogonalise against the earlier directions
        for previous in basis:
            q = q - (previous @ q) * previous
        q = q / np.linalg.norm(q)
        basis.append(q)
        available[index] = False
        selected.append(index)
        residual = residual - np.outer(residual @ q, q)
        norms = np.linalg.norm(residual, axis=1)

    if expected_rank is not None and len(selected) != expected_rank:
        logger.warning(
            f"Selected {len(selected)} basis images but n*rank(G_f) = {expected_rank}; "
            f"rank identity not reproduced at rtol={rtol:g}"
        )
    return sorted(selected)


def h_inner(f_vals: np.ndarray, hstar, rule: SphereRule) -> np.ndarray:
    """<mu_kl^j, h*> = integral of h*_j f_kl, ordered j*C(n,2) + pair(k,l)"""
    values = hstar.values if isinstance(hstar, HStarField) else np.asarray(hstar)
    products = np.einsum('jk,pk->kjp', values, f_vals)
    return integrate_sphere(rule, products).reshape(-1)


def _degenerate_outcome(n: int, path: str) -> SolveOutcome:
    return SolveOutcome(
        verdict=RIEMANNIAN_DEGENERATE,
        torsion=TorsionTensor.zero(n),
        coefficients=np.zeros(n * pair_count(n)),
        path=path,
    )


def solve_extremal(subsystem: Sequence[int], Ts: np.ndarray, b: np.ndarray,
                   condition_limit: float = DEFAULT_CONDITION_LIMIT) -> SolveOutcome:
    """r = -G_S^(-1) b_S over the selected basis images; T0 = sum r T(mu)"""
    total = Ts.shape[0]
    n = _dimension_from_total(total)
    if not subsystem:
        return _degenerate_outcome(n, 'gram')

    subsystem = list(subsystem)
    S = Ts[subsystem]
    G_S = S @ S.T
    condition = float(np.linalg.cond(G_S))
    ill_conditioned = condition > condition_limit
    if ill_conditioned:
        logger.warning(f"Gram matrix of the selected basis images is ill-conditioned (cond {condition:.3e})")

    try:
        r_S = -linalg.cho_solve(linalg.cho_factor(G_S), b[subsystem])
    except linalg.LinAlgError:
        logger.warning("Cholesky solve failed, falling back to least squares")
        r_S = -linalg.lstsq(G_S, b[subsystem])[0]

    coefficients = np.zeros(total)
    coefficients[subsystem] = r_S
    return SolveOutcome(
        verdict=None,
        torsion=TorsionTensor(n, r_S @ S),
        coefficients=coefficients,
        subsystem=subsystem,
        unique_connection=len(subsystem) == total,
        condition_number=condition,
        ill_conditioned=ill_conditioned,
        path='gram',
    )


def _dimension_from_total(total: int) -> int:
    """n from n*C(n,2) = total"""
    for n in range(2, 64):
        if n * pair_count(n) == total:
            return n
    raise SolverError(f"{total} is not of the form n*C(n,2)")


def solve_orthogonalized(subsystem: Sequence[int], Ts: np.ndarray, b: np.ndarray) -> SolveOutcome:
    """Modified Gram-Schmidt on the selected images; T0 = -sum <nu, h*> nu over the orthonormal nu"""
    total = Ts.shape[0]
    n = _dimension_from_total(total)
    if not subsystem:
        return _degenerate_outcome(n, 'orthogonalized')

    subsystem = list(subsystem)
    basis, paired = [], []
    for index in subsystem:
        vector = Ts[index].copy()
        inner = float(b[index])
        for q, q_inner in zip(basis, paired):
            projection = float(q @ vector)
            vector -= projection * q
            inner -= projection * q_inner
        norm = float(np.linalg.norm(vector))
        if norm == 0:
            raise SolverError(f"Basis image {basis_label(index, n)} is dependent on the previous ones")
        basis.append(vector / norm)
        paired.append(inner / norm)

    components = -sum(q_inner * q for q, q_inner in zip(basis, paired))
    S = Ts[subsystem]
    coefficients = np.zeros(total)
    coefficients[subsystem] = linalg.lstsq(S.T, components)[0]
    return SolveOutcome(
        verdict=None,
        torsion=TorsionTensor(n, components),
        coefficients=coefficients,
        subsystem=subsystem,
        unique_connection=len(subsystem) == total,
        path='orthogonalized',
    )


def support_value(subsystem: Sequence[int], Ts: np.ndarray, b: np.ndarray) -> float:
    """sup over span(mu_S) of <mu, h*>^2 / |T(mu)|^2, i.e. b_S^T G_S^(-1) b_S"""
    if not subsystem:
        return 0.0
    subsystem = list(subsystem)
    S = Ts[subsystem]
    b_S = b[subsystem]
    return float(b_S @ linalg.lstsq(S @ S.T, b_S)[0])


def constraint_residual(m: FinslerMetricSpec, x, frame: PointFrame, torsion: TorsionTensor,
                        rule: SphereRule, threshold: float, hstar: Optional[HStarField] = None,
                        f_vals: Optional[np.ndarray] = None, floor: float = 0.0) -> ResidualStats:
    """
    g_i(T) = h*_i + sum T_ab^c sigma_(c;i)^(ab) at every node; the ratio of the L2 norms of
    g and h* decides solvability. The Christoffels enter through h*, taken from the frame.
    """
    hstar = hstar if hstar is not None else h_star_field(m, x, frame, rule)
    f_vals = f_vals if f_vals is not None else f_values(m, x, frame, rule)
    residual = hstar.values + contract_sigma(torsion, f_vals)

    residual_l2 = float(np.sqrt(max(integrate_sphere(rule, np.sum(residual ** 2, axis=0)), 0.0)))
    hstar_l2 = hstar.l2_norm()
    denominator = max(hstar_l2, floor)
    if denominator > 0:
        ratio = residual_l2 / denominator
    else:
        ratio = 0.0 if residual_l2 == 0 else math.inf
    return ResidualStats(
        rms=float(np.sqrt(np.mean(residual ** 2))),
        max=float(np.abs(residual).max()),
        residual_l2=residual_l2,
        hstar_l2=hstar_l2,
        ratio=ratio,
        threshold=threshold,
    )


def solve_2d(m: FinslerMetricSpec, x, frame: PointFrame, rule: SphereRule, threshold: float,
             degeneracy_threshold: float = DEFAULT_DEGENERACY_THRESHOLD,
             scale: Optional[float] = None) -> SolveOutcome:
    """T_12^c = -integral(h*_c f_12) / integral(f_12^2), with the residual verdict"""
    if m.dimension != 2:
        raise SolverError(f"The closed-form surface solve needs n = 2, got {m.dimension}")
    f_vals = f_values(m, x, frame, rule)
    hstar = h_star_field(m, x, frame, rule)
    scale = energy_scale(m, x, frame, rule) if scale is None else scale
    denominator = integrate_sphere(rule, f_vals[0] ** 2)

    if denominator < degeneracy_threshold * scale:
        outcome = _degenerate_outcome(2, 'closed_form_2d')
    else:
        numerators = integrate_sphere(rule, (hstar.values * f_vals[0]).T)
        components = -numerators / denominator
        outcome = SolveOutcome(
            verdict=None,
            torsion=TorsionTensor(2, components),
            coefficients=np.array([-numerators[0], -numerators[1]]) / denominator ** 2,
            subsystem=[0, 1],
            unique_connection=True,
            path='closed_form_2d',
        )

    outcome.residual = constraint_residual(
        m, x, frame, outcome.torsion, rule, threshold, hstar=hstar, f_vals=f_vals,
        floor=1e-12 * math.sqrt(scale),
    )
    if outcome.verdict is None:
        outcome.verdict = SOLVABLE if outcome.residual.solvable else NOT_SOLVABLE
    return outcome


def isometry_directions(G_f: np.ndarray, rtol: float = DEFAULT_RANK_RTOL,
                        rank: Optional[int] = None) -> List[np.ndarray]:
    """Skew generators A[k,l] = r_kl from the null vectors of G_f, Frobenius-normalised"""
    G_f = np.asarray(G_f, dtype=float)
    P = G_f.shape[0]
    n = dimension_from_pairs(P)
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (G_f + G_f.T))
    if rank is None:
        top = float(eigenvalues[-1]) if P else 0.0
        rank = int(np.sum(eigenvalues > rtol * top)) if top > 0 else 0

    if rank == 0:
        null_vectors = np.eye(P)
    else:
        null_vectors = eigenvectors[:, :P - rank].T

    directions = []
    for r in null_vectors:
        pivot = int(np.argmax(np.abs(r)))
        if r[pivot] < 0:
            r = -r
        A = np.zeros((n, n))
        for p, (k, l) in enumerate(index_pairs(n)):
            A[k, l] = r[p]
            A[l, k] = -r[p]
        directions.append(A / np.linalg.norm(A))
    return directions


def constraint_null_directions(directions: Sequence[np.ndarray]) -> List[TorsionTensor]:
    """
    T_ab^c = d_(b,i) A[a,c] - d_(a,i) A[b,c] for each isometry generator A and each i;
    these leave every constraint unchanged, n*d of them.
    """
    tensors = []
    for A in directions:
        n = A.shape[0]
        for i in range(n):
            full = np.zeros((n, n, n))
            for a in range(n):
                for c in range(n):
                    full[c, a, i] += A[a, c]
                    full[c, i, a] -= A[a, c]
            tensors.append(TorsionTensor.from_full(full))
    return tensors


def transform_torsion(torsion: TorsionTensor, A: np.ndarray,
                      target_frame: str = FRAME_ORIGINAL) -> TorsionTensor:
    """T^k_ij = A^k_c T^c_ab B^a_i B^b_j with B = A^(-1), for frame vectors e_a = A^i_a d_i"""
    A = np.asarray(A, dtype=float)
    try:
        B = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise FrameError("Frame matrix is singular")
    if not np.all(np.isfinite(B)) or np.linalg.cond(A) > 1e14:
        raise FrameError("Frame matrix is singular")
    full = np.einsum('kc,cab,ai,bj->kij', A, torsion.full(), B, B)
    return TorsionTensor.from_full(full, target_frame)
