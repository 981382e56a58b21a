import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from metrics.functions.connection import christoffel_from_derivatives, orthonormal_frame, to_frame
from metrics.functions.metric import FinslerMetricSpec
from metrics.functions.quadrature import sphere_area
from torsion.functions.exceptions import AdaptedFrameError, NotSolvableError, SolverError
from torsion.functions.solver import FRAME_ADAPTED, TorsionTensor, index_pairs, pair_count, transform_torsion

logger = logging.getLogger(__name__)

DEFAULT_SOLVABILITY_TOLERANCE = 1e-10

# Gram matrix of T(mu_13^1), T(mu_23^1), T(mu_13^2), T(mu_23^2), T(mu_13^3), T(mu_23^3)
# in units of beta_3^4 omega^2
GRAM_PATTERN_3D = np.array([
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.75, 0.25, 0.0, 0.0, 0.0],
    [0.0, 0.25, 0.75, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
])
GRAM_BASIS_3D = (1, 2, 4, 5, 7, 8)


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    """x = R x~ with R^T alpha(p) R = I and beta~(p) = (0, ..., 0, beta_n)"""

    R: np.ndarray
    beta_n: float

    @property
    def dimension(self) -> int:
        return self.R.shape[0]


def adapt(alpha_p, beta_p) -> AdaptedFrame:
    """
    alpha-orthonormalise with E = L^(-T), rotate the unit covector v = E^T beta / |E^T beta| onto
    the last axis. The remaining axes are the coordinate axes other than the dominant component
    of v (lowest index on ties), Gram-Schmidt against v in their natural order. For beta along e1
    this gives the columns [e2, e3, e1], the orientation under which the rotating beta at the origin
    has T_12^3 = -1. Flipping the sign of any of the first n - 1 columns changes adapted components
    only by those signs; the torsion in original coordinates stays the same.
    """
    alpha_p = np.asarray(alpha_p, dtype=float)
    beta_p = np.asarray(beta_p, dtype=float)
    n = beta_p.shape[0]

    E = orthonormal_frame(alpha_p)
    b = E.T @ beta_p
    beta_n = float(np.linalg.norm(b))
    if beta_n == 0.0:
        raise AdaptedFrameError("beta vanishes at the point; the metric is Riemannian there")
    v = b / beta_n

    dominant = int(np.argmax(np.abs(v)))
    columns = []
    for axis in range(n):
        if axis == dominant:
            continue
        w = np.zeros(n)
        w[axis] = 1.0
        for q in columns + [v]:
            w -= (q @ w) * q
        columns.append(w / np.linalg.norm(w))
    Q = np.column_stack(columns + [v])
    return AdaptedFrame(R=E @ Q, beta_n=beta_n)


@dataclass
class AdaptedDerivatives:
    frame: AdaptedFrame
    beta_gradient: np.ndarray
    christoffel: np.ndarray


def adapted_derivatives(m: FinslerMetricSpec, x, frame: Optional[AdaptedFrame] = None) -> AdaptedDerivatives:
    """d beta~_a / dx~^i (array [i, a]) and Christoffels of alpha in adapted coordinates"""
    if not m.is_randers:
        raise SolverError("The Randers oracle needs a Randers metric")
    x = np.asarray(x, dtype=float)
    alpha = m.alpha_at(x)
    if frame is None:
        frame = adapt(alpha, m.beta_at(x))
    R = frame.R
    beta_gradient = R.T @ m.beta_gradient_at(x) @ R
    christoffel = to_frame(christoffel_from_derivatives(alpha, m.alpha_gradient_at(x)), R)
    return AdaptedDerivatives(frame=frame, beta_gradient=beta_gradient, christoffel=christoffel)


def _C(derivatives: AdaptedDerivatives) -> np.ndarray:
    last = derivatives.frame.dimension - 1
    return (derivatives.beta_gradient[:, last]
            - derivatives.frame.beta_n * derivatives.christoffel[last, :, last])


def _C_vanishes(derivatives: AdaptedDerivatives, tolerance: float) -> bool:
    scale = max(1.0, float(np.abs(derivatives.beta_gradient).max()))
    return bool(np.max(np.abs(_C(derivatives))) <= tolerance * scale)


def solvability_C(m: FinslerMetricSpec, x) -> np.ndarray:
    """C_(n;i) = d beta~_n / dx~^i - beta_n Gamma~^n_(in), adapted coordinates"""
    return _C(adapted_derivatives(m, x))


def is_solvable(m: FinslerMetricSpec, x, tolerance: float = DEFAULT_SOLVABILITY_TOLERANCE) -> bool:
    """C vanishes relative to the size of the adapted beta gradient"""
    return _C_vanishes(adapted_derivatives(m, x), tolerance)


def norm_gradient(m: FinslerMetricSpec, x, adapted: bool = True) -> np.ndarray:
    """1/2 d(|beta#|^2_alpha)/dx / |beta#|_alpha, in adapted coordinates unless adapted=False"""
    x = np.asarray(x, dtype=float)
    alpha = m.alpha_at(x)
    beta = m.beta_at(x)
    sharp = np.linalg.solve(alpha, beta)
    norm = float(np.sqrt(beta @ sharp))
    if norm == 0.0:
        raise AdaptedFrameError("beta vanishes at the point; the metric is Riemannian there")
    d_alpha = m.alpha_gradient_at(x)
    d_norm_sq = 2.0 * m.beta_gradient_at(x) @ sharp - np.einsum('a,iab,b->i', sharp, d_alpha, sharp)
    gradient = 0.5 * d_norm_sq / norm
    if not adapted:
        return gradient
    return adapt(alpha, beta).R.T @ gradient


def torsion_3d(m: FinslerMetricSpec, x, tolerance: float = DEFAULT_SOLVABILITY_TOLERANCE,
               frame: Optional[AdaptedFrame] = None) -> TorsionTensor:
    """Closed-form extremal torsion of a solvable 3D Randers metric in adapted coordinates (frame or adapt())"""
    if m.dimension != 3:
        raise SolverError(f"Closed-form Randers torsion is only available for n = 3, got {m.dimension}")
    derivatives = adapted_derivatives(m, x, frame)
    D = derivatives.beta_gradient
    G = derivatives.christoffel
    b = derivatives.frame.beta_n

    if not _C_vanishes(derivatives, tolerance):
        C = _C(derivatives)
        raise NotSolvableError(f"beta does not have constant alpha-length: C = {C.tolist()}", C=C)

    full = np.zeros((3, 3, 3))

    def put(a, b_, c, value):
        full[c - 1, a - 1, b_ - 1] = value
        full[c - 1, b_ - 1, a - 1] = -value

    put(1, 3, 1, -(D[0, 0] - b * G[2, 0, 0]) / b)
    put(2, 3, 2, -(D[1, 1] - b * G[2, 1, 1]) / b)
    put(1, 3, 3, -(D[2, 0] - b * G[2, 0, 2]) / b)
    put(2, 3, 3, -(D[2, 1] - b * G[2, 1, 2]) / b)
    mixed = G[2, 0, 1] - (D[0, 1] + D[1, 0]) / (2.0 * b)
    put(2, 3, 1, mixed)
    put(1, 3, 2, mixed)
    put(1, 2, 3, (D[0, 1] - D[1, 0]) / b)
    return TorsionTensor.from_full(full, FRAME_ADAPTED)


def gram_prediction(beta_n: float, n: int = 3) -> np.ndarray:
    """beta_n^4 omega^2 times the fixed pattern, omega = area(S^(n-1))/n"""
    if n != 3:
        raise SolverError("The basis-image Gram pattern is only tabulated for n = 3")
    omega = sphere_area(n) / n
    return beta_n ** 4 * omega ** 2 * GRAM_PATTERN_3D


def predicted_gram_f(beta_n: float, n: int) -> np.ndarray:
    """G_f in adapted coordinates: f_ab = y^a d_bn beta_n gives beta_n^2 omega on the pairs (a, n)"""
    omega = sphere_area(n) / n
    G = np.zeros((pair_count(n), pair_count(n)))
    for p, (a, b) in enumerate(index_pairs(n)):
        if b == n - 1:
            G[p, p] = beta_n ** 2 * omega
    return G


def predicted_rank(n: int) -> dict:
    return {'rank': n - 1, 'd': pair_count(n - 1)}


def to_adapted(torsion: TorsionTensor, frame_A: np.ndarray, adapted: AdaptedFrame) -> TorsionTensor:
    """Re-express frame components (x = A x^) in adapted coordinates (x = R x~)"""
    R_inverse = np.linalg.inv(adapted.R)
    return transform_torsion(torsion, R_inverse @ frame_A, FRAME_ADAPTED)


def adapted_to_original(torsion: TorsionTensor, adapted: AdaptedFrame) -> TorsionTensor:
    return transform_torsion(torsion, adapted.R)
