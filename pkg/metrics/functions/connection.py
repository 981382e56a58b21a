import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import linalg

from metrics.functions.exceptions import FrameError
from metrics.functions.metric import (
    AVERAGED, EXPLICIT_RANDERS_ALPHA, FinslerMetricSpec, evaluate_F, evaluate_partials, fundamental_tensor_noise
)
from metrics.functions.quadrature import SphereRule, indicatrix_pullback, integrate_sphere

logger = logging.getLogger(__name__)

DEFAULT_STEP_FACTOR = 1e-5
DEFAULT_CANCELLATION_TOLERANCE = 1e-4


@dataclass(frozen=True, eq=False)
class PointFrame:
    """Riemannian environment at a point: gamma, orthonormalising A and Christoffels in the frame"""

    point: np.ndarray
    gamma: np.ndarray
    A: np.ndarray
    christoffel: np.ndarray
    mode: str
    normalized: bool = False
    christoffel_original: Optional[np.ndarray] = None
    fd_step: Optional[float] = None
    cancellation: float = 0.0

    @property
    def dimension(self) -> int:
        return self.gamma.shape[0]

    @property
    def B(self) -> np.ndarray:
        return np.linalg.inv(self.A)

    @property
    def uses_finite_differences(self) -> bool:
        return self.mode == AVERAGED


@dataclass(frozen=True, eq=False)
class HStarField:
    """h*_i at every node of the mu* rule, shape (n, nodes), frame coordinates"""

    values: np.ndarray
    rule: SphereRule

    def l2_norm(self) -> float:
        return float(np.sqrt(max(integrate_sphere(self.rule, np.sum(self.values ** 2, axis=0)), 0.0)))


def averaged_metric(m: FinslerMetricSpec, x, rule: SphereRule, normalized: bool = False) -> np.ndarray:
    """gamma_ij = integral of g_ij over the indicatrix; divided by the indicatrix volume when normalized"""
    _, g, weights = indicatrix_pullback(m, x, rule.nodes)
    gamma = integrate_sphere(rule, g * weights[:, None, None])
    gamma = 0.5 * (gamma + gamma.T)
    if normalized:
        gamma = gamma / integrate_sphere(rule, weights)
    return gamma


def environment_metric(m: FinslerMetricSpec, x, rule: SphereRule, normalized: bool = False) -> np.ndarray:
    if m.environment_mode == EXPLICIT_RANDERS_ALPHA:
        return m.alpha_at(x)
    return averaged_metric(m, x, rule, normalized)


def orthonormal_frame(gamma) -> np.ndarray:
    """A = L^(-T) from gamma = L L^T, so that A^T gamma A = I"""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise FrameError(f"Environment metric must be square, got shape {gamma.shape}")
    if not np.allclose(gamma, gamma.T, rtol=1e-12, atol=0.0):
        raise FrameError("Environment metric is not symmetric")
    try:
        L = np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError:
        raise FrameError("Environment metric is not positive definite")
    return linalg.solve_triangular(L, np.eye(gamma.shape[0]), lower=True).T


class _GammaField:
    """Environment metric as a function of the base point, caching each evaluated point"""

    def __init__(self, m: FinslerMetricSpec, rule: SphereRule, normalized: bool):
        self.m = m
        self.rule = rule
        self.normalized = normalized
        self._cache: Dict[Tuple[float, ...], np.ndarray] = {}

    def __call__(self, x) -> np.ndarray:
        key = tuple(float(v) for v in x)
        if key not in self._cache:
            self._cache[key] = averaged_metric(self.m, np.array(key), self.rule, self.normalized)
        return self._cache[key]

    def derivatives(self, x, step: float) -> np.ndarray:
        """Central differences, array [l, i, j] = d gamma_ij / dx^l"""
        n = len(x)
        result = np.empty((n, n, n))
        for l in range(n):
            shift = np.zeros(n)
            shift[l] = step
            result[l] = (self(x + shift) - self(x - shift)) / (2.0 * step)
        return result


def christoffel_from_derivatives(gamma: np.ndarray, d_gamma: np.ndarray) -> np.ndarray:
    """Gamma^k_ij = 1/2 gamma^kl (d_i gamma_jl + d_j gamma_il - d_l gamma_ij)"""
    lowered = 0.5 * (np.einsum('ijl->lij', d_gamma) + np.einsum('jil->lij', d_gamma) - d_gamma)
    return np.einsum('kl,lij->kij', np.linalg.inv(gamma), lowered)


def to_frame(christoffel: np.ndarray, A: np.ndarray) -> np.ndarray:
    """B^c_k Gamma^k_ij A^i_a A^j_b for the constant linear change x = A x~"""
    return np.einsum('ck,kij,ia,jb->cab', np.linalg.inv(A), christoffel, A, A)


def minimum_step_factor(m: FinslerMetricSpec) -> float:
    """Smallest relative gamma-difference step whose rounding error stays below the truncation error"""
    return fundamental_tensor_noise(m) ** (1.0 / 3.0)


def default_step(m: FinslerMetricSpec, x, step_factor: float = DEFAULT_STEP_FACTOR) -> float:
    """step_factor (1 + |x|), raised to the noise floor of the metric's fundamental tensor"""
    return max(step_factor, minimum_step_factor(m)) * (1.0 + float(np.linalg.norm(x)))


def _christoffel_original(m: FinslerMetricSpec, x, rule: SphereRule, step: Optional[float],
                          normalized: bool, cancellation_tolerance: float):
    x = np.asarray(x, dtype=float)
    if m.environment_mode == EXPLICIT_RANDERS_ALPHA:
        gamma = m.alpha_at(x)
        return gamma, christoffel_from_derivatives(gamma, m.alpha_gradient_at(x)), None, 0.0

    field_ = _GammaField(m, rule, normalized)
    gamma = field_(x)
    step = step or default_step(m, x)
    d_gamma = field_.derivatives(x, step)
    d_gamma_half = field_.derivatives(x, step / 2.0)

    scale = max(float(np.abs(d_gamma).max()), float(np.abs(gamma).max()))
    cancellation = float(np.abs(d_gamma - d_gamma_half).max()) / scale if scale > 0 else 0.0
    if cancellation > cancellation_tolerance:
        logger.warning(
            f"Finite-difference derivatives of gamma at x={list(x)} disagree between step {step:.2e} "
            f"and {step / 2.0:.2e} by {cancellation:.2e}"
        )
    # Richardson: the half step removes the step^2 error term
    d_gamma = (4.0 * d_gamma_half - d_gamma) / 3.0
    return gamma, christoffel_from_derivatives(gamma, d_gamma), step, cancellation


def christoffel_star(m: FinslerMetricSpec, x, rule: SphereRule, step: Optional[float] = None,
                     normalized: bool = False) -> np.ndarray:
    """Christoffel symbols of the environment metric at x, in frame coordinates"""
    gamma, christoffel, _, _ = _christoffel_original(
        m, x, rule, step, normalized, DEFAULT_CANCELLATION_TOLERANCE
    )
    return to_frame(christoffel, orthonormal_frame(gamma))


def build_point_frame(m: FinslerMetricSpec, x, rule: SphereRule, step: Optional[float] = None,
                      normalized: bool = False,
                      cancellation_tolerance: float = DEFAULT_CANCELLATION_TOLERANCE) -> PointFrame:
    x = np.asarray(x, dtype=float)
    gamma, christoffel, used_step, cancellation = _christoffel_original(
        m, x, rule, step, normalized, cancellation_tolerance
    )
    A = orthonormal_frame(gamma)
    frame = PointFrame(
        point=x,
        gamma=gamma,
        A=A,
        christoffel=to_frame(christoffel, A),
        mode=m.environment_mode,
        normalized=normalized,
        christoffel_original=christoffel,
        fd_step=used_step,
        cancellation=cancellation,
    )
    logger.debug(f"Built {frame.mode} frame at x={list(x)}")
    return frame


def frame_partials(m: FinslerMetricSpec, x, frame: PointFrame, rule: SphereRule):
    """(F, dF/dy, dF/dx) of F~(x~, y~) = F(A x~, A y~) at the rule nodes y~"""
    Y = frame.A @ rule.nodes
    dF_dy, dF_dx = evaluate_partials(m, x, Y)
    return evaluate_F(m, x, Y), frame.A.T @ dF_dy, frame.A.T @ dF_dx


def h_star_field(m: FinslerMetricSpec, x, frame: PointFrame, rule: SphereRule) -> HStarField:
    """h*_i(u) = dF/dx^i - u^j Gamma^k_ij dF/dy^k in frame coordinates"""
    _, dF_dy, dF_dx = frame_partials(m, x, frame, rule)
    transport = np.einsum('jn,kij,kn->in', rule.nodes, frame.christoffel, dF_dy)
    return HStarField(values=dF_dx - transport, rule=rule)


def riemannian_proportionality(m: FinslerMetricSpec, x, frame: PointFrame, rule: SphereRule) -> dict:
    """Spread of F*^2 / F^2 over the rule directions; constant exactly when the indicatrix is quadratic"""
    V = rule.nodes
    F = evaluate_F(m, x, V)
    F_star_sq = np.einsum('in,ij,jn->n', V, frame.gamma, V)
    ratio = F_star_sq / F ** 2
    mean = float(ratio.mean())
    return {
        'mean_ratio': mean,
        'spread': float((ratio.max() - ratio.min()) / mean) if mean else 0.0,
    }
