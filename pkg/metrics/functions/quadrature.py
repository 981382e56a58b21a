import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special

from metrics.functions.exceptions import InvalidMetricError, QuadratureError
from metrics.functions.metric import FinslerMetricSpec, evaluate_F, evaluate_fundamental_tensor

logger = logging.getLogger(__name__)

DEFAULT_MAX_DIMENSION = 6
DEFAULT_LEVELS = {2: 32, 3: 30}
DEFAULT_HIGHER_LEVEL = 8

SUMMATION_BLOCK = 64


def sphere_area(n: int) -> float:
    """Surface area of the Euclidean unit sphere S^(n-1)"""
    return float(2.0 * math.pi ** (n / 2.0) / special.gamma(n / 2.0))


def default_level(n: int, levels: Optional[dict] = None) -> int:
    levels = levels or {}
    if n in levels:
        return int(levels[n])
    if n in DEFAULT_LEVELS:
        return DEFAULT_LEVELS[n]
    return int(levels.get('higher', DEFAULT_HIGHER_LEVEL))


@dataclass(frozen=True, eq=False)
class SphereRule:
    """Nodes (one unit vector per column) and positive weights on S^(n-1)"""

    dimension: int
    level: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def area(self) -> float:
        return sphere_area(self.dimension)

    def describe(self) -> dict:
        return {'dimension': self.dimension, 'level': self.level, 'nodes': self.size}


def _polar_rule(level: int, power: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss rule in t = cos(theta) for the weight sin(theta)^power dtheta"""
    if power == 1:
        return special.roots_legendre(level)
    exponent = (power - 1) / 2.0
    return special.roots_jacobi(level, exponent, exponent)


def sphere_rule(n: int, level: int, max_dimension: int = DEFAULT_MAX_DIMENSION) -> SphereRule:
    """
    Product quadrature on S^(n-1).

    n = 2 is the trapezoid rule with 2*level equispaced nodes. For n >= 3 the
    sphere is parametrised by polar angles theta_1..theta_(n-2) and an azimuth
    phi; theta_k carries the weight sin(theta_k)^(n-1-k) and is integrated by a
    level-point Gauss-Jacobi rule in cos(theta_k), phi by 2*level equispaced
    nodes. Both factors are exact for quadratic monomials once level >= 2.
    """
    if n < 2 or n > max_dimension:
        raise QuadratureError(f"Unsupported dimension {n}: must lie in [2, {max_dimension}]")
    if level < 1:
        raise QuadratureError(f"Quadrature level must be at least 1, got {level}")

    azimuth_count = 2 * level
    phi = 2.0 * np.pi * np.arange(azimuth_count) / azimuth_count
    phi_weights = np.full(azimuth_count, 2.0 * np.pi / azimuth_count)

    if n == 2:
        nodes = np.vstack([np.cos(phi), np.sin(phi)])
        return SphereRule(dimension=2, level=level, nodes=nodes, weights=phi_weights)

    polar = [_polar_rule(level, n - 1 - k) for k in range(1, n - 1)]
    grids = np.meshgrid(*[t for t, _ in polar], phi, indexing='ij')
    weight_grids = np.meshgrid(*[w for _, w in polar], phi_weights, indexing='ij')

    cosines = [grid.ravel() for grid in grids[:-1]]
    azimuth = grids[-1].ravel()
    weights = np.prod([grid.ravel() for grid in weight_grids], axis=0)

    nodes = np.empty((n, azimuth.size))
    radius = np.ones(azimuth.size)
    for k, t in enumerate(cosines):
        nodes[k] = radius * t
        radius = radius * np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    nodes[n - 2] = radius * np.cos(azimuth)
    nodes[n - 1] = radius * np.sin(azimuth)

    logger.debug(f"Built sphere rule n={n} level={level} with {azimuth.size} nodes")
    return SphereRule(dimension=n, level=level, nodes=nodes, weights=weights)


class Accumulator:
    """Running compensated sum of equally shaped arrays (error-free two-sum per add)"""

    def __init__(self, shape=()):
        self._s = np.zeros(shape)
        self._t = np.zeros(shape)

    @staticmethod
    def two_sum(u, v):
        s = u + v
        up = s - v
        vpp = s - up
        up = up - u
        vpp = vpp - v
        return s, -(up + vpp)

    def add(self, value):
        self._s, error = Accumulator.two_sum(self._s, np.asarray(value, dtype=float))
        self._t = self._t + error

    @property
    def partial_sums(self):
        return self._s

    @property
    def errors(self):
        return self._t

    def sum(self):
        return self._s + self._t


def compensated_sum(values) -> np.ndarray:
    """Sum along axis 0 in fixed order: blocks of consecutive nodes, then blocks in order"""
    values = np.asarray(values, dtype=float)
    count = values.shape[0]
    tail = values.shape[1:]
    chunks = max(1, -(-count // SUMMATION_BLOCK))
    padded = np.zeros((chunks * SUMMATION_BLOCK,) + tail)
    padded[:count] = values
    blocks = padded.reshape((chunks, SUMMATION_BLOCK) + tail)

    partial = Accumulator((chunks,) + tail)
    for j in range(SUMMATION_BLOCK):
        partial.add(blocks[:, j])

    total = Accumulator(tail)
    for c in range(chunks):
        total.add(partial.partial_sums[c])
        total.add(partial.errors[c])
    return total.sum()


def integrate_sphere(rule: SphereRule, f):
    """Sum of w_k f_k; f may carry trailing axes (one integral per trailing entry)"""
    f = np.asarray(f, dtype=float)
    if f.ndim == 0 or f.shape[0] != rule.size:
        found = f.shape[0] if f.ndim else 'scalar'
        raise QuadratureError(f"Expected {rule.size} node values, got {found}")
    weighted = f * rule.weights.reshape((-1,) + (1,) * (f.ndim - 1))
    result = compensated_sum(weighted)
    return float(result) if np.ndim(result) == 0 else result


def indicatrix_pullback_weight(m: FinslerMetricSpec, x, u):
    """
    Map sphere directions to the indicatrix and return the pullback density.

    phi(u) = r(u) u with r = 1/F(x, u) lies on F = 1. The volume form of the
    indicatrix is sqrt(det g) times the contraction of dy^1..dy^n with the
    position vector. Pulling the contraction back along phi, the derivative of
    r only adds multiples of u, which the contraction with phi(u) = r u kills,
    so it becomes r^n times the Euclidean area form of the sphere. g is
    0-homogeneous, hence the density is sqrt(det g(x, u)) * F(x, u)^(-n).
    In the Riemannian case F(u) = sqrt(u.a.u) this is sqrt(det a) (u.a.u)^(-n/2);
    its sphere integral is sqrt(det a) times n times the Euclidean volume of the
    ellipsoid u.a.u <= 1, i.e. area(S^(n-1)) for every a.

    Returns (points, weights); u may be a single direction or columns.
    """
    U = np.asarray(u, dtype=float)
    single = U.ndim == 1
    if single:
        U = U[:, None]

    F, _, weights = indicatrix_pullback(m, x, U)
    points = U / F
    if single:
        return points[:, 0], float(weights[0])
    return points, weights


def indicatrix_pullback(m: FinslerMetricSpec, x, U: np.ndarray):
    """(F, g, density) at every column of U; g is shared with callers integrating g itself"""
    F = evaluate_F(m, x, U)
    if np.any(F <= 0):
        raise InvalidMetricError(f"F is not positive on {int(np.sum(F <= 0))} quadrature directions")
    g = evaluate_fundamental_tensor(m, x, U)
    det_g = np.linalg.det(g)
    if np.any(det_g <= 0):
        raise InvalidMetricError(f"Fundamental tensor is singular on {int(np.sum(det_g <= 0))} quadrature directions")
    return F, g, np.sqrt(det_g) * F ** (-m.dimension)


def indicatrix_volume(m: FinslerMetricSpec, x, rule: SphereRule) -> float:
    """Integral of the indicatrix volume form over the whole indicatrix"""
    _, _, weights = indicatrix_pullback(m, x, rule.nodes)
    return integrate_sphere(rule, weights)
