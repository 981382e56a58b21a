import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from metrics.functions.exceptions import InvalidMetricError, MetricError, ZeroDirectionError, BerwaldError
from metrics.functions.expressions import Expr, diff_expr, eval_expr, max_index, parse_expr

logger = logging.getLogger(__name__)

RANDERS = 'randers'
GENERIC = 'generic'

METRIC_VARIANTS = [
    (RANDERS, 'Randers'),
    (GENERIC, 'Generic'),
]

AVERAGED = 'averaged'
EXPLICIT_RANDERS_ALPHA = 'explicit_alpha'

ENVIRONMENT_MODES = [
    (AVERAGED, 'Averaged'),
    (EXPLICIT_RANDERS_ALPHA, 'Explicit Randers Alpha'),
]

MACHINE_EPSILON = np.finfo(float).eps
GRADIENT_STEP_SCALE = MACHINE_EPSILON ** (1.0 / 3.0)
HESSIAN_STEP_SCALE = MACHINE_EPSILON ** (1.0 / 6.0)

HOMOGENEITY_FACTORS = (0.5, 2.0, 10.0)


def _as_expr(value) -> Expr:
    return value if isinstance(value, Expr) else parse_expr(str(value))


@dataclass(frozen=True)
class FinslerMetricSpec:
    """A Randers (closed-form) or generic (expression-defined) Finsler metric"""

    dimension: int
    variant: str
    alpha: Tuple[Tuple[Expr, ...], ...] = ()
    beta: Tuple[Expr, ...] = ()
    F: Optional[Expr] = None
    environment_mode: str = AVERAGED

    def __post_init__(self):
        n = self.dimension
        if n < 2:
            raise InvalidMetricError(f"Dimension must be at least 2, got {n}")
        if self.environment_mode not in dict(ENVIRONMENT_MODES):
            raise InvalidMetricError(f"Unknown environment mode '{self.environment_mode}'")

        if self.variant == RANDERS:
            if len(self.alpha) != n or any(len(row) != n for row in self.alpha):
                raise InvalidMetricError(f"alpha must be a {n}x{n} matrix of expressions")
            if len(self.beta) != n:
                raise InvalidMetricError(f"beta must have {n} components")
            for e in [e for row in self.alpha for e in row] + list(self.beta):
                if max_index(e, 'y'):
                    raise InvalidMetricError(f"Coefficient '{e}' may only depend on x1..x{n}")
                if max_index(e, 'x') > n:
                    raise InvalidMetricError(f"Coefficient '{e}' uses a coordinate beyond x{n}")
        elif self.variant == GENERIC:
            if self.F is None:
                raise InvalidMetricError("Generic metric requires an expression for F")
            if max_index(self.F, 'x') > n or max_index(self.F, 'y') > n:
                raise InvalidMetricError(f"F uses a coordinate beyond dimension {n}")
            if self.environment_mode == EXPLICIT_RANDERS_ALPHA:
                raise InvalidMetricError("Explicit alpha environment is only available for Randers metrics")
        else:
            raise InvalidMetricError(f"Unknown metric variant '{self.variant}'")

    @classmethod
    def randers(cls, alpha: Sequence[Sequence[Union[str, Expr]]], beta: Sequence[Union[str, Expr]],
                environment_mode: str = AVERAGED) -> 'FinslerMetricSpec':
        alpha = tuple(tuple(_as_expr(e) for e in row) for row in alpha)
        beta = tuple(_as_expr(e) for e in beta)
        return cls(dimension=len(beta), variant=RANDERS, alpha=alpha, beta=beta,
                   environment_mode=environment_mode)

    @classmethod
    def generic(cls, F: Union[str, Expr], dimension: int,
                environment_mode: str = AVERAGED) -> 'FinslerMetricSpec':
        return cls(dimension=dimension, variant=GENERIC, F=_as_expr(F), environment_mode=environment_mode)

    @classmethod
    def euclidean(cls, dimension: int, environment_mode: str = AVERAGED) -> 'FinslerMetricSpec':
        alpha = [['1' if i == j else '0' for j in range(dimension)] for i in range(dimension)]
        return cls.randers(alpha, ['0'] * dimension, environment_mode)

    @property
    def is_randers(self) -> bool:
        return self.variant == RANDERS

    @property
    def uses_analytic_derivatives(self) -> bool:
        return self.is_randers

    def with_environment_mode(self, environment_mode: str) -> 'FinslerMetricSpec':
        return FinslerMetricSpec(self.dimension, self.variant, self.alpha, self.beta, self.F, environment_mode)

    @cached_property
    def alpha_derivatives(self) -> Tuple:
        """alpha_derivatives[i][a][b] is d alpha_ab / dx^(i+1)"""
        n = self.dimension
        return tuple(
            tuple(tuple(diff_expr(self.alpha[a][b], i + 1) for b in range(n)) for a in range(n))
            for i in range(n)
        )

    @cached_property
    def beta_derivatives(self) -> Tuple:
        """beta_derivatives[i][j] is d beta_j / dx^(i+1)"""
        n = self.dimension
        return tuple(tuple(diff_expr(self.beta[j], i + 1) for j in range(n)) for i in range(n))

    def alpha_at(self, x) -> np.ndarray:
        a = _evaluate_grid(self.alpha, x)
        if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a).max())):
            raise InvalidMetricError(f"alpha is not symmetric at x={list(np.asarray(x, dtype=float))}")
        return 0.5 * (a + a.T)

    def beta_at(self, x) -> np.ndarray:
        return np.array([eval_expr(e, x) for e in self.beta], dtype=float)

    def alpha_gradient_at(self, x) -> np.ndarray:
        """Array [i, a, b] of d alpha_ab / dx^i"""
        grad = np.array([_evaluate_grid(rows, x) for rows in self.alpha_derivatives])
        return 0.5 * (grad + grad.transpose(0, 2, 1))

    def beta_gradient_at(self, x) -> np.ndarray:
        """Array [i, j] of d beta_j / dx^i"""
        return np.array([[eval_expr(e, x) for e in row] for row in self.beta_derivatives], dtype=float)

    def describe(self) -> dict:
        data = {'variant': self.variant, 'dimension': self.dimension, 'environment_mode': self.environment_mode}
        if self.is_randers:
            data['alpha'] = [[e.to_text() for e in row] for row in self.alpha]
            data['beta'] = [e.to_text() for e in self.beta]
        else:
            data['F'] = self.F.to_text()
        return data


def _evaluate_grid(rows, x) -> np.ndarray:
    return np.array([[eval_expr(e, x) for e in row] for row in rows], dtype=float)


def _as_columns(y) -> Tuple[np.ndarray, bool]:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        return y[:, None], True
    return y, False


def _check_directions(m: FinslerMetricSpec, Y: np.ndarray) -> np.ndarray:
    if Y.shape[0] != m.dimension:
        raise MetricError(f"Direction has {Y.shape[0]} components, metric dimension is {m.dimension}")
    norms = np.linalg.norm(Y, axis=0)
    if np.any(norms == 0):
        raise ZeroDirectionError("F is not defined on the zero direction")
    return norms


def _randers_parts(m: FinslerMetricSpec, x, Y):
    a = m.alpha_at(x)
    b = m.beta_at(x)
    aY = a @ Y
    alpha_sq = np.einsum('in,in->n', Y, aY)
    if np.any(alpha_sq <= 0):
        raise InvalidMetricError(f"alpha is not positive definite at x={list(np.asarray(x, dtype=float))}")
    alpha_len = np.sqrt(alpha_sq)
    return a, b, aY, alpha_len


def _generic_values(m: FinslerMetricSpec, x, Y) -> np.ndarray:
    values = eval_expr(m.F, x, Y)
    return np.broadcast_to(np.asarray(values, dtype=float), (Y.shape[1],)).copy()


def evaluate_F(m: FinslerMetricSpec, x, Y: np.ndarray) -> np.ndarray:
    """F at every column of Y"""
    _check_directions(m, Y)
    if m.is_randers:
        _, b, _, alpha_len = _randers_parts(m, x, Y)
        return alpha_len + b @ Y
    return _generic_values(m, x, Y)


def evaluate_partials(m: FinslerMetricSpec, x, Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(dF/dy, dF/dx), each of shape (n, nodes)"""
    norms = _check_directions(m, Y)
    x = np.asarray(x, dtype=float)
    n = m.dimension

    if m.is_randers:
        _, b, aY, alpha_len = _randers_parts(m, x, Y)
        dF_dy = aY / alpha_len + b[:, None]
        quadratic = np.einsum('an,iab,bn->in', Y, m.alpha_gradient_at(x), Y)
        dF_dx = quadratic / (2.0 * alpha_len) + m.beta_gradient_at(x) @ Y
        return dF_dy, dF_dx

    dF_dy = np.empty_like(Y)
    h_y = GRADIENT_STEP_SCALE * np.maximum(1.0, norms)
    for k in range(n):
        shift = np.zeros_like(Y)
        shift[k] = h_y
        dF_dy[k] = (_generic_values(m, x, Y + shift) - _generic_values(m, x, Y - shift)) / (2.0 * h_y)

    dF_dx = np.empty_like(Y)
    h_x = GRADIENT_STEP_SCALE * max(1.0, float(np.linalg.norm(x)))
    for i in range(n):
        shift = np.zeros(n)
        shift[i] = h_x
        dF_dx[i] = (_generic_values(m, x + shift, Y) - _generic_values(m, x - shift, Y)) / (2.0 * h_x)
    return dF_dy, dF_dx


def evaluate_fundamental_tensor(m: FinslerMetricSpec, x, Y: np.ndarray) -> np.ndarray:
    """g_ij at every column of Y, shape (nodes, n, n)"""
    norms = _check_directions(m, Y)

    if m.is_randers:
        a, b, aY, alpha_len = _randers_parts(m, x, Y)
        F = alpha_len + b @ Y
        unit = (aY / alpha_len).T
        shifted = unit + b[None, :]
        return ((F / alpha_len)[:, None, None] * (a[None, :, :] - unit[:, :, None] * unit[:, None, :])
                + shifted[:, :, None] * shifted[:, None, :])

    # g_ij = F_i F_j + F F_ij
    F0 = _generic_values(m, x, Y)
    dF_dy, _ = evaluate_partials(m, x, Y)
    h = HESSIAN_STEP_SCALE * np.maximum(1.0, norms)
    # Richardson: the 2h stencil cancels the h^2 error term of the h stencil
    hessian = (4.0 * _generic_hessian(m, x, Y, F0, h) - _generic_hessian(m, x, Y, F0, 2.0 * h)) / 3.0
    return dF_dy.T[:, :, None] * dF_dy.T[:, None, :] + F0[:, None, None] * hessian


def _generic_hessian(m: FinslerMetricSpec, x, Y: np.ndarray, F0: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Central second differences of F in y, shape (nodes, n, n)"""
    n = m.dimension
    hessian = np.empty((Y.shape[1], n, n))
    for i in range(n):
        e_i = np.zeros_like(Y)
        e_i[i] = h
        plus = _generic_values(m, x, Y + e_i)
        minus = _generic_values(m, x, Y - e_i)
        hessian[:, i, i] = (plus - 2.0 * F0 + minus) / h ** 2
        for j in range(i + 1, n):
            e_j = np.zeros_like(Y)
            e_j[j] = h
            value = (_generic_values(m, x, Y + e_i + e_j) - _generic_values(m, x, Y + e_i - e_j)
                     - _generic_values(m, x, Y - e_i + e_j) + _generic_values(m, x, Y - e_i - e_j)) / (4.0 * h ** 2)
            hessian[:, i, j] = value
            hessian[:, j, i] = value
    return hessian


def fundamental_tensor_noise(m: FinslerMetricSpec) -> float:
    """Relative rounding noise carried by g: machine precision for Randers, the Hessian stencil's for generic"""
    if m.is_randers:
        return MACHINE_EPSILON
    return MACHINE_EPSILON / HESSIAN_STEP_SCALE ** 2


def eval_F(m: FinslerMetricSpec, x, y):
    """F(x, y) for one direction or a column stack of directions"""
    Y, single = _as_columns(y)
    values = evaluate_F(m, x, Y)
    return float(values[0]) if single else values


def partials_F(m: FinslerMetricSpec, x, y):
    """(dF/dy, dF/dx) for one direction or a column stack of directions"""
    Y, single = _as_columns(y)
    dF_dy, dF_dx = evaluate_partials(m, x, Y)
    if single:
        return dF_dy[:, 0], dF_dx[:, 0]
    return dF_dy, dF_dx


def fundamental_tensor(m: FinslerMetricSpec, x, y) -> np.ndarray:
    """g_ij(x, y); raises InvalidMetricError where strong convexity fails"""
    Y, single = _as_columns(y)
    g = evaluate_fundamental_tensor(m, x, Y)
    g = 0.5 * (g + g.transpose(0, 2, 1))
    eigenvalues = np.linalg.eigvalsh(g)
    if np.any(eigenvalues[:, 0] <= 0):
        worst = int(np.argmin(eigenvalues[:, 0]))
        raise InvalidMetricError(
            f"Fundamental tensor is not positive definite at y={list(Y[:, worst])} "
            f"(min eigenvalue {eigenvalues[worst, 0]:.3e})"
        )
    return g[0] if single else g


def randers_beta_norm(m: FinslerMetricSpec, x) -> float:
    """||beta#||_alpha = sqrt(beta_i alpha^ij beta_j)"""
    a = m.alpha_at(x)
    b = m.beta_at(x)
    return float(np.sqrt(max(b @ np.linalg.solve(a, b), 0.0)))


@dataclass
class ValidationReport:
    sample_count: int
    homogeneity_residual: float = 0.0
    euler_residual: float = 0.0
    energy_residual: float = 0.0
    min_F: float = 0.0
    min_eigenvalue: float = 0.0
    beta_norm: Optional[float] = None
    alpha_min_eigenvalue: Optional[float] = None
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            'sample_count': self.sample_count,
            'passed': self.passed,
            'homogeneity_residual': self.homogeneity_residual,
            'euler_residual': self.euler_residual,
            'energy_residual': self.energy_residual,
            'min_F': self.min_F,
            'min_eigenvalue': self.min_eigenvalue,
            'beta_norm': self.beta_norm,
            'alpha_min_eigenvalue': self.alpha_min_eigenvalue,
            'failures': list(self.failures),
        }


def validate_metric(m: FinslerMetricSpec, x, sample_count: int, seed: int = 0) -> ValidationReport:
    """Check homogeneity, Euler identity and strong convexity on sampled directions"""
    if sample_count < 1:
        raise MetricError(f"sample_count must be at least 1, got {sample_count}")

    report = ValidationReport(sample_count=sample_count)
    energy_tolerance = 1e-8 if m.uses_analytic_derivatives else 1e-6
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((m.dimension, sample_count))
    Y /= np.linalg.norm(Y, axis=0)

    try:
        if m.is_randers:
            report.alpha_min_eigenvalue = float(np.linalg.eigvalsh(m.alpha_at(x))[0])
            if report.alpha_min_eigenvalue <= 0:
                report.failures.append("alpha is not positive definite")
                return report
            report.beta_norm = randers_beta_norm(m, x)
            if report.beta_norm >= 1.0:
                report.failures.append(f"||beta#||_alpha = {report.beta_norm:.6g} is not below 1")

        F = evaluate_F(m, x, Y)
        report.min_F = float(F.min())
        if report.min_F <= 0:
            report.failures.append(f"F is not positive on sampled directions (min {report.min_F:.3e})")
        scale = np.maximum(np.abs(F), np.finfo(float).tiny)

        report.homogeneity_residual = max(
            float(np.max(np.abs(evaluate_F(m, x, t * Y) - t * F) / (t * scale))) for t in HOMOGENEITY_FACTORS
        )
        if report.homogeneity_residual > 1e-9:
            report.failures.append(f"positive homogeneity violated (residual {report.homogeneity_residual:.3e})")

        dF_dy, _ = evaluate_partials(m, x, Y)
        report.euler_residual = float(np.max(np.abs(np.einsum('in,in->n', Y, dF_dy) - F) / scale))
        if report.euler_residual > 1e-9:
            report.failures.append(f"Euler identity violated (residual {report.euler_residual:.3e})")

        g = evaluate_fundamental_tensor(m, x, Y)
        energy = np.einsum('ni,nij,nj->n', Y.T, g, Y.T)
        report.energy_residual = float(np.max(np.abs(energy - F ** 2) / scale ** 2))
        if report.energy_residual > energy_tolerance:
            report.failures.append(f"y.g.y = F^2 violated (residual {report.energy_residual:.3e})")

        report.min_eigenvalue = float(np.linalg.eigvalsh(0.5 * (g + g.transpose(0, 2, 1)))[:, 0].min())
        if report.min_eigenvalue <= 0:
            report.failures.append(f"strong convexity violated (min eigenvalue {report.min_eigenvalue:.3e})")
    except BerwaldError as e:
        report.failures.append(str(e))

    if report.failures:
        logger.warning(f"Metric validation at x={list(np.asarray(x, dtype=float))}: {'; '.join(report.failures)}")
    return report
