import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import linalg

from metrics.functions.connection import (
    DEFAULT_CANCELLATION_TOLERANCE, DEFAULT_STEP_FACTOR, build_point_frame, default_step, h_star_field,
    riemannian_proportionality,
)
from metrics.functions.exceptions import BerwaldError
from metrics.functions.metric import (
    EXPLICIT_RANDERS_ALPHA, FinslerMetricSpec, evaluate_F, randers_beta_norm, validate_metric
)
from metrics.functions.quadrature import DEFAULT_MAX_DIMENSION, default_level, sphere_rule
from torsion.functions.exceptions import AnalysisError
from torsion.functions.randers_oracle import (
    adapt, adapted_to_original, gram_prediction, is_solvable, norm_gradient, predicted_gram_f,
    predicted_rank, solvability_C, to_adapted, torsion_3d
)
from torsion.functions.solver import (
    DEFAULT_CONDITION_LIMIT, DEFAULT_DEGENERACY_THRESHOLD, DEFAULT_RANK_RTOL, FRAME_ORIGINAL,
    INCONCLUSIVE, NOT_SOLVABLE, RIEMANNIAN_DEGENERATE, SOLVABLE, constraint_residual, energy_scale, f_values,
    gram_f,
    h_inner, isometry_directions, select_subsystem, solve_2d,
    solve_extremal, solve_orthogonalized, support_value, torsion_map_basis, transform_torsion
)

logger = logging.getLogger(__name__)

SOLVE_GRAM = 'gram'
SOLVE_ORTHOGONALIZED = 'orthogonalized'
SOLVE_PATHS = [
    (SOLVE_GRAM, 'Gram inverse'),
    (SOLVE_ORTHOGONALIZED, 'Orthogonalization'),
]

DEFAULT_RESIDUAL_THRESHOLD_ANALYTIC = 1e-6
DEFAULT_RESIDUAL_THRESHOLD_NUMERIC = 1e-4
DEFAULT_VALIDATION_SAMPLES = 64

# A failing ratio within this factor of the threshold is inconclusive when the gamma differences were unstable
INCONCLUSIVE_FACTOR = 10.0

PATH_AGREEMENT_TOLERANCE = 1e-9
ORACLE_AGREEMENT_TOLERANCE = 1e-6
ISOMETRY_TIMES = (0.3, 1.0)

STAGES = (
    'validate', 'rule', 'frame', 'h_star', 'gram', 'torsion_map',
    'subsystem', 'solve', 'residual', 'isometry', 'oracle',
)


@dataclass
class AnalysisOptions:
    """Numerical knobs of one point analysis; None picks the dimension or mode default"""

    level: Optional[int] = None
    levels: Dict = field(default_factory=dict)
    fd_step: Optional[float] = None
    fd_step_factor: float = DEFAULT_STEP_FACTOR
    normalized: bool = False
    rank_rtol: float = DEFAULT_RANK_RTOL
    residual_threshold: Optional[float] = None
    residual_threshold_analytic: float = DEFAULT_RESIDUAL_THRESHOLD_ANALYTIC
    residual_threshold_numeric: float = DEFAULT_RESIDUAL_THRESHOLD_NUMERIC
    degeneracy_threshold: float = DEFAULT_DEGENERACY_THRESHOLD
    condition_limit: float = DEFAULT_CONDITION_LIMIT
    cancellation_tolerance: float = DEFAULT_CANCELLATION_TOLERANCE
    validation_samples: int = DEFAULT_VALIDATION_SAMPLES
    solve_path: str = SOLVE_GRAM
    cross_check: bool = True
    oracle: bool = True
    max_dimension: int = DEFAULT_MAX_DIMENSION

    def level_for(self, n: int) -> int:
        return self.level if self.level is not None else default_level(n, self.levels)

    def step_for(self, m: FinslerMetricSpec, x) -> float:
        if self.fd_step is not None:
            return self.fd_step
        return default_step(m, x, self.fd_step_factor)

    def threshold_for(self, m: FinslerMetricSpec) -> float:
        if self.residual_threshold is not None:
            return self.residual_threshold
        if m.environment_mode == EXPLICIT_RANDERS_ALPHA:
            return self.residual_threshold_analytic
        return self.residual_threshold_numeric

    def as_dict(self) -> dict:
        return {
            'level': self.level,
            'levels': {str(k): v for k, v in self.levels.items()},
            'fd_step': self.fd_step,
            'fd_step_factor': self.fd_step_factor,
            'normalized': self.normalized,
            'rank_rtol': self.rank_rtol,
            'residual_threshold': self.residual_threshold,
            'residual_threshold_analytic': self.residual_threshold_analytic,
            'residual_threshold_numeric': self.residual_threshold_numeric,
            'degeneracy_threshold': self.degeneracy_threshold,
            'condition_limit': self.condition_limit,
            'cancellation_tolerance': self.cancellation_tolerance,
            'validation_samples': self.validation_samples,
            'solve_path': self.solve_path,
            'cross_check': self.cross_check,
            'oracle': self.oracle,
            'max_dimension': self.max_dimension,
        }


@dataclass
class PointReport:
    point: List[float]
    metric: dict
    verdict: Optional[str] = None
    dimension: int = 0
    level: Optional[int] = None
    environment: Optional[dict] = None
    validation: Optional[dict] = None
    gram: Optional[dict] = None
    solve: Optional[dict] = None
    torsion: Optional[dict] = None
    torsion_original: Optional[dict] = None
    torsion_norm: Optional[float] = None
    residual: Optional[dict] = None
    isometry: Optional[dict] = None
    checks: Dict = field(default_factory=dict)
    oracle: Optional[dict] = None
    error: Optional[dict] = None
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def rank(self) -> Optional[int]:
        return self.gram['rank'] if self.gram else None

    @property
    def d(self) -> Optional[int]:
        return self.gram['d'] if self.gram else None

    @property
    def residual_ratio(self) -> Optional[float]:
        return self.residual['ratio'] if self.residual else None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def summary_row(self) -> dict:
        return {
            'point': ' '.join(repr(float(v)) for v in self.point),
            'verdict': self.verdict if self.verdict else 'error',
            'd': self.d,
            'rank': self.rank,
            'torsion_norm': self.torsion_norm,
            'residual_ratio': self.residual_ratio,
        }

    def to_dict(self, include_timings: bool = False) -> dict:
        data = {
            'point': [float(v) for v in self.point],
            'metric': self.metric,
            'verdict': self.verdict,
            'dimension': self.dimension,
            'level': self.level,
            'environment': self.environment,
            'validation': self.validation,
            'gram': self.gram,
            'rank': self.rank,
            'd': self.d,
            'solve': self.solve,
            'torsion': {'frame': self.torsion, 'original': self.torsion_original},
            'torsion_norm': self.torsion_norm,
            'residual': self.residual,
            'isometry': self.isometry,
            'checks': self.checks,
            'oracle': self.oracle,
            'error': self.error,
        }
        if include_timings:
            data['timings'] = dict(self.timings)
        return data


class ExtremalTorsionEngine:
    """
    Pointwise extremal compatible connection analysis.

    Runs one point through the pipeline: metric validation, sphere rule,
    environment frame and Christoffels, h*, Gram matrix of the f_ab, basis
    images, subsystem, minimum-norm solve, residual verdict, isometry
    directions and (for Randers metrics) the closed-form oracle comparison.
    A failing stage is recorded on the report with its label; it never
    propagates out of run().
    """

    def __init__(self, metric: FinslerMetricSpec, point, options: Optional[AnalysisOptions] = None):
        self.metric = metric
        self.point = np.asarray(point, dtype=float)
        self.options = options or AnalysisOptions()
        self.report = PointReport(
            point=[float(v) for v in self.point],
            metric=metric.describe(),
            dimension=metric.dimension,
        )
        self.rule = None
        self.frame = None
        self.hstar = None
        self.f_vals = None
        self.scale = None
        self.gram = None
        self.Ts = None
        self.b = None
        self.subsystem = []
        self.outcome = None

    def run(self) -> PointReport:
        logger.info(f"Starting analysis at x={self.report.point}")

        try:
            if self.point.shape != (self.metric.dimension,):
                raise AnalysisError('validate', f"point has {self.point.size} coordinates, "
                                                f"metric dimension is {self.metric.dimension}")

            # Step 1: Metric sanity on sampled directions
            self._stage('validate', self._validate_metric)

            # Step 2: Sphere rule
            self._stage('rule', self._build_rule)

            # Step 3: Environment metric, frame and Christoffels
            self._stage('frame', self._build_frame)

            # Step 4: Affine term and f_ab at the nodes
            self._stage('h_star', self._evaluate_fields)

            # Step 5: Gram matrix of the f_ab
            self._stage('gram', self._build_gram)

            # Step 6: Basis images and inner products with h*
            self._stage('torsion_map', self._build_torsion_map)

            # Step 7: Maximal independent subsystem
            self._stage('subsystem', self._select_subsystem)

            # Step 8: Minimum-norm solve
            self._stage('solve', self._solve)

            # Step 9: Residual verdict
            self._stage('residual', self._check_residual)

            # Step 10: Isometry directions
            self._stage('isometry', self._isometry_directions)

            # Step 11: Randers oracle
            if self.options.oracle and self.metric.is_randers:
                self._stage('oracle', self._oracle_comparison)

        except AnalysisError as e:
            logger.error(f"Analysis failed at x={self.report.point}: {str(e)}")
            self.report.verdict = None
            self.report.error = {'stage': e.stage, 'message': str(e.cause)}

        logger.info(f"Analysis at x={self.report.point} finished: {self.report.verdict or 'error'}")
        return self.report

    def _stage(self, name: str, step) -> None:
        started = time.perf_counter()
        try:
            step()
        except AnalysisError:
            raise
        except (BerwaldError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
            raise AnalysisError(name, e) from e
        finally:
            self.report.timings[name] = time.perf_counter() - started

    def _validate_metric(self) -> None:
        validation = validate_metric(self.metric, self.point, self.options.validation_samples)
        self.report.validation = validation.as_dict()

    def _build_rule(self) -> None:
        n = self.metric.dimension
        self.rule = sphere_rule(n, self.options.level_for(n), self.options.max_dimension)
        self.report.level = self.rule.level

    def _build_frame(self) -> None:
        self.frame = build_point_frame(
            self.metric, self.point, self.rule,
            step=self.options.step_for(self.metric, self.point),
            normalized=self.options.normalized,
            cancellation_tolerance=self.options.cancellation_tolerance,
        )
        self.report.environment = {
            'mode': self.frame.mode,
            'normalized': self.frame.normalized,
            'gamma': self.frame.gamma.tolist(),
            'frame': self.frame.A.tolist(),
            'fd_step': self.frame.fd_step,
            'cancellation': self.frame.cancellation,
            'cancellation_warning': self.frame.cancellation > self.options.cancellation_tolerance,
        }

    def _evaluate_fields(self) -> None:
        self.hstar = h_star_field(self.metric, self.point, self.frame, self.rule)
        self.f_vals = f_values(self.metric, self.point, self.frame, self.rule)
        self.scale = energy_scale(self.metric, self.point, self.frame, self.rule)

    def _build_gram(self) -> None:
        self.gram = gram_f(
            self.f_vals, self.rule,
            rtol=self.options.rank_rtol,
            scale=self.scale,
            degeneracy_threshold=self.options.degeneracy_threshold,
        )
        self.report.gram = self.gram.as_dict()
        if self.gram.degenerate:
            self.report.checks['riemannian_proportionality'] = riemannian_proportionality(
                self.metric, self.point, self.frame, self.rule
            )

    def _build_torsion_map(self) -> None:
        self.Ts = torsion_map_basis(self.gram.matrix)
        self.b = h_inner(self.f_vals, self.hstar, self.rule)

    def _select_subsystem(self) -> None:
        if self.gram.degenerate:
            self.subsystem = []
            return
        self.subsystem = select_subsystem(
            self.Ts, self.options.rank_rtol, expected_rank=self.gram.big_system_rank
        )
        self.report.checks['rank_identity'] = len(self.subsystem) == self.gram.big_system_rank

    def _solve(self) -> None:
        other_path = SOLVE_GRAM if self.options.solve_path == SOLVE_ORTHOGONALIZED else SOLVE_ORTHOGONALIZED
        self.outcome = self._solve_path(self.options.solve_path)

        if self.options.cross_check and self.subsystem:
            other = self._solve_path(other_path)
            difference = float(np.abs(other.torsion.components - self.outcome.torsion.components).max())
            self.report.checks['path_difference'] = difference
            self.report.checks['paths_agree'] = difference < PATH_AGREEMENT_TOLERANCE
            if difference >= PATH_AGREEMENT_TOLERANCE:
                logger.warning(f"Gram and orthogonalized solves differ by {difference:.3e}")

        stationarity = self.Ts @ self.outcome.torsion.components + self.b
        self.report.checks['stationarity'] = float(np.abs(stationarity).max()) if stationarity.size else 0.0
        self.report.checks['support_value'] = support_value(self.subsystem, self.Ts, self.b)

    def _solve_path(self, path: str):
        if path == SOLVE_ORTHOGONALIZED:
            return solve_orthogonalized(self.subsystem, self.Ts, self.b)
        return solve_extremal(self.subsystem, self.Ts, self.b, self.options.condition_limit)

    def _check_residual(self) -> None:
        threshold = self.options.threshold_for(self.metric)
        floor = 1e-12 * math.sqrt(max(self.scale, 0.0))
        self.outcome.residual = constraint_residual(
            self.metric, self.point, self.frame, self.outcome.torsion, self.rule, threshold,
            hstar=self.hstar, f_vals=self.f_vals, floor=floor,
        )
        if self.gram.degenerate:
            self.outcome.verdict = RIEMANNIAN_DEGENERATE
        elif self.outcome.residual.solvable:
            self.outcome.verdict = SOLVABLE
        elif self._residual_uncertain(threshold):
            logger.warning(
                f"Residual ratio {self.outcome.residual.ratio:.3e} at x={self.report.point} is near the "
                f"threshold {threshold:g} and the gamma differences are unstable; verdict is inconclusive"
            )
            self.outcome.verdict = INCONCLUSIVE
        else:
            self.outcome.verdict = NOT_SOLVABLE
        self.outcome.torsion_original = transform_torsion(self.outcome.torsion, self.frame.A, FRAME_ORIGINAL)

        if self.metric.dimension == 2 and self.options.cross_check:
            closed_form = solve_2d(
                self.metric, self.point, self.frame, self.rule, threshold,
                degeneracy_threshold=self.options.degeneracy_threshold, scale=self.scale,
            )
            difference = float(np.abs(closed_form.torsion.components - self.outcome.torsion.components).max())
            self.report.checks['closed_form_2d_difference'] = difference
            self.report.checks['closed_form_2d_verdict'] = closed_form.verdict

        outcome = self.outcome.as_dict()
        self.report.verdict = self.outcome.verdict
        self.report.torsion = outcome.pop('torsion')
        self.report.torsion_original = outcome.pop('torsion_original')
        self.report.torsion_norm = outcome.pop('torsion_norm')
        self.report.residual = outcome.pop('residual')
        outcome.pop('verdict')
        self.report.solve = outcome
        logger.debug(f"Residual ratio {self.outcome.residual.ratio:.3e} against threshold {threshold:g}")

    def _residual_uncertain(self, threshold: float) -> bool:
        unstable = self.frame.cancellation > self.options.cancellation_tolerance
        return unstable and self.outcome.residual.ratio < INCONCLUSIVE_FACTOR * threshold

    def _isometry_directions(self) -> None:
        rank = 0 if self.gram.degenerate else self.gram.rank
        directions = isometry_directions(self.gram.matrix, self.options.rank_rtol, rank=rank)

        # F~(exp(tK) u) against F~(u) over the rule nodes, frame coordinates
        A = self.frame.A
        base = evaluate_F(self.metric, self.point, A @ self.rule.nodes)
        scale = np.maximum(np.abs(base), np.finfo(float).tiny)
        defect = 0.0
        for K in directions:
            for t in ISOMETRY_TIMES:
                moved = evaluate_F(self.metric, self.point, A @ linalg.expm(t * K) @ self.rule.nodes)
                defect = max(defect, float(np.max(np.abs(moved - base) / scale)))

        self.report.isometry = {
            'd': len(directions),
            'generators': [K.tolist() for K in directions],
            'max_defect': defect,
            'constraint_null_count': self.metric.dimension * len(directions),
        }

    def _oracle_comparison(self) -> None:
        m, x = self.metric, self.point
        n = m.dimension
        block = {'comparable': m.environment_mode == EXPLICIT_RANDERS_ALPHA}
        beta_norm = randers_beta_norm(m, x)
        block['beta_norm'] = beta_norm

        if beta_norm == 0.0:
            block['riemannian'] = True
            block['predicted_verdict'] = RIEMANNIAN_DEGENERATE
            self.report.oracle = block
            return

        block['riemannian'] = False
        adapted = adapt(m.alpha_at(x), m.beta_at(x))
        C = solvability_C(m, x)
        solvable = is_solvable(m, x)
        block['C'] = C.tolist()
        block['norm_gradient'] = norm_gradient(m, x).tolist()
        block['predicted_verdict'] = SOLVABLE if solvable else NOT_SOLVABLE
        block.update(predicted_rank(n))

        predicted = np.sort(np.diag(predicted_gram_f(adapted.beta_n, n)))[::-1]
        block['predicted_singular_values'] = predicted.tolist()
        if block['comparable']:
            numeric = np.asarray(self.report.gram['singular_values'])
            block['gram_spectrum_difference'] = float(np.abs(numeric - predicted).max())

        if n == 3:
            block['basis_gram_prediction'] = np.diag(gram_prediction(adapted.beta_n)).tolist()
            if solvable and block['comparable']:
                expected = torsion_3d(m, x)
                numeric = to_adapted(self.outcome.torsion, self.frame.A, adapted)
                difference = float(np.abs(expected.components - numeric.components).max())
                block['torsion_adapted'] = expected.as_dict()
                block['torsion_original'] = adapted_to_original(expected, adapted).as_dict()
                block['numeric_torsion_adapted'] = numeric.as_dict()
                block['torsion_difference'] = difference
                block['torsion_agrees'] = difference < ORACLE_AGREEMENT_TOLERANCE

        if block['comparable'] and self.report.verdict in (SOLVABLE, NOT_SOLVABLE):
            block['verdict_agrees'] = block['predicted_verdict'] == self.report.verdict
        self.report.oracle = block


def analyze_point(m: FinslerMetricSpec, x, options: Optional[AnalysisOptions] = None) -> PointReport:
    """Full pointwise report; stage failures are carried in report.error"""
    return ExtremalTorsionEngine(m, x, options).run()
