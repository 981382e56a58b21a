import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from django.conf import settings
from jsonschema import Draft7Validator

from metrics.functions.exceptions import BerwaldError
from metrics.functions.expressions import parse_expr
from metrics.functions.metric import (
    AVERAGED, ENVIRONMENT_MODES, EXPLICIT_RANDERS_ALPHA, GENERIC, RANDERS, FinslerMetricSpec
)
from torsion.functions.extremal_engine import SOLVE_GRAM, SOLVE_PATHS, AnalysisOptions

logger = logging.getLogger(__name__)

EUCLIDEAN = 'euclidean'
DEFAULT_DIMENSION = 3
DEFAULT_CONVERGENCE_LEVELS = [10, 20, 40]

OUTPUT_FORMATS = ['json', 'csv', 'both']

_expression = {'type': ['string', 'number']}
_positive = {'type': 'number', 'exclusiveMinimum': 0}


def berwald_settings() -> dict:
    return getattr(settings, 'BERWALD_SETTINGS', {})


def config_schema(max_dimension: int) -> dict:
    """JSON schema of a run configuration file"""
    coordinates = {'type': 'array', 'items': {'type': 'number'}, 'minItems': 2, 'maxItems': max_dimension}
    return {
        'type': 'object',
        'required': ['metric'],
        'additionalProperties': False,
        'properties': {
            'metric': {
                'type': 'object',
                'required': ['variant'],
                'additionalProperties': False,
                'properties': {
                    'variant': {'enum': [RANDERS, GENERIC, EUCLIDEAN]},
                    'dimension': {'type': 'integer', 'minimum': 2, 'maximum': max_dimension},
                    'alpha': {
                        'type': 'array',
                        'maxItems': max_dimension,
                        'items': {'type': 'array', 'items': _expression, 'maxItems': max_dimension},
                    },
                    'beta': {
                        'oneOf': [
                            {'type': 'array', 'items': _expression, 'maxItems': max_dimension},
                            {
                                'type': 'object',
                                'propertyNames': {'pattern': '^beta[1-9][0-9]*$'},
                                'additionalProperties': _expression,
                            },
                        ],
                    },
                    'F': {'type': 'string', 'minLength': 1},
                },
            },
            'environment': {
                'type': 'object',
                'additionalProperties': False,
                'properties': {
                    'mode': {'enum': [mode for mode, _ in ENVIRONMENT_MODES]},
                    'normalized': {'type': 'boolean'},
                },
            },
            'quadrature': {
                'type': 'object',
                'additionalProperties': False,
                'properties': {
                    'level': {'type': 'integer', 'minimum': 1},
                    'convergence_levels': {
                        'type': 'array', 'items': {'type': 'integer', 'minimum': 1}, 'minItems': 2,
                    },
                },
            },
            'finite_differences': {
                'type': 'object',
                'additionalProperties': False,
                'properties': {
                    'step': {'oneOf': [_positive, {'type': 'null'}]},
                    'step_factor': _positive,
                    'cancellation_tolerance': _positive,
                },
            },
            'tolerances': {
                'type': 'object',
                'additionalProperties': False,
                'properties': {
                    'rank_rtol': _positive,
                    'residual_threshold': {'oneOf': [_positive, {'type': 'null'}]},
                    'degeneracy_threshold': _positive,
                    'condition_limit': _positive,
                },
            },
            'solver': {
                'type': 'object',
                'additionalProperties': False,
                'properties': {
                    'path': {'enum': [path for path, _ in SOLVE_PATHS]},
                    'cross_check': {'type': 'boolean'},
                    'oracle': {'type': 'boolean'},
                    'validation_samples': {'type': 'integer', 'minimum': 1},
                },
            },
            'points': {'type': 'array', 'items': coordinates, 'minItems': 1},
            'grid': {
                'type': 'object',
                'required': ['min', 'max', 'count'],
                'additionalProperties': False,
                'properties': {
                    'min': coordinates,
                    'max': coordinates,
                    'count': {
                        'type': 'array', 'items': {'type': 'integer', 'minimum': 1},
                        'minItems': 2, 'maxItems': max_dimension,
                    },
                },
            },
            'output': {
                'type': 'object',
                'additionalProperties': False,
                'properties': {
                    'path': {'type': ['string', 'null']},
                    'csv_path': {'type': ['string', 'null']},
                    'format': {'enum': OUTPUT_FORMATS},
                },
            },
        },
    }


class ConfigValidationError(BerwaldError):
    """Every problem found in a run configuration, each prefixed with its field path"""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__('; '.join(self.errors))


def field_path(parts) -> str:
    path = ''
    for part in parts:
        if isinstance(part, int):
            path += f'[{part}]'
        else:
            path += f'.{part}' if path else str(part)
    return path or '<root>'


@dataclass
class GridSpec:
    minimum: List[float]
    maximum: List[float]
    count: List[int]

    def points(self) -> List[List[float]]:
        """Axis-aligned grid, first axis slowest"""
        axes = [np.linspace(lo, hi, c) for lo, hi, c in zip(self.minimum, self.maximum, self.count)]
        return [[float(v) for v in point] for point in itertools.product(*axes)]

    def as_dict(self) -> dict:
        return {'min': list(self.minimum), 'max': list(self.maximum), 'count': list(self.count)}


@dataclass
class RunConfig:
    metric: FinslerMetricSpec
    options: AnalysisOptions
    points: List[List[float]]
    grid: Optional[GridSpec] = None
    convergence_levels: List[int] = field(default_factory=lambda: list(DEFAULT_CONVERGENCE_LEVELS))
    output: dict = field(default_factory=dict)
    source: Optional[str] = None

    @property
    def dimension(self) -> int:
        return self.metric.dimension

    def echo(self) -> dict:
        """The configuration with every default filled in"""
        n = self.dimension
        options = self.options
        return {
            'metric': self.metric.describe(),
            'environment': {'mode': self.metric.environment_mode, 'normalized': options.normalized},
            'quadrature': {'level': options.level_for(n), 'convergence_levels': list(self.convergence_levels)},
            'finite_differences': {
                'step': options.fd_step,
                'step_factor': options.fd_step_factor,
                'cancellation_tolerance': options.cancellation_tolerance,
            },
            'tolerances': {
                'rank_rtol': options.rank_rtol,
                'residual_threshold': options.threshold_for(self.metric),
                'degeneracy_threshold': options.degeneracy_threshold,
                'condition_limit': options.condition_limit,
            },
            'solver': {
                'path': options.solve_path,
                'cross_check': options.cross_check,
                'oracle': options.oracle,
                'validation_samples': options.validation_samples,
            },
            'points': [list(p) for p in self.points],
            'grid': self.grid.as_dict() if self.grid else None,
            'output': dict(self.output),
        }


def _expression_text(value) -> str:
    return repr(float(value)) if isinstance(value, (int, float)) else str(value)


def _build_metric(block: dict, mode: str, errors: List[str],
                  max_dimension: int) -> Optional[FinslerMetricSpec]:
    variant = block['variant']
    n = block.get('dimension')

    if variant == GENERIC:
        if 'F' not in block:
            errors.append("metric.F: required for a generic metric")
            return None
        try:
            return FinslerMetricSpec.generic(block['F'], n or DEFAULT_DIMENSION, mode)
        except BerwaldError as e:
            errors.append(f"metric.F: {str(e)}")
            return None

    beta = block.get('beta')
    if n is None:
        if isinstance(beta, list):
            n, source = len(beta), 'metric.beta'
        elif 'alpha' in block:
            n, source = len(block['alpha']), 'metric.alpha'
        else:
            n, source = DEFAULT_DIMENSION, 'metric.dimension'
        if n > max_dimension:
            errors.append(f"{source}: dimension {n} exceeds the maximum of {max_dimension}")
            return None

    if variant == EUCLIDEAN:
        return FinslerMetricSpec.euclidean(n, mode)

    if isinstance(beta, dict):
        components = ['0'] * n
        for name, value in sorted(beta.items()):
            index = int(name[len('beta'):])
            if index > n:
                errors.append(f"metric.beta.{name}: component beyond dimension {n}")
                continue
            components[index - 1] = _expression_text(value)
        beta = components
    elif beta is None:
        beta = ['0'] * n
    else:
        beta = [_expression_text(v) for v in beta]
    if len(beta) != n:
        errors.append(f"metric.beta: expected {n} components, got {len(beta)}")

    alpha = block.get('alpha')
    if alpha is None:
        alpha = [['1' if i == j else '0' for j in range(n)] for i in range(n)]
    else:
        alpha = [[_expression_text(v) for v in row] for row in alpha]
        if len(alpha) != n or any(len(row) != n for row in alpha):
            errors.append(f"metric.alpha: expected a {n}x{n} matrix")

    if errors:
        return None

    # Parse each entry on its own so the error names the failing component
    parsed_ok = True
    for j, text in enumerate(beta):
        try:
            parse_expr(text)
        except BerwaldError as e:
            errors.append(f"metric.beta[{j}]: {str(e)}")
            parsed_ok = False
    for a, row in enumerate(alpha):
        for b, text in enumerate(row):
            try:
                parse_expr(text)
            except BerwaldError as e:
                errors.append(f"metric.alpha[{a}][{b}]: {str(e)}")
                parsed_ok = False
    if not parsed_ok:
        return None

    try:
        return FinslerMetricSpec.randers(alpha, beta, mode)
    except BerwaldError as e:
        errors.append(f"metric: {str(e)}")
        return None


def _build_options(data: dict) -> AnalysisOptions:
    defaults = berwald_settings()
    quadrature = data.get('quadrature', {})
    differences = data.get('finite_differences', {})
    tolerances = data.get('tolerances', {})
    solver = data.get('solver', {})
    environment = data.get('environment', {})

    return AnalysisOptions(
        level=quadrature.get('level'),
        levels=dict(defaults.get('DEFAULT_LEVELS', {})),
        fd_step=differences.get('step'),
        fd_step_factor=differences.get('step_factor', defaults.get('CHRISTOFFEL_STEP_FACTOR', 1e-5)),
        cancellation_tolerance=differences.get(
            'cancellation_tolerance', defaults.get('CANCELLATION_TOLERANCE', 1e-4)
        ),
        normalized=environment.get('normalized', False),
        rank_rtol=tolerances.get('rank_rtol', defaults.get('RANK_RTOL', 1e-8)),
        residual_threshold=tolerances.get('residual_threshold'),
        residual_threshold_analytic=defaults.get('RESIDUAL_THRESHOLD_ANALYTIC', 1e-6),
        residual_threshold_numeric=defaults.get('RESIDUAL_THRESHOLD_NUMERIC', 1e-4),
        degeneracy_threshold=tolerances.get('degeneracy_threshold', defaults.get('DEGENERACY_THRESHOLD', 1e-10)),
        condition_limit=tolerances.get('condition_limit', defaults.get('CONDITION_LIMIT', 1e12)),
        validation_samples=solver.get('validation_samples', defaults.get('VALIDATION_SAMPLES', 64)),
        solve_path=solver.get('path', SOLVE_GRAM),
        cross_check=solver.get('cross_check', True),
        oracle=solver.get('oracle', True),
        max_dimension=defaults.get('MAX_DIMENSION', 6),
    )


def parse_config(data, source: Optional[str] = None) -> RunConfig:
    """Validate a decoded configuration document and fill its defaults"""
    max_dimension = berwald_settings().get('MAX_DIMENSION', 6)
    validator = Draft7Validator(config_schema(max_dimension))
    errors = [
        f"{field_path(error.absolute_path)}: {error.message}"
        for error in sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    ]
    if errors:
        raise ConfigValidationError(errors)

    mode = data.get('environment', {}).get('mode', AVERAGED)
    if mode == EXPLICIT_RANDERS_ALPHA and data['metric']['variant'] == GENERIC:
        errors.append("environment.mode: explicit_alpha needs a Randers or Euclidean metric")

    metric = _build_metric(data['metric'], mode, errors, max_dimension)
    if metric is None:
        raise ConfigValidationError(errors)
    n = metric.dimension

    grid = None
    if 'grid' in data:
        block = data['grid']
        for key in ('min', 'max', 'count'):
            if len(block[key]) != n:
                errors.append(f"grid.{key}: expected {n} entries, got {len(block[key])}")
        for axis, (lo, hi) in enumerate(zip(block['min'], block['max'])):
            if lo > hi:
                errors.append(f"grid.min[{axis}]: {lo} exceeds grid.max[{axis}] = {hi}")
        grid = GridSpec(minimum=[float(v) for v in block['min']],
                        maximum=[float(v) for v in block['max']],
                        count=list(block['count']))

    points = [[float(v) for v in p] for p in data.get('points', [])]
    for i, p in enumerate(points):
        if len(p) != n:
            errors.append(f"points[{i}]: expected {n} coordinates, got {len(p)}")

    if errors:
        raise ConfigValidationError(errors)

    if grid is not None:
        points = points + grid.points()
    if not points:
        points = [[0.0] * n]

    output = {'path': None, 'csv_path': None, 'format': 'json'}
    output.update(data.get('output', {}))

    cfg = RunConfig(
        metric=metric,
        options=_build_options(data),
        points=points,
        grid=grid,
        convergence_levels=list(data.get('quadrature', {}).get('convergence_levels', DEFAULT_CONVERGENCE_LEVELS)),
        output=output,
        source=source,
    )
    logger.info(f"Loaded {metric.variant} config (n={n}, {len(points)} points) from {source or 'memory'}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigValidationError([f"<root>: config file {path} does not exist"])
    except json.JSONDecodeError as e:
        raise ConfigValidationError([f"<root>: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}"])
    return parse_config(data, source=str(path))
