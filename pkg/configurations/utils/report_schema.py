from typing import List

from jsonschema import Draft7Validator

from configurations.utils.run_config import ConfigValidationError, field_path
from torsion.functions.extremal_engine import STAGES
from torsion.functions.solver import VERDICTS

_number = {'type': ['number', 'string']}
_optional_number = {'type': ['number', 'string', 'null']}
_components = {'type': ['object', 'null'], 'additionalProperties': {'type': 'number'}}

POINT_REPORT_SCHEMA = {
    '$schema': 'http://json-schema.org/draft-07/schema#',
    'title': 'PointReport',
    'type': 'object',
    'required': ['point', 'metric', 'verdict', 'dimension', 'gram', 'rank', 'd', 'torsion',
                 'torsion_norm', 'residual', 'checks', 'oracle', 'error'],
    'additionalProperties': False,
    'properties': {
        'point': {'type': 'array', 'items': {'type': 'number'}, 'minItems': 2},
        'metric': {
            'type': 'object',
            'required': ['variant', 'dimension', 'environment_mode'],
        },
        'verdict': {'enum': [verdict for verdict, _ in VERDICTS] + [None]},
        'dimension': {'type': 'integer', 'minimum': 2},
        'level': {'type': ['integer', 'null']},
        'environment': {
            'type': ['object', 'null'],
            'required': ['mode', 'gamma', 'frame'],
            'properties': {
                'gamma': {'type': 'array', 'items': {'type': 'array', 'items': {'type': 'number'}}},
                'frame': {'type': 'array', 'items': {'type': 'array', 'items': {'type': 'number'}}},
                'fd_step': _optional_number,
                'cancellation': _number,
            },
        },
        'validation': {'type': ['object', 'null'], 'required': ['passed', 'failures']},
        'gram': {
            'type': ['object', 'null'],
            'required': ['matrix', 'singular_values', 'rank', 'd', 'big_system_rank',
                         'maximal_rank', 'zero_curvature', 'wang_bound_satisfied', 'degenerate'],
            'properties': {
                'singular_values': {'type': 'array', 'items': {'type': 'number', 'minimum': 0}},
                'rank': {'type': 'integer', 'minimum': 0},
                'd': {'type': 'integer', 'minimum': 0},
                'maximal_rank': {'type': 'boolean'},
                'zero_curvature': {'type': 'boolean'},
                'wang_bound_satisfied': {'type': 'boolean'},
                'degenerate': {'type': 'boolean'},
            },
        },
        'rank': {'type': ['integer', 'null']},
        'd': {'type': ['integer', 'null']},
        'solve': {
            'type': ['object', 'null'],
            'required': ['path', 'coefficients', 'subsystem', 'unique_connection'],
            'properties': {
                'coefficients': _components,
                'subsystem': {'type': 'array', 'items': {'type': 'string', 'pattern': '^mu_[0-9]+\\^[0-9]+$'}},
                'unique_connection': {'type': 'boolean'},
            },
        },
        'torsion': {
            'type': 'object',
            'required': ['frame', 'original'],
            'properties': {'frame': _components, 'original': _components},
        },
        'torsion_norm': {'type': ['number', 'null'], 'minimum': 0},
        'residual': {
            'type': ['object', 'null'],
            'required': ['rms', 'max', 'ratio', 'threshold', 'solvable'],
            'properties': {'ratio': _number, 'solvable': {'type': 'boolean'}},
        },
        'isometry': {
            'type': ['object', 'null'],
            'required': ['d', 'generators', 'max_defect'],
        },
        'checks': {'type': 'object'},
        'oracle': {'type': ['object', 'null']},
        'error': {
            'type': ['object', 'null'],
            'required': ['stage', 'message'],
            'properties': {
                'stage': {'enum': list(STAGES)},
                'message': {'type': 'string'},
            },
        },
        'timings': {'type': 'object', 'additionalProperties': {'type': 'number', 'minimum': 0}},
    },
}

RUN_REPORT_SCHEMA = {
    '$schema': 'http://json-schema.org/draft-07/schema#',
    'title': 'RunReport',
    'type': 'object',
    'required': ['command', 'config', 'reports', 'summary'],
    'properties': {
        'command': {'type': 'string'},
        'config': {'type': 'object'},
        'reports': {'type': 'array', 'items': POINT_REPORT_SCHEMA},
        'summary': {
            'type': 'object',
            'required': ['total', 'solvable', 'not_solvable', 'riemannian_degenerate', 'inconclusive', 'failed', 'exit_code'],
        },
    },
}


def schema_errors(document, schema=RUN_REPORT_SCHEMA) -> List[str]:
    validator = Draft7Validator(schema)
    return [
        f"{field_path(error.absolute_path)}: {error.message}"
        for error in sorted(validator.iter_errors(document), key=lambda e: list(map(str, e.absolute_path)))
    ]


def validate_report(document, schema=RUN_REPORT_SCHEMA) -> None:
    """Raise ConfigValidationError listing every schema violation of an emitted report"""
    errors = schema_errors(document, schema)
    if errors:
        raise ConfigValidationError(errors)
