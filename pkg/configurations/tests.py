import json
import math
import os
import shutil
import tempfile
from io import StringIO

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from configurations.functions import (
    EXIT_NOT_SOLVABLE, EXIT_OK, EXIT_OPERATIONAL_ERROR, analysis_document, exit_code_for, relative_delta,
    run_analyze, run_convergence, run_randers_check, summarize
)
from configurations.models import AnalysisRun, PointResult
from configurations.tasks import analyze_run_task
from configurations.utils.export_helpers import SUMMARY_COLUMNS, ReportExporter, jsonable
from configurations.utils.report_schema import schema_errors, validate_report
from configurations.utils.run_config import ConfigValidationError, load_config, parse_config
from configurations.utils.run_tracker import AnalysisRunTracker
from metrics.functions.exceptions import BerwaldError

EUCLIDEAN_CONFIG = {'metric': {'variant': 'euclidean'}}

CONSTANT_BETA_CONFIG = {
    'metric': {'variant': 'randers', 'beta': {'beta3': 0.3}},
    'environment': {'mode': 'explicit_alpha'},
}

GROWING_BETA_CONFIG = {
    'metric': {'variant': 'randers', 'beta': ['0', '0', '1 + x1']},
    'environment': {'mode': 'explicit_alpha'},
}

# |beta| = 1.5 breaks the averaged environment at the frame stage
BROKEN_CONFIG = {
    'metric': {'variant': 'randers', 'beta': ['0', '0', '1.5']},
    'environment': {'mode': 'averaged'},
    'quadrature': {'level': 6},
}

GENERIC_CONFIG = {
    'metric': {'variant': 'generic', 'dimension': 3, 'F': 'sqrt(y1^2 + y2^2 + y3^2)'},
}


class ConfigFileMixin:
    """Temporary directory holding config files written by the tests"""

    def make_workdir(self):
        self.workdir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.workdir, True)

    def write_config(self, data, name='run.json'):
        path = os.path.join(self.workdir, name)
        with open(path, 'w', encoding='utf-8') as f:
            if isinstance(data, str):
                f.write(data)
            else:
                json.dump(data, f)
        return path


class RunConfigTest(ConfigFileMixin, SimpleTestCase):
    def setUp(self):
        """Set up a scratch directory for config files"""
        self.make_workdir()

    def test_minimal_euclidean_config(self):
        """Test that a bare Euclidean config gets the default dimension, level and origin"""
        cfg = load_config(self.write_config(EUCLIDEAN_CONFIG))
        self.assertEqual(cfg.dimension, 3)
        self.assertEqual(cfg.points, [[0.0, 0.0, 0.0]])
        echo = cfg.echo()
        self.assertEqual(echo['quadrature']['level'], 30)
        self.assertEqual(echo['output'], {'path': None, 'csv_path': None, 'format': 'json'})
        self.assertEqual(echo['solver']['path'], 'gram')
        self.assertIsNone(echo['grid'])

    def test_beta_components_by_name(self):
        """Test that a beta object fills the unnamed components with zero"""
        cfg = parse_config(CONSTANT_BETA_CONFIG)
        self.assertEqual(cfg.dimension, 3)
        self.assertTrue(cfg.metric.is_randers)
        self.assertEqual(cfg.metric.describe()['environment_mode'], 'explicit_alpha')

    def test_schema_errors_name_the_field(self):
        """Test that schema violations are reported with their field path"""
        data = dict(EUCLIDEAN_CONFIG, quadrature={'level': -1})
        with self.assertRaises(ConfigValidationError) as context:
            parse_config(data)
        self.assertIn('quadrature.level: -1 is less than the minimum of 1', context.exception.errors)

        with self.assertRaises(ConfigValidationError) as context:
            parse_config({'metric': {'variant': 'randers'}, 'colour': 'blue'})
        self.assertTrue(any(message.startswith('<root>:') for message in context.exception.errors))

    def test_missing_file_and_bad_json(self):
        """Test that unreadable config files become validation errors"""
        with self.assertRaises(ConfigValidationError) as context:
            load_config(os.path.join(self.workdir, 'absent.json'))
        self.assertTrue(context.exception.errors[0].startswith('<root>: config file'))

        with self.assertRaises(ConfigValidationError) as context:
            load_config(self.write_config('{"metric": ', 'broken.json'))
        self.assertTrue(context.exception.errors[0].startswith('<root>: invalid JSON at line 1'))

    def test_semantic_errors(self):
        """Test the cross-field checks made after schema validation"""
        with self.assertRaises(ConfigValidationError) as context:
            parse_config(dict(GENERIC_CONFIG, environment={'mode': 'explicit_alpha'}))
        self.assertTrue(context.exception.errors[0].startswith('environment.mode:'))

        with self.assertRaises(ConfigValidationError) as context:
            parse_config(dict(EUCLIDEAN_CONFIG, points=[[0.0, 0.0]]))
        self.assertIn('points[0]: expected 3 coordinates, got 2', context.exception.errors)

        with self.assertRaises(ConfigValidationError) as context:
            parse_config(dict(EUCLIDEAN_CONFIG, grid={'min': [1, 0, 0], 'max': [0, 0, 0], 'count': [2, 1, 1]}))
        self.assertIn('grid.min[0]: 1 exceeds grid.max[0] = 0', context.exception.errors)

        with self.assertRaises(ConfigValidationError) as context:
            parse_config({'metric': {'variant': 'randers', 'beta': ['0', 'tan(x1)', '0']}})
        self.assertTrue(context.exception.errors[0].startswith('metric.beta[1]:'))

    def test_dimension_limit(self):
        """Test that beta or alpha beyond the maximum dimension is rejected on its own field"""
        with self.assertRaises(ConfigValidationError) as context:
            parse_config({'metric': {'variant': 'randers', 'beta': ['0.1'] * 7}})
        self.assertTrue(context.exception.errors)
        self.assertTrue(all(message.startswith('metric.beta:') for message in context.exception.errors))

        alpha = [['1' if i == j else '0' for j in range(7)] for i in range(7)]
        with self.assertRaises(ConfigValidationError) as context:
            parse_config({'metric': {'variant': 'randers', 'alpha': alpha}})
        self.assertTrue(all(message.startswith('metric.alpha') for message in context.exception.errors))

        with self.settings(BERWALD_SETTINGS={'MAX_DIMENSION': 2}):
            with self.assertRaises(ConfigValidationError) as context:
                parse_config(EUCLIDEAN_CONFIG)
        self.assertIn('metric.dimension: dimension 3 exceeds the maximum of 2', context.exception.errors)

    def test_grid_points_follow_explicit_points(self):
        """Test that grid points come after explicit points with the first axis slowest"""
        data = dict(EUCLIDEAN_CONFIG, points=[[9.0, 9.0, 9.0]],
                    grid={'min': [0, 0, 0], 'max': [1, 1, 0], 'count': [2, 2, 1]})
        cfg = parse_config(data)
        self.assertEqual(cfg.points, [
            [9.0, 9.0, 9.0],
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
        ])


class AnalysisFunctionsTest(SimpleTestCase):
    def test_exit_codes(self):
        """Test 0 for Riemannian points, 2 for not solvable or inconclusive points and 1 once any point fails"""
        summary = summarize(run_analyze(parse_config(EUCLIDEAN_CONFIG)))
        self.assertEqual(summary['riemannian_degenerate'], 1)
        self.assertEqual(summary['exit_code'], EXIT_OK)

        summary = summarize(run_analyze(parse_config(GROWING_BETA_CONFIG)))
        self.assertEqual(summary['not_solvable'], 1)
        self.assertEqual(summary['exit_code'], EXIT_NOT_SOLVABLE)

        summary = summarize(run_analyze(parse_config(BROKEN_CONFIG)))
        self.assertEqual(summary['failed'], 1)
        self.assertEqual(summary['exit_code'], EXIT_OPERATIONAL_ERROR)

        inconclusive = {'total': 1, 'solvable': 0, 'not_solvable': 0, 'riemannian_degenerate': 0,
                        'inconclusive': 1, 'failed': 0}
        self.assertEqual(exit_code_for(inconclusive), EXIT_NOT_SOLVABLE)

    def test_mixed_grid_runs_every_point(self):
        """Test that a failing point does not stop the rest of the grid"""
        data = dict(BROKEN_CONFIG, metric={'variant': 'randers', 'beta': ['0', '0', '1.4 * x1']},
                    grid={'min': [0, 0, 0], 'max': [1, 0, 0], 'count': [2, 1, 1]})
        reports = run_analyze(parse_config(data), threads=2)
        self.assertEqual([r.point for r in reports], [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        self.assertIsNone(reports[0].error)
        self.assertEqual(reports[0].verdict, 'riemannian_degenerate')
        self.assertEqual(reports[1].error['stage'], 'frame')
        self.assertEqual(summarize(reports)['exit_code'], EXIT_OPERATIONAL_ERROR)

    def test_rotating_beta_grid_matches_oracle(self):
        """Test that every point along the rotation axis is solvable and agrees with the closed form"""
        data = {
            'metric': {'variant': 'randers', 'beta': ['0.5*cos(x3)', '0.5*sin(x3)', '0']},
            'environment': {'mode': 'explicit_alpha'},
            'grid': {'min': [0, 0, 0], 'max': [0, 0, 1], 'count': [1, 1, 3]},
        }
        reports = run_analyze(parse_config(data))
        self.assertEqual([r.point[2] for r in reports], [0.0, 0.5, 1.0])
        for report in reports:
            self.assertEqual(report.verdict, 'solvable')
            self.assertTrue(report.oracle['torsion_agrees'])
            self.assertTrue(report.oracle['verdict_agrees'])

    def test_document_matches_schema(self):
        """Test that emitted documents validate against the report schema"""
        cfg = parse_config(CONSTANT_BETA_CONFIG)
        document = analysis_document('analyze', cfg, run_analyze(cfg), include_timings=True)
        validate_report(jsonable(document))

        failed = parse_config(BROKEN_CONFIG)
        validate_report(jsonable(analysis_document('analyze', failed, run_analyze(failed))))

        document['reports'][0]['verdict'] = 'maybe'
        self.assertTrue(schema_errors(jsonable(document)))

    def test_threads_keep_input_order(self):
        """Test that threaded runs report points in input order with identical output"""
        data = dict(CONSTANT_BETA_CONFIG, quadrature={'level': 8},
                    points=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        cfg = parse_config(data)
        serial = ReportExporter.dumps(analysis_document('analyze', cfg, run_analyze(cfg, threads=1)))
        threaded = ReportExporter.dumps(analysis_document('analyze', cfg, run_analyze(cfg, threads=3)))
        self.assertEqual(serial, threaded)

    def test_convergence_deltas(self):
        """Test that the convergence rows settle for Euclidean and constant beta metrics"""
        rows = run_convergence(parse_config(dict(EUCLIDEAN_CONFIG, quadrature={'convergence_levels': [4, 8]})))
        self.assertEqual([row['level'] for row in rows], [4, 8])
        self.assertIsNone(rows[0]['gamma_delta'])
        for key in ('gamma_delta', 'spectrum_delta', 'torsion_delta'):
            self.assertLess(rows[1][key], 1e-12)

        rows = run_convergence(parse_config(dict(CONSTANT_BETA_CONFIG, quadrature={'convergence_levels': [20, 40]})))
        self.assertEqual(rows[-1]['verdict'], 'solvable')
        self.assertGreater(rows[-1]['nodes'], rows[0]['nodes'])
        self.assertLess(rows[-1]['spectrum_delta'], 1e-8)
        self.assertLess(rows[-1]['torsion_delta'], 1e-8)

        self.assertEqual(relative_delta([2.0], [0.5]), 1.5)
        self.assertEqual(relative_delta([4.0], [2.0]), 1.0)

    def test_randers_check(self):
        """Test C at the origin for growing beta and the refusal of generic metrics"""
        document = run_randers_check(parse_config(GROWING_BETA_CONFIG))
        row = document['points'][0]
        self.assertEqual(row['C'], [1.0, 0.0, 0.0])
        self.assertFalse(row['solvable'])
        self.assertEqual(row['beta_norm'], 1.0)
        self.assertEqual(document['summary']['exit_code'], EXIT_NOT_SOLVABLE)

        document = run_randers_check(parse_config(EUCLIDEAN_CONFIG))
        self.assertTrue(document['points'][0]['riemannian'])
        self.assertEqual(document['summary']['exit_code'], EXIT_OK)

        with self.assertRaises(BerwaldError):
            run_randers_check(parse_config(GENERIC_CONFIG))


class ReportExporterTest(SimpleTestCase):
    def test_non_finite_floats_are_spelled(self):
        """Test that inf and nan become strings and numpy values unwrap"""
        import numpy as np

        self.assertEqual(jsonable({'a': math.inf, 'b': -math.inf, 'c': math.nan}),
                         {'a': 'inf', 'b': '-inf', 'c': 'nan'})
        self.assertEqual(jsonable({1: np.float64(0.5), 'v': np.arange(2), 'ok': np.bool_(True)}),
                         {'1': 0.5, 'v': [0, 1], 'ok': True})
        self.assertIn('"ratio": "inf"', ReportExporter.dumps({'ratio': math.inf}))

    def test_csv_summary_columns(self):
        """Test the fixed CSV column order of the point summary"""
        cfg = parse_config(CONSTANT_BETA_CONFIG)
        frame = ReportExporter.summary_frame(run_analyze(cfg))
        self.assertEqual(list(frame.columns), SUMMARY_COLUMNS)
        text = ReportExporter.to_csv(frame)
        self.assertEqual(text.splitlines()[0], ','.join(SUMMARY_COLUMNS))
        self.assertEqual(pd.read_csv(StringIO(text))['verdict'].tolist(), ['solvable'])

    def test_dumps_is_deterministic(self):
        """Test that two runs of the same config dump byte-identical JSON"""
        cfg = parse_config(CONSTANT_BETA_CONFIG)
        first = ReportExporter.dumps(analysis_document('analyze', cfg, run_analyze(cfg)))
        second = ReportExporter.dumps(analysis_document('analyze', cfg, run_analyze(cfg)))
        self.assertEqual(first, second)
        self.assertTrue(first.endswith('}\n'))


class AnalysisRunTrackerTest(TestCase):
    def setUp(self):
        """Set up a two point run with one failing point"""
        data = dict(BROKEN_CONFIG, metric={'variant': 'randers', 'beta': ['0', '0', '1.4 * x1']},
                    points=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        self.cfg = parse_config(data)

    def test_run_is_recorded(self):
        """Test that the tracker stores every point and ends the run as partial"""
        tracker = AnalysisRunTracker('analyze', self.cfg, 'inline.json')
        run = tracker.start_run()
        self.assertEqual(run.status, 'processing')
        self.assertEqual(run.total_points, 2)

        summary = summarize(run_analyze(self.cfg, tracker=tracker))
        tracker.complete_run(exit_code=summary['exit_code'])

        run.refresh_from_db()
        self.assertEqual(run.status, 'partial')
        self.assertEqual(run.exit_code, EXIT_OPERATIONAL_ERROR)
        self.assertEqual((run.degenerate_points, run.failed_points), (1, 1))
        self.assertEqual(run.metric_variant, 'randers')
        self.assertIn('frame', run.timings)
        self.assertEqual(run.solvable_rate, 100.0)

        results = list(PointResult.objects.filter(run=run))
        self.assertEqual([r.sequence for r in results], [0, 1])
        self.assertEqual(results[0].verdict, 'riemannian_degenerate')
        self.assertEqual(results[0].rank, 0)
        self.assertEqual(results[1].error_stage, 'frame')
        self.assertEqual(results[1].verdict, '')

    def test_fail_run(self):
        """Test that a failed run keeps its message and exit code"""
        tracker = AnalysisRunTracker('grid', self.cfg)
        tracker.start_run()
        run = tracker.fail_run('worker lost')
        self.assertEqual(run.status, 'failed')
        self.assertEqual(run.exit_code, 1)
        self.assertIn('worker lost', run.summary)
        self.assertFalse(run.has_failures)

    def test_task_records_run(self):
        """Test that the celery task analyses and records a run"""
        result = analyze_run_task(GROWING_BETA_CONFIG, 'analyze', 'queued.json')
        self.assertEqual(result['exit_code'], EXIT_NOT_SOLVABLE)
        run = AnalysisRun.objects.get(id=result['run_id'])
        self.assertEqual(run.status, 'completed')
        self.assertEqual(run.not_solvable_points, 1)
        self.assertEqual(run.point_results.count(), 1)


class AnalysisCommandTest(ConfigFileMixin, TestCase):
    def setUp(self):
        """Set up a scratch directory and output buffers"""
        self.make_workdir()
        self.stdout = StringIO()
        self.stderr = StringIO()

    def call(self, name, data, **options):
        return call_command(name, config=self.write_config(data), stdout=self.stdout, stderr=self.stderr, **options)

    def test_analyze_writes_json(self):
        """Test that analyze prints a schema-valid report and exits cleanly"""
        self.call('analyze', EUCLIDEAN_CONFIG)
        document = json.loads(self.stdout.getvalue())
        self.assertEqual(document['command'], 'analyze')
        self.assertEqual(document['summary']['exit_code'], EXIT_OK)
        self.assertNotIn('timings', document['reports'][0])
        self.assertEqual(schema_errors(document), [])

    def test_analyze_files_and_record(self):
        """Test the --out, --format and --record options"""
        out = os.path.join(self.workdir, 'reports', 'run.json')
        self.call('analyze', CONSTANT_BETA_CONFIG, out=out, format='both', record=True, timings=True)

        with open(out, encoding='utf-8') as f:
            document = json.load(f)
        self.assertIn('timings', document['reports'][0])
        frame = pd.read_csv(os.path.join(self.workdir, 'reports', 'run.csv'))
        self.assertEqual(list(frame.columns), SUMMARY_COLUMNS)

        run = AnalysisRun.objects.get()
        self.assertEqual(run.status, 'completed')
        self.assertEqual(run.solvable_points, 1)
        self.assertIn(f"Recorded run {run.id}", self.stderr.getvalue())

    def test_not_solvable_exit_code(self):
        """Test that not solvable points exit with code 2"""
        with self.assertRaises(CommandError) as context:
            self.call('analyze', GROWING_BETA_CONFIG)
        self.assertEqual(context.exception.returncode, EXIT_NOT_SOLVABLE)

        with self.assertRaises(CommandError) as context:
            self.call('randers_check', GROWING_BETA_CONFIG)
        self.assertEqual(context.exception.returncode, EXIT_NOT_SOLVABLE)

    def test_invalid_config_exit_code(self):
        """Test that an invalid config prints its errors and exits with code 1"""
        with self.assertRaises(CommandError) as context:
            self.call('analyze', dict(EUCLIDEAN_CONFIG, quadrature={'level': -1}))
        self.assertEqual(context.exception.returncode, EXIT_OPERATIONAL_ERROR)
        self.assertIn('quadrature.level', self.stderr.getvalue())

    def test_grid_needs_grid_block(self):
        """Test that grid refuses configs without a grid"""
        with self.assertRaises(CommandError) as context:
            self.call('grid', EUCLIDEAN_CONFIG)
        self.assertEqual(context.exception.returncode, EXIT_OPERATIONAL_ERROR)

        self.call('grid', dict(EUCLIDEAN_CONFIG, grid={'min': [0, 0, 0], 'max': [1, 1, 1], 'count': [2, 1, 1]}),
                  format='csv')
        lines = self.stdout.getvalue().splitlines()
        self.assertEqual(lines[0], ','.join(SUMMARY_COLUMNS))
        self.assertEqual(len(lines), 3)

    def test_randers_check_generic_metric(self):
        """Test that randers_check turns a generic metric into an operational error"""
        with self.assertRaises(CommandError) as context:
            self.call('randers_check', GENERIC_CONFIG)
        self.assertEqual(context.exception.returncode, EXIT_OPERATIONAL_ERROR)

    def test_convergence_command(self):
        """Test the convergence command CSV output"""
        self.call('convergence', dict(EUCLIDEAN_CONFIG, quadrature={'convergence_levels': [4, 8]}), format='csv')
        frame = pd.read_csv(StringIO(self.stdout.getvalue()))
        self.assertEqual(frame['level'].tolist(), [4, 8])
        self.assertEqual(frame['verdict'].tolist(), ['riemannian_degenerate'] * 2)
