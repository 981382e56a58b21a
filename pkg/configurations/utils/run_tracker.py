import math

from django.utils import timezone

from configurations.models import AnalysisRun, PointResult
from configurations.utils.export_helpers import jsonable
from torsion.functions.solver import INCONCLUSIVE, NOT_SOLVABLE, RIEMANNIAN_DEGENERATE, SOLVABLE


def _finite_or_none(value):
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class AnalysisRunTracker:
    """Utility class to record analysis runs and their per-point results"""

    def __init__(self, command, run_config, config_path=''):
        self.command = command
        self.run_config = run_config
        self.config_path = str(config_path or '')
        self.analysis_run = None

    def start_run(self):
        """Initialize the run record"""
        metric = self.run_config.metric
        self.analysis_run = AnalysisRun.objects.create(
            command=self.command,
            status='processing',
            config_path=self.config_path,
            config=jsonable(self.run_config.echo()),
            metric_variant=metric.variant,
            dimension=metric.dimension,
            environment_mode=metric.environment_mode,
            total_points=len(self.run_config.points),
            started_at=timezone.now(),
        )
        return self.analysis_run

    def add_point(self, sequence, report):
        """Store one point report and bump the verdict counters"""
        if not self.analysis_run:
            return None

        error = report.error or {}
        result = PointResult.objects.create(
            run=self.analysis_run,
            sequence=sequence,
            point=list(report.point),
            verdict=report.verdict or '',
            rank=report.rank,
            d=report.d,
            torsion_norm=_finite_or_none(report.torsion_norm),
            residual_ratio=_finite_or_none(report.residual_ratio),
            report=jsonable(report.to_dict()),
            error_stage=error.get('stage', ''),
            error_message=error.get('message', ''),
        )

        if report.failed:
            self.analysis_run.failed_points += 1
        elif report.verdict == SOLVABLE:
            self.analysis_run.solvable_points += 1
        elif report.verdict == NOT_SOLVABLE:
            self.analysis_run.not_solvable_points += 1
        elif report.verdict == RIEMANNIAN_DEGENERATE:
            self.analysis_run.degenerate_points += 1
        elif report.verdict == INCONCLUSIVE:
            self.analysis_run.inconclusive_points += 1

        for stage, seconds in report.timings.items():
            self.analysis_run.timings[stage] = self.analysis_run.timings.get(stage, 0.0) + seconds
        self.analysis_run.save()
        return result

    def complete_run(self, exit_code, summary='', notes=''):
        """Mark the run as completed; partial when some points failed"""
        if self.analysis_run:
            run = self.analysis_run
            if run.failed_points == 0:
                run.status = 'completed'
            elif run.failed_points == run.total_points:
                run.status = 'failed'
            else:
                run.status = 'partial'
            run.exit_code = exit_code
            run.completed_at = timezone.now()
            run.summary = summary
            run.notes = notes
            run.save()
        return self.analysis_run

    def fail_run(self, error_message):
        """Mark the run as failed"""
        if self.analysis_run:
            self.analysis_run.status = 'failed'
            self.analysis_run.exit_code = 1
            self.analysis_run.completed_at = timezone.now()
            self.analysis_run.summary = f"Run failed: {error_message}"
            self.analysis_run.save()
        return self.analysis_run
