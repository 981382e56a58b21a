import uuid

from django.db import models

from torsion.functions.solver import VERDICTS


class AnalysisRun(models.Model):
    """Model to track analysis runs over a RunConfig and their results"""

    COMMANDS = [
        ('analyze', 'Analyze'),
        ('grid', 'Grid'),
        ('convergence', 'Convergence'),
        ('randers_check', 'Randers Check'),
    ]

    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('processing', 'Processing'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
        ('partial', 'Partial Success'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    created_at = models.DateTimeField(auto_now_add=True, verbose_name='Created At')
    updated_at = models.DateTimeField(auto_now=True, verbose_name='Updated At')

    # Run metadata
    command = models.CharField(max_length=20, choices=COMMANDS, verbose_name='Command')
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending', verbose_name='Status')
    config_path = models.CharField(max_length=500, blank=True, verbose_name='Config Path')
    config = models.JSONField(default=dict, verbose_name='Config (defaults filled)')

    # Metric summary
    metric_variant = models.CharField(max_length=20, blank=True, verbose_name='Metric Variant')
    dimension = models.PositiveSmallIntegerField(default=0, verbose_name='Dimension')
    environment_mode = models.CharField(max_length=20, blank=True, verbose_name='Environment Mode')

    # Point statistics
    total_points = models.PositiveIntegerField(default=0, verbose_name='Total Points')
    solvable_points = models.PositiveIntegerField(default=0, verbose_name='Solvable Points')
    not_solvable_points = models.PositiveIntegerField(default=0, verbose_name='Not Solvable Points')
    degenerate_points = models.PositiveIntegerField(default=0, verbose_name='Riemannian Degenerate Points')
    inconclusive_points = models.PositiveIntegerField(default=0, verbose_name='Inconclusive Points')
    failed_points = models.PositiveIntegerField(default=0, verbose_name='Failed Points')

    # Processing times
    started_at = models.DateTimeField(null=True, blank=True, verbose_name='Started At')
    completed_at = models.DateTimeField(null=True, blank=True, verbose_name='Completed At')
    timings = models.JSONField(default=dict, blank=True, verbose_name='Stage Timings (s)')

    exit_code = models.SmallIntegerField(null=True, blank=True, verbose_name='Exit Code')
    summary = models.TextField(blank=True, verbose_name='Run Summary')
    notes = models.TextField(blank=True, verbose_name='Additional Notes')

    def __str__(self):
        return f"{self.get_command_display()} Run - {self.created_at.strftime('%Y-%m-%d %H:%M')}"

    @property
    def duration(self):
        if self.started_at and self.completed_at:
            return self.completed_at - self.started_at
        return None

    @property
    def has_failures(self):
        return self.failed_points > 0

    @property
    def solvable_rate(self):
        """Percentage of analysed points that admit a compatible connection"""
        analysed = self.total_points - self.failed_points
        if analysed == 0:
            return 0
        return round(((self.solvable_points + self.degenerate_points) / analysed) * 100, 2)

    class Meta:
        verbose_name = 'Analysis Run'
        verbose_name_plural = 'Analysis Runs'
        ordering = ['-created_at']


class PointResult(models.Model):
    """One analysed base point of a run"""

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    run = models.ForeignKey(AnalysisRun, on_delete=models.CASCADE, related_name='point_results')

    sequence = models.PositiveIntegerField(verbose_name='Sequence')
    point = models.JSONField(default=list, verbose_name='Base Point')
    verdict = models.CharField(max_length=30, choices=VERDICTS, blank=True, verbose_name='Verdict')

    rank = models.PositiveSmallIntegerField(null=True, blank=True, verbose_name='rank G(f)')
    d = models.PositiveSmallIntegerField(null=True, blank=True, verbose_name='Isometry Dimension')
    torsion_norm = models.FloatField(null=True, blank=True, verbose_name='Torsion Norm')
    residual_ratio = models.FloatField(null=True, blank=True, verbose_name='Residual Ratio')

    report = models.JSONField(default=dict, verbose_name='Full Report')
    error_stage = models.CharField(max_length=20, blank=True, verbose_name='Failed Stage')
    error_message = models.TextField(blank=True, verbose_name='Error Message')

    created_at = models.DateTimeField(auto_now_add=True, verbose_name='Created At')

    def __str__(self):
        return f"Point {self.sequence}: {self.get_verdict_display() or 'error'}"

    class Meta:
        verbose_name = 'Point Result'
        verbose_name_plural = 'Point Results'
        ordering = ['sequence']
        constraints = [
            models.UniqueConstraint(fields=['run', 'sequence'], name='unique_point_per_run'),
        ]
