# Generated by Django 5.2.4 on 2026-10-16 09:12

import django.db.models.deletion
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='AnalysisRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Created At')),
                ('updated_at', models.DateTimeField(auto_now=True, verbose_name='Updated At')),
                ('command', models.CharField(choices=[('analyze', 'Analyze'), ('grid', 'Grid'), ('convergence', 'Convergence'), ('randers_check', 'Randers Check')], max_length=20, verbose_name='Command')),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('processing', 'Processing'), ('completed', 'Completed'), ('failed', 'Failed'), ('partial', 'Partial Success')], default='pending', max_length=20, verbose_name='Status')),
                ('config_path', models.CharField(blank=True, max_length=500, verbose_name='Config Path')),
                ('config', models.JSONField(default=dict, verbose_name='Config (defaults filled)')),
                ('metric_variant', models.CharField(blank=True, max_length=20, verbose_name='Metric Variant')),
                ('dimension', models.PositiveSmallIntegerField(default=0, verbose_name='Dimension')),
                ('environment_mode', models.CharField(blank=True, max_length=20, verbose_name='Environment Mode')),
                ('total_points', models.PositiveIntegerField(default=0, verbose_name='Total Points')),
                ('solvable_points', models.PositiveIntegerField(default=0, verbose_name='Solvable Points')),
                ('not_solvable_points', models.PositiveIntegerField(default=0, verbose_name='Not Solvable Points')),
                ('degenerate_points', models.PositiveIntegerField(default=0, verbose_name='Riemannian Degenerate Points')),
                ('failed_points', models.PositiveIntegerField(default=0, verbose_name='Failed Points')),
                ('started_at', models.DateTimeField(blank=True, null=True, verbose_name='Started At')),
                ('completed_at', models.DateTimeField(blank=True, null=True, verbose_name='Completed At')),
                ('timings', models.JSONField(blank=True, default=dict, verbose_name='Stage Timings (s)')),
                ('exit_code', models.SmallIntegerField(blank=True, null=True, verbose_name='Exit Code')),
                ('summary', models.TextField(blank=True, verbose_name='Run Summary')),
                ('notes', models.TextField(blank=True, verbose_name='Additional Notes')),
            ],
            options={
                'verbose_name': 'Analysis Run',
                'verbose_name_plural': 'Analysis Runs',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='PointResult',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('sequence', models.PositiveIntegerField(verbose_name='Sequence')),
                ('point', models.JSONField(default=list, verbose_name='Base Point')),
                ('verdict', models.CharField(blank=True, choices=[('solvable', 'Solvable'), ('not_solvable', 'Not Solvable'), ('riemannian_degenerate', 'Riemannian Degenerate')], max_length=30, verbose_name='Verdict')),
                ('rank', models.PositiveSmallIntegerField(blank=True, null=True, verbose_name='rank G(f)')),
                ('d', models.PositiveSmallIntegerField(blank=True, null=True, verbose_name='Isometry Dimension')),
                ('torsion_norm', models.FloatField(blank=True, null=True, verbose_name='Torsion Norm')),
                ('residual_ratio', models.FloatField(blank=True, null=True, verbose_name='Residual Ratio')),
                ('report', models.JSONField(default=dict, verbose_name='Full Report')),
                ('error_stage', models.CharField(blank=True, max_length=20, verbose_name='Failed Stage')),
                ('error_message', models.TextField(blank=True, verbose_name='Error Message')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Created At')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='point_results', to='configurations.analysisrun')),
            ],
            options={
                'verbose_name': 'Point Result',
                'verbose_name_plural': 'Point Results',
                'ordering': ['sequence'],
                'constraints': [models.UniqueConstraint(fields=('run', 'sequence'), name='unique_point_per_run')],
            },
        ),
    ]
