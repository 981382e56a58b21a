# Generated by Django 5.2.4 on 2026-10-17 10:41

from django.db import migrations, models


class Migration(migrations.Migration):

    dependencies = [
        ('configurations', '0001_initial'),
    ]

    operations = [
        migrations.AddField(
            model_name='analysisrun',
            name='inconclusive_points',
            field=models.PositiveIntegerField(default=0, verbose_name='Inconclusive Points'),
        ),
        migrations.AlterField(
            model_name='pointresult',
            name='verdict',
            field=models.CharField(blank=True, choices=[('solvable', 'Solvable'), ('not_solvable', 'Not Solvable'), ('riemannian_degenerate', 'Riemannian Degenerate'), ('inconclusive', 'Inconclusive')], max_length=30, verbose_name='Verdict'),
        ),
    ]
