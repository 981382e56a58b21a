import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Iterator, List, Optional

import numpy as np
from django.conf import settings

from configurations.utils.run_config import RunConfig
from metrics.functions.exceptions import BerwaldError
from metrics.functions.metric import randers_beta_norm
from metrics.functions.quadrature import sphere_rule
from torsion.functions.extremal_engine import PointReport, analyze_point
from torsion.functions.randers_oracle import adapt, is_solvable, norm_gradient, solvability_C
from torsion.functions.solver import INCONCLUSIVE, NOT_SOLVABLE, RIEMANNIAN_DEGENERATE, SOLVABLE

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OPERATIONAL_ERROR = 1
EXIT_NOT_SOLVABLE = 2


def worker_count(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = getattr(settings, 'BERWALD_SETTINGS', {}).get('THREADS', 1)
    return max(1, int(threads))


def iter_analyze(cfg: RunConfig, threads: Optional[int] = None) -> Iterator[PointReport]:
    """Point reports in input order; points are analysed concurrently when threads > 1"""
    workers = worker_count(threads)
    logger.info(f"Analysing {len(cfg.points)} points with {workers} worker(s)")

    if workers == 1:
        for point in cfg.points:
            yield analyze_point(cfg.metric, point, cfg.options)
        return

    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(lambda point: analyze_point(cfg.metric, point, cfg.options), cfg.points)


def run_analyze(cfg: RunConfig, threads: Optional[int] = None, tracker=None) -> List[PointReport]:
    reports = []
    for sequence, report in enumerate(iter_analyze(cfg, threads)):
        if tracker is not None:
            tracker.add_point(sequence, report)
        reports.append(report)
    return reports


def summarize(reports: List[PointReport]) -> dict:
    summary = {
        'total': len(reports),
        'solvable': sum(1 for r in reports if not r.failed and r.verdict == SOLVABLE),
        'not_solvable': sum(1 for r in reports if not r.failed and r.verdict == NOT_SOLVABLE),
        'riemannian_degenerate': sum(1 for r in reports if not r.failed and r.verdict == RIEMANNIAN_DEGENERATE),
        'inconclusive': sum(1 for r in reports if not r.failed and r.verdict == INCONCLUSIVE),
        'failed': sum(1 for r in reports if r.failed),
    }
    summary['exit_code'] = exit_code_for(summary)
    return summary


def exit_code_for(summary: dict) -> int:
    """1 when any point failed, else 2 when any point is not solvable or inconclusive, else 0"""
    if summary['failed']:
        return EXIT_OPERATIONAL_ERROR
    if summary['not_solvable'] or summary.get('inconclusive'):
        return EXIT_NOT_SOLVABLE
    return EXIT_OK


def analysis_document(command: str, cfg: RunConfig, reports: List[PointReport],
                      include_timings: bool = False) -> dict:
    return {
        'command': command,
        'config': cfg.echo(),
        'reports': [report.to_dict(include_timings) for report in reports],
        'summary': summarize(reports),
    }


def relative_delta(new, old) -> float:
    """max |new - old| relative to max(|old|, 1)"""
    new = np.asarray(new, dtype=float)
    old = np.asarray(old, dtype=float)
    return float(np.abs(new - old).max() / max(float(np.abs(old).max()), 1.0))


def run_convergence(cfg: RunConfig, threads: Optional[int] = None) -> List[dict]:
    """
    Re-run every point at each convergence level and report gamma, the G_f
    spectrum and the torsion norm together with their changes from the
    previous level.
    """
    rows = []
    for level in cfg.convergence_levels:
        level_cfg = replace(cfg, options=replace(cfg.options, level=level, oracle=False, cross_check=False))
        reports = run_analyze(level_cfg, threads)
        for index, report in enumerate(reports):
            row = {
                'point': ' '.join(repr(float(v)) for v in report.point),
                'level': level,
                'nodes': None,
                'verdict': report.verdict if not report.failed else 'error',
                'torsion_norm': report.torsion_norm,
                'gamma': report.environment['gamma'] if report.environment else None,
                'singular_values': report.gram['singular_values'] if report.gram else None,
                'error': report.error,
                'gamma_delta': None,
                'spectrum_delta': None,
                'torsion_delta': None,
            }
            if report.level is not None:
                row['nodes'] = sphere_rule(cfg.dimension, report.level, cfg.options.max_dimension).size
            rows.append((index, row))

    ordered = [row for _, row in sorted(rows, key=lambda item: item[0])]
    previous = {}
    for row in ordered:
        before = previous.get(row['point'])
        if before is not None and row['error'] is None and before['error'] is None:
            row['gamma_delta'] = relative_delta(row['gamma'], before['gamma'])
            row['spectrum_delta'] = relative_delta(row['singular_values'], before['singular_values'])
            row['torsion_delta'] = relative_delta(row['torsion_norm'], before['torsion_norm'])
        previous[row['point']] = row
    return ordered


def randers_check_point(cfg: RunConfig, point) -> dict:
    """C_(n;i), the norm gradient and the solvability verdict at one point, no quadrature"""
    m = cfg.metric
    x = np.asarray(point, dtype=float)
    row = {'point': [float(v) for v in x], 'error': None}
    try:
        beta_norm = randers_beta_norm(m, x)
        row['beta_norm'] = beta_norm
        if beta_norm == 0.0:
            row.update({'riemannian': True, 'solvable': True, 'C': None, 'norm_gradient': None})
            return row
        row['riemannian'] = False
        row['beta_n'] = adapt(m.alpha_at(x), m.beta_at(x)).beta_n
        row['C'] = solvability_C(m, x).tolist()
        row['norm_gradient'] = norm_gradient(m, x).tolist()
        row['solvable'] = is_solvable(m, x)
    except BerwaldError as e:
        logger.error(f"Randers check failed at x={row['point']}: {str(e)}")
        row['error'] = str(e)
    return row


def run_randers_check(cfg: RunConfig) -> dict:
    if not cfg.metric.is_randers:
        raise BerwaldError("randers-check needs a Randers (or Euclidean) metric")
    rows = [randers_check_point(cfg, point) for point in cfg.points]
    summary = {
        'total': len(rows),
        'solvable': sum(1 for r in rows if r['error'] is None and r['solvable'] and not r['riemannian']),
        'not_solvable': sum(1 for r in rows if r['error'] is None and not r['solvable']),
        'riemannian_degenerate': sum(1 for r in rows if r['error'] is None and r['riemannian']),
        'failed': sum(1 for r in rows if r['error'] is not None),
    }
    summary['exit_code'] = exit_code_for(summary)
    return {'command': 'randers_check', 'config': cfg.echo(), 'points': rows, 'summary': summary}
