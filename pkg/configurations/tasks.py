import logging

from celery import shared_task

logger = logging.getLogger(__name__)


@shared_task
def analyze_run_task(config_data, command='analyze', config_path='', threads=None):
    """Analyse every point of a run configuration in a worker and record the run"""
    from configurations.functions import run_analyze, summarize
    from configurations.utils.run_config import parse_config
    from configurations.utils.run_tracker import AnalysisRunTracker

    cfg = parse_config(config_data, source=config_path or None)
    tracker = AnalysisRunTracker(command, cfg, config_path)
    analysis_run = tracker.start_run()

    try:
        reports = run_analyze(cfg, threads=threads, tracker=tracker)
        summary = summarize(reports)
        tracker.complete_run(
            exit_code=summary['exit_code'],
            summary=(f"{summary['solvable']} solvable, {summary['not_solvable']} not solvable, "
                     f"{summary['inconclusive']} inconclusive, "
                     f"{summary['riemannian_degenerate']} Riemannian, {summary['failed']} failed "
                     f"out of {summary['total']} points"),
        )
        logger.info(f"Analysis run {analysis_run.id} finished with exit code {summary['exit_code']}")
        return {'run_id': str(analysis_run.id), 'exit_code': summary['exit_code']}

    except Exception as e:
        logger.error(f"Analysis run {analysis_run.id} failed: {str(e)}")
        tracker.fail_run(str(e))
        return {'run_id': str(analysis_run.id), 'exit_code': 1}
