import json

from django.core.management.base import CommandError

from configurations.functions import analysis_document, run_analyze, summarize
from configurations.tasks import analyze_run_task
from configurations.utils.command_helpers import AnalysisCommand
from configurations.utils.export_helpers import ReportExporter
from configurations.utils.run_tracker import AnalysisRunTracker


class Command(AnalysisCommand):
    help = 'Analyse the extremal compatible connection at every configured point'
    command_name = 'analyze'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--timings', action='store_true', help='Include per-stage timings in the report')
        parser.add_argument('--record', action='store_true', help='Record the run and its points in the database')
        parser.add_argument('--threads', type=int, help='Worker count (default BERWALD_THREADS)')
        parser.add_argument('--queue', action='store_true', help='Dispatch the run to a celery worker')

    def handle(self, *args, **options):
        cfg = self.load(options)
        self.check_config(cfg)

        if options['queue']:
            self.queue(cfg, options)
            return

        tracker = None
        if options['record']:
            tracker = AnalysisRunTracker(self.command_name, cfg, options['config'])
            tracker.start_run()

        try:
            reports = self.guarded(run_analyze, cfg, options['threads'], tracker)
        except CommandError as e:
            if tracker:
                tracker.fail_run(str(e))
            raise

        document = analysis_document(self.command_name, cfg, reports, include_timings=options['timings'])
        self.guarded(self.emit, cfg, options, document, ReportExporter.summary_frame(reports))

        summary = summarize(reports)
        if tracker:
            tracker.complete_run(exit_code=summary['exit_code'])
            self.stderr.write(self.style.SUCCESS(f"Recorded run {tracker.analysis_run.id}"))
        self.finish(summary)

    def check_config(self, cfg):
        pass

    def queue(self, cfg, options):
        with open(options['config'], 'r', encoding='utf-8') as f:
            config_data = json.load(f)
        result = analyze_run_task.delay(config_data, self.command_name, options['config'], options['threads'])
        self.stdout.write(self.style.SUCCESS(f"Queued analysis task {result.id}"))
