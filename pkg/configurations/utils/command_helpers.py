import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from configurations.functions import EXIT_NOT_SOLVABLE, EXIT_OK, EXIT_OPERATIONAL_ERROR
from configurations.utils.export_helpers import ReportExporter
from configurations.utils.run_config import OUTPUT_FORMATS, ConfigValidationError, load_config
from metrics.functions.exceptions import BerwaldError

logger = logging.getLogger(__name__)


class AnalysisCommand(BaseCommand):
    """Shared options, output writing and exit codes of the analysis commands"""

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Path to the JSON run configuration')
        parser.add_argument('--out', help='Write the JSON report here instead of stdout')
        parser.add_argument('--csv', dest='csv_path', help='Write the CSV summary here')
        parser.add_argument('--format', choices=OUTPUT_FORMATS, help='Report format (default from config)')

    def load(self, options):
        try:
            return load_config(options['config'])
        except ConfigValidationError as e:
            for message in e.errors:
                self.stderr.write(self.style.ERROR(message))
            raise CommandError(f"Invalid config {options['config']}", returncode=EXIT_OPERATIONAL_ERROR)

    def output_targets(self, cfg, options):
        fmt = options.get('format') or cfg.output.get('format') or 'json'
        out = options.get('out') or cfg.output.get('path')
        csv_path = options.get('csv_path') or cfg.output.get('csv_path')
        if fmt in ('csv', 'both') and not csv_path and out:
            csv_path = str(Path(out).with_suffix('.csv'))
        return fmt, out, csv_path

    def emit(self, cfg, options, document, frame):
        fmt, out, csv_path = self.output_targets(cfg, options)
        if fmt in ('json', 'both'):
            if out:
                ReportExporter.write_json(out, document)
                self.stdout.write(self.style.SUCCESS(f"JSON report written to {out}"))
            else:
                self.stdout.write(ReportExporter.dumps(document), ending='')
        if fmt in ('csv', 'both'):
            if csv_path:
                ReportExporter.write_csv(csv_path, frame)
                self.stdout.write(self.style.SUCCESS(f"CSV summary written to {csv_path}"))
            else:
                self.stdout.write(ReportExporter.to_csv(frame), ending='')

    def finish(self, summary):
        code = summary['exit_code']
        message = (f"{summary['total']} points: {summary['solvable']} solvable, "
                   f"{summary['not_solvable']} not solvable, "
                   f"{summary.get('inconclusive', 0)} inconclusive, "
                   f"{summary['riemannian_degenerate']} Riemannian, {summary['failed']} failed")
        if code == EXIT_OK:
            self.stderr.write(self.style.SUCCESS(message))
            return
        if code == EXIT_NOT_SOLVABLE:
            raise CommandError(f"Solvability not established at some points. {message}", returncode=EXIT_NOT_SOLVABLE)
        raise CommandError(f"Analysis failed at some points. {message}", returncode=EXIT_OPERATIONAL_ERROR)

    def guarded(self, step, *args):
        try:
            return step(*args)
        except CommandError:
            raise
        except (BerwaldError, OSError) as e:
            logger.error(f"{self.__module__} failed: {str(e)}")
            raise CommandError(str(e), returncode=EXIT_OPERATIONAL_ERROR)
