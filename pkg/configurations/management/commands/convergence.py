from configurations.functions import exit_code_for, run_convergence
from configurations.utils.command_helpers import AnalysisCommand
from configurations.utils.export_helpers import ReportExporter


class Command(AnalysisCommand):
    help = 'Re-run the configured points at increasing quadrature levels and report the changes'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--threads', type=int, help='Worker count (default BERWALD_THREADS)')

    def handle(self, *args, **options):
        cfg = self.load(options)
        rows = self.guarded(run_convergence, cfg, options['threads'])

        document = {'command': 'convergence', 'config': cfg.echo(), 'levels': rows}
        self.guarded(self.emit, cfg, options, document, ReportExporter.convergence_frame(rows))

        last_level = cfg.convergence_levels[-1]
        final = [row for row in rows if row['level'] == last_level]
        summary = {
            'total': len(final),
            'solvable': sum(1 for row in final if row['verdict'] == 'solvable'),
            'not_solvable': sum(1 for row in final if row['verdict'] == 'not_solvable'),
            'riemannian_degenerate': sum(1 for row in final if row['verdict'] == 'riemannian_degenerate'),
            'inconclusive': sum(1 for row in final if row['verdict'] == 'inconclusive'),
            'failed': sum(1 for row in final if row['verdict'] == 'error'),
        }
        summary['exit_code'] = exit_code_for(summary)
        self.finish(summary)
