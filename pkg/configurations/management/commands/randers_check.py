import pandas as pd

from configurations.functions import run_randers_check
from configurations.utils.command_helpers import AnalysisCommand

CHECK_COLUMNS = ['point', 'beta_norm', 'riemannian', 'solvable', 'C', 'error']


class Command(AnalysisCommand):
    help = 'Test only the constant-length condition on beta (C = 0) at every configured point'

    def handle(self, *args, **options):
        cfg = self.load(options)
        document = self.guarded(run_randers_check, cfg)

        frame = pd.DataFrame([
            {
                'point': ' '.join(repr(v) for v in row['point']),
                'beta_norm': row.get('beta_norm'),
                'riemannian': row.get('riemannian'),
                'solvable': row.get('solvable'),
                'C': ' '.join(repr(float(c)) for c in row['C']) if row.get('C') else '',
                'error': row['error'] or '',
            }
            for row in document['points']
        ], columns=CHECK_COLUMNS)
        self.guarded(self.emit, cfg, options, document, frame)
        self.finish(document['summary'])
