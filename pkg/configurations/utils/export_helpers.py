import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

SUMMARY_COLUMNS = ['point', 'verdict', 'd', 'rank', 'torsion_norm', 'residual_ratio']
CONVERGENCE_COLUMNS = [
    'point', 'level', 'nodes', 'verdict', 'torsion_norm', 'gamma_delta', 'spectrum_delta', 'torsion_delta',
]


def jsonable(value):
    """Plain JSON types; numpy scalars unwrapped, non-finite floats spelled as strings"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


class ReportExporter:
    """Helper class for deterministic report exports"""

    @staticmethod
    def dumps(document) -> str:
        return json.dumps(jsonable(document), sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + '\n'

    @staticmethod
    def write_json(path, document) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(ReportExporter.dumps(document), encoding='utf-8')
        return path

    @staticmethod
    def summary_frame(reports) -> pd.DataFrame:
        """One row per point report, fixed column order"""
        return pd.DataFrame([report.summary_row() for report in reports], columns=SUMMARY_COLUMNS)

    @staticmethod
    def convergence_frame(rows) -> pd.DataFrame:
        return pd.DataFrame(list(rows), columns=CONVERGENCE_COLUMNS)

    @staticmethod
    def to_csv(frame: pd.DataFrame) -> str:
        return frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')

    @staticmethod
    def write_csv(path, frame: pd.DataFrame) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(ReportExporter.to_csv(frame), encoding='utf-8')
        return path
