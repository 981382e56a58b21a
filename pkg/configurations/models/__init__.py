from .analysis_run import AnalysisRun, PointResult

__all__ = [
    'AnalysisRun',
    'PointResult',
]
