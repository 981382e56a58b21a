from metrics.functions.exceptions import BerwaldError


class SolverError(BerwaldError):
    pass


class AdaptedFrameError(BerwaldError):
    """beta vanishes at the point, so no adapted frame exists (the metric is Riemannian there)"""


class NotSolvableError(BerwaldError):
    def __init__(self, message, C=None):
        super().__init__(message)
        self.C = C


class AnalysisError(BerwaldError):
    """A pipeline stage failed; stage names where"""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
