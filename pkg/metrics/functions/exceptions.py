class BerwaldError(Exception):
    """Base class for every analysis error raised by the hub"""


class ExprError(BerwaldError):
    pass


class ExprSyntaxError(ExprError):
    """Malformed expression text; offset is a byte offset into the UTF-8 input"""

    def __init__(self, message, offset):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name, offset):
        super().__init__(f"Unknown identifier '{name}'", offset)
        self.name = name


class ArityError(ExprSyntaxError):
    def __init__(self, function, count, offset):
        super().__init__(f"Function '{function}' takes exactly 1 argument, got {count}", offset)
        self.function = function


class ExprDomainError(ExprError):
    pass


class MetricError(BerwaldError):
    pass


class ZeroDirectionError(MetricError):
    pass


class InvalidMetricError(MetricError):
    pass


class QuadratureError(BerwaldError):
    pass


class FrameError(BerwaldError):
    pass
