"""Exception hierarchy shared by every charpic module."""


class CharpicError(Exception):
    """Base class for all library errors."""


class ConfigError(CharpicError):
    pass


class GeometryError(CharpicError):
    pass


class DegenerateConfiguration(GeometryError):
    pass


class NotAffine(GeometryError):
    pass


class NotCaseI(GeometryError):
    pass


class NotCaseII(GeometryError):
    pass


class PointOutsideRegion(GeometryError):
    def __init__(self, point, message="point lies outside the region"):
        super().__init__(f"{message}: {tuple(float(c) for c in point)}")
        self.point = point


class ExprError(CharpicError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, position, message):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownVariable(ExprError):
    def __init__(self, name, position=None):
        where = "" if position is None else f" at position {position}"
        super().__init__(f"unknown variable {name!r}{where}")
        self.name = name
        self.position = position


class UnknownFunction(ExprError):
    def __init__(self, name, position=None):
        where = "" if position is None else f" at position {position}"
        super().__init__(f"unknown function {name!r}{where}")
        self.name = name
        self.position = position


class EvalDomainError(ExprError, ArithmeticError):
    pass


class NotDifferentiable(ExprError):
    pass


class GridMismatch(CharpicError):
    pass


class SingularConstraint(CharpicError):
    pass


class PositivityUnachievable(CharpicError):
    pass


class ThetaIncompatible(CharpicError):
    pass


class ContractionUnachievable(CharpicError):
    pass


class MaxIterationsExceeded(CharpicError):
    """Raised only by callers that demand convergence; solvers flag instead."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
