"""Picard-iteration solvers for u_xy = f(x, y, u, u_x, u_y) with u given on one
curve and u_x on another."""

__version__ = "0.1.0"

from .boundary import (
    AffineTheta,
    BoundaryData,
    GeneralTheta,
    QuadraticTheta,
    build_theta_elementary,
    build_theta_linear,
    build_theta_positive_demo,
    check_theta_elementary,
    check_theta_linear,
)
from .errors import (
    CharpicError,
    ConfigError,
    GeometryError,
    DegenerateConfiguration,
    NotAffine,
    NotCaseI,
    NotCaseII,
    PointOutsideRegion,
    ExprError,
    ExprSyntaxError,
    UnknownVariable,
    UnknownFunction,
    EvalDomainError,
    NotDifferentiable,
    GridMismatch,
    SingularConstraint,
    PositivityUnachievable,
    ThetaIncompatible,
    ContractionUnachievable,
    MaxIterationsExceeded,
)
from .expr import (
    Expr,
    estimate_lipschitz,
    evaluate,
    parse,
)
from .fields import (
    FieldTriple,
    GridField,
    GridSpec,
    read_field_csv,
    write_field_csv,
)
from .geometry import (
    Case,
    CurvePair,
    Region,
    StableRegion,
    build_ladder,
    classify_configuration,
    membership,
    trapezoid_T,
    trapezoid_tau,
)
from .linear import (
    demo_nonuniqueness,
    picard_linear,
    solve_elementary,
)
from .nonlinear import (
    solve_nonlinear,
    verify_fixed_point,
)
from .quadrature import (
    QuadratureRule,
    integrate_1d,
    integrate_strip,
)
from .verification import (
    bessel_series,
    grid_convergence,
    residual_mixed_derivative,
    solve_stable_case_I,
)

__all__ = [
    "AffineTheta",
    "BoundaryData",
    "Case",
    "CharpicError",
    "ConfigError",
    "ContractionUnachievable",
    "CurvePair",
    "DegenerateConfiguration",
    "EvalDomainError",
    "Expr",
    "ExprError",
    "ExprSyntaxError",
    "FieldTriple",
    "GeneralTheta",
    "GeometryError",
    "GridField",
    "GridMismatch",
    "GridSpec",
    "MaxIterationsExceeded",
    "NotAffine",
    "NotCaseI",
    "NotCaseII",
    "NotDifferentiable",
    "PointOutsideRegion",
    "PositivityUnachievable",
    "QuadraticTheta",
    "QuadratureRule",
    "Region",
    "SingularConstraint",
    "StableRegion",
    "ThetaIncompatible",
    "UnknownFunction",
    "UnknownVariable",
    "bessel_series",
    "build_ladder",
    "build_theta_elementary",
    "build_theta_linear",
    "build_theta_positive_demo",
    "check_theta_elementary",
    "check_theta_linear",
    "classify_configuration",
    "demo_nonuniqueness",
    "estimate_lipschitz",
    "evaluate",
    "grid_convergence",
    "integrate_1d",
    "integrate_strip",
    "membership",
    "parse",
    "picard_linear",
    "read_field_csv",
    "residual_mixed_derivative",
    "solve_elementary",
    "solve_nonlinear",
    "solve_stable_case_I",
    "trapezoid_T",
    "trapezoid_tau",
    "verify_fixed_point",
    "write_field_csv",
]
