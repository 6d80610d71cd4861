"""Lie point symmetry toolkit for generalized Lienard equations.

Decides whether an equation u'' = sum_k f_k(u) * u'^k (leading power
n >= 4) admits a second point symmetry besides time translation, emits
the second generator when it does, constructively synthesizes all such
integrable families, and verifies claimed generators against both the
full prolongation condition and numerically integrated solutions.
"""

from .errors import (
    AmbiguousOffset,
    BlowUp,
    DomainError,
    LienardSymError,
    NMustBeAtLeast4,
    NoConstantA,
    NoIntervalError,
    NonMonotoneImage,
    ParseError,
    QuadratureError,
    SpecError,
)
from .exprs import (
    Expr,
    const_value,
    differentiate,
    eval_grid,
    evaluate,
    parse,
    simplify,
    to_text,
)

__version__ = "0.1.0"

from .config import ClassifyConfig, JetBox  # noqa: E402
from .structure import (  # noqa: E402
    GridFn,
    Interval,
    SignPair,
    StructureFunctions,
    a_of_u,
    build_Fprime,
    cumulative_F,
    find_working_interval,
    g_and_derivatives,
    solve_offset,
)
from .classify import (  # noqa: E402
    GeneratorInfo,
    ProblemSpec,
    SymmetryReport,
    classify,
    residuals_system,
    uniqueness_probe,
)
from .synthesis import (  # noqa: E402
    SynthesisSpec,
    build_A,
    build_B,
    build_f,
    check_A_recursion,
    synthesize,
)
from .verify import (  # noqa: E402
    Generator,
    JetPoint,
    Trajectory,
    coefficient_residuals,
    flow_transform,
    integrate,
    jet_points,
    ode_residual,
    prolongation_residual,
)
