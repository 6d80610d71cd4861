"""Decide the symmetry-algebra dimension and emit the second generator.

Time translation is always a symmetry of the autonomous equation.  A
second point symmetry exists iff the structure machinery produces an
offset and constant a for which the determining system below vanishes on
the working interval (g, g', g'' built from F as in `structure`):

    k=0:        -a^2 g + f_0' g + a f_1 g - f_0 g' + 2 f_0
    k=1:        a (1 - 2 g') + f_1' g + 2 a f_2 g + f_1
    k=2:        -g'' + f_2' g + 3 a f_3 g + f_2 g'
    3<=k<=n-1:  f_k' g + (k+1) a f_{k+1} g + (k-1) f_k g' + (2-k) f_k

The k=n row is satisfied identically by the construction of F and is
re-checked as a guard against sign bookkeeping mistakes.  When the system
passes, the second generator is t*d/dt + g(u)*d/du for a = 0 and
exp(a t)*d/dt + a exp(a t) g(u)*d/du otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import ClassifyConfig, DEFAULT_CONFIG
from .errors import AmbiguousOffset, NMustBeAtLeast4, NoConstantA
from .exprs import Expr, differentiate, eval_grid
from .structure import (
    GridFn,
    Interval,
    SignPair,
    StructureFunctions,
    a_of_u,
    determining_residuals,
    g_arrays,
    merge_offsets,
    prepare_structure,
    solve_offset,
)

log = logging.getLogger(__name__)

__all__ = ["ProblemSpec", "GeneratorInfo", "SymmetryReport",
           "residuals_system", "classify", "uniqueness_probe"]


@dataclass(frozen=True)
class ProblemSpec:
    """One equation u'' = sum_{k=0}^{n} f_k(u) u'^k on an interval."""

    n: int
    interval: Interval
    f: Tuple[Expr, ...]

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if len(self.f) != self.n + 1:
            raise ValueError(
                f"need exactly n+1 = {self.n + 1} coefficients, "
                f"got {len(self.f)}")


@dataclass(frozen=True)
class GeneratorInfo:
    kind: str  # "scaling" (a = 0) or "exponential" (a != 0)
    a: float
    xi_text: str
    eta_text: str


@dataclass
class SymmetryReport:
    dimension: int
    n: int
    a: Optional[float] = None
    a_spread: Optional[float] = None
    offset_c: Optional[float] = None
    generator1: str = "d/dt"
    generator2: Optional[GeneratorInfo] = None
    residuals: Optional[Dict[int, float]] = None
    threshold: Optional[float] = None
    U: Optional[Interval] = None
    signs: Optional[SignPair] = None
    failure: Optional[str] = None
    # runtime handle for verification; never serialized
    structure: Optional[StructureFunctions] = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        gen2 = None
        if self.generator2 is not None:
            gen2 = {"kind": self.generator2.kind, "a": self.generator2.a,
                    "xi": self.generator2.xi_text,
                    "eta": self.generator2.eta_text}
        return {
            "dimension": self.dimension,
            "n": self.n,
            "a": self.a,
            "a_spread": self.a_spread,
            "offset_c": self.offset_c,
            "generator1": self.generator1,
            "generator2": gen2,
            "residuals": {str(k): v for k, v in (self.residuals or {}).items()},
            "threshold": self.threshold,
            "interval_used": None if self.U is None else [self.U.lo, self.U.hi],
            "signs": None if self.signs is None else
                     {"epsilon": self.signs.epsilon, "nu": self.signs.nu},
            "failure": self.failure,
        }


def residuals_system(problem: ProblemSpec, sf: StructureFunctions, a: float,
                     grid: Optional[np.ndarray] = None) -> List[GridFn]:
    """The n genuine determining residuals (k = 0..n-1) as grid functions."""
    us = sf.grid_u if grid is None else np.asarray(grid, dtype=float)
    if grid is None:
        F = sf.F_nodes()
        Fp, Fpp, Fppp = sf.Fp_g, sf.Fpp_g, sf.Fppp_g
    else:
        F = sf.offset_c + sf.table.raw(us)
        Fp = eval_grid(sf.Fprime, us)
        Fpp = eval_grid(sf.Fsecond, us)
        Fppp = eval_grid(sf.Fthird, us)
    fk = [eval_grid(f, us) for f in problem.f]
    fkp = [eval_grid(differentiate(f), us) for f in problem.f]
    rows = determining_residuals(problem.n, fk, fkp, F, Fp, Fpp, Fppp, a)
    return [GridFn(us, rows[k]) for k in range(problem.n)]


def top_equation_residual(problem: ProblemSpec, sf: StructureFunctions,
                          ) -> GridFn:
    """The k=n row, zero by construction of F; kept as a redundant check."""
    us = sf.grid_u
    fn = eval_grid(problem.f[problem.n], us)
    fnp = eval_grid(differentiate(problem.f[problem.n]), us)
    F = sf.F_nodes()
    g, g1, _ = g_arrays(problem.n, F, sf.Fp_g, sf.Fpp_g, sf.Fppp_g)
    vals = fnp * g + (problem.n - 1) * fn * g1 + (2 - problem.n) * fn
    return GridFn(us, vals)


def uniqueness_probe(passing_offsets, span: float,
                     merge_tol: float = 1e-6) -> float:
    """Merge near-identical offsets; exactly one must remain.

    Returns the single offset, or raises AmbiguousOffset listing all of
    them -- several genuinely distinct passing offsets are never resolved
    silently.
    """
    merged = merge_offsets(list(passing_offsets), span, merge_tol)
    if not merged:
        raise ValueError("uniqueness probe needs at least one offset")
    if len(merged) > 1:
        raise AmbiguousOffset(merged)
    return merged[0]


def _generator_info(a: float, matched_tol: float = 1e-9) -> GeneratorInfo:
    if abs(a) <= matched_tol:
        return GeneratorInfo(kind="scaling", a=0.0, xi_text="t",
                             eta_text="g(u)")
    return GeneratorInfo(kind="exponential", a=a,
                         xi_text=f"exp({a!r}*t)",
                         eta_text=f"{a!r}*exp({a!r}*t)*g(u)")


def classify(problem: ProblemSpec,
             config: ClassifyConfig = DEFAULT_CONFIG) -> SymmetryReport:
    """Dimension of the point-symmetry algebra, with the second generator.

    Returns a dimension-2 report (offset, constant a, generator, residuals)
    when the determining system passes at the solved offset, otherwise a
    dimension-1 report carrying the residual diagnostics.  Raises
    NMustBeAtLeast4 for n <= 3 and forwards NoIntervalError when f_n has
    no usable subinterval.
    """
    if problem.n <= 3:
        raise NMustBeAtLeast4(
            f"classification needs n >= 4, got n={problem.n}; the n=3 case "
            "is an open problem with no known complete classification")

    sf0 = prepare_structure(problem, config)
    us = sf0.grid_u
    fk_vals = [eval_grid(f, us) for f in problem.f]
    fkp_vals = [eval_grid(differentiate(f), us) for f in problem.f]
    maxfk = max(float(np.max(np.abs(v))) for v in fk_vals)
    threshold = config.residual_tol * (1.0 + maxfk)

    try:
        c = solve_offset(problem, sf0, search=config.offset_range,
                         tol_const=config.tol_const, config=config,
                         _arrays=(fk_vals, fkp_vals))
        no_constant = None
    except NoConstantA as err:
        c = getattr(err, "best_offset", None)
        no_constant = str(err)
        if c is None:
            return SymmetryReport(dimension=1, n=problem.n,
                                  U=sf0.U, failure=no_constant)

    F = c + sf0.table.cum
    nu = 1 if float(F[0]) > 0.0 else -1
    sf = replace(sf0, offset_c=float(c),
                 signs=SignPair(sf0.signs.epsilon, nu))

    a_grid = a_of_u(problem.f[problem.n], problem.f[problem.n - 1], sf)
    a = a_grid.mean()
    a_spread = a_grid.spread()

    rows = determining_residuals(problem.n, fk_vals, fkp_vals, F,
                                 sf.Fp_g, sf.Fpp_g, sf.Fppp_g, a)
    residuals = {k: float(np.max(np.abs(rows[k])))
                 for k in range(problem.n + 1)}

    ok = (no_constant is None
          and all(v <= threshold for v in residuals.values())
          and a_spread <= config.tol_const * (1.0 + abs(a)))
    if ok:
        log.info("dimension 2: a=%.12g, c=%.12g, worst residual %.3g",
                 a, sf.offset_c, max(residuals.values()))
        return SymmetryReport(
            dimension=2, n=problem.n, a=a, a_spread=a_spread,
            offset_c=sf.offset_c, generator2=_generator_info(a),
            residuals=residuals, threshold=threshold, U=sf.U,
            signs=sf.signs, structure=sf)

    failure = no_constant or (
        "determining residuals exceed the pass threshold "
        f"{threshold:.3g} (worst {max(residuals.values()):.3g})")
    return SymmetryReport(
        dimension=1, n=problem.n, a=a, a_spread=a_spread,
        offset_c=sf.offset_c, residuals=residuals, threshold=threshold,
        U=sf.U, signs=sf.signs, failure=failure, structure=sf)
