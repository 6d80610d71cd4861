"""Structure functions behind the second symmetry.

Given the ODE coefficients f_0..f_n this module locates a working
subinterval on which the leading coefficient f_n keeps one sign, builds
the scale function F with

    F'(u) = |f_n(u)| ^ (1/(n-1))        (exact expression tree)
    F(u)  = c + integral of F' from the left end (quadrature table)

and the ratio g = (n-2) F / ((n-1) F').  The free integration offset c is
the one unknown: it is pinned by requiring the coefficient ratio

    a(u) = -(f_{n-1}' g + (n-2) f_{n-1} g' + (3-n) f_{n-1}) / (n f_n g)

to be constant in u, falling back to direct residual minimization when
f_{n-1} vanishes identically (then a = 0 and the ratio carries no
information).
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .config import ClassifyConfig, DEFAULT_CONFIG
from .errors import (
    AmbiguousOffset,
    DomainError,
    NoConstantA,
    NoIntervalError,
    QuadratureError,
)
from .exprs import Expr, Pow, Constant, Mul, differentiate, eval_grid, evaluate

log = logging.getLogger(__name__)

__all__ = [
    "Interval", "SignPair", "GridFn", "CumulativeTable", "StructureFunctions",
    "find_working_interval", "build_Fprime", "cumulative_F",
    "g_and_derivatives", "a_of_u", "solve_offset", "prepare_structure",
    "determining_residuals", "g_arrays",
]


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, u: float) -> bool:
        return self.lo < u < self.hi

    def inner(self, margin_frac: float) -> "Interval":
        m = margin_frac * self.width
        return Interval(self.lo + m, self.hi - m)


@dataclass(frozen=True)
class SignPair:
    epsilon: int  # sign of f_n on the working interval
    nu: int       # sign of F on the working interval

    def __post_init__(self):
        if self.epsilon not in (-1, 1) or self.nu not in (-1, 1):
            raise ValueError("signs must be +1 or -1")


@dataclass
class GridFn:
    """Sampled function: strictly increasing points and values."""

    u: np.ndarray
    values: np.ndarray

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def spread(self) -> float:
        return float(np.max(self.values) - np.min(self.values))

    def mean(self) -> float:
        return float(np.mean(self.values))


class CumulativeTable:
    """Cumulative integral of a positive integrand over fixed nodes.

    Node values come from per-panel adaptive Simpson quadrature; between
    nodes the table is cubic-Hermite interpolated using the exact
    integrand as slope, so off-node lookups stay at quadrature accuracy.
    """

    def __init__(self, nodes: np.ndarray, cum: np.ndarray, deriv: np.ndarray,
                 integrand: Expr):
        self.nodes = nodes
        self.cum = cum
        self.deriv = deriv
        self.integrand = integrand
        # plain-float copies keep scalar lookups off the numpy slow path
        self._nodes_l = nodes.tolist()
        self._cum_l = cum.tolist()
        self._deriv_l = deriv.tolist()

    @property
    def span(self) -> float:
        return float(self.cum[-1] - self.cum[0])

    def raw(self, u) -> np.ndarray:
        """Table value(s) at u; 0 at the first node."""
        if np.ndim(u) == 0:
            return self._raw_scalar(float(u))
        us = np.asarray(u, dtype=float)
        i = np.clip(np.searchsorted(self.nodes, us) - 1, 0, len(self.nodes) - 2)
        x0, x1 = self.nodes[i], self.nodes[i + 1]
        h = x1 - x0
        s = (us - x0) / h
        s2, s3 = s * s, s * s * s
        return (self.cum[i] * (2 * s3 - 3 * s2 + 1)
                + h * self.deriv[i] * (s3 - 2 * s2 + s)
                + self.cum[i + 1] * (-2 * s3 + 3 * s2)
                + h * self.deriv[i + 1] * (s3 - s2))

    def _raw_scalar(self, u: float) -> float:
        i = bisect_right(self._nodes_l, u) - 1
        i = min(max(i, 0), len(self._nodes_l) - 2)
        x0, x1 = self._nodes_l[i], self._nodes_l[i + 1]
        h = x1 - x0
        s = (u - x0) / h
        s2 = s * s
        s3 = s2 * s
        return (self._cum_l[i] * (2 * s3 - 3 * s2 + 1)
                + h * self._deriv_l[i] * (s3 - 2 * s2 + s)
                + self._cum_l[i + 1] * (-2 * s3 + 3 * s2)
                + h * self._deriv_l[i + 1] * (s3 - s2))


@dataclass
class StructureFunctions:
    """Everything needed to evaluate F, its derivatives, and g on U."""

    n: int
    Fprime: Expr
    Fsecond: Expr
    Fthird: Expr
    table: CumulativeTable
    offset_c: float
    U: Interval
    signs: SignPair
    # cached node-grid samples (same nodes as the table)
    grid_u: np.ndarray = field(repr=False, default=None)
    Fp_g: np.ndarray = field(repr=False, default=None)
    Fpp_g: np.ndarray = field(repr=False, default=None)
    Fppp_g: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.grid_u is None:
            self.grid_u = self.table.nodes
        if self.Fp_g is None:
            self.Fp_g = self.table.deriv
        if self.Fpp_g is None:
            self.Fpp_g = eval_grid(self.Fsecond, self.grid_u)
        if self.Fppp_g is None:
            self.Fppp_g = eval_grid(self.Fthird, self.grid_u)

    # -- node-grid views -------------------------------------------------
    def F_nodes(self) -> np.ndarray:
        return self.offset_c + self.table.cum

    # -- scalar evaluation (used by generators and flows) -----------------
    def F_at(self, u: float) -> float:
        return self.offset_c + self.table.raw(u)

    def g_at(self, u: float) -> float:
        r = (self.n - 2) / (self.n - 1)
        return r * self.F_at(u) / evaluate(self.Fprime, u)

    def g1_at(self, u: float) -> float:
        r = (self.n - 2) / (self.n - 1)
        fp = evaluate(self.Fprime, u)
        return r * (1.0 - self.F_at(u) * evaluate(self.Fsecond, u) / fp ** 2)

    def g2_at(self, u: float) -> float:
        r = (self.n - 2) / (self.n - 1)
        fp = evaluate(self.Fprime, u)
        fpp = evaluate(self.Fsecond, u)
        fppp = evaluate(self.Fthird, u)
        F = self.F_at(u)
        return -r * (fpp / fp + F * fppp / fp ** 2 - 2.0 * F * fpp ** 2 / fp ** 3)


def g_arrays(n: int, F: np.ndarray, Fp: np.ndarray, Fpp: np.ndarray,
             Fppp: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """g, g', g'' on arrays; g = (n-2) F / ((n-1) F')."""
    r = (n - 2) / (n - 1)
    g = r * F / Fp
    g1 = r * (1.0 - F * Fpp / Fp ** 2)
    g2 = -r * (Fpp / Fp + F * Fppp / Fp ** 2 - 2.0 * F * Fpp ** 2 / Fp ** 3)
    return g, g1, g2


def determining_residuals(n: int, fk: Sequence[np.ndarray],
                          fkp: Sequence[np.ndarray],
                          F: np.ndarray, Fp: np.ndarray, Fpp: np.ndarray,
                          Fppp: np.ndarray, a: float) -> np.ndarray:
    """Rows k=0..n of the determining system on arrays.

    Rows 0..n-1 are the genuine conditions; row n is satisfied identically
    by the construction of F and is kept as a bookkeeping check.
    """
    g, g1, g2 = g_arrays(n, F, Fp, Fpp, Fppp)
    m = len(F)
    rows = np.empty((n + 1, m))
    rows[0] = -a * a * g + fkp[0] * g + a * fk[1] * g - fk[0] * g1 + 2.0 * fk[0]
    rows[1] = a * (1.0 - 2.0 * g1) + fkp[1] * g + 2.0 * a * fk[2] * g + fk[1]
    rows[2] = -g2 + fkp[2] * g + 3.0 * a * fk[3] * g + fk[2] * g1
    for k in range(3, n):
        rows[k] = (fkp[k] * g + (k + 1) * a * fk[k + 1] * g
                   + (k - 1) * fk[k] * g1 + (2 - k) * fk[k])
    rows[n] = fkp[n] * g + (n - 1) * fk[n] * g1 + (2 - n) * fk[n]
    return rows


# ---------------------------------------------------------------------------
# Working interval

def find_working_interval(f_n: Expr, interval: Interval,
                          margin: Optional[float] = None,
                          grid_size: int = 1024) -> Tuple[Interval, int]:
    """Largest sampled subinterval where |f_n| stays above the margin.

    Returns the interval and the sign of f_n on it.  Ties between
    equally long candidates go to the one with larger |f_n| at its
    midpoint, then to the one further right.
    """
    if grid_size < 32:
        raise ValueError("grid_size must be at least 32")
    if not (math.isfinite(interval.lo) and math.isfinite(interval.hi)):
        raise ValueError("working-interval scan needs a finite interval")
    us = np.linspace(interval.lo, interval.hi, grid_size)
    vals = eval_grid(f_n, us)
    finite = np.isfinite(vals)
    if margin is None:
        vmax = float(np.max(np.abs(vals[finite]))) if finite.any() else 0.0
        margin = 1e-8 * (1.0 + vmax)
    ok = finite & (np.abs(vals) >= margin)
    if not ok.any():
        raise NoIntervalError(
            "leading coefficient is below the margin everywhere sampled "
            f"(margin {margin:.3g}); no working interval exists")

    # maximal runs of usable points with constant sign
    runs = []  # (i0, i1) inclusive
    i = 0
    while i < grid_size:
        if not ok[i]:
            i += 1
            continue
        j = i
        s = np.sign(vals[i])
        while j + 1 < grid_size and ok[j + 1] and np.sign(vals[j + 1]) == s:
            j += 1
        runs.append((i, j))
        i = j + 1
    runs = [(i0, i1) for (i0, i1) in runs if i1 > i0]
    if not runs:
        raise NoIntervalError(
            "no sampled subinterval of length > 1 keeps the leading "
            "coefficient away from zero")

    def rank(run):
        i0, i1 = run
        length = us[i1] - us[i0]
        mid = (i0 + i1) // 2
        return (length, abs(vals[mid]), us[i0])

    best = max(runs, key=rank)
    if len(runs) > 1:
        log.info("working interval: %d candidate runs, using the largest; "
                 "%d left unanalyzed", len(runs), len(runs) - 1)
    i0, i1 = best
    lo = interval.lo if i0 == 0 else float(us[i0])
    hi = interval.hi if i1 == grid_size - 1 else float(us[i1])
    eps = 1 if vals[(i0 + i1) // 2] > 0 else -1
    return Interval(lo, hi), eps


# ---------------------------------------------------------------------------
# F' and the cumulative table

def build_Fprime(f_n: Expr, n: int, epsilon: int) -> Expr:
    """(epsilon * f_n) ^ (1/(n-1)); equals |f_n|^(1/(n-1)) where eps*f_n > 0."""
    if n < 2:
        raise ValueError("n must be at least 2")
    base = f_n if epsilon == 1 else Mul(Constant(-1.0), f_n)
    return Pow(base, Constant(1.0 / (n - 1))).simp()


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                      fa: float, fm: float, fb: float, whole: float,
                      tol: float, depth: int) -> float:
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    if depth <= 0:
        raise QuadratureError(
            f"adaptive Simpson exceeded depth limit on [{a}, {b}]")
    return (_adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol,
                                depth - 1))


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 40) -> float:
    """Definite integral of f over [a, b] to absolute tolerance tol."""
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, max_depth)


def cumulative_F(Fprime: Expr, U: Interval, c: float = 0.0,
                 tol: float = 1e-10, grid_size: int = 1024,
                 max_depth: int = 40) -> Tuple[CumulativeTable, float]:
    """Cumulative quadrature table for F; returns (table, offset c).

    F(u) = c + table.raw(u), with table.raw(U.lo) = 0.  Strict
    monotonicity (F' > 0) is checked panel by panel.
    """
    nodes = np.linspace(U.lo, U.hi, grid_size)
    deriv = np.array([evaluate(Fprime, x) for x in nodes])
    if not np.isfinite(deriv).all():
        raise DomainError("F' is not evaluable at every table node")

    def f(x: float) -> float:
        return evaluate(Fprime, x)

    cum = np.empty(grid_size)
    cum[0] = 0.0
    for i in range(grid_size - 1):
        a, b = float(nodes[i]), float(nodes[i + 1])
        fm = f(0.5 * (a + b))
        whole = (b - a) / 6.0 * (deriv[i] + 4.0 * fm + deriv[i + 1])
        piece = _adaptive_simpson(f, a, b, deriv[i], fm, deriv[i + 1],
                                  whole, tol, max_depth)
        if piece <= 0.0:
            raise QuadratureError(
                f"cumulative table is not strictly increasing near u={a}")
        cum[i + 1] = cum[i] + piece
    return CumulativeTable(nodes, cum, deriv, Fprime), float(c)


def prepare_structure(problem, config: ClassifyConfig = DEFAULT_CONFIG,
                      ) -> StructureFunctions:
    """Locate U, build F' (exactly) and the F table (offset still 0)."""
    U, eps = find_working_interval(problem.f[problem.n], problem.interval,
                                   grid_size=config.scan_size,
                                   margin=None)
    Fprime = build_Fprime(problem.f[problem.n], problem.n, eps)
    Fsecond = differentiate(Fprime)
    Fthird = differentiate(Fsecond)
    table, _ = cumulative_F(Fprime, U, 0.0, tol=config.quad_tol,
                            grid_size=config.grid_size,
                            max_depth=config.quad_max_depth)
    # nu is provisional until the offset is solved
    return StructureFunctions(n=problem.n, Fprime=Fprime, Fsecond=Fsecond,
                              Fthird=Fthird, table=table, offset_c=0.0,
                              U=U, signs=SignPair(eps, 1))


# ---------------------------------------------------------------------------
# g and the candidate constant

def g_and_derivatives(sf: StructureFunctions):
    """Scalar callables (g, g', g'') on the working interval."""
    return sf.g_at, sf.g1_at, sf.g2_at


def a_of_u(f_n: Expr, f_nm1: Expr, sf: StructureFunctions,
           grid: Optional[np.ndarray] = None) -> GridFn:
    """Pointwise candidate constant a on the grid.

    a(u) = -(f_{n-1}' g + (n-2) f_{n-1} g' + (3-n) f_{n-1}) / (n f_n g)
    """
    us = sf.grid_u if grid is None else np.asarray(grid, dtype=float)
    n = sf.n
    if grid is None:
        F = sf.F_nodes()
        Fp, Fpp, Fppp = sf.Fp_g, sf.Fpp_g, sf.Fppp_g
    else:
        F = sf.offset_c + sf.table.raw(us)
        Fp = eval_grid(sf.Fprime, us)
        Fpp = eval_grid(sf.Fsecond, us)
        Fppp = eval_grid(sf.Fthird, us)
    g, g1, _ = g_arrays(n, F, Fp, Fpp, Fppp)
    fnm1 = eval_grid(f_nm1, us)
    fnm1p = eval_grid(differentiate(f_nm1), us)
    fn = eval_grid(f_n, us)
    den = n * fn * g
    if np.any(den == 0.0) or not np.isfinite(den).all():
        raise DomainError("f_n * g vanishes or is not finite on the grid")
    num = fnm1p * g + (n - 2) * fnm1 * g1 + (3 - n) * fnm1
    vals = -num / den
    if not np.isfinite(vals).all():
        raise DomainError("candidate constant is not finite on the grid")
    return GridFn(us, vals)


# ---------------------------------------------------------------------------
# Offset search

def _golden_min(fn: Callable[[float], float], lo: float, hi: float,
                rel_tol: float = 1e-13, max_iter: int = 200,
                ) -> Tuple[float, float]:
    """Golden-section minimum of fn on [lo, hi]; inf values are tolerated."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if abs(b - a) <= rel_tol * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fn(d)
    return (c, fc) if fc <= fd else (d, fd)


def merge_offsets(offsets: Sequence[float], span: float,
                  merge_tol: float = 1e-6) -> List[float]:
    """Collapse offsets that agree to within merge_tol * span."""
    if not offsets:
        return []
    tol = merge_tol * max(span, 1e-300)
    out: List[List[float]] = []
    for c in sorted(offsets):
        if out and c - out[-1][-1] <= tol:
            out[-1].append(c)
        else:
            out.append([c])
    return [float(np.mean(group)) for group in out]


class _OffsetProblem:
    """Shared arrays and objectives for the offset search."""

    def __init__(self, problem, sf: StructureFunctions,
                 fk_vals=None, fkp_vals=None):
        self.n = problem.n
        self.us = sf.grid_u
        self.T = sf.table.cum
        self.Fp, self.Fpp, self.Fppp = sf.Fp_g, sf.Fpp_g, sf.Fppp_g
        if fk_vals is None:
            fk_vals = [eval_grid(f, self.us) for f in problem.f]
            fkp_vals = [eval_grid(differentiate(f), self.us) for f in problem.f]
        self.fk = fk_vals
        self.fkp = fkp_vals
        for k, arr in enumerate(self.fk):
            if not np.isfinite(arr).all():
                raise DomainError(f"f{k} is not evaluable on the working grid")
        for k, arr in enumerate(self.fkp):
            if not np.isfinite(arr).all():
                raise DomainError(f"f{k}' is not evaluable on the working grid")
        self.maxfk = max(float(np.max(np.abs(a))) for a in self.fk)
        self.span = sf.table.span
        self.floor = 1e-14 * (1.0 + self.span)
        # f_{n-1} identically ~0 makes the ratio carry no information
        self.degenerate = (float(np.max(np.abs(self.fk[self.n - 1])))
                           <= 1e-12 * (1.0 + self.maxfk))

    def F_of(self, c: float) -> Optional[np.ndarray]:
        F = c + self.T
        if np.min(np.abs(F)) < self.floor:
            return None
        if not (np.all(F > 0.0) or np.all(F < 0.0)):
            return None
        return F

    def ratio_stats(self, c: float) -> Tuple[float, float]:
        """(spread, mean) of the candidate constant at offset c."""
        F = self.F_of(c)
        if F is None:
            return math.inf, math.nan
        n = self.n
        g, g1, _ = g_arrays(n, F, self.Fp, self.Fpp, self.Fppp)
        num = (self.fkp[n - 1] * g + (n - 2) * self.fk[n - 1] * g1
               + (3 - n) * self.fk[n - 1])
        den = n * self.fk[n] * g
        with np.errstate(all="ignore"):
            a_vals = -num / den
        if not np.isfinite(a_vals).all():
            return math.inf, math.nan
        return (float(np.max(a_vals) - np.min(a_vals)),
                float(np.mean(a_vals)))

    def residual_max(self, c: float, a: float) -> float:
        """Worst determining-system residual at offset c and constant a."""
        F = self.F_of(c)
        if F is None:
            return math.inf
        rows = determining_residuals(self.n, self.fk, self.fkp, F,
                                     self.Fp, self.Fpp, self.Fppp, a)
        if not np.isfinite(rows).all():
            return math.inf
        return float(np.max(np.abs(rows[: self.n])))

    def objective(self, c: float) -> float:
        if self.degenerate:
            return self.residual_max(c, 0.0)
        return self.ratio_stats(c)[0]


def solve_offset(problem, sf: StructureFunctions,
                 search: Optional[Tuple[float, float]] = None,
                 tol_const: float = 1e-6,
                 config: ClassifyConfig = DEFAULT_CONFIG,
                 _arrays=None) -> float:
    """Integration offset c that makes the candidate constant constant.

    Scans seed offsets across the search range, polishes every local
    minimum of the spread objective by golden section, and returns the
    single passing offset.  Raises NoConstantA when nothing passes and
    AmbiguousOffset when several distinct offsets pass the full
    determining system.
    """
    op = _OffsetProblem(problem, sf, *(_arrays or (None, None)))
    span = max(op.span, 1e-300)
    if search is None:
        search = (-config.offset_span_factor * span,
                  config.offset_span_factor * span)
    c_lo, c_hi = float(search[0]), float(search[1])
    seeds = np.linspace(c_lo, c_hi, config.offset_seeds)
    vals = np.array([op.objective(c) for c in seeds])

    cand_idx = []
    for i in range(len(seeds)):
        v = vals[i]
        if not math.isfinite(v):
            continue
        left = vals[i - 1] if i > 0 else math.inf
        right = vals[i + 1] if i + 1 < len(seeds) else math.inf
        if v <= left and v <= right:
            cand_idx.append(i)
    if not cand_idx:
        raise NoConstantA("no valid offset in the search range "
                          f"[{c_lo:.6g}, {c_hi:.6g}]")

    polished = []
    for i in cand_idx:
        lo = seeds[max(i - 1, 0)]
        hi = seeds[min(i + 1, len(seeds) - 1)]
        c_best, v_best = _golden_min(op.objective, float(lo), float(hi))
        polished.append((c_best, v_best))

    def passes(c: float) -> bool:
        if op.degenerate:
            return op.residual_max(c, 0.0) <= \
                config.residual_tol * (1.0 + op.maxfk)
        spread, mean = op.ratio_stats(c)
        return spread <= tol_const * (1.0 + abs(mean))

    passing = [c for c, _ in polished if passes(c)]
    if not passing:
        c_best, v_best = min(polished, key=lambda cv: cv[1])
        err = NoConstantA(
            "no offset makes the coefficient ratio constant: best spread "
            f"{v_best:.3g} at c={c_best:.6g} exceeds tolerance")
        err.best_offset = c_best
        err.best_objective = v_best
        raise err

    merged = merge_offsets(passing, span, config.merge_tol)
    if len(merged) == 1:
        return merged[0]

    # Several spread-passing offsets: only those satisfying the full
    # system count; more than one of them is a genuine ambiguity.
    full_pass = []
    for c in merged:
        a = 0.0 if op.degenerate else op.ratio_stats(c)[1]
        if op.residual_max(c, a) <= config.residual_tol * (1.0 + op.maxfk):
            full_pass.append(c)
    if len(full_pass) > 1:
        raise AmbiguousOffset(full_pass)
    if len(full_pass) == 1:
        return full_pass[0]
    # none fully pass; hand back the best spread candidate for diagnostics
    return min(merged, key=op.objective)
