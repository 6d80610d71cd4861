"""Independent checks of claimed symmetries.

Three views that must agree with the classifier:

* the full prolongation condition evaluated as one polynomial in u' at
  sampled jet points (t, u, u'), for arbitrary candidate generators;
* the same condition split into per-power coefficient residuals, for
  generators whose xi does not depend on u;
* the dynamics: fixed-step RK4 integration of the equation, and the
  one-parameter flow of a generator applied to a trajectory, whose image
  must again satisfy the equation if the generator is a symmetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .config import JetBox, DEFAULT_JET_BOX
from .errors import BlowUp, DomainError, NonMonotoneImage, SpecError
from .exprs import Expr, differentiate, eval_grid, evaluate
from .structure import Interval

__all__ = ["Generator", "JetPoint", "Trajectory", "jet_points",
           "prolongation_residual", "coefficient_residuals", "integrate",
           "ode_residual", "flow_transform", "map_jet_points"]

Fn2 = Callable[[float, float], float]


def _const(v: float) -> Fn2:
    return lambda t, u: v


@dataclass
class JetPoint:
    t: float
    u: float
    udot: float


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    udot: np.ndarray
    h: float
    method: str = "rk4"
    early_stop: bool = False


@dataclass
class Generator:
    """Point vector field xi(t,u) d/dt + eta(t,u) d/du with its partials.

    The built-in kinds carry analytic partials; generators made from raw
    expressions fall back to central finite differences.
    """

    xi: Fn2
    eta: Fn2
    xi_t: Fn2
    xi_u: Fn2
    xi_tt: Fn2
    xi_tu: Fn2
    xi_uu: Fn2
    eta_t: Fn2
    eta_u: Fn2
    eta_tt: Fn2
    eta_tu: Fn2
    eta_uu: Fn2
    kind: str = "custom"

    @staticmethod
    def time_translation() -> "Generator":
        z = _const(0.0)
        return Generator(xi=_const(1.0), eta=z, xi_t=z, xi_u=z, xi_tt=z,
                         xi_tu=z, xi_uu=z, eta_t=z, eta_u=z, eta_tt=z,
                         eta_tu=z, eta_uu=z, kind="time-translation")

    @staticmethod
    def scaling(g: Callable[[float], float], g1: Callable[[float], float],
                g2: Callable[[float], float]) -> "Generator":
        """t d/dt + g(u) d/du (the a = 0 second generator)."""
        z = _const(0.0)
        return Generator(
            xi=lambda t, u: t, eta=lambda t, u: g(u),
            xi_t=_const(1.0), xi_u=z, xi_tt=z, xi_tu=z, xi_uu=z,
            eta_t=z, eta_u=lambda t, u: g1(u), eta_tt=z, eta_tu=z,
            eta_uu=lambda t, u: g2(u), kind="scaling")

    @staticmethod
    def exponential(a: float, g: Callable[[float], float],
                    g1: Callable[[float], float],
                    g2: Callable[[float], float]) -> "Generator":
        """exp(at) d/dt + a exp(at) g(u) d/du (the a != 0 second generator)."""
        z = _const(0.0)
        e = math.exp
        return Generator(
            xi=lambda t, u: e(a * t),
            eta=lambda t, u: a * e(a * t) * g(u),
            xi_t=lambda t, u: a * e(a * t),
            xi_u=z,
            xi_tt=lambda t, u: a * a * e(a * t),
            xi_tu=z, xi_uu=z,
            eta_t=lambda t, u: a * a * e(a * t) * g(u),
            eta_u=lambda t, u: a * e(a * t) * g1(u),
            eta_tt=lambda t, u: a ** 3 * e(a * t) * g(u),
            eta_tu=lambda t, u: a * a * e(a * t) * g1(u),
            eta_uu=lambda t, u: a * e(a * t) * g2(u),
            kind="exponential")

    @staticmethod
    def from_report(report) -> "Generator":
        """Second generator emitted by the classifier, as callables."""
        if report.generator2 is None or report.structure is None:
            raise ValueError("report carries no second generator")
        sf = report.structure
        if report.generator2.kind == "scaling":
            return Generator.scaling(sf.g_at, sf.g1_at, sf.g2_at)
        return Generator.exponential(report.generator2.a, sf.g_at,
                                     sf.g1_at, sf.g2_at)

    @staticmethod
    def from_expressions(xi_expr: Expr, eta_expr: Expr,
                         step: float = 1e-5) -> "Generator":
        """User-supplied xi, eta in variables t and u; partials by
        central differences with step scaled by (1+|t|), (1+|u|)."""

        def val(e: Expr) -> Fn2:
            return lambda t, u: e.ev({"t": t, "u": u})

        def d_t(e: Expr) -> Fn2:
            def f(t, u):
                h = step * (1.0 + abs(t))
                return (e.ev({"t": t + h, "u": u})
                        - e.ev({"t": t - h, "u": u})) / (2.0 * h)
            return f

        def d_u(e: Expr) -> Fn2:
            def f(t, u):
                h = step * (1.0 + abs(u))
                return (e.ev({"t": t, "u": u + h})
                        - e.ev({"t": t, "u": u - h})) / (2.0 * h)
            return f

        def d_tt(e: Expr) -> Fn2:
            def f(t, u):
                h = step * (1.0 + abs(t))
                return (e.ev({"t": t + h, "u": u}) - 2.0 * e.ev({"t": t, "u": u})
                        + e.ev({"t": t - h, "u": u})) / (h * h)
            return f

        def d_uu(e: Expr) -> Fn2:
            def f(t, u):
                h = step * (1.0 + abs(u))
                return (e.ev({"t": t, "u": u + h}) - 2.0 * e.ev({"t": t, "u": u})
                        + e.ev({"t": t, "u": u - h})) / (h * h)
            return f

        def d_tu(e: Expr) -> Fn2:
            def f(t, u):
                ht = step * (1.0 + abs(t))
                hu = step * (1.0 + abs(u))
                return (e.ev({"t": t + ht, "u": u + hu})
                        - e.ev({"t": t + ht, "u": u - hu})
                        - e.ev({"t": t - ht, "u": u + hu})
                        + e.ev({"t": t - ht, "u": u - hu})) / (4.0 * ht * hu)
            return f

        return Generator(
            xi=val(xi_expr), eta=val(eta_expr),
            xi_t=d_t(xi_expr), xi_u=d_u(xi_expr), xi_tt=d_tt(xi_expr),
            xi_tu=d_tu(xi_expr), xi_uu=d_uu(xi_expr),
            eta_t=d_t(eta_expr), eta_u=d_u(eta_expr), eta_tt=d_tt(eta_expr),
            eta_tu=d_tu(eta_expr), eta_uu=d_uu(eta_expr), kind="custom")


# ---------------------------------------------------------------------------
# Jet sampling and the prolongation condition

def jet_points(U: Interval, n: int, box: JetBox = DEFAULT_JET_BOX,
               ) -> List[JetPoint]:
    """Sample box on (t, u, u').

    u covers the inner part of U; u' is sampled at Chebyshev points, at
    least n+2 of them so a polynomial of degree n+1 cannot hide between
    samples.
    """
    ts = np.linspace(box.t_lo, box.t_hi, box.n_t)
    ui = U.inner(box.u_margin)
    us = np.linspace(ui.lo, ui.hi, box.n_u)
    m = max(box.n_udot, n + 2)
    mid = 0.5 * (box.udot_lo + box.udot_hi)
    half = 0.5 * (box.udot_hi - box.udot_lo)
    ws = mid + half * np.cos(np.pi * (2 * np.arange(m) + 1) / (2 * m))
    return [JetPoint(float(t), float(u), float(w))
            for t in ts for u in us for w in ws]


def prolongation_residual(gen: Generator, problem, pts: Sequence[JetPoint],
                          ) -> float:
    """Max |symmetry condition| over the jet points.

    The condition is the vanishing of one polynomial in u' whose
    coefficients mix xi, eta, their partials, and the f_k; it is
    evaluated directly, so it applies to arbitrary generators including
    those with xi depending on u.
    """
    n = problem.n
    f_exprs = problem.f
    fp_exprs = [differentiate(f) for f in f_exprs]
    cache: Dict[float, Tuple[List[float], List[float]]] = {}

    def coeffs(u: float):
        got = cache.get(u)
        if got is None:
            got = ([evaluate(f, u) for f in f_exprs],
                   [evaluate(fp, u) for fp in fp_exprs])
            cache[u] = got
        return got

    worst = 0.0
    for p in pts:
        t, u, w = p.t, p.u, p.udot
        fk, fkp = coeffs(u)

        def F(k: int) -> float:
            return fk[k] if 0 <= k <= n else 0.0

        def Fp(k: int) -> float:
            return fkp[k] if 0 <= k <= n else 0.0

        eta = gen.eta(t, u)
        eta_t, eta_u = gen.eta_t(t, u), gen.eta_u(t, u)
        eta_tt, eta_tu, eta_uu = (gen.eta_tt(t, u), gen.eta_tu(t, u),
                                  gen.eta_uu(t, u))
        xi_t, xi_u = gen.xi_t(t, u), gen.xi_u(t, u)
        xi_tt, xi_tu, xi_uu = (gen.xi_tt(t, u), gen.xi_tu(t, u),
                               gen.xi_uu(t, u))

        total = (-eta_tt + (xi_tt - 2.0 * eta_tu) * w
                 + (2.0 * xi_tu - eta_uu) * w * w + xi_uu * w ** 3)
        wk = 1.0
        for k in range(0, n + 2):
            term = (Fp(k) * eta + (k + 1) * F(k + 1) * eta_t
                    + (k - 1) * F(k) * eta_u + (2 - k) * F(k) * xi_t
                    + (4 - k) * F(k - 1) * xi_u)
            total += term * wk
            wk *= w
        worst = max(worst, abs(total))
    return worst


def coefficient_residuals(gen: Generator, problem, t_vals: Sequence[float],
                          u_vals: Sequence[float]) -> Dict[int, np.ndarray]:
    """Residual of each u'-power coefficient separately (k = 0..n).

    Only valid for generators with xi independent of u (checked); this is
    the diagnostic-granularity view the scalar condition lacks.
    """
    n = problem.n
    t_vals = [float(t) for t in t_vals]
    u_vals = [float(u) for u in u_vals]
    for t in t_vals:
        for u in u_vals:
            if abs(gen.xi_u(t, u)) > 1e-10:
                raise ValueError(
                    "per-power residuals need xi independent of u")
    f_exprs = problem.f
    fp_exprs = [differentiate(f) for f in f_exprs]
    shape = (len(t_vals), len(u_vals))
    out = {k: np.empty(shape) for k in range(n + 1)}
    for j, u in enumerate(u_vals):
        fk = [evaluate(f, u) for f in f_exprs]
        fkp = [evaluate(fp, u) for fp in fp_exprs]
        for i, t in enumerate(t_vals):
            eta = gen.eta(t, u)
            eta_t, eta_u = gen.eta_t(t, u), gen.eta_u(t, u)
            eta_tt, eta_tu, eta_uu = (gen.eta_tt(t, u), gen.eta_tu(t, u),
                                      gen.eta_uu(t, u))
            xi_t, xi_tt = gen.xi_t(t, u), gen.xi_tt(t, u)
            out[0][i, j] = (-eta_tt + fkp[0] * eta + fk[1] * eta_t
                            - fk[0] * eta_u + 2.0 * fk[0] * xi_t)
            out[1][i, j] = (xi_tt - 2.0 * eta_tu + fkp[1] * eta
                            + 2.0 * fk[2] * eta_t + fk[1] * xi_t)
            out[2][i, j] = (-eta_uu + fkp[2] * eta + 3.0 * fk[3] * eta_t
                            + fk[2] * eta_u)
            for k in range(3, n):
                out[k][i, j] = (fkp[k] * eta + (k + 1) * fk[k + 1] * eta_t
                                + (k - 1) * fk[k] * eta_u
                                + (2 - k) * fk[k] * xi_t)
            out[n][i, j] = (fkp[n] * eta + (n - 1) * fk[n] * eta_u
                            + (2 - n) * fk[n] * xi_t)
    return out


# ---------------------------------------------------------------------------
# Dynamics

def _acceleration(problem):
    """Right-hand side u'' = sum f_k(u) u'^k as a scalar callable."""
    f_exprs = problem.f

    def acc(u: float, v: float) -> float:
        total = 0.0
        for k in range(problem.n, -1, -1):
            total = total * v + evaluate(f_exprs[k], u)
        return total

    return acc


def integrate(problem, t0: float, u0: float, v0: float, t_end: float,
              h: float, blowup_limit: float = 1e12,
              boundary_rel: float = 1e-9) -> Trajectory:
    """Classical fixed-step RK4 on (u, u').

    Stops early (flagged, not an error) when u leaves the problem
    interval less a small relative margin, or when a coefficient stops
    being evaluable.  Raises BlowUp -- with the partial trajectory
    attached -- when |u| or |u'| exceeds the blow-up limit.
    """
    if h <= 0.0:
        raise ValueError("step h must be positive")
    lo, hi = problem.interval.lo, problem.interval.hi
    width = hi - lo if math.isfinite(hi - lo) else math.inf
    margin = boundary_rel * width if math.isfinite(width) else 0.0

    def inside(u: float) -> bool:
        if math.isfinite(lo) and u <= lo + margin:
            return False
        if math.isfinite(hi) and u >= hi - margin:
            return False
        return True

    if not inside(u0):
        raise SpecError(f"initial value u0={u0} is outside the interval")

    acc = _acceleration(problem)
    ts, us, vs = [t0], [u0], [v0]
    steps = max(0, int(round((t_end - t0) / h)))
    early = False
    u, v = u0, v0
    for i in range(steps):
        t = t0 + i * h
        try:
            k1u, k1v = v, acc(u, v)
            k2u, k2v = v + 0.5 * h * k1v, acc(u + 0.5 * h * k1u,
                                              v + 0.5 * h * k1v)
            k3u, k3v = v + 0.5 * h * k2v, acc(u + 0.5 * h * k2u,
                                              v + 0.5 * h * k2v)
            k4u, k4v = v + h * k3v, acc(u + h * k3u, v + h * k3v)
        except DomainError:
            early = True
            break
        u = u + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if abs(u) > blowup_limit or abs(v) > blowup_limit:
            err = BlowUp(f"|u| or |u'| exceeded {blowup_limit:g} "
                         f"at t={t0 + (i + 1) * h}")
            err.trajectory = Trajectory(np.array(ts), np.array(us),
                                        np.array(vs), h, early_stop=True)
            raise err
        if not inside(u):
            early = True
            break
        ts.append(t0 + (i + 1) * h)
        us.append(u)
        vs.append(v)
    return Trajectory(np.array(ts), np.array(us), np.array(vs), h,
                      early_stop=early)


def ode_residual(traj: Trajectory, problem) -> np.ndarray:
    """Finite-difference residual u'' - sum f_k(u) u'^k at interior samples.

    Second derivative and slope both come from central differences on the
    uniform grid, independent of how the trajectory was produced.
    """
    u, h = traj.u, traj.h
    if len(u) < 3:
        return np.zeros(0)
    mid = u[1:-1]
    acc_fd = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    v_fd = (u[2:] - u[:-2]) / (2.0 * h)
    rhs = np.zeros_like(mid)
    for k in range(problem.n, -1, -1):
        rhs = rhs * v_fd + eval_grid(problem.f[k], mid)
    return acc_fd - rhs


# ---------------------------------------------------------------------------
# Symmetry flows

def map_jet_points(gen: Generator, pts: Sequence[Tuple[float, float, float]],
                   s: float, n_steps: int = 32) -> List[Tuple[float, float, float]]:
    """Advance (t, u, u') along the prolonged flow of the generator by s.

    The u' component follows the first prolongation, so mapped samples
    stay consistent jets of the image curve.
    """
    def rhs(t, u, w):
        return (gen.xi(t, u), gen.eta(t, u),
                gen.eta_t(t, u) + (gen.eta_u(t, u) - gen.xi_t(t, u)) * w
                - gen.xi_u(t, u) * w * w)

    ds = s / n_steps
    out = []
    for (t, u, w) in pts:
        x = (float(t), float(u), float(w))
        for _ in range(n_steps):
            k1 = rhs(*x)
            k2 = rhs(*(x[j] + 0.5 * ds * k1[j] for j in range(3)))
            k3 = rhs(*(x[j] + 0.5 * ds * k2[j] for j in range(3)))
            k4 = rhs(*(x[j] + ds * k3[j] for j in range(3)))
            x = tuple(x[j] + (ds / 6.0) * (k1[j] + 2 * k2[j] + 2 * k3[j]
                                           + k4[j]) for j in range(3))
        out.append(x)
    return out


def _hermite(x: np.ndarray, y: np.ndarray, dy: np.ndarray,
             xg: np.ndarray) -> np.ndarray:
    """Cubic Hermite interpolation of (x, y, dy/dx) onto xg."""
    i = np.clip(np.searchsorted(x, xg) - 1, 0, len(x) - 2)
    h = x[i + 1] - x[i]
    s = (xg - x[i]) / h
    s2, s3 = s * s, s ** 3
    return (y[i] * (2 * s3 - 3 * s2 + 1) + h * dy[i] * (s3 - 2 * s2 + s)
            + y[i + 1] * (-2 * s3 + 3 * s2) + h * dy[i + 1] * (s3 - s2))


def flow_transform(gen: Generator, traj: Trajectory, s: float,
                   problem=None, n_steps: int = 32) -> Trajectory:
    """Image of a trajectory under the generator's flow, re-sampled.

    Every sample is advanced by flow parameter s; the image curve is then
    put back on a uniform time grid by cubic Hermite interpolation (the
    prolonged flow supplies exact slopes).  Raises NonMonotoneImage when
    the image time values fold.
    """
    pts = list(zip(traj.t, traj.u, traj.udot))
    if len(pts) < 2:
        raise ValueError("flow transform needs at least two samples")
    mapped = map_jet_points(gen, pts, s, n_steps=n_steps)
    T = np.array([p[0] for p in mapped])
    U = np.array([p[1] for p in mapped])
    W = np.array([p[2] for p in mapped])
    if not np.all(np.diff(T) > 0.0):
        raise NonMonotoneImage(
            "flow image folds in time; cannot re-sample as u(t)")
    m = len(T)
    tg = np.linspace(T[0], T[-1], m)
    hg = float(tg[1] - tg[0]) if m > 1 else traj.h
    ug = _hermite(T, U, W, tg)
    if problem is not None:
        dW = np.zeros_like(W)
        for idx in range(m):
            acc = 0.0
            for k in range(problem.n, -1, -1):
                acc = acc * W[idx] + evaluate(problem.f[k], U[idx])
            dW[idx] = acc
    else:
        dW = np.gradient(W, T)
    wg = _hermite(T, W, dW, tg)
    return Trajectory(tg, ug, wg, hg, method=traj.method + "+flow",
                      early_stop=traj.early_stop)
