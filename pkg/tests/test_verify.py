import math

import numpy as np
import pytest

from helpers import golden_spec

from lienard_sym.classify import ProblemSpec, classify, residuals_system
from lienard_sym.config import JetBox
from lienard_sym.errors import BlowUp, NonMonotoneImage, SpecError
from lienard_sym.exprs import parse
from lienard_sym.structure import Interval
from lienard_sym.synthesis import synthesize
from lienard_sym.verify import (
    Generator,
    JetPoint,
    coefficient_residuals,
    flow_transform,
    integrate,
    jet_points,
    map_jet_points,
    ode_residual,
    prolongation_residual,
)


@pytest.fixture(scope="module")
def golden():
    problem, _ = synthesize(golden_spec())
    report = classify(problem)
    return problem, report


@pytest.fixture(scope="module")
def homogeneous():
    spec = golden_spec()
    spec = type(spec)(n=4, F=spec.F, U=spec.U, b=(0.7, 0.3, 0.0, 0.0),
                      a=0.0, epsilon=1, nu=1)
    problem, _ = synthesize(spec)
    report = classify(problem)
    return problem, report


OSCILLATOR = ProblemSpec(n=1, interval=Interval(-3.0, 3.0),
                         f=(parse("-u"), parse("0")))


# ---------------------------------------------------------------------------
# prolongation residual

def test_time_translation_residual_exactly_zero(golden):
    problem, report = golden
    gen = Generator.time_translation()
    pts = jet_points(report.U, problem.n)
    assert prolongation_residual(gen, problem, pts) == 0.0


def test_time_translation_zero_on_arbitrary_problem():
    problem = ProblemSpec(n=4, interval=Interval(0.5, 2.0),
                          f=tuple(parse(s) for s in
                                  ("sin(u)", "u^2", "1", "exp(u)", "1+u")))
    pts = [JetPoint(t, u, w) for t in (0.0, 1.0) for u in (0.7, 1.5)
           for w in (-2.0, 0.5)]
    assert prolongation_residual(Generator.time_translation(), problem,
                                 pts) == 0.0


def test_golden_generator_small_residual(golden):
    problem, report = golden
    gen = Generator.from_report(report)
    box = JetBox(t_lo=0.0, t_hi=1.0, u_margin=0.0,
                 udot_lo=-2.0, udot_hi=2.0)
    pts = jet_points(Interval(0.5, 2.0), problem.n, box)
    assert prolongation_residual(gen, problem, pts) <= 1e-9


def test_wrong_g_rejected(golden):
    problem, _ = golden
    # t d/dt + u d/du uses the wrong u-profile
    wrong = Generator.from_expressions(parse("t", ("t", "u")),
                                       parse("u", ("t", "u")))
    pts = jet_points(Interval(0.5, 2.0), problem.n)
    assert prolongation_residual(wrong, problem, pts) >= 0.1


def test_jet_points_cover_degree():
    pts = jet_points(Interval(0.0, 1.0), n=9)
    udots = {p.udot for p in pts}
    assert len(udots) >= 11  # n + 2 samples resolve degree n+1


# ---------------------------------------------------------------------------
# per-power coefficients

def test_coefficients_passing_family(golden):
    problem, report = golden
    gen = Generator.from_report(report)
    cr = coefficient_residuals(gen, problem, [0.0, 0.5, 1.0],
                               np.linspace(0.6, 1.9, 9))
    for k, vals in cr.items():
        assert np.max(np.abs(vals)) <= 1e-9


def test_coefficients_localize_f2_perturbation(golden):
    problem, report = golden
    gen = Generator.from_report(report)
    ts = [0.0, 0.7]
    us = np.linspace(0.6, 1.9, 7)
    base = coefficient_residuals(gen, problem, ts, us)
    f = list(problem.f)
    f[2] = parse(f"({f[2]}) + 0.05*u")
    perturbed = ProblemSpec(n=4, interval=problem.interval, f=tuple(f))
    moved = coefficient_residuals(gen, perturbed, ts, us)
    # f2 enters only the u'^1 and u'^2 coefficient equations
    assert np.max(np.abs(moved[1] - base[1])) > 1e-3
    assert np.max(np.abs(moved[2] - base[2])) > 1e-3
    for k in (0, 3, 4):
        assert np.max(np.abs(moved[k] - base[k])) <= 1e-12


def test_coefficients_zero_generator(golden):
    problem, _ = golden
    z = Generator.from_expressions(parse("3", ("t", "u")),
                                   parse("0", ("t", "u")))
    cr = coefficient_residuals(z, problem, [0.0], [1.0, 1.5])
    for vals in cr.values():
        assert np.max(np.abs(vals)) == 0.0


def test_coefficients_reject_u_dependent_xi(golden):
    problem, _ = golden
    bad = Generator.from_expressions(parse("u", ("t", "u")),
                                     parse("0", ("t", "u")))
    with pytest.raises(ValueError):
        coefficient_residuals(bad, problem, [0.0], [1.0])


def test_scalar_condition_matches_rows(golden):
    # the one-polynomial residual equals sum_k rows_k(u) w^k times the
    # time profile a e^{at} of the exponential generator
    problem, report = golden
    gen = Generator.from_report(report)
    sf = report.structure
    a = report.a
    us = np.linspace(0.6, 1.9, 5)
    rows = residuals_system(problem, sf, a, grid=us)
    worst = 0.0
    for t in (0.0, 0.5, 1.0):
        for i, u in enumerate(us):
            for w in (-1.5, 0.3, 2.0):
                eq0 = prolongation_residual(gen, problem,
                                            [JetPoint(t, float(u), w)])
                poly = sum(rows[k].values[i] * w ** k for k in range(4))
                worst = max(worst, abs(eq0 - abs(poly * a * math.exp(a * t))))
    assert worst <= 1e-9


# ---------------------------------------------------------------------------
# integration

def test_integrate_free_motion_exact():
    problem = ProblemSpec(n=1, interval=Interval(-100.0, 100.0),
                          f=(parse("0"), parse("0")))
    traj = integrate(problem, 0.0, 0.0, 1.0, 5.0, 0.01)
    assert not traj.early_stop
    assert np.max(np.abs(traj.u - traj.t)) <= 1e-12


def test_integrate_cosine_oracle():
    h = 1e-3
    traj = integrate(OSCILLATOR, 0.0, 1.0, 0.0, 2.0 * math.pi, h)
    t_final = traj.t[-1]
    assert abs(traj.u[-1] - math.cos(t_final)) <= 1e-9
    assert np.max(np.abs(traj.u - np.cos(traj.t))) <= 1e-9


def test_rk4_order():
    # halve the step, expect >= 14x error reduction (4th order is 16x)
    def endpoint_error(h):
        traj = integrate(OSCILLATOR, 0.0, 1.0, 0.0, 2.0 * math.pi, h)
        return math.hypot(traj.u[-1] - math.cos(traj.t[-1]),
                          traj.udot[-1] + math.sin(traj.t[-1]))

    e1 = endpoint_error(0.02)
    e2 = endpoint_error(0.01)
    assert e1 / e2 >= 14.0


def test_integrate_early_stop(golden):
    problem, _ = golden
    # strong negative velocity pushes u through the lower end of (0.5, 2)
    traj = integrate(problem, 0.0, 0.6, -2.0, 5.0, 1e-3)
    assert traj.early_stop
    assert traj.u.min() > 0.5 - 1e-6


def test_integrate_blowup_carries_partial_trajectory():
    growing = ProblemSpec(n=1, interval=Interval(-1e30, 1e30),
                          f=(parse("u"), parse("0")))
    with pytest.raises(BlowUp) as err:
        integrate(growing, 0.0, 1.0, 1.0, 40.0, 0.01)
    partial = err.value.trajectory
    assert partial.early_stop
    assert len(partial.t) > 100


def test_integrate_rejects_outside_start():
    with pytest.raises(SpecError):
        integrate(OSCILLATOR, 0.0, 5.0, 0.0, 1.0, 1e-3)


def test_ode_residual_scale():
    traj = integrate(OSCILLATOR, 0.0, 1.0, 0.0, 3.0, 1e-3)
    r = ode_residual(traj, OSCILLATOR)
    # central-difference floor: h^2/12 * u'''' with u'''' ~ 1
    assert np.max(np.abs(r)) <= 1e-6


# ---------------------------------------------------------------------------
# flows

def test_flow_time_translation_shifts(homogeneous):
    problem, _ = homogeneous
    traj = integrate(problem, 0.0, 1.0, 0.1, 1.0, 1e-3)
    moved = flow_transform(Generator.time_translation(), traj, 0.3,
                           problem=problem)
    assert moved.t[0] == pytest.approx(0.3, abs=1e-12)
    base = np.max(np.abs(ode_residual(traj, problem)))
    shifted = np.max(np.abs(ode_residual(moved, problem)))
    # identical up to re-sampling noise (ulp-level u error over h^2)
    assert shifted == pytest.approx(base, rel=1e-2)


def test_flow_symmetry_preserves_equation(homogeneous):
    problem, report = homogeneous
    gen = Generator.from_report(report)
    traj = integrate(problem, 0.0, 1.0, 0.1, 1.0, 1e-3)
    moved = flow_transform(gen, traj, 0.2, problem=problem)
    assert np.max(np.abs(ode_residual(moved, problem))) <= 1e-4


def test_flow_non_symmetry_fails(homogeneous):
    problem, _ = homogeneous
    control = Generator.from_expressions(parse("t", ("t", "u")),
                                         parse("u^2", ("t", "u")))
    traj = integrate(problem, 0.0, 1.0, 0.1, 1.0, 1e-3)
    moved = flow_transform(control, traj, 0.2, problem=problem)
    assert np.max(np.abs(ode_residual(moved, problem))) >= 1e-2


def test_flow_semigroup(homogeneous):
    problem, report = homogeneous
    gen = Generator.from_report(report)
    traj = integrate(problem, 0.0, 1.0, 0.1, 1.0, 1e-3)
    pts = list(zip(traj.t[::50], traj.u[::50], traj.udot[::50]))
    two_steps = map_jet_points(gen, map_jet_points(gen, pts, 0.12), 0.08)
    one_step = map_jet_points(gen, pts, 0.2)
    worst = max(max(abs(a - b) for a, b in zip(p, q))
                for p, q in zip(two_steps, one_step))
    assert worst <= 1e-6


def test_flow_non_monotone_image_detected():
    traj = integrate(OSCILLATOR, 0.0, 1.0, 0.0, 6.0, 1e-2)
    # time shift proportional to 5u folds where 1 - 1.5 sin(t) < 0
    gen = Generator.from_expressions(parse("5*u", ("t", "u")),
                                     parse("0", ("t", "u")))
    with pytest.raises(NonMonotoneImage):
        flow_transform(gen, traj, 0.3, problem=OSCILLATOR)


def test_flow_exponential_generator(golden):
    problem, report = golden
    gen = Generator.from_report(report)
    traj = integrate(problem, 0.0, 1.0, 0.0, 0.6, 1e-3)
    moved = flow_transform(gen, traj, 0.1, problem=problem)
    assert np.max(np.abs(ode_residual(moved, problem))) <= 1e-4


# ---------------------------------------------------------------------------
# finite-difference generators agree with analytic ones

def test_custom_generator_matches_builtin(golden):
    problem, report = golden
    sf = report.structure
    a = report.a
    analytic = Generator.exponential(a, sf.g_at, sf.g1_at, sf.g2_at)
    pts = jet_points(report.U, problem.n)
    r_analytic = prolongation_residual(analytic, problem, pts)
    # same field through the finite-difference path: g(u) = (2/3) u here
    custom = Generator.from_expressions(
        parse(f"exp({a!r}*t)", ("t", "u")),
        parse(f"{a!r}*exp({a!r}*t)*(2/3)*u", ("t", "u")))
    r_custom = prolongation_residual(custom, problem, pts)
    assert r_analytic <= 1e-9
    assert r_custom <= 1e-4  # finite differences dominate
