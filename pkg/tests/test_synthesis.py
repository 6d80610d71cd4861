import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from helpers import FAMILIES, SEED, draw_spec, golden_hand_exprs, golden_spec

from lienard_sym.classify import classify
from lienard_sym.errors import SpecError
from lienard_sym.exprs import (
    Constant,
    Div,
    Mul,
    differentiate,
    eval_grid,
    evaluate,
    parse,
)
from lienard_sym.structure import Interval, determining_residuals
from lienard_sym.synthesis import (
    SynthesisSpec,
    build_A,
    build_B,
    check_A_recursion,
    homogeneous_kernel,
    synthesize,
)

US = np.linspace(0.55, 1.95, 29)


# ---------------------------------------------------------------------------
# spec plumbing

def test_forced_leading_constant():
    assert golden_spec().b_n == pytest.approx(8.0 / 27.0, rel=1e-15)
    flipped = SynthesisSpec(n=4, F=parse("u"), U=Interval(0.5, 2.0),
                            b=(0.0,) * 4, a=1.0, epsilon=-1, nu=1)
    assert flipped.b_n == pytest.approx(-8.0 / 27.0, rel=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(n=3),
    dict(n=21),
    dict(b=(0.0,) * 3),
    dict(epsilon=2),
])
def test_spec_validation(kwargs):
    base = dict(n=4, F=parse("u"), U=Interval(0.5, 2.0), b=(0.0,) * 4,
                a=1.0, epsilon=1, nu=1)
    base.update(kwargs)
    if "n" in kwargs and "b" not in kwargs:
        base["b"] = (0.0,) * base["n"]
    with pytest.raises(SpecError):
        SynthesisSpec(**base)


# ---------------------------------------------------------------------------
# the auxiliary functions A_k

def test_A_vanishes_without_a():
    spec = SynthesisSpec(n=4, F=parse("u"), U=Interval(0.5, 2.0),
                         b=(1.0, -2.0, 0.3, 0.7), a=0.0, epsilon=1, nu=1)
    A = build_A(spec)
    assert all(a == Constant(0.0) for a in A)


def test_A_golden_closed_forms():
    # n=4, F=u, a=1, free b=0, b4=8/27; binomials 4, 6, 4, 1
    A = build_A(golden_spec())
    for u in US:
        assert evaluate(A[3], u) == pytest.approx(-(32 / 27) * u ** 1.5,
                                                  rel=1e-14)
        assert evaluate(A[2], u) == pytest.approx((16 / 9) * u ** 3,
                                                  rel=1e-14)
        assert evaluate(A[1], u) == pytest.approx(-(32 / 27) * u ** 4.5,
                                                  rel=1e-14)
        assert evaluate(A[0], u) == pytest.approx((8 / 27) * u ** 6,
                                                  rel=1e-14)
    assert evaluate(A[4], 1.0) == 0.0


def test_A_top_entry_single_term():
    # A_{n-1} = -nu n a b_n |F|^((n-1)/(n-2)) for any spec
    rng = np.random.default_rng(SEED)
    for _ in range(10):
        spec = draw_spec(rng)
        if spec.a == 0.0:
            continue
        A = build_A(spec)
        n, a, nu = spec.n, spec.a, spec.nu
        p = (n - 1) / (n - 2)
        for u in np.linspace(spec.U.lo + 0.05, spec.U.hi - 0.05, 7):
            F = evaluate(spec.F, u)
            expect = -nu * n * a * spec.b_n * abs(F) ** p
            assert evaluate(A[n - 1], u) == pytest.approx(expect, rel=1e-12)


def test_recursion_golden_k3():
    # A3' = -(16/9) sqrt(u); the recursion side is -4 (3/2) u^(1/2) (8/27)
    spec = golden_spec()
    A = build_A(spec)
    d = differentiate(A[3])
    for u in US:
        assert evaluate(d, u) == pytest.approx(-(16 / 9) * math.sqrt(u),
                                               rel=1e-13)
    assert check_A_recursion(spec, A) <= 1e-12


def test_recursion_trivial_for_a0():
    spec = SynthesisSpec(n=6, F=parse("exp(u)"), U=Interval(-1.0, 1.0),
                         b=(0.5,) * 6, a=0.0, epsilon=1, nu=1)
    assert check_A_recursion(spec, build_A(spec)) == 0.0


def test_recursion_random_specs():
    rng = np.random.default_rng(SEED + 2)
    for _ in range(20):
        spec = draw_spec(rng)
        assert check_A_recursion(spec, build_A(spec)) <= 1e-9


def test_recursion_detects_corruption():
    # a wrong coefficient or exponent must fail loudly through both tiers
    spec = golden_spec()
    A = build_A(spec)
    bad = list(A)
    bad[2] = Mul(Constant(1.001), A[2])
    assert check_A_recursion(spec, bad) > 1e-3
    bad2 = list(A)
    bad2[3] = parse("-(32/27)*abs(u)^1.4")  # exponent off by 0.1
    assert check_A_recursion(spec, bad2) > 1e-3


# ---------------------------------------------------------------------------
# B_k

def test_B_golden():
    spec = golden_spec()
    B = build_B(spec, build_A(spec))
    for u in US:
        assert evaluate(B[1], u) == pytest.approx(
            -(32 / 27) * u ** 4.5 - u ** 1.5, rel=1e-14)
        assert evaluate(B[0], u) == pytest.approx(
            (8 / 27) * u ** 6 + u ** 3, rel=1e-14)


def test_B_all_zero_for_a0():
    spec = SynthesisSpec(n=5, F=parse("u + 1"), U=Interval(0.1, 3.0),
                         b=(0.4, -1.0, 2.0, 0.0, 1.0), a=0.0,
                         epsilon=1, nu=1)
    B = build_B(spec, build_A(spec))
    assert all(b == Constant(0.0) for b in B)


def test_B2_flips_with_nu():
    spec = SynthesisSpec(n=4, F=parse("-(u + 1)"), U=Interval(0.1, 3.0),
                         b=(0.2, 0.1, 0.4, -0.3), a=1.0, epsilon=1, nu=-1)
    A = build_A(spec)
    B = build_B(spec, A)
    for u in (0.3, 1.1, 2.4):
        assert evaluate(B[2], u) == pytest.approx(-evaluate(A[2], u),
                                                  rel=1e-14)


# ---------------------------------------------------------------------------
# the coefficients themselves

def test_build_f_golden_exact():
    problem, _ = synthesize(golden_spec())
    hand = golden_hand_exprs()
    for k in range(5):
        for u in US:
            assert evaluate(problem.f[k], u) == pytest.approx(
                evaluate(hand[k], u), abs=1e-12)


@settings(max_examples=25, derandomize=True, deadline=None)
@given(
    n=st.integers(min_value=4, max_value=8),
    a=st.sampled_from([0.0, 0.5, -0.5, 1.0, -1.0]),
    eps=st.sampled_from([1, -1]),
    fam=st.integers(min_value=0, max_value=len(FAMILIES) - 1),
    data=st.data(),
)
def test_forced_coefficient_identity(n, a, eps, fam, data):
    # f_n = epsilon (F')^(n-1) for every spec
    b = tuple(data.draw(st.lists(
        st.floats(min_value=-2.0, max_value=2.0), min_size=n, max_size=n)))
    F_text, U = FAMILIES[fam]
    spec = SynthesisSpec(n=n, F=parse(F_text), U=U, b=b, a=a,
                         epsilon=eps, nu=1)
    problem, _ = synthesize(spec)
    us = np.linspace(spec.U.lo + 0.02, spec.U.hi - 0.02, 41)
    fn = eval_grid(problem.f[spec.n], us)
    Fp = eval_grid(differentiate(spec.F), us)
    expect = spec.epsilon * Fp ** (spec.n - 1)
    assert np.max(np.abs(fn - expect)) <= 1e-12 * (1 + np.max(np.abs(expect)))


def test_homogeneous_degeneration():
    # a=0 coefficients are pure power laws in F and F'
    rng = np.random.default_rng(SEED + 4)
    for _ in range(10):
        spec = draw_spec(rng, a=0.0)
        n, r = spec.n, (spec.n - 1) / (spec.n - 2)
        problem, _ = synthesize(spec)
        us = np.linspace(spec.U.lo + 0.02, spec.U.hi - 0.02, 31)
        F = eval_grid(spec.F, us)
        Fp = eval_grid(differentiate(spec.F), us)
        Fpp = eval_grid(differentiate(differentiate(spec.F)), us)
        for k in range(n + 1):
            got = eval_grid(problem.f[k], us)
            if k == 2:
                want = (1 + spec.b[2] * r) * Fp / F - Fpp / Fp
            else:
                bk = spec.b[k] if k < n else spec.b_n
                want = (bk * r ** (k - 1)) * np.abs(F) ** ((k - n) / (n - 2)) \
                    * Fp ** (k - 1)
            assert np.max(np.abs(got - want)) <= 1e-12 * (1 + np.max(np.abs(want)))


def test_homogeneous_linear_F_power_pattern():
    # a=0 with F=u: f_k = b_k' u^((k-4)/2) for k != 2 and f2 = b2'/u,
    # where b_k' = b_k ((n-1)/(n-2))^(k-1) and b2' = 1 + b2 (n-1)/(n-2)
    b = (0.9, -1.1, 0.25, 0.6)
    spec = SynthesisSpec(n=4, F=parse("u"), U=Interval(0.5, 2.0),
                         b=b, a=0.0, epsilon=1, nu=1)
    problem, _ = synthesize(spec)
    r = 1.5
    for u in (0.6, 1.0, 1.8):
        for k in (0, 1, 3, 4):
            bk = b[k] if k < 4 else spec.b_n
            want = bk * r ** (k - 1) * u ** ((k - 4) / 2)
            assert evaluate(problem.f[k], u) == pytest.approx(want,
                                                              rel=1e-13)
        assert evaluate(problem.f[2], u) == pytest.approx(
            (1 + b[2] * r) / u, rel=1e-13)


def test_exponential_F_gives_constant_f2():
    # F = e^u: F'/F and F''/F' both equal 1, so f2 collapses to a constant
    spec = SynthesisSpec(n=4, F=parse("exp(u)"), U=Interval(-1.0, 1.0),
                         b=(0.0, 0.0, 0.0, 0.0), a=0.0, epsilon=1, nu=1)
    problem, _ = synthesize(spec)
    for u in (-0.7, 0.0, 0.9):
        assert evaluate(problem.f[2], u) == pytest.approx(0.0, abs=1e-14)
        assert evaluate(problem.f[4], u) == pytest.approx(math.exp(3 * u),
                                                          rel=1e-12)
    spec_b2 = SynthesisSpec(n=4, F=parse("exp(u)"), U=Interval(-1.0, 1.0),
                            b=(0.0, 0.0, 0.4, 0.0), a=0.0, epsilon=1, nu=1)
    problem_b2, _ = synthesize(spec_b2)
    for u in (-0.7, 0.0, 0.9):
        assert evaluate(problem_b2.f[2], u) == pytest.approx(0.4 * 1.5,
                                                             rel=1e-12)


def test_homogeneous_kernel_solves_decoupled_equations():
    # h_k' g + (k-1) h_k g' + (2-k) h_k = 0 with exact symbolic g
    for F_text, U in FAMILIES:
        F = parse(F_text)
        n = 6
        r = (n - 2) / (n - 1)
        g = Mul(Constant(r), Div(F, differentiate(F)))
        g1 = differentiate(g)
        us = np.linspace(U.lo + 0.05, U.hi - 0.05, 33)
        for k in range(3, n):
            h = homogeneous_kernel(F, n, k)
            resid = (eval_grid(differentiate(h), us) * eval_grid(g, us)
                     + (k - 1) * eval_grid(h, us) * eval_grid(g1, us)
                     + (2 - k) * eval_grid(h, us))
            scale = 1 + np.max(np.abs(eval_grid(h, us)))
            assert np.max(np.abs(resid)) <= 1e-10 * scale


def test_specialization_at_a0_matches_general_rows():
    # the general residual rows with a = 0 equal the reduced homogeneous
    # system exactly (the dropped terms all carry a factor of a)
    rng = np.random.default_rng(SEED + 5)
    spec = draw_spec(rng, a=0.0, n=5)
    problem, _ = synthesize(spec)
    report = classify(problem)
    sf = report.structure
    us = sf.grid_u
    fk = [eval_grid(f, us) for f in problem.f]
    fkp = [eval_grid(differentiate(f), us) for f in problem.f]
    F = sf.F_nodes()
    rows = determining_residuals(spec.n, fk, fkp, F, sf.Fp_g, sf.Fpp_g,
                                 sf.Fppp_g, a=0.0)
    from lienard_sym.structure import g_arrays
    g, g1, g2 = g_arrays(spec.n, F, sf.Fp_g, sf.Fpp_g, sf.Fppp_g)
    reduced = [
        fkp[0] * g - fk[0] * g1 + 2.0 * fk[0],
        fkp[1] * g + fk[1],
        -g2 + fkp[2] * g + fk[2] * g1,
    ]
    for k in range(3, spec.n):
        reduced.append(fkp[k] * g + (k - 1) * fk[k] * g1 + (2 - k) * fk[k])
    for k in range(spec.n):
        assert np.max(np.abs(rows[k] - reduced[k])) == 0.0


# ---------------------------------------------------------------------------
# synthesize guards and round trip

def test_synthesize_rejects_bad_F():
    with pytest.raises(SpecError):  # F' <= 0 on part of U
        synthesize(SynthesisSpec(n=4, F=parse("u^2"), U=Interval(-1.0, 1.0),
                                 b=(0.0,) * 4, a=0.0, epsilon=1, nu=1))
    with pytest.raises(SpecError):  # F vanishes inside U
        synthesize(SynthesisSpec(n=4, F=parse("u - 1"), U=Interval(0.5, 2.0),
                                 b=(0.0,) * 4, a=0.0, epsilon=1, nu=1))
    with pytest.raises(SpecError):  # nu disagrees with the sign of F
        synthesize(SynthesisSpec(n=4, F=parse("u"), U=Interval(0.5, 2.0),
                                 b=(0.0,) * 4, a=0.0, epsilon=1, nu=-1))


def test_synthesize_round_trip_smoke():
    rng = np.random.default_rng(SEED + 6)
    for _ in range(5):
        spec = draw_spec(rng)
        problem, expected = synthesize(spec)
        report = classify(problem)
        assert report.dimension == expected.dimension == 2
        assert report.a == pytest.approx(spec.a, abs=1e-6)
        assert report.generator2.kind == expected.generator2.kind
