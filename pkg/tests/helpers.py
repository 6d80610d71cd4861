"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from lienard_sym.exprs import parse
from lienard_sym.structure import Interval
from lienard_sym.synthesis import SynthesisSpec

SEED = 20250808

# Scale functions used by the randomized suites: positive, increasing,
# three times differentiable on their intervals.
FAMILIES = (
    ("u + 1", Interval(0.1, 3.0)),
    ("exp(u)", Interval(-1.0, 1.0)),
    ("u^2", Interval(0.5, 2.0)),
)

A_CHOICES = (0.0, 0.5, -0.5, 1.0, -1.0)


def draw_spec(rng: np.random.Generator, n: int | None = None,
              a: float | None = None, family: int | None = None,
              ) -> SynthesisSpec:
    """One random synthesis spec from the acceptance distribution."""
    if family is None:
        family = int(rng.integers(0, len(FAMILIES)))
    F_text, U = FAMILIES[family]
    if n is None:
        n = int(rng.integers(4, 9))
    if a is None:
        a = float(rng.choice(A_CHOICES))
    b = tuple(float(x) for x in rng.uniform(-2.0, 2.0, n))
    eps = int(rng.choice([1, -1]))
    return SynthesisSpec(n=n, F=parse(F_text), U=U, b=b, a=a,
                         epsilon=eps, nu=1)


def golden_spec() -> SynthesisSpec:
    """n=4, F=u, a=1, all free constants zero: the hand-verified family."""
    return SynthesisSpec(n=4, F=parse("u"), U=Interval(0.5, 2.0),
                         b=(0.0, 0.0, 0.0, 0.0), a=1.0, epsilon=1, nu=1)


GOLDEN_F_TEXT = (
    "(16/81)*u^4 + (2/3)*u",   # f0
    "-(32/27)*u^3 - 1",        # f1
    "(8/3)*u^2 + 1/u",         # f2
    "-(8/3)*u",                # f3
    "1",                       # f4
)


def golden_hand_exprs():
    return tuple(parse(s) for s in GOLDEN_F_TEXT)
