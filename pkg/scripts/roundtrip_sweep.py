#!/usr/bin/env python3
"""Randomized synthesize -> classify sweep.

Draws random integrable families, runs the classifier on each, and
prints recovery statistics (dimension, error in the constant a, worst
determining residual, offset).  A nonzero exit means at least one family
failed to round-trip.
"""

import argparse
import sys
import time

import numpy as np

from lienard_sym.classify import classify
from lienard_sym.exprs import parse
from lienard_sym.structure import Interval
from lienard_sym.synthesis import SynthesisSpec, synthesize

FAMILIES = (
    ("u + 1", Interval(0.1, 3.0)),
    ("exp(u)", Interval(-1.0, 1.0)),
    ("u^2", Interval(0.5, 2.0)),
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-max", type=int, default=8)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    t0 = time.monotonic()
    failures = 0
    worst_a_err = 0.0
    worst_resid_rel = 0.0
    for trial in range(args.count):
        F_text, U = FAMILIES[trial % len(FAMILIES)]
        n = int(rng.integers(4, args.n_max + 1))
        a = float(rng.choice([0.0, 0.5, -0.5, 1.0, -1.0]))
        spec = SynthesisSpec(
            n=n, F=parse(F_text), U=U,
            b=tuple(float(x) for x in rng.uniform(-2, 2, n)),
            a=a, epsilon=int(rng.choice([1, -1])), nu=1)
        problem, _ = synthesize(spec)
        report = classify(problem)
        a_err = abs(report.a - a) if report.a is not None else float("inf")
        resid = max(report.residuals.values()) if report.residuals else float("inf")
        rel = resid / report.threshold if report.threshold else float("inf")
        ok = report.dimension == 2 and a_err <= 1e-6
        worst_a_err = max(worst_a_err, a_err)
        worst_resid_rel = max(worst_resid_rel, rel)
        if not ok:
            failures += 1
            print(f"FAIL trial={trial} n={n} a={a} F={F_text}: "
                  f"dim={report.dimension} a_err={a_err:.2e} "
                  f"({report.failure})")
    dt = time.monotonic() - t0
    print(f"{args.count - failures}/{args.count} families round-tripped "
          f"in {dt:.1f}s")
    print(f"worst |a_recovered - a|: {worst_a_err:.2e}")
    print(f"worst residual / threshold: {worst_resid_rel:.2e}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
