"""Command-line interface: classify, synthesize, verify, simulate.

File roles: TOML in (human-authored problems and synthesis specs), JSON
out (reports), CSV out (grids and trajectories).  Exit codes: 0 success
(classify: dimension 2), 1 negative result (classify: dimension 1;
verify: residual over tolerance; simulate: early stop / blow-up), 2 input
or analysis error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .classify import ProblemSpec, classify
from .config import ClassifyConfig, JetBox, DEFAULT_JET_BOX
from .errors import (
    AmbiguousOffset,
    BlowUp,
    LienardSymError,
    ParseError,
    SpecError,
)
from .exprs import parse, to_text
from .structure import Interval, a_of_u
from .synthesis import SynthesisSpec, synthesize
from .verify import (
    Generator,
    coefficient_residuals,
    flow_transform,
    integrate,
    jet_points,
    ode_residual,
    prolongation_residual,
)

log = logging.getLogger(__name__)

SCHEMA = 1
EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_ERROR = 2


def _setup_logging():
    level = os.environ.get("LIENARD_SYM_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# File formats

def load_problem(path: str) -> tuple[ProblemSpec, dict]:
    """Problem TOML: n, interval = [lo, hi], f0..fn strings, [options]."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    try:
        n = int(data["n"])
        lo, hi = data["interval"]
        fs = []
        for k in range(n + 1):
            key = f"f{k}"
            if key not in data:
                raise SpecError(f"{path}: missing coefficient {key}")
            fs.append(parse(str(data[key])))
    except KeyError as exc:
        raise SpecError(f"{path}: missing required key {exc}") from None
    problem = ProblemSpec(n=n, interval=Interval(float(lo), float(hi)),
                          f=tuple(fs))
    return problem, data.get("options", {})


def config_from(options: dict, args) -> ClassifyConfig:
    """Defaults, overridden by the problem file, overridden by flags."""
    cfg = ClassifyConfig()
    fields = {}
    for name in ("grid_size", "scan_size", "offset_seeds", "quad_max_depth"):
        if name in options:
            fields[name] = int(options[name])
    for name in ("margin_rel", "quad_tol", "offset_span_factor",
                 "tol_const", "residual_tol", "merge_tol"):
        if name in options:
            fields[name] = float(options[name])
    if "offset_range" in options:
        lo, hi = options["offset_range"]
        fields["offset_range"] = (float(lo), float(hi))
    if getattr(args, "grid", None):
        fields["grid_size"] = args.grid
    if getattr(args, "tol", None):
        fields["residual_tol"] = args.tol
    return replace(cfg, **fields)


def load_synthesis_spec(path: str) -> tuple[SynthesisSpec, str]:
    """Synthesis TOML: n, F, interval, a, b = [...], epsilon, nu."""
    with open(path, "rb") as fh:
        raw = fh.read()
    digest = hashlib.sha256(raw).hexdigest()
    data = tomllib.loads(raw.decode("utf-8"))
    try:
        lo, hi = data["interval"]
        spec = SynthesisSpec(
            n=int(data["n"]),
            F=parse(str(data["F"])),
            U=Interval(float(lo), float(hi)),
            b=tuple(float(x) for x in data["b"]),
            a=float(data["a"]),
            epsilon=int(data.get("epsilon", 1)),
            nu=int(data.get("nu", 1)),
        )
    except KeyError as exc:
        raise SpecError(f"{path}: missing required key {exc}") from None
    return spec, digest


def problem_to_toml(problem: ProblemSpec, provenance: Optional[str] = None,
                    ) -> str:
    lines = []
    if provenance:
        lines.append(f'source_spec_sha256 = "{provenance}"')
    lines.append(f"n = {problem.n}")
    lines.append(f"interval = [{problem.interval.lo!r}, "
                 f"{problem.interval.hi!r}]")
    for k, f in enumerate(problem.f):
        lines.append(f'f{k} = "{to_text(f)}"')
    return "\n".join(lines) + "\n"


def report_json(result: dict, command: str, config: Optional[ClassifyConfig],
                timing: Optional[float], extra: Optional[dict] = None) -> str:
    doc = {
        "schema": SCHEMA,
        "tool": "lienard-sym",
        "version": __version__,
        "command": command,
        "result": result,
    }
    if config is not None:
        doc["config"] = {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in vars(config).items()}
    if extra:
        doc.update(extra)
    if timing is not None:
        doc["timing_s"] = round(timing, 6)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(text: str, out: Optional[str]):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _write_csv(path: Optional[str], header: Sequence[str], rows):
    fh = sys.stdout if path is None or path == "-" else open(path, "w",
                                                             newline="")
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


# ---------------------------------------------------------------------------
# classify

def _classify_one(path: str, args) -> tuple[int, str]:
    t0 = time.time()
    problem, options = load_problem(path)
    cfg = config_from(options, args)
    try:
        report = classify(problem, cfg)
    except AmbiguousOffset as err:
        result = {"error": {"type": "AmbiguousOffset",
                            "offsets": err.offsets}}
        text = report_json(result, "classify", cfg,
                           None if args.no_timing else time.time() - t0,
                           extra={"problem_path": path})
        return EXIT_ERROR, text
    if args.csv_out and report.structure is not None:
        sf = report.structure
        us = sf.grid_u
        F = sf.F_nodes()
        from .structure import g_arrays
        g, _, _ = g_arrays(sf.n, F, sf.Fp_g, sf.Fpp_g, sf.Fppp_g)
        a_vals = a_of_u(problem.f[problem.n], problem.f[problem.n - 1],
                        sf).values
        _write_csv(args.csv_out, ("u", "F", "g", "a"),
                   zip(us, F, g, a_vals))
    text = report_json(report.to_json_dict(), "classify", cfg,
                       None if args.no_timing else time.time() - t0,
                       extra={"problem_path": path})
    code = EXIT_OK if report.dimension == 2 else EXIT_NEGATIVE
    return code, text


def cmd_classify(args) -> int:
    paths = args.problem
    if len(paths) == 1:
        code, text = _classify_one(paths[0], args)
        _write(text, args.out)
        return code
    # batch mode: one report file per input, workers optional
    worst = EXIT_OK
    results = {}
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as ex:
            futs = {ex.submit(_classify_one, p, args): p for p in paths}
            for fut in concurrent.futures.as_completed(futs):
                results[futs[fut]] = fut.result()
    else:
        for p in paths:
            results[p] = _classify_one(p, args)
    for p in paths:
        code, text = results[p]
        _write(text, p + ".report.json")
        dim = {EXIT_OK: 2, EXIT_NEGATIVE: 1}.get(code)
        print(f"{p}: {'dimension ' + str(dim) if dim else 'error'} "
              f"-> {p}.report.json")
        worst = max(worst, code)
    return worst


# ---------------------------------------------------------------------------
# synthesize

def cmd_synthesize(args) -> int:
    spec, digest = load_synthesis_spec(args.spec)
    problem, expected = synthesize(spec)
    ptoml = problem_to_toml(problem, provenance=digest)
    result = expected.to_json_dict()
    result["source_spec_sha256"] = digest
    rjson = report_json(result, "synthesize", None, None)
    if args.emit in ("problem", "both"):
        _write(ptoml, args.out)
    if args.emit == "report":
        _write(rjson, args.report_out or args.out)
    elif args.emit == "both":
        where = args.report_out
        if where is None and args.out:
            where = args.out + ".report.json"
        _write(rjson, where)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def _build_generator(args, problem, report):
    gspec = args.generator
    if gspec.startswith("builtin:"):
        if report is None or report.structure is None:
            raise SpecError("cannot build structure functions for a "
                            "builtin generator on this problem")
        sf = report.structure
        parts = gspec.split(":")
        if parts[1] == "scaling":
            return Generator.scaling(sf.g_at, sf.g1_at, sf.g2_at)
        if parts[1] == "exponential":
            if len(parts) < 3:
                raise SpecError("builtin:exponential needs a value, e.g. "
                                "builtin:exponential:1.0")
            return Generator.exponential(float(parts[2]), sf.g_at,
                                         sf.g1_at, sf.g2_at)
        raise SpecError(f"unknown builtin generator {parts[1]!r}")
    if gspec == "custom":
        if not args.xi or not args.eta:
            raise SpecError("custom generator needs --xi and --eta")
        xi = parse(args.xi, variables=("t", "u"))
        eta = parse(args.eta, variables=("t", "u"))
        return Generator.from_expressions(xi, eta)
    raise SpecError(f"unknown generator spec {gspec!r}; use builtin:scaling, "
                    "builtin:exponential:<a>, or custom")


def _jet_box_from(args) -> JetBox:
    if not args.jet_box:
        return DEFAULT_JET_BOX
    vals = [float(x) for x in args.jet_box.split(",")]
    if len(vals) != 6:
        raise SpecError("--jet-box wants t_lo,t_hi,u_lo,u_hi,w_lo,w_hi")
    return JetBox(t_lo=vals[0], t_hi=vals[1], u_margin=0.0,
                  udot_lo=vals[4], udot_hi=vals[5])


def cmd_verify(args) -> int:
    t0 = time.time()
    problem, options = load_problem(args.problem)
    cfg = config_from(options, args)
    report = None
    if args.generator.startswith("builtin:"):
        report = classify(problem, cfg)
    gen = _build_generator(args, problem, report)

    box = _jet_box_from(args)
    if args.jet_box:
        vals = [float(x) for x in args.jet_box.split(",")]
        U = Interval(vals[2], vals[3])
    elif report is not None and report.U is not None:
        U = report.U
    else:
        U = problem.interval
    pts = jet_points(U, problem.n, box)
    resid = prolongation_residual(gen, problem, pts)

    per_power = None
    try:
        t_vals = sorted({p.t for p in pts})
        u_vals = sorted({p.u for p in pts})
        cr = coefficient_residuals(gen, problem, t_vals, u_vals)
        per_power = {str(k): float(np.max(np.abs(v))) for k, v in cr.items()}
    except ValueError:
        pass  # xi depends on u; the scalar residual covers it

    flow_resid = None
    if args.flow is not None:
        u0 = args.u0 if args.u0 is not None else 0.5 * (U.lo + U.hi)
        traj = integrate(problem, 0.0, u0, args.v0, args.t_end, args.h)
        moved = flow_transform(gen, traj, args.flow, problem=problem)
        r = ode_residual(moved, problem)
        flow_resid = float(np.max(np.abs(r))) if len(r) else 0.0

    passed = resid <= args.tol and (flow_resid is None
                                    or flow_resid <= args.flow_tol)
    result = {
        "prolongation_residual": resid,
        "coefficient_residuals": per_power,
        "flow_residual": flow_resid,
        "tol": args.tol,
        "pass": passed,
    }
    _write(report_json(result, "verify", cfg,
                       None if args.no_timing else time.time() - t0,
                       extra={"problem_path": args.problem,
                              "generator": args.generator}),
           args.out)
    return EXIT_OK if passed else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    problem, _ = load_problem(args.problem)
    code = EXIT_OK
    summary = {}
    try:
        traj = integrate(problem, 0.0, args.u0, args.v0, args.t_end, args.h)
    except BlowUp as err:
        traj = err.trajectory
        summary["blow_up"] = True
        code = EXIT_NEGATIVE
    if traj.early_stop:
        summary["early_stop"] = True
        code = EXIT_NEGATIVE
    _write_csv(args.out, ("t", "u", "udot"),
               zip(traj.t, traj.u, traj.udot))
    r = ode_residual(traj, problem)
    summary["ode_residual"] = float(np.max(np.abs(r))) if len(r) else 0.0
    summary["samples"] = int(len(traj.t))

    if args.flow is not None:
        gen_name, s_text = args.flow.rsplit(",", 1)
        s = float(s_text)
        fake = argparse.Namespace(generator=gen_name, xi=args.xi,
                                  eta=args.eta, grid=None, tol=None)
        report = None
        if gen_name.startswith("builtin:"):
            report = classify(problem, ClassifyConfig())
        gen = _build_generator(fake, problem, report)
        moved = flow_transform(gen, traj, s, problem=problem)
        flow_out = args.flow_out or (
            (args.out + ".flow.csv") if args.out and args.out != "-"
            else None)
        if flow_out:
            _write_csv(flow_out, ("t", "u", "udot"),
                       zip(moved.t, moved.u, moved.udot))
        rf = ode_residual(moved, problem)
        summary["flow_residual"] = float(np.max(np.abs(rf))) if len(rf) \
            else 0.0
    if args.out and args.out != "-":
        sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        sys.stderr.write(json.dumps(summary, sort_keys=True) + "\n")
    return code


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lienard-sym",
        description="Point-symmetry analysis of generalized Lienard "
                    "equations u'' = sum f_k(u) u'^k")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="decide the symmetry dimension")
    p.add_argument("problem", nargs="+", help="problem TOML file(s)")
    p.add_argument("--out", default=None, help="report path (default stdout)")
    p.add_argument("--csv-out", default=None,
                   help="write the (u, F, g, a) grid as CSV")
    p.add_argument("--grid", type=int, default=None, help="grid size")
    p.add_argument("--tol", type=float, default=None,
                   help="residual pass tolerance factor")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for several problem files")
    p.add_argument("--no-timing", action="store_true",
                   help="omit the timing field (byte-stable reports)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("synthesize",
                       help="build a family with a second symmetry")
    p.add_argument("spec", help="synthesis spec TOML file")
    p.add_argument("--emit", choices=("problem", "report", "both"),
                   default="problem")
    p.add_argument("--out", default=None)
    p.add_argument("--report-out", default=None)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("verify", help="check a generator against a problem")
    p.add_argument("problem")
    p.add_argument("--generator", required=True,
                   help="builtin:scaling | builtin:exponential:<a> | custom")
    p.add_argument("--xi", default=None, help="custom xi(t,u)")
    p.add_argument("--eta", default=None, help="custom eta(t,u)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--flow-tol", type=float, default=1e-4)
    p.add_argument("--jet-box", default=None,
                   help="t_lo,t_hi,u_lo,u_hi,w_lo,w_hi")
    p.add_argument("--flow", type=float, default=None,
                   help="also flow-check with this parameter")
    p.add_argument("--u0", type=float, default=None)
    p.add_argument("--v0", type=float, default=0.0)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="integrate the equation, write CSV")
    p.add_argument("problem")
    p.add_argument("--u0", type=float, required=True)
    p.add_argument("--v0", type=float, default=0.0)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--out", default=None, help="trajectory CSV, '-' = stdout")
    p.add_argument("--flow", default=None,
                   help="generator,s e.g. builtin:scaling,0.2")
    p.add_argument("--flow-out", default=None)
    p.add_argument("--xi", default=None)
    p.add_argument("--eta", default=None)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_ERROR
    except (LienardSymError, OSError, ValueError) as err:
        sys.stderr.write(f"error: {type(err).__name__}: {err}\n")
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
