"""Command-line interface.

    nldoe eval DESIGN.csv --model mechanistic --prior 5.9,1.15,0.53,-0.01,15475,7489
    nldoe search --spec runspecs/example1.json --algorithm continuous-pea --out best.csv
    nldoe multiphase --spec runspecs/example1.json
    nldoe fit DATA.csv --model hybrid --init 0.4,1.3,-0.1,-0.8,0.4,-2 --transform conversion
    nldoe efficiency A.csv B.csv --model hybrid --prior prior.json
    nldoe standard-design --kind box_behnken --example 1 --out bbd.csv

Exit codes: 0 success, 2 invalid input, 3 singular design or no
nonsingular start, 4 fit did not converge.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import CandidateSet, Design, DesignRegion, Model
from .criterion import log_det, model_matrix, relative_efficiency
from .errors import NldoeError, SearchError, SingularDesignError
from .io import (
    RunSpec,
    design_to_csv,
    load_model,
    load_runspec,
    parse_levels,
    parse_prior,
    parse_region,
    parse_vector,
    read_data_csv,
    read_design_csv,
    write_design_csv,
)
from .multiphase import ClosestDistances, multiphase
from .optim import NmOptions, nls_fit
from .reference import STANDARD_KINDS, conversion_transform, standard_design
from .search import ALGORITHMS, SearchConfig

log = logging.getLogger("nldoe")

EXIT_OK, EXIT_INVALID, EXIT_SINGULAR, EXIT_NOT_CONVERGED = 0, 2, 3, 4
TRANSFORMS = {"none": None, "conversion": conversion_transform}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------


def fmt_phi(x: float) -> str:
    return f"{x:.4f}" if math.isfinite(x) else ("-inf" if x < 0 else str(x))


def fmt_det(logdet: float) -> str:
    """|M| from its log without overflow, in scientific notation."""
    if not math.isfinite(logdet):
        return "0"
    e10 = logdet / math.log(10.0)
    exp = math.floor(e10)
    return f"{10 ** (e10 - exp):.6f}e{exp:+d}"


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2)


def _support_lines(design: Design) -> list[str]:
    pts, counts = design.support()
    names = design.region.names
    width = max(12, *(len(n) + 2 for n in names))
    lines = ["".join(f"{n:>{width}}" for n in names) + f"{'reps':>6}"]
    for p, c in zip(pts, counts):
        lines.append("".join(f"{repr(float(u)):>{width}}" for u in p) + f"{int(c):>6}")
    return lines


def _support_json(design: Design) -> list[dict]:
    pts, counts = design.support()
    return [{"point": p.tolist(), "replicates": int(c)} for p, c in zip(pts, counts)]


# ---------------------------------------------------------------------------
# assembling inputs
# ---------------------------------------------------------------------------


def _spec_from_args(args) -> RunSpec:
    spec = load_runspec(args.spec) if getattr(args, "spec", None) else RunSpec()
    overrides = {k: getattr(args, k, None) for k in (
        "model", "prior", "region", "n", "algorithm", "levels", "candidates", "closest", "tries",
        "critical", "seed", "max_iterations", "threads", "phase1_tries", "phase1_critical", "phase2")}
    if getattr(args, "extra_starts", None) is not None:
        overrides["extra_start_levels"] = args.extra_starts
        spec.extra_starts = None
    return spec.update(**overrides)


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"missing {flag} (give it as a flag or in the --spec file)")
    return value


def _check_factors(model: Model, names, what: str):
    if tuple(names) != tuple(model.factors):
        raise UsageError(f"{what} factors {list(names)} do not match model factors {list(model.factors)}")


def _model_and_prior(spec: RunSpec) -> tuple[Model, np.ndarray]:
    model = load_model(_require(spec.model, "--model"))
    return model, parse_prior(_require(spec.prior, "--prior"), model)


def _candidates(spec: RunSpec, model: Model, region: DesignRegion | None) -> CandidateSet | None:
    if spec.levels is not None:
        levels = parse_levels(spec.levels)
        if len(levels) != model.v:
            raise UsageError(f"levels given for {len(levels)} factors, model has {model.v}")
        return CandidateSet.from_levels(levels, region)
    if spec.candidates is not None:
        if isinstance(spec.candidates, str):
            pts = read_design_csv(spec.candidates, region=region, model=model).rows
        else:
            pts = np.array([parse_vector(p, "candidates") for p in spec.candidates])
        return CandidateSet.from_points(pts, region)
    return None


def _extra_starts(spec: RunSpec, region: DesignRegion | None) -> tuple:
    if spec.extra_starts is not None:
        pts = [tuple(parse_vector(p, "extra start")) for p in spec.extra_starts]
    elif spec.extra_start_levels is not None:
        pts = list(itertools.product(*parse_levels(spec.extra_start_levels, "extra start levels")))
    else:
        return ()
    if region is not None:
        for p in pts:
            if len(p) != region.v or not region.contains(p):
                raise UsageError(f"extra start {list(p)} lies outside the region")
    return tuple(pts)


def _region(spec: RunSpec, model: Model, required: bool) -> DesignRegion | None:
    if spec.region is None:
        if required:
            raise UsageError("missing --region (give it as a flag or in the --spec file)")
        return None
    region = parse_region(spec.region, spec.closest)
    _check_factors(model, region.names, "region")
    return region


def _config(spec: RunSpec, extra, tries=None, critical=None) -> SearchConfig:
    try:
        return SearchConfig(tries=int(tries if tries is not None else spec.tries),
                            critical_value=float(critical if critical is not None else spec.critical),
                            seed=int(spec.seed), max_iterations=int(spec.max_iterations),
                            extra_starts=extra, threads=int(spec.threads), nm=NmOptions())
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _n(spec: RunSpec) -> int:
    n = int(_require(spec.n, "--n"))
    if n < 1:
        raise UsageError("--n must be a positive integer")
    return n


def _write_outputs(args, design: Design, payload: dict):
    if getattr(args, "out", None):
        write_design_csv(args.out, design)
    if getattr(args, "trace", None):
        Path(args.trace).write_text(dump_json(payload))
    if args.json:
        print(dump_json(payload))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    spec = _spec_from_args(args)
    model, theta = _model_and_prior(spec)
    region = _region(spec, model, required=False)
    design = read_design_csv(args.design, region=region, model=model)
    _check_factors(model, design.region.names, "design")
    F = model_matrix(model, design, theta)
    value = log_det(F)
    pts, counts = design.support()
    payload = {"design": str(args.design), "model": model.name, "phi": value, "det": fmt_det(value),
               "n": design.n, "p": model.p, "distinct_points": int(pts.shape[0]),
               "support": _support_json(design)}
    if args.json:
        print(dump_json(payload))
    else:
        print(f"phi        {fmt_phi(value)}")
        print(f"|F'F|      {fmt_det(value)}")
        print(f"n, p       {design.n}, {model.p}")
        print(f"distinct   {pts.shape[0]}")
        print("\n".join(_support_lines(design)))
    if math.isfinite(value):
        return EXIT_OK
    print(f"nldoe: {args.design}: singular information matrix "
          f"({pts.shape[0]} distinct points, {model.p} parameters)", file=sys.stderr)
    return EXIT_SINGULAR


def cmd_search(args) -> int:
    spec = _spec_from_args(args)
    if spec.algorithm not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {spec.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    model, theta = _model_and_prior(spec)
    continuous = spec.algorithm.startswith("continuous")
    region = _region(spec, model, required=continuous)
    n = _n(spec)
    extra = _extra_starts(spec, region)
    config = _config(spec, extra if continuous else ())
    if continuous:
        result = ALGORITHMS[spec.algorithm](model, theta, region, n, config)
    else:
        omega = _candidates(spec, model, region)
        if omega is None:
            raise UsageError("discrete search needs --levels or candidates")
        if spec.algorithm == "discrete-cea" and omega.levels is None:
            raise UsageError("discrete-cea needs per-factor --levels")
        result = ALGORITHMS[spec.algorithm](model, theta, omega, n, config, region=region)
    payload = result.to_dict()
    payload["model"] = model.name
    if not args.json:
        print(f"algorithm        {result.algorithm}")
        print(f"best phi         {fmt_phi(result.phi)}")
        print(f"best three       {', '.join(fmt_phi(x) for x in result.best_phis(3))}")
        print(f"mean phi         {fmt_phi(result.mean_phi)}")
        print(f"mean iterations  {result.mean_iterations:.2f}")
        print(f"failed tries     {sum(t.failed for t in result.traces)} of {len(result.traces)}")
        print(f"wall time        {result.wall_time:.2f} s")
        print("\n".join(_support_lines(result.design)))
    _write_outputs(args, result.design, payload)
    return EXIT_OK


def cmd_multiphase(args) -> int:
    spec = _spec_from_args(args)
    model, theta = _model_and_prior(spec)
    region = _region(spec, model, required=True)
    if any(c is None for c in region.closest):
        raise UsageError("multiphase needs a closest distance for every factor (--closest)")
    if spec.phase2 not in ("pea", "cea"):
        raise UsageError(f"--phase2 must be pea or cea, got {spec.phase2!r}")
    n = _n(spec)
    omega = _candidates(spec, model, region)
    if omega is None:
        raise UsageError("multiphase needs --levels or candidates for phase 1")
    extra = _extra_starts(spec, region)
    p1 = _config(spec, (), tries=spec.phase1_tries, critical=spec.phase1_critical)
    p2 = _config(spec, extra)
    result = multiphase(model, theta, omega, region, n, ClosestDistances.of(region.closest, region), p1, p2,
                        spec.phase2)
    payload = result.to_dict()
    payload["model"] = model.name
    if not args.json:
        print(f"phase 1 distinct designs  {result.phase1_distinct}")
        print(f"phase 2 best phi          {fmt_phi(result.phase2.phi)}")
        print(f"phase 2 mean phi          {fmt_phi(result.phase2.mean_phi)}")
        print(f"phase 2 mean iterations   {result.phase2.mean_iterations:.2f}")
        print(f"snapped phi               {fmt_phi(result.snapped_phi)}")
        print(f"final phi                 {fmt_phi(result.phi)}")
        print(f"distinct points n*        {result.n_star}")
        print(f"wall time                 {result.wall_time:.2f} s")
        print("\n".join(_support_lines(result.design)))
    _write_outputs(args, result.design, payload)
    return EXIT_OK


def cmd_fit(args) -> int:
    model = load_model(args.model)
    theta0 = parse_prior(args.init, model)
    X, y = read_data_csv(args.data, model.factors, args.response)
    res = nls_fit(model, X, y, theta0, TRANSFORMS[args.transform], restarts=args.restarts, seed=args.seed)
    payload = {"model": model.name, "params": list(model.params), "theta_hat": res.theta_hat.tolist(),
               "sse": res.sse, "evaluations": res.evals, "converged": res.converged,
               "rows_used": int(np.isfinite(y).sum())}
    if args.json:
        print(dump_json(payload))
    else:
        for name, val in zip(model.params, res.theta_hat):
            print(f"{name:<10} {val: .6f}")
        print(f"SSE        {res.sse:.6g}")
        print(f"evals      {res.evals}")
        print(f"converged  {'yes' if res.converged else 'no'}")
    if args.out:
        Path(args.out).write_text(dump_json({"theta": res.theta_hat.tolist(), "params": list(model.params)}))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_efficiency(args) -> int:
    spec = _spec_from_args(args)
    model, theta = _model_and_prior(spec)
    region = _region(spec, model, required=False)
    phis = []
    for path in (args.design_a, args.design_b):
        d = read_design_csv(path, region=region, model=model)
        phis.append(log_det(model_matrix(model, d, theta)))
    if not all(math.isfinite(x) for x in phis):
        raise SingularDesignError("a design has a singular information matrix")
    eff = relative_efficiency(phis[0], phis[1], model.p)
    payload = {"phi_a": phis[0], "phi_b": phis[1], "p": model.p, "efficiency": eff}
    if args.json:
        print(dump_json(payload))
    else:
        print(f"phi A       {fmt_phi(phis[0])}")
        print(f"phi B       {fmt_phi(phis[1])}")
        print(f"efficiency  {eff:.2f}%")
    return EXIT_OK


def cmd_standard_design(args) -> int:
    design = standard_design(args.kind, args.example)
    if args.out:
        write_design_csv(args.out, design)
    else:
        sys.stdout.write(design_to_csv(design))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_model_args(p, prior_flag="--prior"):
    p.add_argument("--spec", help="run-spec JSON file; flags override its entries")
    p.add_argument("--model", help="builtin model name or model-spec JSON file")
    p.add_argument(prior_flag, dest="prior", help="comma-separated values or a JSON file")
    p.add_argument("--region", help='"R=1.5:6,C=1:4,..." or a JSON file')
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")


def _add_search_args(p):
    p.add_argument("--n", type=int, help="number of runs")
    p.add_argument("--levels", help='per-factor candidate levels, "1.5,3,6;1,2,4;70,80,90"')
    p.add_argument("--candidates", help="CSV of candidate points")
    p.add_argument("--extra-starts", dest="extra_starts",
                   help="per-factor levels whose product gives extra Nelder-Mead starts")
    p.add_argument("--tries", type=int)
    p.add_argument("--critical", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--threads", type=int, help="maximum number of tries run concurrently")
    p.add_argument("--closest", help="comma-separated closest distances")
    p.add_argument("--out", help="write the best design to this CSV")
    p.add_argument("--trace", help="write the full JSON report to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nldoe", description="Locally D-optimal exact designs for nonlinear models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="criterion value of a design")
    p.add_argument("design", help="design CSV")
    _add_model_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="exchange search for an optimal design")
    _add_model_args(p)
    _add_search_args(p)
    p.add_argument("--algorithm", help=f"one of {', '.join(ALGORITHMS)}")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("multiphase", help="discrete, continuous, then snapped search")
    _add_model_args(p)
    _add_search_args(p)
    p.add_argument("--phase1-tries", dest="phase1_tries", type=int)
    p.add_argument("--phase1-critical", dest="phase1_critical", type=float)
    p.add_argument("--phase2", help="continuous phase: pea or cea")
    p.set_defaults(func=cmd_multiphase)

    p = sub.add_parser("fit", help="nonlinear least-squares fit")
    p.add_argument("data", help="data CSV: factor columns and one response column")
    p.add_argument("--model", required=True)
    p.add_argument("--init", required=True, help="starting parameter values")
    p.add_argument("--response", help="response column name (default: the non-factor column)")
    p.add_argument("--transform", choices=sorted(TRANSFORMS), default="none",
                   help="response map; 'conversion' is xi/(100-xi)")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the estimates as a prior JSON file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("efficiency", help="relative D-efficiency of design A to design B")
    p.add_argument("design_a")
    p.add_argument("design_b")
    _add_model_args(p)
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("standard-design", help="print a reference design")
    p.add_argument("--kind", required=True, choices=STANDARD_KINDS)
    p.add_argument("--example", required=True, type=int, choices=(1, 2))
    p.add_argument("--out")
    p.set_defaults(func=cmd_standard_design)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SingularDesignError, SearchError) as exc:
        print(f"nldoe: error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ValueError, NldoeError) as exc:
        print(f"nldoe: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
