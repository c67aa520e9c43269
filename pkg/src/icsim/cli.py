"""Command-line entry point: ``icsim <subcommand> ...``.

Exit codes: 0 success, 1 a verification check failed, 2 usage or input error,
3 numerical error (singular matrix, divergence, missing optimum).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .algorithms import AlgorithmConfig, run, trajectory_csv
from .errors import IcsimError, NumericalError
from .fixed_point import fixed_point, fixed_point_exists, fixed_point_to_dict
from .harness.experiment import ExperimentConfig, atomic_write, rows_to_csv, run_experiment
from .harness.schedules import parse_schedule
from .harness.verify import SUITES, verify
from .heterogeneity import heterogeneity_report
from .instances import GENERATORS, build_instance
from .quad_core import instance_from_dict, instance_to_json, load_instance
from .theory_bounds import EVALUATORS, BoundParams, evaluate

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _kv_pairs(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise IcsimError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def _emit(text: str, path: str | None) -> None:
    if path:
        atomic_write(Path(path), text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_instance(args) -> int:
    params = _kv_pairs(args.param)
    if args.params_json:
        params.update(json.loads(Path(args.params_json).read_text()))
    inst = build_instance(args.generator, params)
    _emit(instance_to_json(inst), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    data = json.loads(Path(args.config).read_text())
    if "algorithms" in data:  # a full experiment config
        cfg = ExperimentConfig.load(args.config)
        records = run_experiment(cfg, args.output)
        print(f"{len(records)} runs, {sum(r.status != 'ok' for r in records)} not ok")
        return EXIT_OK
    src = data.get("instance")
    if src is None:
        raise IcsimError("simulate config needs an 'instance' entry")
    if "file" in src:
        p = Path(src["file"])
        inst = load_instance(p if p.is_absolute() else Path(args.config).parent / p)
    elif "generator" in src:
        inst = build_instance(src["generator"], src.get("params", {}))
    else:
        inst = instance_from_dict(src)
    algo = data.get("algorithm")
    if algo is None:
        raise IcsimError("simulate config needs an 'algorithm' entry")
    cfg = AlgorithmConfig.from_dict(algo)
    traj = run(inst, cfg)
    xinf = None
    if data.get("fixed_point_distance") and cfg.algorithm == "local_sgd":
        rep = fixed_point(inst, cfg.resolved(inst).eta, cfg.K)
        xinf = rep.x_infinity if rep.exists else None
    _emit(trajectory_csv(traj, xinf), args.output)
    return EXIT_OK


def cmd_fixed_point(args) -> int:
    inst = load_instance(args.instance)
    sched = parse_schedule(args.eta)
    out = []
    for K in (int(k) for k in args.k_grid.split(",")):
        eta = sched(inst.smoothness, K)
        rep = fixed_point(inst, eta, K, args.beta)
        d = fixed_point_to_dict(inst, rep)
        ok, factor = fixed_point_exists(inst, eta, K, args.beta)
        d.update(contracts=ok, contraction_factor=factor)
        out.append(d)
    if args.csv:
        header = ["K", "eta", "exists", "contracts", "contraction_factor", "lambda_min_C", "kappa_prime",
                  "dist_to_xstar", "dist_to_xbar"]
        _emit(rows_to_csv(header, out), args.output)
    else:
        _emit(json.dumps(out, indent=2, sort_keys=True), args.output)
    return EXIT_OK


def cmd_hetero(args) -> int:
    inst = load_instance(args.instance)
    rep = heterogeneity_report(inst, args.eta, args.K, args.ball, args.samples, args.seed)
    _emit(rep.to_json() if args.json else rep.table(), args.output)
    return EXIT_OK


def cmd_bounds(args) -> int:
    base = json.loads(Path(args.params).read_text()) if args.params else {}
    if not args.sweep:
        rep = evaluate(args.name, BoundParams.from_dict(base))
        _emit(json.dumps(rep.to_dict(), indent=2) if args.json else rep.table(), args.output)
        return EXIT_OK
    axis, _, values = args.sweep.partition("=")
    rows, header = [], None
    for v in values.split(","):
        rep = evaluate(args.name, BoundParams.from_dict({**base, axis: _parse_value(v)}))
        header = header or [axis, *rep.terms, "value"]
        rows.append({axis: _parse_value(v), **rep.terms, "value": rep.value})
    _emit(rows_to_csv(header, rows), args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    records = run_experiment(cfg, args.output)
    if cfg.kind == "fixed_point_sweep":
        print("wrote fixed_point_sweep.csv and manifest.json")
    else:
        print(f"{len(records)} runs, {sum(r.status != 'ok' for r in records)} not ok")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify(args.suite)
    print(json.dumps(report.to_dict(), indent=2) if args.json else report.table())
    return EXIT_OK if report.passed else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icsim", description="Local SGD / mini-batch SGD laboratory on quadratics")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("instance", help="generate a problem instance JSON")
    s.add_argument("generator", choices=sorted(GENERATORS))
    s.add_argument("param", nargs="*", help="generator parameters as key=value (values parsed as JSON)")
    s.add_argument("--params-json", help="JSON file with generator parameters")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_instance)

    s = sub.add_parser("simulate", help="run one algorithm and write its trajectory CSV")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("-o", "--output", help="CSV path (single run) or output directory (experiment config)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fixed-point", help="closed-form local GD fixed points over a K grid")
    s.add_argument("-i", "--instance", required=True)
    s.add_argument("--eta", required=True, help="number or schedule such as '1/(2*H)' or '1/(H*K^2)'")
    s.add_argument("--k-grid", default="1", help="comma-separated K values")
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--csv", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_fixed_point)

    s = sub.add_parser("hetero", help="heterogeneity measurements")
    s.add_argument("-i", "--instance", required=True)
    s.add_argument("--ball", type=float, help="radius D of the ball around x*")
    s.add_argument("--eta", type=float)
    s.add_argument("--K", type=int)
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_hetero)

    s = sub.add_parser("bounds", help="evaluate a bound formula")
    s.add_argument("name", choices=sorted(EVALUATORS))
    s.add_argument("-p", "--params", help="BoundParams JSON file")
    s.add_argument("--sweep", help="axis=v1,v2,... to emit a CSV over one parameter")
    s.add_argument("--json", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sweep", help="run an experiment config")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("-o", "--output", help="output directory (overrides the config)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="run verification suites")
    s.add_argument("suite", nargs="?", default="all", help=f"one of: {', '.join(sorted(SUITES))}")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and args.suite not in SUITES:
        parser.error(f"unknown suite {args.suite!r}")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"icsim: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IcsimError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"icsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
