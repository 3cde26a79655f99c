"""Command-line entry point: ``jamnet {run,sweep,verify,trace,adapt}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from .coupling import adapt_trace
from .engine import read_trace, run_execution
from .harness import ConfigError, load_config, run_experiment


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(2)


def cmd_run(args, sweep: bool) -> int:
    cfg = _load(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    try:
        result = run_experiment(cfg, sweep=sweep, workers=args.workers, write_traces=not args.no_traces)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    s = result.summary
    print(f"runs={len(result.records)} success_rate={s.success_rate:.3f} "
          f"max_node_cost={s.max_node_cost} safety_violations={s.safety_violations}")
    for name, fit in s.slope_fits.items():
        print(f"{name}: slope={fit.slope:.3f} r2={fit.r2:.3f}")
    print(f"outputs in {result.output_dir}")
    return 0 if result.safety_ok else 1


def cmd_verify(args) -> int:
    from . import verify

    selected = None
    if args.only:
        selected = {int(x) for x in args.only.split(",") if x.strip()}
    results = verify.run_all(selected)
    if args.extended:
        verify.extended_sweep(echo=print)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def cmd_trace(args) -> int:
    cfg = _load(args.config)
    T = cfg.budgets(False)[0]
    trace = run_execution(cfg.protocol_spec, cfg.adversary_spec(T), cfg.n, cfg.C, args.seed, cfg.slot_limit,
                          source=cfg.source, trace_mode="full",
                          engine="slot" if cfg.engine == "slot" else "auto")
    if args.out:
        trace.write(args.out)
    else:
        sys.stdout.write(trace.to_jsonl())
    return 0 if trace.safety_ok else 1


def cmd_adapt(args) -> int:
    if not args.one_to_one:
        print("only --one-to-one adaptation is available", file=sys.stderr)
        return 2
    try:
        res = adapt_trace(read_trace(args.trace))
    except ValueError as exc:
        print(f"adapt: {exc}", file=sys.stderr)
        return 2
    report = asdict(res)
    report["mismatches"] = len(res.mismatches)
    report.update(identical=res.identical, cost_ok=res.cost_ok)
    print(json.dumps(report, indent=1))
    return 0 if res.identical and res.cost_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jamnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "run one budget over all seeds"), ("sweep", "run every budget in T_sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
        p.add_argument("--output-dir", default=None, help="override output_dir from the config")
        p.add_argument("--no-traces", action="store_true", help="skip per-run trace files")

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--only", default=None, help="comma-separated criterion numbers")
    p.add_argument("--extended", action="store_true",
                   help="also print a larger-budget scaling sweep (informational)")

    p = sub.add_parser("trace", help="write one full trace as JSONL")
    p.add_argument("config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("adapt", help="replay a full trace as a two-party execution")
    p.add_argument("trace")
    p.add_argument("--one-to-one", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("run", "sweep"):
        return cmd_run(args, args.command == "sweep")
    if args.command == "verify":
        return cmd_verify(args)
    if args.command == "trace":
        return cmd_trace(args)
    return cmd_adapt(args)


if __name__ == "__main__":
    sys.exit(main())
