"""Command line: ``netipomdp validate|run|diagnose``.

Exit codes: 0 success or convergence, 1 invariant violation, 2 parse failure,
3 no convergence within ``max_rounds``, 4 belief update aborted, 5 diagnostic
violations.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import BeliefUpdateAborted, InvalidModel, NetIpomdpError
from .net import MessageKind
from .scenario import ScenarioError, load_scenario
from .solver import SimulationConfig, format_record, run_decentralized_bp

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARSE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_ABORTED = 4
EXIT_VIOLATIONS = 5


def _report_invalid(exc, out):
    print("invalid scenario:", file=out)
    for v in exc.violations:
        print(f"  - {v}", file=out)


def _load(path, overrides, err):
    try:
        return load_scenario(path, overrides), None
    except ScenarioError as exc:
        print(f"parse error: {exc}", file=err)
        return None, EXIT_PARSE
    except InvalidModel as exc:
        _report_invalid(exc, err)
        return None, EXIT_INVALID
    except NetIpomdpError as exc:
        print(f"invalid scenario: {exc}", file=err)
        return None, EXIT_INVALID


def cmd_validate(path, out=None, err=None):
    out, err = out or sys.stdout, err or sys.stderr
    loaded, code = _load(path, None, err)
    if loaded is None:
        return code
    scenario, _ = loaded
    sizes = ", ".join(str(a.space.size) for a in scenario.agents)
    print(f"ok: {scenario.graph.node_count} agents, interactive state sizes [{sizes}]", file=out)
    return EXIT_OK


def _write_trace(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(format_record(rec) + "\n")


def cmd_run(path, seed=None, max_rounds=None, epsilon=None, message_type=None, trace_out=None,
            workers=None, out=None, err=None):
    out, err = out or sys.stdout, err or sys.stderr
    overrides = {"seed": seed, "max_rounds": max_rounds, "epsilon": epsilon,
                 "message_type": message_type, "workers": workers}
    loaded, code = _load(path, overrides, err)
    if loaded is None:
        return code
    scenario, cfg = loaded
    try:
        result = run_decentralized_bp(cfg, scenario)
    except BeliefUpdateAborted as exc:
        if trace_out:
            _write_trace(trace_out, exc.result.trace)
        print(f"aborted: {exc}", file=err)
        return EXIT_ABORTED
    if trace_out:
        _write_trace(trace_out, result.trace)
    print(format_record(result.trace[-1]), file=out)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_diagnose(trials=1000, seed=0, discount=0.9, dump=None, out=None, err=None):
    out, err = out or sys.stdout, err or sys.stderr
    from . import diagnostics

    try:
        SimulationConfig(discount=discount)
        if trials < 0:
            raise InvalidModel("trials must be non-negative")
    except InvalidModel as exc:
        _report_invalid(exc, err)
        return EXIT_INVALID
    rng = np.random.Generator(np.random.PCG64(seed))
    reports = [
        diagnostics.check_monotonicity(trials, rng),
        diagnostics.check_contraction(trials, rng, discount),
        diagnostics.check_fixed_point(max(trials // 20, 1) if trials else 0, rng, discount),
        diagnostics.check_telescoping(max(trials // 10, 1) if trials else 0, rng),
    ]
    for rep in reports:
        print(("PASS " if rep.ok else "FAIL ") + rep.line(), file=out)
    bad = [ce for rep in reports for ce in rep.counterexamples]
    if bad:
        text = json.dumps(bad[:5], indent=1)
        if dump:
            with open(dump, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            print(text, file=err)
        return EXIT_VIOLATIONS
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="netipomdp", description="Networked interactive POMDP toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("path", nargs="?")
    v.add_argument("--config")

    r = sub.add_parser("run", help="simulate a scenario until convergence")
    r.add_argument("path", nargs="?")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--max-rounds", type=int)
    r.add_argument("--epsilon", type=float)
    r.add_argument("--message-type", choices=[k.value for k in MessageKind])
    r.add_argument("--trace-out")
    r.add_argument("--workers", type=int)

    d = sub.add_parser("diagnose", help="randomized operator checks")
    d.add_argument("--trials", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--discount", type=float, default=0.9)
    d.add_argument("--trace-out", help="write counterexamples here instead of stderr")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if args.command in ("validate", "run"):
        path = args.config or args.path
        if path is None:
            print("a scenario path is required (positional or --config)", file=sys.stderr)
            return EXIT_PARSE
        if args.command == "validate":
            return cmd_validate(path)
        return cmd_run(path, args.seed, args.max_rounds, args.epsilon, args.message_type,
                       args.trace_out, args.workers)
    return cmd_diagnose(args.trials, args.seed, args.discount, args.trace_out)


if __name__ == "__main__":
    sys.exit(main())
