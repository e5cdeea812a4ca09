"""Command-line entry point: ``dynlab <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 resource cap.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path

from .adversary import (
    COST_REACHED, check_merge_tree, first_merge_time, gen_minsum_lower_bound,
    ratio_lower_bound, run_kcomp_adversary,
)
from .core import (
    KCOMPONENT, VARIANTS, CapExceeded, CoverViolation, Trace,
    ValidationError, decimal_str, model_for, parse_weight, replay,
)
from .harness import ORACLES, compare, objective_of, run, solve_opt, to_csv
from .policies import POLICIES, AdaptiveBinary, make_policy, run_policy
from .workloads import KINDS, WorkloadConfig, gen_workload, read_trace, trace_to_string

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(text: str) -> Fraction:
    try:
        return parse_weight(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _emit(text: str, out: str | None):
    if not text.endswith("\n"):
        text += "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(out)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=str)


def _load(path: str, variant: str | None) -> Trace:
    if path == "-":
        return read_trace(sys.stdin, variant)
    return read_trace(path, variant)


def _ledger_json(ledger) -> dict:
    steps = []
    for t in range(1, ledger.n + 1):
        steps.append({
            "t": t,
            "destroyed": sorted(ledger.destroyed[t - 1]),
            "created": [{"id": cid, "members": sorted(ledger.components[cid].members)}
                        for cid in ledger.created[t - 1]],
            "build": str(ledger.build[t - 1]),
            "components": ledger.query[t - 1],
        })
    return {"total_build": str(ledger.total_build), "total_query": ledger.total_query,
            "steps": steps}


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    cfg = WorkloadConfig(kind=args.kind, n=args.n, seed=args.seed,
                         variant=args.variant or KCOMPONENT, general_cost=args.cost,
                         weight_lo=args.weight_lo, weight_hi=args.weight_hi,
                         burst_max=args.burst_max, keys=args.keys, max_items=args.max_items)
    _emit(trace_to_string(gen_workload(cfg)), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    trace = _load(args.trace, args.variant)
    report = run(args.policy, trace, args.k, args.oracle, brute_cap=args.brute_cap)
    if args.format == "csv":
        _emit(to_csv([report]), args.out)
    else:
        _emit(_json(report.to_json()), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    policies = [p for group in args.policy for p in group.split(",") if p]
    traces = [_load(path, args.variant) for path in args.trace]
    reports = compare(policies, traces, args.k, args.oracle, brute_cap=args.brute_cap)
    if args.format == "json":
        _emit(_json([r.to_json(series=False) for r in reports]), args.out)
    else:
        _emit(to_csv(reports), args.out)
    return EXIT_OK


def cmd_opt(args) -> int:
    trace = _load(args.trace, args.variant)
    objective = objective_of(trace.variant)
    k = args.k if objective == KCOMPONENT else None
    if objective == KCOMPONENT and k is None:
        raise UsageError(f"variant {trace.variant} needs --k")
    out = solve_opt(trace, objective, k, args.oracle, model_for(trace), args.brute_cap)
    doc = {"trace": trace.name, "variant": trace.variant, "k": k, "solver": out.solver,
           "optimal_cost": str(out.cost), "approx": decimal_str(out.cost)}
    if out.explored is not None:
        doc["explored"] = out.explored
    if out.witness is not None:
        doc["witness"] = _ledger_json(out.witness)
    _emit(_json(doc), args.out)
    return EXIT_OK


def cmd_adversary(args) -> int:
    if args.policy not in POLICIES:
        raise UsageError(f"unknown policy {args.policy!r}")
    if args.k is None:
        raise UsageError("adversary needs --k")
    run_ = run_kcomp_adversary(lambda k: make_policy(args.policy, None, k), args.k,
                               args.epsilon, args.step_cap, args.exponent_cap)
    bound = ratio_lower_bound(args.k, args.epsilon)
    doc = {
        "policy": args.policy, "k": args.k, "epsilon": str(args.epsilon),
        "stop_reason": run_.stop_reason, "steps": run_.steps,
        "alg_cost": str(run_.alg_cost), "opt_upper": str(run_.opt_upper),
        "achieved_ratio": None if run_.achieved_ratio is None else str(run_.achieved_ratio),
        "approx": {
            "alg_cost": decimal_str(run_.alg_cost), "opt_upper": decimal_str(run_.opt_upper),
            "achieved_ratio": None if run_.achieved_ratio is None else decimal_str(run_.achieved_ratio),
            "guaranteed_ratio": decimal_str(bound),
        },
        "guaranteed_ratio": str(bound),
        "candidate_costs": {str(j): str(c) for j, c in run_.candidate_costs.items()},
        "sequence_lengths": {str(j): str(n) for j, n in run_.sequence_lengths.items()},
        "transcript": [
            {"t": x.t, "item": x.item_id, "sequence": x.sequence, "index": x.index,
             "exponent": x.exponent, "parent": x.parent}
            for x in run_.transcript[:args.transcript_limit]],
    }
    _emit(_json(doc), args.out)
    return EXIT_OK if run_.stop_reason == COST_REACHED else EXIT_CAP


def cmd_lowerbound(args) -> int:
    trace, tree = gen_minsum_lower_bound(args.depth, args.leaf_cap)
    policy = AdaptiveBinary()
    ledger = replay(trace, run_policy(policy, trace), model_for(trace))
    match, build = check_merge_tree(ledger, tree)
    counts = Counter(tree.leaf_weights())
    doc = {
        "depth": args.depth, "N": tree.N, "nodes": tree.count, "leaves": len(tree.leaves),
        "length": trace.n, "leaf_weights": {str(w): c for w, c in sorted(counts.items())},
        "match": match, "build_cost": str(build), "query_cost": ledger.total_query,
        "first_merge": first_merge_time(ledger),
    }
    _emit(_json(doc), args.out)
    return EXIT_OK if match else EXIT_INVALID


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynlab", description="Dynamization and LSM compaction policy lab.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, trace=True):
        if trace:
            sp.add_argument("--trace", required=True, help="JSONL trace path, or - for stdin")
        sp.add_argument("--variant", choices=VARIANTS, help="override the trace's variant")
        sp.add_argument("--k", type=int, help="component budget for k-component variants")
        sp.add_argument("--out", help="output path (default stdout)")

    g = sub.add_parser("gen", help="generate a workload trace")
    g.add_argument("--kind", choices=KINDS, default="Uniform")
    g.add_argument("--n", type=int, default=16)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--variant", choices=VARIANTS)
    g.add_argument("--cost", help="general-variant cost function (default max-weight)")
    g.add_argument("--weight-lo", type=int, default=1)
    g.add_argument("--weight-hi", type=int, default=8)
    g.add_argument("--burst-max", type=int, default=3)
    g.add_argument("--keys", type=int, default=8)
    g.add_argument("--max-items", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="replay one policy over a trace")
    common(r)
    r.add_argument("--policy", required=True, choices=sorted(POLICIES))
    r.add_argument("--oracle", choices=ORACLES)
    r.add_argument("--brute-cap", type=int, default=12)
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several policies over several traces")
    c.add_argument("--trace", required=True, action="append")
    c.add_argument("--policy", required=True, action="append",
                   help="policy name; repeat or comma-separate")
    c.add_argument("--variant", choices=VARIANTS)
    c.add_argument("--k", type=int)
    c.add_argument("--oracle", choices=ORACLES)
    c.add_argument("--brute-cap", type=int, default=12)
    c.add_argument("--format", choices=("json", "csv"), default="csv")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    o = sub.add_parser("opt", help="solve the offline optimum")
    common(o)
    o.add_argument("--oracle", choices=ORACLES, default="brute")
    o.add_argument("--brute-cap", type=int, default=12)
    o.set_defaults(func=cmd_opt)

    a = sub.add_parser("adversary", help="adaptive k-component adversary")
    a.add_argument("--policy", required=True, choices=sorted(POLICIES))
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--epsilon", type=_fraction, default=Fraction(1, 16))
    a.add_argument("--step-cap", type=int, default=10 ** 5)
    a.add_argument("--exponent-cap", type=int, default=20000)
    a.add_argument("--transcript-limit", type=int, default=200)
    a.add_argument("--seed", type=int, default=0, help="accepted for uniformity; the run is deterministic")
    a.add_argument("--out")
    a.set_defaults(func=cmd_adversary)

    lb = sub.add_parser("lowerbound-minsum", help="Min-Sum lower-bound tree and check")
    lb.add_argument("--depth", type=int, default=2)
    lb.add_argument("--leaf-cap", type=int, default=1 << 20)
    lb.add_argument("--out")
    lb.set_defaults(func=cmd_lowerbound)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dynlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapExceeded as exc:
        print(f"dynlab: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except CoverViolation as exc:
        detail = f" (delta {exc.delta})" if exc.delta is not None else ""
        print(f"dynlab: invalid cover: {exc}{detail}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, OSError) as exc:
        print(f"dynlab: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
