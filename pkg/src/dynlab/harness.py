"""Experiment runner: replay a policy over a trace, optionally solve OPT, report.

The harness owns the clock: every time step, empty or not, is fed to the
policy, and every returned delta is validated and costed by the core ledger.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .core import (
    DECREASING, GENERAL, KCOMPONENT, LSM, MINSUM, CostModel, SolutionLedger,
    Trace, ValidationError, decimal_str, model_for, replay,
)
from .offline import (
    DP_KCOMPONENT, DP_MINSUM, brute_force_newest_first, dp_opt_kcomponent, dp_opt_minsum,
    partition_oracle, verify_lightest_first, verify_newest_first,
)
from .policies import POLICIES, make_policy, run_policy

REPORT_FORMAT = "dynlab-report/1"
CSV_FORMAT = "dynlab-compare/1"

ORACLES = ("brute", "partition", "dp")

K_VARIANTS = (KCOMPONENT, DECREASING, LSM, GENERAL)
COMPATIBLE: dict[str, tuple[str, ...]] = {
    "adaptive-binary": (MINSUM,),
    "naive-binary": (MINSUM,),
    "k-binomial": K_VARIANTS,
    "bigtable-default": K_VARIANTS,
    "greedy-dual": (KCOMPONENT, DECREASING),
    "greedy-dual-lsm": (LSM,),
    "recursive-bk": K_VARIANTS,
}


def objective_of(variant: str) -> str:
    return MINSUM if variant == MINSUM else KCOMPONENT


@dataclass
class OracleOutcome:
    cost: Fraction
    solver: str
    explored: int | None = None
    witness: SolutionLedger | None = None


@dataclass
class ExperimentReport:
    policy: str
    params: dict
    trace: str
    variant: str
    n: int
    m: int
    build: Fraction
    query: int
    total: Fraction
    objective: Fraction
    build_series: list[Fraction]
    query_series: list[int]
    newest_first: bool
    lightest_first: bool
    max_components: int
    opt_cost: Fraction | None = None
    opt_solver: str | None = None
    ratio: Fraction | None = None
    wall_clock_s: float = 0.0
    ledger: SolutionLedger | None = field(default=None, repr=False, compare=False)

    def to_json(self, series: bool = True) -> dict:
        d = {
            "format": REPORT_FORMAT,
            "policy": self.policy,
            "params": self.params,
            "trace": self.trace,
            "variant": self.variant,
            "n": self.n,
            "m": self.m,
            "totals": {
                "build": str(self.build), "query": self.query, "total": str(self.total),
                "objective": str(self.objective),
            },
            "approx": {
                "build": decimal_str(self.build), "total": decimal_str(self.total),
                "objective": decimal_str(self.objective),
            },
            "structure": {"newest_first": self.newest_first, "lightest_first": self.lightest_first},
            "max_components": self.max_components,
            "wall_clock_s": round(self.wall_clock_s, 6),
        }
        if series:
            d["series"] = {"build": [str(b) for b in self.build_series], "query": self.query_series}
        if self.opt_cost is not None:
            d["opt"] = {"cost": str(self.opt_cost), "solver": self.opt_solver,
                        "approx": decimal_str(self.opt_cost)}
        if self.ratio is not None:
            d["ratio"] = str(self.ratio)
            d["approx"]["ratio"] = decimal_str(self.ratio)
        return d

    def check_series(self) -> bool:
        """Totals re-derive from the per-time series."""
        return (sum(self.build_series, Fraction(0)) == self.build
                and sum(self.query_series) == self.query)


def solve_opt(trace: Trace, objective: str, k: int | None, oracle: str = "brute",
              model: CostModel | None = None, brute_cap: int | None = 12) -> OracleOutcome:
    if oracle == "brute":
        r = brute_force_newest_first(trace, objective, k, model, cap=brute_cap)
        return OracleOutcome(r.optimal_cost, r.solver, r.explored, r.witness)
    if oracle == "partition":
        r = partition_oracle(trace, objective, k, model)
        return OracleOutcome(r.optimal_cost, r.solver, r.explored, r.witness)
    if oracle == "dp":
        if objective == MINSUM:
            return OracleOutcome(dp_opt_minsum(trace, model), DP_MINSUM)
        if k is None:
            raise ValidationError("k-component objective needs --k")
        return OracleOutcome(dp_opt_kcomponent(trace, k, model), DP_KCOMPONENT)
    raise ValidationError(f"unknown oracle {oracle!r}; choose from {ORACLES}")


def run(policy: str, trace: Trace, k: int | None = None, oracle: str | None = None,
        variant: str | None = None, brute_cap: int | None = 12) -> ExperimentReport:
    variant = variant or trace.variant
    if variant != trace.variant:
        trace = Trace(trace.batches, variant,
                      trace.general_cost or ("max-weight" if variant == GENERAL else None),
                      trace.name)
    if policy not in POLICIES:
        raise ValidationError(f"unknown policy {policy!r}; choose from {sorted(POLICIES)}")
    if variant not in COMPATIBLE[policy]:
        raise ValidationError(f"policy {policy} does not run on the {variant} variant")
    objective = objective_of(variant)
    model = model_for(trace)
    cap_k = k if objective == KCOMPONENT else None
    if objective == KCOMPONENT and (k is None or k < 1):
        raise ValidationError(f"variant {variant} needs k >= 1")

    start = time.perf_counter()
    pol = make_policy(policy, model, cap_k)
    ledger = replay(trace, run_policy(pol, trace), model, cap_k)
    newest = verify_newest_first(ledger)
    lightest = verify_lightest_first(ledger, model, trace, merge_events=policy == "adaptive-binary")
    report = ExperimentReport(
        policy=policy, params=pol.params(), trace=trace.name, variant=variant,
        n=trace.n, m=trace.m,
        build=ledger.total_build, query=ledger.total_query, total=ledger.total,
        objective=ledger.objective(objective),
        build_series=list(ledger.build), query_series=list(ledger.query),
        newest_first=newest, lightest_first=lightest,
        max_components=ledger.max_components(), ledger=ledger)
    if oracle:
        out = solve_opt(trace, objective, cap_k, oracle, model, brute_cap)
        report.opt_cost, report.opt_solver = out.cost, out.solver
        if out.cost > 0:
            report.ratio = report.objective / out.cost
    report.wall_clock_s = time.perf_counter() - start
    return report


CSV_COLUMNS = (
    "policy", "params", "trace", "variant", "n", "m", "build", "query", "total", "objective",
    "objective_approx", "opt_cost", "opt_solver", "ratio", "ratio_approx",
    "newest_first", "lightest_first", "max_components",
)


def report_row(r: ExperimentReport) -> dict:
    params = ";".join(f"{a}={b}" for a, b in sorted(r.params.items()))
    return {
        "policy": r.policy, "params": params, "trace": r.trace, "variant": r.variant,
        "n": r.n, "m": r.m, "build": str(r.build), "query": r.query, "total": str(r.total),
        "objective": str(r.objective), "objective_approx": decimal_str(r.objective),
        "opt_cost": "" if r.opt_cost is None else str(r.opt_cost),
        "opt_solver": r.opt_solver or "",
        "ratio": "" if r.ratio is None else str(r.ratio),
        "ratio_approx": "" if r.ratio is None else decimal_str(r.ratio),
        "newest_first": int(r.newest_first), "lightest_first": int(r.lightest_first),
        "max_components": r.max_components,
    }


def compare(policies: Sequence[str], traces: Iterable[Trace], k: int | None = None,
            oracle: str | None = None, brute_cap: int | None = 12) -> list[ExperimentReport]:
    """One report per (policy, trace), traces outer, policies inner.

    The oracle runs once per trace and is shared by every policy.
    """
    reports = []
    for trace in traces:
        opt = None
        for name in policies:
            r = run(name, trace, k)
            if oracle:
                if opt is None:
                    objective = objective_of(trace.variant)
                    opt = solve_opt(trace, objective, k if objective == KCOMPONENT else None,
                                    oracle, model_for(trace), brute_cap)
                r.opt_cost, r.opt_solver = opt.cost, opt.solver
                if opt.cost > 0:
                    r.ratio = r.objective / opt.cost
            reports.append(r)
    return reports


def to_csv(reports: Iterable[ExperimentReport]) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_FORMAT}\n")
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(report_row(r))
    return buf.getvalue()


def from_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
