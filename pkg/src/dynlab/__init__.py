"""dynlab: exact-arithmetic laboratory for dynamization and LSM compaction policies."""

from __future__ import annotations

from .core import (
    DECREASING, GENERAL, KCOMPONENT, LSM, MINSUM, AdditiveCost, Batch, CapExceeded, Component,
    Cover, CoverDelta, CoverViolation, DecreasingCost, DynlabError, GeneralCost, Item,
    LsmCost, SolutionLedger, Trace, ValidationError, accumulate_costs, check_cost_properties,
    model_for, replay,
)
from .offline import (
    OptResult, brute_force_newest_first, dp_opt_kcomponent, dp_opt_minsum, partition_oracle,
    verify_lightest_first, verify_newest_first,
)
from .policies import POLICIES, make_policy, run_policy
from .workloads import WorkloadConfig, gen_workload, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "DECREASING", "GENERAL", "KCOMPONENT", "LSM", "MINSUM", "AdditiveCost", "Batch",
    "CapExceeded", "Component", "Cover", "CoverDelta", "CoverViolation", "DecreasingCost",
    "DynlabError", "GeneralCost", "Item", "LsmCost", "SolutionLedger", "Trace",
    "ValidationError", "accumulate_costs", "check_cost_properties", "model_for", "replay",
    "OptResult", "brute_force_newest_first", "dp_opt_kcomponent", "dp_opt_minsum",
    "partition_oracle", "verify_lightest_first", "verify_newest_first", "POLICIES",
    "make_policy", "run_policy", "WorkloadConfig", "gen_workload", "read_trace", "write_trace",
]
