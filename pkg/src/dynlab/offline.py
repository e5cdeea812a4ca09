"""Offline optimum oracles and solution-structure checkers.

Three independent routes to OPT:

* ``brute_force_newest_first`` searches every newest-first schedule (every
  non-empty step merges the batch with the i newest components).
* ``partition_oracle`` searches every sequence of set partitions of U_t on
  tiny instances; it does not assume any structure.
* ``dp_opt_kcomponent`` / ``dp_opt_minsum`` are interval dynamic programs.

Agreement between them is what the test suite checks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from .core import (
    KCOMPONENT, MINSUM, CapExceeded, CostModel, CoverDelta, Item, SolutionLedger,
    Trace, ValidationError, model_for, replay,
)

BRUTE = "BruteNewestFirst"
PARTITION = "PartitionOracle"
DP_MINSUM = "DpMinSum"
DP_KCOMPONENT = "DpKComponent"

INF = None  # no feasible value


@dataclass
class OptResult:
    optimal_cost: Fraction
    witness: SolutionLedger | None
    solver: str
    explored: int


def _check_objective(objective: str, k: int | None):
    if objective not in (MINSUM, KCOMPONENT):
        raise ValidationError(f"objective must be {MINSUM!r} or {KCOMPONENT!r}")
    if objective == KCOMPONENT and (k is None or k < 1):
        raise ValidationError("k-component objective needs k >= 1")


class _IntervalCosts:
    """Memoized wt_t(I_a u ... u I_b) under an arbitrary cost model."""

    def __init__(self, trace: Trace, model: CostModel):
        self.trace = trace
        self.model = model
        self.memo: dict[tuple[int, int, int], Fraction] = {}

    def __call__(self, t: int, a: int, b: int) -> Fraction:
        key = (t, a, b)
        v = self.memo.get(key)
        if v is None:
            v = self.model.cost(t, self.trace.items_between(a, b))
            self.memo[key] = v
        return v


def brute_force_newest_first(trace: Trace, objective: str = KCOMPONENT, k: int | None = None,
                             model: CostModel | None = None, cap: int | None = 12) -> OptResult:
    """Exact optimum over newest-first solutions.

    State at time t is the tuple of start times of the current components
    (oldest first); identical states are merged, so the search is a DP over
    reachable stacks.  Among optimal schedules the witness prefers merges that
    are also lightest-first.
    """
    _check_objective(objective, k)
    if cap is not None and trace.m > cap:
        raise CapExceeded(f"{trace.m} non-empty batches exceed brute-force cap {cap}")
    model = model or model_for(trace)
    wt = _IntervalCosts(trace, model)
    minsum = objective == MINSUM
    # value: (cost, non-lightest-first merges); back: state -> (prev_state, start)
    layer: dict[tuple[int, ...], tuple[Fraction, int]] = {(): (Fraction(0), 0)}
    back: list[dict] = []
    explored = 0
    for t in range(1, trace.n + 1):
        nxt: dict[tuple[int, ...], tuple[Fraction, int]] = {}
        bp: dict = {}
        nonempty = bool(trace.batch(t).items)
        for stack, (cost, penalty) in layer.items():
            if not nonempty:
                choices = [(stack, None, Fraction(0), 0)]
            else:
                h = len(stack)
                # k-component: after merging i components, h - i + 1 <= k
                lo = 0 if minsum else max(0, h - k + 1)
                ends = list(stack[1:]) + [t]
                weights = [wt(t, s, e - 1) for s, e in zip(stack, ends)]
                choices = []
                for i in range(lo, h + 1):
                    start = stack[h - i] if i else t
                    new = stack[:h - i] + (start,)
                    gone, kept = weights[h - i:], weights[:h - i]
                    lf = not gone or not kept or max(gone) <= min(kept)
                    choices.append((new, start, wt(t, start, t), 0 if lf else 1))
            for new, start, build, pen in choices:
                explored += 1
                val = (cost + build + (len(new) if minsum else 0), penalty + pen)
                old = nxt.get(new)
                if old is None or val < old:
                    nxt[new] = val
                    bp[new] = (stack, start)
        layer = nxt
        back.append(bp)
    final = min(layer, key=lambda s: layer[s])
    best = layer[final][0]
    # rebuild the schedule
    starts: list[int | None] = []
    state = final
    for t in range(trace.n, 0, -1):
        prev, start = back[t - 1][state]
        starts.append(start)
        state = prev
    starts.reverse()
    witness = _ledger_from_starts(trace, model, starts, k if not minsum else None)
    return OptResult(best, witness, BRUTE, explored)


def _ledger_from_starts(trace, model, starts, k) -> SolutionLedger:
    ids = itertools.count(1)
    live: list[tuple[int, int]] = []  # (start, component id), oldest first
    deltas = []
    for t, start in enumerate(starts, start=1):
        if start is None:
            deltas.append(CoverDelta())
            continue
        gone = [cid for s, cid in live if s >= start]
        live = [(s, cid) for s, cid in live if s < start]
        cid = next(ids)
        live.append((start, cid))
        members = frozenset(x.id for x in trace.items_between(start, t))
        deltas.append(CoverDelta(frozenset(gone), ((cid, members),)))
    return replay(trace, deltas, model, k)


# ---------------------------------------------------------------- partitions

def set_partitions(elems: list) -> Iterator[list[frozenset]]:
    if not elems:
        yield []
        return
    first, rest = elems[0], elems[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [part[i] | {first}] + part[i + 1:]
        yield part + [frozenset([first])]


def partition_oracle(trace: Trace, objective: str = KCOMPONENT, k: int | None = None,
                     model: CostModel | None = None, max_items: int = 5,
                     max_steps: int = 4) -> OptResult:
    """Exact optimum over all sequences of partitions of U_t.

    A block counts as newly built at t iff the same member set was not a block
    at t-1.  The search runs a shortest-path recursion over (t, partition),
    which visits every partition sequence implicitly.
    """
    _check_objective(objective, k)
    if trace.total_items() > max_items or trace.n > max_steps:
        raise CapExceeded(f"partition oracle limited to {max_items} items and {max_steps} steps")
    model = model or model_for(trace)
    minsum = objective == MINSUM
    layer: dict[frozenset, Fraction] = {frozenset(): Fraction(0)}
    back: list[dict] = []
    explored = 0
    universe: list[Item] = []
    for t in range(1, trace.n + 1):
        universe = universe + list(trace.batch(t).items)
        by_id = {x.id: x for x in universe}
        cands = []
        for part in set_partitions([x.id for x in universe]):
            if not minsum and len(part) > k:
                continue
            cands.append(frozenset(part))
        block_cost: dict[frozenset, Fraction] = {}
        nxt: dict[frozenset, Fraction] = {}
        bp: dict = {}
        for prev, cost in layer.items():
            for part in cands:
                explored += 1
                build = Fraction(0)
                for block in part - prev:
                    if block not in block_cost:
                        block_cost[block] = model.cost(t, [by_id[x] for x in block])
                    build += block_cost[block]
                val = cost + build + (len(part) if minsum else 0)
                if part not in nxt or val < nxt[part]:
                    nxt[part] = val
                    bp[part] = prev
        layer = nxt
        back.append(bp)
    final = min(layer, key=lambda p: layer[p])
    best = layer[final]
    parts = []
    state = final
    for t in range(trace.n, 0, -1):
        parts.append(state)
        state = back[t - 1][state]
    parts.reverse()
    ids = itertools.count(1)
    live: dict[frozenset, int] = {}
    deltas = []
    for part in parts:
        gone = frozenset(cid for block, cid in live.items() if block not in part)
        created = []
        nlive = {}
        for block in sorted(part, key=sorted):
            if block in live:
                nlive[block] = live[block]
            else:
                cid = next(ids)
                nlive[block] = cid
                created.append((cid, block))
        live = nlive
        deltas.append(CoverDelta(gone, tuple(created)))
    witness = replay(trace, deltas, model, None if minsum else k)
    return OptResult(best, witness, PARTITION, explored)


# ---------------------------------------------------------------- DPs

def _window_weights(trace: Trace, model: CostModel):
    """W(t, a) = wt_t(I_a u ... u I_t) for additive-over-items models, via per-t prefix sums."""
    n = trace.n
    table: list[list[Fraction]] = [[]]
    for t in range(1, n + 1):
        # suffix sums ending at t
        row = [Fraction(0)] * (t + 2)
        acc = Fraction(0)
        for a in range(t, 0, -1):
            acc += model.cost(t, trace.batch(a).items)
            row[a] = acc
        table.append(row)
    return lambda t, a: table[t][a]


def dp_opt_kcomponent(trace: Trace, k: int, model: CostModel | None = None) -> Fraction:
    """O(k n^3) optimum of k-Component Dynamization over newest-first solutions.

    F(h, i, j): cheapest handling of batches i..j with at most h components for
    them while older items stay untouched.  Conditioning on the last step m at
    which the component holding I_i is (re)built -- it then holds all of
    I_i..I_m -- splits the window into an arbitrary prefix i..m-1 with h slots
    and a suffix m+1..j with one slot fewer.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    model = model or model_for(trace)
    if model.kind not in ("additive", "decreasing"):
        raise ValidationError(f"dp_opt_kcomponent supports additive/decreasing costs, not {model.kind}")
    n = trace.n
    W = _window_weights(trace, model)
    nonempty = [False] + [bool(b.items) for b in trace.batches]
    # cnt[i] = non-empty batches among 1..i
    cnt = [0] * (n + 1)
    for t in range(1, n + 1):
        cnt[t] = cnt[t - 1] + nonempty[t]

    def has_items(i, j):
        return i <= j and cnt[j] - cnt[i - 1] > 0

    prev: list[list] | None = None  # F(h-1, ., .)
    for h in range(1, k + 1):
        cur = [[Fraction(0)] * (n + 2) for _ in range(n + 2)]
        # cur[i][j] for j >= i-1; iterate by increasing window length
        for length in range(1, n + 1):
            for i in range(1, n - length + 2):
                j = i + length - 1
                if not has_items(i, j):
                    cur[i][j] = Fraction(0)
                    continue
                best = INF
                for m in range(i, j + 1):
                    if not nonempty[m]:
                        continue
                    if has_items(m + 1, j):
                        if prev is None:
                            continue
                        tail = prev[m + 1][j]
                        if tail is INF:
                            continue
                    else:
                        tail = Fraction(0)
                    head = cur[i][m - 1] if m > i else Fraction(0)
                    if head is INF:
                        continue
                    val = head + W(m, i) + tail
                    if best is INF or val < best:
                        best = val
                cur[i][j] = best
        prev = cur
    return prev[1][n]


def dp_opt_minsum(trace: Trace, model: CostModel | None = None) -> Fraction:
    """O(n^3) optimum of Min-Sum Dynamization.

    G(i, j) counts build cost plus, at every step of i..j, the components
    holding items of I_i..I_j.  After the last rebuild m of the oldest such
    component, it contributes one query per step of m+1..j.
    """
    model = model or model_for(trace)
    if model.kind != "additive":
        raise ValidationError("dp_opt_minsum supports the additive model only")
    n = trace.n
    W = _window_weights(trace, model)
    nonempty = [False] + [bool(b.items) for b in trace.batches]
    cnt = [0] * (n + 1)
    for t in range(1, n + 1):
        cnt[t] = cnt[t - 1] + nonempty[t]
    G = [[Fraction(0)] * (n + 2) for _ in range(n + 2)]
    for length in range(1, n + 1):
        for i in range(1, n - length + 2):
            j = i + length - 1
            if cnt[j] - cnt[i - 1] == 0:
                continue
            best = None
            for m in range(i, j + 1):
                if not nonempty[m]:
                    continue
                head = G[i][m - 1] if m > i else Fraction(0)
                tail = G[m + 1][j] if m < j else Fraction(0)
                val = head + W(m, i) + 1 + (j - m) + tail
                if best is None or val < best:
                    best = val
            G[i][j] = best
    return G[1][n]


# ---------------------------------------------------------------- structure

def verify_newest_first(ledger: SolutionLedger) -> bool:
    """Each non-empty step creates one component: the batch plus the i newest components."""
    order: list[int] = []  # live ids, oldest first
    for t in range(1, ledger.n + 1):
        created = ledger.created[t - 1]
        destroyed = ledger.destroyed[t - 1]
        batch = ledger.batch_ids[t - 1]
        if not batch:
            if created or destroyed:
                return False
            continue
        if len(created) != 1:
            return False
        i = len(destroyed)
        newest = set(order[len(order) - i:]) if i else set()
        if newest != set(destroyed):
            return False
        expect = set(batch)
        for cid in destroyed:
            expect |= ledger.components[cid].members
        new = ledger.components[created[0]]
        if new.members != expect:
            return False
        order = order[:len(order) - i] + [new.id]
    return True


def verify_lightest_first(ledger: SolutionLedger, model: CostModel, trace: Trace,
                          merge_events: bool = False) -> bool:
    """Each step merges the batch with some i lightest components (weights at merge time).

    With ``merge_events`` every created component that absorbs existing
    components must be a lightest subset of the pool (previous cover plus the
    batch); steps may then also merge without a batch.
    """
    items = trace.index
    live: dict[int, frozenset[str]] = {}

    def w(t, members):
        return model.cost(t, [items[x][0] for x in members])

    for t in range(1, ledger.n + 1):
        created = ledger.created[t - 1]
        destroyed = ledger.destroyed[t - 1]
        batch = ledger.batch_ids[t - 1]
        if any(cid not in live for cid in destroyed):
            return False
        if not merge_events:
            if not batch:
                if created or destroyed:
                    return False
                continue
            if len(created) != 1:
                return False
            new = ledger.components[created[0]].members
            expect = set(batch).union(*(live[c] for c in destroyed)) if destroyed else set(batch)
            if new != expect:
                return False
            gone = [w(t, live[c]) for c in destroyed]
            kept = [w(t, m) for c, m in live.items() if c not in destroyed]
            if gone and kept and max(gone) > min(kept):
                return False
        else:
            pool = {("old", c): m for c, m in live.items()}
            if batch:
                pool[("batch", t)] = batch
            pool_w = {key: w(t, m) for key, m in pool.items()}
            used: set = set()
            for cid in created:
                members = ledger.components[cid].members
                parts = [key for key, m in pool.items() if m <= members]
                if frozenset().union(*(pool[p] for p in parts)) != members:
                    return False
                if any(p[0] == "old" for p in parts):
                    inside = [pool_w[p] for p in parts]
                    outside = [pool_w[p] for p in pool if p not in parts]
                    if outside and max(inside) > min(outside):
                        return False
                used.update(parts)
            if {("old", c) for c in destroyed} != {p for p in used if p[0] == "old"}:
                return False
            if batch and ("batch", t) not in used:
                return False
        for c in destroyed:
            del live[c]
        for cid in created:
            live[cid] = ledger.components[cid].members
    return True
