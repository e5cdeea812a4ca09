"""Online compaction policies behind a common ``step(t, batch) -> CoverDelta`` interface.

Each policy sees one batch at a time and keeps its components ordered oldest
to newest.  The harness owns the clock and feeds every time step, including
empty batches.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right
from fractions import Fraction
from math import comb
from typing import Iterator, Sequence

from .core import (
    EMPTY_DELTA, KCOMPONENT, MINSUM, AdditiveCost, CostModel, CoverDelta, Item,
    LsmCost, Trace, ValidationError,
)


class _Comp:
    __slots__ = ("id", "items", "birth", "weight", "credit", "units")

    def __init__(self, cid, items, birth, weight=None, units=0):
        self.id = cid
        self.items = items
        self.birth = birth
        self.weight = weight
        self.credit = Fraction(0)
        self.units = units

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(x.id for x in self.items)


def capacity(t: int) -> int:
    """Largest power of two dividing t."""
    if t < 1:
        raise ValueError("capacity is defined for t >= 1")
    return t & -t


def binomial_decompose(t: int, k: int) -> tuple[int, ...]:
    """Unique 0 <= i_1 < ... < i_k with sum_j C(i_j, j) = t, found greedily from j = k."""
    if t < 0 or k < 1:
        raise ValueError("need t >= 0 and k >= 1")
    out = []
    rem = t
    for j in range(k, 0, -1):
        i = j - 1
        while comb(i + 1, j) <= rem:
            i += 1
        out.append(i)
        rem -= comb(i, j)
    return tuple(reversed(out))


class Policy:
    name = ""
    objectives: tuple[str, ...] = (KCOMPONENT,)
    needs_k = True

    def __init__(self, model: CostModel | None = None, k: int | None = None,
                 ids: Iterator[int] | None = None):
        self.model = model or AdditiveCost()
        if self.needs_k and (k is None or k < 1):
            raise ValidationError(f"{self.name} needs k >= 1")
        self.k = k
        self._ids = ids if ids is not None else itertools.count(1)
        self.t = 0
        self.comps: list[_Comp] = []

    def params(self) -> dict:
        return {"k": self.k} if self.needs_k else {}

    def _make(self, items, t, weight=None, units=0) -> _Comp:
        if weight is None and self.model.additive:
            weight = self.model.cost(t, items)
        return _Comp(next(self._ids), items, t, weight, units)

    def _merged(self, parts: Sequence[_Comp], batch: Sequence[Item], t: int, units=0) -> _Comp:
        items = [x for p in parts for x in p.items] + list(batch)
        weight = None
        if self.model.additive:
            weight = sum((p.weight for p in parts), Fraction(0)) + self.model.cost(t, batch)
        return self._make(items, t, weight, units)

    def wt(self, t: int, comp: _Comp) -> Fraction:
        if self.model.additive:
            return comp.weight
        return self.model.cost(t, comp.items)

    def _advance(self, t: int):
        if t != self.t + 1:
            raise ValidationError(f"{self.name}: expected time {self.t + 1}, got {t}")
        self.t = t

    def step(self, t: int, batch: Sequence[Item]) -> CoverDelta:
        raise NotImplementedError

    def cover_ids(self) -> list[frozenset[str]]:
        return [c.ids for c in self.comps]

    @staticmethod
    def _delta(destroyed: Sequence[_Comp], created: Sequence[_Comp]) -> CoverDelta:
        return CoverDelta(frozenset(c.id for c in destroyed),
                          tuple((c.id, c.ids) for c in created))


class AdaptiveBinary(Policy):
    """Min-Sum policy: every step, merge all components of weight <= capacity(t)
    when at least two qualify."""

    name = "adaptive-binary"
    objectives = (MINSUM,)
    needs_k = False

    def __init__(self, model=None, k=None, ids=None):
        super().__init__(model, None, ids)
        # additive models keep comps sorted by weight for O(log) merge checks
        self._weights: list[Fraction] = []
        self._by_weight: list[_Comp] = []
        self.merge_log: list[tuple[int, tuple[int, ...]]] = []

    def _add(self, comp: _Comp):
        self.comps.append(comp)
        if self.model.additive:
            pos = bisect_right(self._weights, comp.weight)
            self._weights.insert(pos, comp.weight)
            self._by_weight.insert(pos, comp)

    def _remove_lightest(self, count: int) -> list[_Comp]:
        gone = self._by_weight[:count]
        del self._by_weight[:count]
        del self._weights[:count]
        ids = {c.id for c in gone}
        self.comps = [c for c in self.comps if c.id not in ids]
        return gone

    def step(self, t, batch):
        self._advance(t)
        fresh = None
        if batch:
            fresh = self._make(list(batch), t)
            self._add(fresh)
        mu = capacity(t)
        if self.model.additive:
            q = bisect_right(self._weights, mu)
            chosen = self._remove_lightest(q) if q >= 2 else []
        else:
            chosen = [c for c in self.comps if self.wt(t, c) <= mu]
            if len(chosen) >= 2:
                ids = {c.id for c in chosen}
                self.comps = [c for c in self.comps if c.id not in ids]
            else:
                chosen = []
        if not chosen:
            return self._delta([], [fresh]) if fresh else EMPTY_DELTA
        merged = self._merged(chosen, [], t)
        self._add(merged)
        self.merge_log.append((t, tuple(c.id for c in chosen)))
        old = [c for c in chosen if c is not fresh]
        created = [merged]
        if fresh is not None and fresh not in chosen:
            created.insert(0, fresh)
        return self._delta(old, created)


class NaiveBinary(Policy):
    """Binary transform treating every non-empty batch as one unit."""

    name = "naive-binary"
    objectives = (MINSUM,)
    needs_k = False

    def __init__(self, model=None, k=None, ids=None):
        super().__init__(model, None, ids)
        self.count = 0

    def step(self, t, batch):
        self._advance(t)
        if not batch:
            return EMPTY_DELTA
        j = 0
        while (self.count >> j) & 1:
            j += 1
        self.count += 1
        gone = self.comps[len(self.comps) - j:] if j else []
        keep = self.comps[:len(self.comps) - j]
        new = self._merged(gone, batch, t, units=1 << j)
        self.comps = keep + [new]
        return self._delta(gone, [new])

    def unit_sizes(self) -> list[int]:
        """Unit counts, newest first."""
        return [c.units for c in reversed(self.comps)]


class KBinomial(Policy):
    """k-binomial transform over unit counts; components are newest-first unit intervals."""

    name = "k-binomial"

    def __init__(self, model=None, k=None, ids=None):
        super().__init__(model, k, ids)
        self.count = 0
        self.batches: list[list[Item]] = []
        self.decomposition: tuple[int, ...] = binomial_decompose(0, k)

    def layout(self, count: int) -> list[tuple[int, int]]:
        """Unit intervals (lo, hi), oldest first, for a given unit count."""
        dec = binomial_decompose(count, self.k)
        sizes = [comb(i, j) for j, i in enumerate(dec, start=1)]
        out = []
        lo = 1
        for s in reversed(sizes):
            if s:
                out.append((lo, lo + s - 1))
                lo += s
        return out

    def step(self, t, batch):
        self._advance(t)
        if not batch:
            return EMPTY_DELTA
        old = self.layout(self.count)
        self.count += 1
        self.batches.append(list(batch))
        new = self.layout(self.count)
        self.decomposition = binomial_decompose(self.count, self.k)
        keep = 0
        while keep < min(len(old), len(new)) and old[keep] == new[keep]:
            keep += 1
        gone = self.comps[keep:]
        created = []
        for lo, hi in new[keep:]:
            items = [x for b in self.batches[lo - 1:hi] for x in b]
            created.append(self._make(items, t, units=hi - lo + 1))
        self.comps = self.comps[:keep] + created
        return self._delta(gone, created)

    def unit_sizes(self) -> list[int]:
        return [c.units for c in reversed(self.comps)]


class BigtableDefault(Policy):
    """Bigtable's default: on overflow merge the fewest i >= 2 newest components so
    every remaining component outweighs everything newer than it."""

    name = "bigtable-default"

    def step(self, t, batch):
        self._advance(t)
        if not batch:
            return EMPTY_DELTA
        fresh = self._make(list(batch), t)
        comps = self.comps + [fresh]
        if len(comps) <= self.k:
            self.comps = comps
            return self._delta([], [fresh])
        weights = [self.wt(t, c) for c in comps]
        n = len(comps)
        for i in range(2, n + 1):
            rest = n - i
            merged_w = sum(weights[rest:], Fraction(0))
            ok = True
            newer = merged_w
            for j in range(rest - 1, -1, -1):
                if not weights[j] > newer:
                    ok = False
                    break
                newer += weights[j]
            if ok:
                break
        gone = comps[n - i:]
        new = self._merged(gone[:-1], batch, t)
        self.comps = comps[:n - i] + [new]
        return self._delta(gone[:-1], [new])


class GreedyDual(Policy):
    """Credit-based k-competitive policy for additive or decreasing weights."""

    name = "greedy-dual"

    def __init__(self, model=None, k=None, ids=None):
        super().__init__(model, k, ids)
        self.deltas: dict[int, Fraction] = {}

    def weights(self, t: int, batch: Sequence[Item]) -> list[Fraction]:
        return [self.wt(t, c) for c in self.comps]

    def step(self, t, batch):
        self._advance(t)
        if not batch:
            return EMPTY_DELTA
        if len(self.comps) < self.k:
            self.deltas[t] = Fraction(0)
            fresh = self._make(list(batch), t)
            self.comps.append(fresh)
            return self._delta([], [fresh])
        ws = self.weights(t, batch)
        delta = min(w - c.credit for w, c in zip(ws, self.comps))
        if delta < 0:
            delta = Fraction(0)
        self.deltas[t] = delta
        for c in self.comps:
            c.credit += delta
        s0 = next(i for i, (w, c) in enumerate(zip(ws, self.comps)) if c.credit >= w)
        gone = self.comps[s0:]
        new = self._merged(gone, batch, t)
        self.comps = self.comps[:s0] + [new]
        return self._delta(gone, [new])


class GreedyDualLsm(GreedyDual):
    """Greedy-dual on LSM costs via the redundancy-discounted weights.

    The weight of component S is wt_t(S') - wt_t(S' minus S), S' being the union
    of S, everything newer and the batch; each value is cross-checked against
    the per-item form sum_x nr(x, U_t) wt_t({x}).
    """

    name = "greedy-dual-lsm"

    def __init__(self, model=None, k=None, ids=None):
        super().__init__(model or LsmCost(), k, ids)
        if not isinstance(self.model, LsmCost):
            raise ValidationError("greedy-dual-lsm runs on the LSM cost model")
        self.newest_ts: dict[str, int] = {}
        self.checks = 0

    def _observe(self, batch):
        for x in batch:
            if x.key is not None:
                if x.key not in self.newest_ts or x.ts > self.newest_ts[x.key]:
                    self.newest_ts[x.key] = x.ts

    def step(self, t, batch):
        self._observe(batch)
        return super().step(t, batch)

    def discounted(self, t: int, items: Sequence[Item]) -> Fraction:
        return sum((x.lsm_weight(t) for x in items
                    if x.key is None or self.newest_ts[x.key] == x.ts), Fraction(0))

    def weights(self, t, batch):
        ws = []
        cost = self.model.cost
        for i, c in enumerate(self.comps):
            newer = [x for d in self.comps[i + 1:] for x in d.items] + list(batch)
            caption = cost(t, c.items + newer) - cost(t, newer)
            direct = self.discounted(t, c.items)
            self.checks += 1
            if caption != direct:
                raise AssertionError(
                    f"t={t}: component {c.id} weight {caption} by suffix difference, "
                    f"{direct} by redundancy discount")
            ws.append(caption)
        return ws


class RecursiveBk(Policy):
    """Phase-based recursive policy for the general variant.

    B_1 keeps the single component U_t.  B_k runs a child B_{k-1} on the
    current phase and ends the phase with a full merge once the child's
    cumulative cost exceeds (k-1) wt_t(U_t).  The cover is the root (the last
    full merge) plus the child's components.
    """

    name = "recursive-bk"

    def __init__(self, model=None, k=None, ids=None, start: int = 0):
        super().__init__(model, k, ids)
        self.t = start
        self.cost = Fraction(0)
        self.items: list[Item] = []
        self.root: _Comp | None = None
        self.child = self._child(start)
        self.phase_start = start + 1
        self.full_merges: list[int] = []

    def _child(self, start: int):
        if self.k == 1:
            return None
        return RecursiveBk(self.model, self.k - 1, self._ids, start)

    def _charge(self, t, comps):
        for c in comps:
            self.cost += self.model.cost(t, c.items)

    def step(self, t, batch):
        self._advance(t)
        if not batch:
            if self.child is not None:
                self.child.step(t, batch)
            return EMPTY_DELTA
        self.items.extend(batch)
        if self.k == 1:
            gone = self.comps
            new = self._make(list(self.items), t)
            self.comps = [new]
            self._charge(t, [new])
            return self._delta(gone, [new])
        before = list(self.child.comps)
        child_delta = self.child.step(t, batch)
        full = self.model.cost(t, self.items)
        if self.child.cost > (self.k - 1) * full:
            gone = ([self.root] if self.root else []) + before
            new = self._make(list(self.items), t)
            self.root = new
            self.comps = [new]
            self._charge(t, [new])
            self.child = self._child(t)
            self.phase_start = t + 1
            self.full_merges.append(t)
            return self._delta(gone, [new])
        self.comps = ([self.root] if self.root else []) + list(self.child.comps)
        fresh_ids = {cid for cid, _ in child_delta.created}
        created = [c for c in self.child.comps if c.id in fresh_ids]
        self._charge(t, created)
        return child_delta


def simulate_bk_cost(model: CostModel, k: int, batches: Sequence[tuple[int, Sequence[Item]]]) -> Fraction:
    """Cost of a fresh B_k run over (time, batch) pairs; used to check the incremental child."""
    p = RecursiveBk(model, k, start=batches[0][0] - 1 if batches else 0)
    for t, b in batches:
        p.step(t, b)
    return p.cost


POLICIES: dict[str, type[Policy]] = {
    cls.name: cls for cls in (
        AdaptiveBinary, NaiveBinary, KBinomial, BigtableDefault,
        GreedyDual, GreedyDualLsm, RecursiveBk)
}


def make_policy(name: str, model: CostModel | None = None, k: int | None = None) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValidationError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(model, k)


def run_policy(policy: Policy, trace: Trace) -> list[CoverDelta]:
    return [policy.step(b.time, b.items) for b in trace.batches]


# ---------------------------------------------------------------- LSM reweighting

def lsm_reweight(trace: Trace) -> Trace:
    """Decreasing-weights trace whose weight for x at t is nr(x, U_t) * wt_t({x})."""
    from .core import DECREASING, Batch

    supersede: dict[str, int] = {}
    latest: dict[str, Item] = {}
    last_ts = None
    for b in trace.batches:
        for x in b.items:
            if x.key is None:
                continue
            if x.ts is None or (last_ts is not None and x.ts <= last_ts):
                raise ValidationError(f"item {x.id}: timestamps out of order")
            last_ts = x.ts
            prev = latest.get(x.key)
            if prev is not None:
                supersede[prev.id] = b.time
            latest[x.key] = x
    n = trace.n
    batches = []
    for b in trace.batches:
        items = []
        for x in b.items:
            t0 = b.time
            events = {t0: x.lsm_weight(t0)}
            if x.expiry is not None and t0 <= x.expiry + 1 <= n:
                events[x.expiry + 1] = x.lsm_weight(x.expiry + 1)
            s = supersede.get(x.id)
            if s is not None:
                events = {bt: w for bt, w in events.items() if bt < s}
                events[s] = Fraction(0)
            sched = []
            for bt in sorted(events):
                if (sched[-1][1] if sched else x.weight) != events[bt]:
                    sched.append((bt, events[bt]))
            items.append(Item(x.id, x.weight, x.key, x.ts, x.expiry, x.tombstone_weight,
                              tuple(sched)))
        batches.append(Batch(b.time, tuple(items)))
    return Trace(tuple(batches), DECREASING, name=(trace.name + "+reweighted") if trace.name else "")
