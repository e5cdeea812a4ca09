"""Domain types, build-cost models, cover validation and exact cost accounting.

Every weight in the system is a :class:`fractions.Fraction`; no float ever
enters a cost path.  Items are grouped into batches (one per time step), a
trace is the full batch sequence, and a solution is a sequence of covers.
Solutions are stored as per-time deltas (components destroyed / created) so
that long traces with mostly empty steps stay cheap to replay.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Context, Decimal
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Iterator, Sequence

from .rng import XorShift64Star

Weight = Fraction

MINSUM = "minsum"
KCOMPONENT = "kcomponent"
DECREASING = "decreasing"
LSM = "lsm"
GENERAL = "general"
VARIANTS = (MINSUM, KCOMPONENT, DECREASING, LSM, GENERAL)


class DynlabError(Exception):
    """Base class for library errors."""


class ValidationError(DynlabError, ValueError):
    """Input or solution violates a model invariant."""


class CoverViolation(ValidationError):
    def __init__(self, t: int, message: str, delta: "CoverDelta | None" = None):
        super().__init__(f"t={t}: {message}")
        self.t = t
        self.delta = delta


class CapExceeded(DynlabError):
    """A configured resource cap (instance size, exponent, ...) was hit."""


def parse_weight(value) -> Fraction:
    """Parse ``"p/q"``, ``"p"``, an int or a Fraction into a non-negative Fraction.

    Floats are rejected: they cannot represent the weights exactly.
    """
    if isinstance(value, bool) or isinstance(value, float):
        raise ValidationError(f"weight must be exact, got {value!r}")
    try:
        w = Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"bad weight {value!r}") from exc
    if w < 0:
        raise ValidationError(f"negative weight {value!r}")
    return w


def format_weight(w: Fraction) -> str:
    return str(w)


def decimal_str(w: Fraction, digits: int = 12) -> str:
    """Approximate decimal rendering, correctly rounded to ``digits`` significant digits."""
    ctx = Context(prec=digits, rounding=ROUND_HALF_EVEN)
    w = Fraction(w)
    d = ctx.divide(Decimal(w.numerator), Decimal(w.denominator)).normalize(ctx)
    if d.as_tuple().exponent > 0 and d.adjusted() < digits:
        d = d.quantize(Decimal(1), context=ctx)  # 80, not 8E+1
    return str(d)


@dataclass(frozen=True, slots=True)
class Item:
    id: str
    weight: Fraction
    key: str | None = None
    ts: int | None = None
    expiry: int | None = None
    tombstone_weight: Fraction | None = None
    # decreasing-weights table: (from_time, weight) breakpoints, non-increasing
    schedule: tuple[tuple[int, Fraction], ...] = ()

    def __post_init__(self):
        if self.weight < 0:
            raise ValidationError(f"item {self.id}: negative weight")
        if self.tombstone_weight is not None:
            if self.tombstone_weight < 0 or self.tombstone_weight > self.weight:
                raise ValidationError(
                    f"item {self.id}: tombstone weight must lie in [0, weight]")
        prev_t, prev_w = None, self.weight
        for t, w in self.schedule:
            if prev_t is not None and t <= prev_t:
                raise ValidationError(f"item {self.id}: schedule times not increasing")
            if w < 0 or w > prev_w:
                raise ValidationError(f"item {self.id}: schedule not non-increasing")
            prev_t, prev_w = t, w

    def weight_at(self, t: int) -> Fraction:
        """Decreasing-weights value wt_t(x); the plain weight before any breakpoint."""
        w = self.weight
        for bt, bw in self.schedule:
            if bt > t:
                break
            w = bw
        return w

    def expired(self, t: int) -> bool:
        return self.expiry is not None and self.expiry < t

    def lsm_weight(self, t: int) -> Fraction:
        if self.expired(t) and self.tombstone_weight is not None:
            return self.tombstone_weight
        return self.weight


@dataclass(frozen=True, slots=True)
class Batch:
    time: int
    items: tuple[Item, ...] = ()

    def __post_init__(self):
        if self.time < 1:
            raise ValidationError("batch times start at 1")

    def __bool__(self) -> bool:
        return bool(self.items)


@dataclass(frozen=True)
class Trace:
    batches: tuple[Batch, ...]
    variant: str = KCOMPONENT
    general_cost: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.variant == GENERAL and self.general_cost is None:
            raise ValidationError("general variant needs a declared cost function")
        seen: set[str] = set()
        last_ts = None
        for idx, b in enumerate(self.batches, start=1):
            if b.time != idx:
                raise ValidationError(f"batch {idx} has time {b.time}; times must be 1..n")
            for x in b.items:
                if x.id in seen:
                    raise ValidationError(f"duplicate item id {x.id!r}")
                seen.add(x.id)
                if x.ts is not None:
                    if last_ts is not None and x.ts <= last_ts:
                        raise ValidationError(
                            f"item {x.id}: timestamps must increase in insertion order")
                    last_ts = x.ts
                elif x.key is not None and self.variant == LSM:
                    raise ValidationError(f"keyed item {x.id} lacks a timestamp")

    @property
    def n(self) -> int:
        return len(self.batches)

    @cached_property
    def m(self) -> int:
        return sum(1 for b in self.batches if b.items)

    @cached_property
    def index(self) -> dict[str, tuple[Item, int]]:
        return {x.id: (x, b.time) for b in self.batches for x in b.items}

    def item(self, item_id: str) -> Item:
        return self.index[item_id][0]

    def insert_time(self, item_id: str) -> int:
        return self.index[item_id][1]

    def batch(self, t: int) -> Batch:
        return self.batches[t - 1]

    def items_between(self, i: int, j: int) -> list[Item]:
        """Items of batches i..j (inclusive)."""
        return [x for b in self.batches[i - 1:j] for x in b.items]

    def universe(self, t: int) -> frozenset[str]:
        return frozenset(x.id for x in self.items_between(1, t))

    @property
    def decreasing_schedule(self) -> dict[str, tuple[tuple[int, Fraction], ...]]:
        return {x.id: x.schedule for b in self.batches for x in b.items if x.schedule}

    def total_items(self) -> int:
        return len(self.index)


# ---------------------------------------------------------------- cost models

def nonredundant_items(items: Iterable[Item]) -> list[Item]:
    """Items with no newer same-key item in the collection; keyless items always stay."""
    items = list(items)
    newest: dict[str, int] = {}
    seen_ts: set[int] = set()
    for x in items:
        if x.key is None:
            continue
        if x.ts is None:
            raise ValidationError(f"keyed item {x.id} lacks a timestamp")
        if x.ts in seen_ts:
            raise ValidationError(f"duplicate timestamp {x.ts}")
        seen_ts.add(x.ts)
        if x.key not in newest or x.ts > newest[x.key]:
            newest[x.key] = x.ts
    return [x for x in items if x.key is None or newest[x.key] == x.ts]


class CostModel:
    """Build-cost function wt_t(S) over collections of items."""

    kind = ""
    # wt_t(S) does not depend on t and is a plain sum over disjoint unions
    additive = False

    def cost(self, t: int, items: Iterable[Item]) -> Fraction:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class AdditiveCost(CostModel):
    kind = "additive"
    additive = True

    def cost(self, t, items):
        return sum((x.weight for x in items), Fraction(0))


class DecreasingCost(CostModel):
    kind = "decreasing"

    def cost(self, t, items):
        return sum((x.weight_at(t) for x in items), Fraction(0))


class LsmCost(CostModel):
    kind = "lsm"

    def cost(self, t, items):
        return sum((x.lsm_weight(t) for x in nonredundant_items(items)), Fraction(0))


def max_weight(t: int, items: Iterable[Item]) -> Fraction:
    return max((x.weight for x in items), default=Fraction(0))


GENERAL_COSTS: dict[str, Callable[[int, Iterable[Item]], Fraction]] = {
    "max-weight": max_weight,
}


class GeneralCost(CostModel):
    kind = "general"

    def __init__(self, name: str, fn: Callable[[int, Iterable[Item]], Fraction] | None = None):
        if fn is None:
            try:
                fn = GENERAL_COSTS[name]
            except KeyError:
                raise ValidationError(f"unknown general cost function {name!r}") from None
        self.name = name
        self.fn = fn

    def cost(self, t, items):
        return Fraction(self.fn(t, list(items)))

    def __repr__(self):
        return f"GeneralCost({self.name!r})"


MODEL_KINDS = {
    MINSUM: "additive",
    KCOMPONENT: "additive",
    DECREASING: "decreasing",
    LSM: "lsm",
    GENERAL: "general",
}


def model_for(trace: Trace) -> CostModel:
    kind = MODEL_KINDS[trace.variant]
    if kind == "additive":
        return AdditiveCost()
    if kind == "decreasing":
        return DecreasingCost()
    if kind == "lsm":
        return LsmCost()
    return GeneralCost(trace.general_cost)


def eval_build_cost(model: CostModel, t: int, S: Iterable[str], trace: Trace) -> Fraction:
    """wt_t(S) for a set of item ids, checked against the trace."""
    items = []
    for item_id in S:
        if item_id not in trace.index:
            raise ValidationError(f"unknown item {item_id!r}")
        x, born = trace.index[item_id]
        if born > t:
            raise ValidationError(f"item {item_id!r} inserted at {born} > {t}")
        items.append(x)
    return model.cost(t, items)


# ---------------------------------------------------------------- covers

@dataclass(frozen=True, slots=True)
class Component:
    id: int
    members: frozenset[str]
    birth: int
    interval: tuple[int, int] | None = None


@dataclass(frozen=True, slots=True)
class Cover:
    time: int
    components: tuple[Component, ...]

    def __len__(self):
        return len(self.components)


@dataclass(frozen=True, slots=True)
class CoverDelta:
    destroyed: frozenset[int] = frozenset()
    created: tuple[tuple[int, frozenset[str]], ...] = ()

    def __bool__(self):
        return bool(self.destroyed or self.created)


EMPTY_DELTA = CoverDelta()


@dataclass
class CoverReport:
    time: int
    missing: list[str] = field(default_factory=list)
    unknown: list[str] = field(default_factory=list)
    over_budget: int | None = None

    @property
    def ok(self) -> bool:
        return not self.missing and not self.unknown and self.over_budget is None

    def describe(self) -> str:
        parts = []
        if self.missing:
            parts.append(f"missing items {sorted(self.missing)}")
        if self.unknown:
            parts.append(f"unknown items {sorted(self.unknown)}")
        if self.over_budget is not None:
            parts.append(f"{self.over_budget} components exceed budget")
        return "; ".join(parts) or "ok"


def validate_cover(cover: Cover, trace: Trace, k: int | None = None) -> CoverReport:
    report = CoverReport(cover.time)
    universe = trace.universe(cover.time)
    covered: set[str] = set()
    for c in cover.components:
        covered |= c.members
    report.unknown = sorted(covered - universe)
    report.missing = sorted(universe - covered)
    if k is not None and len(cover.components) > k:
        report.over_budget = len(cover.components)
    return report


# ---------------------------------------------------------------- ledgers

@dataclass
class SolutionLedger:
    """A full solution: per-time deltas plus exact per-time costs."""

    n: int
    model_kind: str
    k: int | None
    components: dict[int, Component]
    created: list[tuple[int, ...]]
    destroyed: list[frozenset[int]]
    build: list[Fraction]
    query: list[int]
    batch_ids: list[frozenset[str]]

    @property
    def total_build(self) -> Fraction:
        return sum(self.build, Fraction(0))

    @property
    def total_query(self) -> int:
        return sum(self.query)

    @property
    def total(self) -> Fraction:
        return self.total_build + self.total_query

    def objective(self, objective: str) -> Fraction:
        return self.total if objective == MINSUM else self.total_build

    def covers(self) -> Iterator[Cover]:
        live: dict[int, Component] = {}
        for t in range(1, self.n + 1):
            for cid in self.destroyed[t - 1]:
                del live[cid]
            for cid in self.created[t - 1]:
                live[cid] = self.components[cid]
            yield Cover(t, tuple(live.values()))

    def cover(self, t: int) -> Cover:
        for c in self.covers():
            if c.time == t:
                return c
        raise IndexError(t)

    def deltas(self) -> Iterator[CoverDelta]:
        for t in range(1, self.n + 1):
            yield CoverDelta(
                self.destroyed[t - 1],
                tuple((cid, self.components[cid].members) for cid in self.created[t - 1]))

    def max_components(self) -> int:
        return max(self.query, default=0)


class LedgerBuilder:
    """Replays cover deltas batch by batch, validating and costing each step.

    Validation is incremental: per-item coverage counts are kept so a step
    costs O(size of the delta), not O(size of the cover).
    """

    def __init__(self, model: CostModel, k: int | None = None):
        self.model = model
        self.k = k
        self.t = 0
        self.items: dict[str, Item] = {}
        self.item_time: dict[str, int] = {}
        self.prefix_count = [0]
        self.live: dict[int, Component] = {}
        self.coverage: Counter[str] = Counter()
        self.components: dict[int, Component] = {}
        self.created: list[tuple[int, ...]] = []
        self.destroyed: list[frozenset[int]] = []
        self.build: list[Fraction] = []
        self.query: list[int] = []
        self.batch_ids: list[frozenset[str]] = []
        # additive models: cached component weights let merges cost O(delta)
        self.weights: dict[int, Fraction] = {}

    @property
    def total_build(self) -> Fraction:
        return sum(self.build, Fraction(0))

    def _weight(self, t: int, members: frozenset[str], absorbed: list[Component]) -> Fraction:
        if not self.model.additive:
            return self.model.cost(t, [self.items[x] for x in members])
        w = Fraction(0)
        rest = members
        for comp in absorbed:
            if comp.members <= rest:
                w += self.weights[comp.id]
                rest = rest - comp.members
        return w + self.model.cost(t, [self.items[x] for x in rest])

    def _interval(self, members: frozenset[str]) -> tuple[int, int] | None:
        times = [self.item_time[x] for x in members]
        i, j = min(times), max(times)
        if self.prefix_count[j] - self.prefix_count[i - 1] == len(members):
            return (i, j)
        return None

    def apply(self, batch: Batch, delta: CoverDelta) -> Fraction:
        t = self.t + 1
        if batch.time != t:
            raise CoverViolation(t, f"expected batch for time {t}, got {batch.time}", delta)
        self.t = t
        ids = []
        for x in batch.items:
            if x.id in self.items:
                raise CoverViolation(t, f"item {x.id!r} inserted twice", delta)
            self.items[x.id] = x
            self.item_time[x.id] = t
            ids.append(x.id)
        self.prefix_count.append(self.prefix_count[-1] + len(ids))
        self.batch_ids.append(frozenset(ids))

        touched: set[str] = set(ids)
        gone = []
        for cid in delta.destroyed:
            comp = self.live.pop(cid, None)
            if comp is None:
                raise CoverViolation(t, f"destroys unknown component {cid}", delta)
            for x in comp.members:
                self.coverage[x] -= 1
            touched |= comp.members
            gone.append(comp)
        cost = Fraction(0)
        new_ids = []
        for cid, members in delta.created:
            if cid in self.components:
                raise CoverViolation(t, f"component id {cid} reused", delta)
            if not members:
                raise CoverViolation(t, f"component {cid} is empty", delta)
            stray = [x for x in members if x not in self.items]
            if stray:
                raise CoverViolation(t, f"component {cid} holds unknown items {sorted(stray)}", delta)
            members = frozenset(members)
            comp = Component(cid, members, t, self._interval(members))
            self.components[cid] = comp
            self.live[cid] = comp
            new_ids.append(cid)
            for x in members:
                self.coverage[x] += 1
            w = self._weight(t, members, gone)
            if self.model.additive:
                self.weights[cid] = w
            cost += w
        missing = [x for x in touched if self.coverage[x] <= 0]
        if missing:
            raise CoverViolation(t, f"items left uncovered: {sorted(missing)}", delta)
        if self.k is not None and len(self.live) > self.k:
            raise CoverViolation(t, f"{len(self.live)} components exceed k={self.k}", delta)
        self.created.append(tuple(new_ids))
        self.destroyed.append(frozenset(delta.destroyed))
        self.build.append(cost)
        self.query.append(len(self.live))
        return cost

    def live_components(self) -> list[Component]:
        return list(self.live.values())

    def ledger(self) -> SolutionLedger:
        return SolutionLedger(
            n=self.t, model_kind=self.model.kind, k=self.k,
            components=dict(self.components), created=list(self.created),
            destroyed=list(self.destroyed), build=list(self.build),
            query=list(self.query), batch_ids=list(self.batch_ids))


def replay(trace: Trace, deltas: Iterable[CoverDelta], model: CostModel | None = None,
           k: int | None = None) -> SolutionLedger:
    builder = LedgerBuilder(model or model_for(trace), k)
    for batch, delta in zip(trace.batches, deltas, strict=True):
        builder.apply(batch, delta)
    return builder.ledger()


def accumulate_costs(covers: Sequence[Cover], model: CostModel, trace: Trace,
                     k: int | None = None) -> SolutionLedger:
    """Cost a full cover sequence; component identity is by id."""
    if len(covers) != trace.n:
        raise ValidationError(f"{len(covers)} covers for a trace of length {trace.n}")
    deltas = []
    prev: dict[int, frozenset[str]] = {}
    for t, cover in enumerate(covers, start=1):
        if cover.time != t:
            raise CoverViolation(t, f"cover carries time {cover.time}")
        report = validate_cover(cover, trace, k)
        if not report.ok:
            raise CoverViolation(t, report.describe())
        cur = {}
        for c in cover.components:
            if c.id in cur:
                raise CoverViolation(t, f"component id {c.id} repeated")
            if c.id in prev and prev[c.id] != c.members:
                raise CoverViolation(t, f"component {c.id} changed members")
            cur[c.id] = c.members
        deltas.append(CoverDelta(
            frozenset(prev.keys() - cur.keys()),
            tuple((cid, m) for cid, m in cur.items() if cid not in prev)))
        prev = cur
    return replay(trace, deltas, model, k)


# ---------------------------------------------------------------- P1-P3

@dataclass
class PropertyReport:
    trials: int
    counterexamples: list[dict] = field(default_factory=list)
    strict_subadditive: int = 0

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def check_cost_properties(model: CostModel, trace: Trace, seed: int = 0,
                          trials: int = 1000) -> PropertyReport:
    """Sample (t, i <= t, S, S') and test sub-additivity, suffix and temporal monotonicity.

    Temporal monotonicity is checked as wt_t(S) <= wt_i(S) for S inside U_i:
    building the same set later never costs more.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = PropertyReport(trials)
    rng = XorShift64Star(seed)
    n = trace.n
    if n == 0 or trace.total_items() == 0:
        return report
    prefix: list[list[Item]] = [[]]
    for b in trace.batches:
        prefix.append(prefix[-1] + list(b.items))
    for _ in range(trials):
        t = rng.randint(1, n)
        i = rng.randint(1, t)
        pool = prefix[t]
        S = rng.subset(pool)
        S2 = rng.subset(pool)
        union = {x.id: x for x in S + S2}.values()
        a, b, ab = model.cost(t, S), model.cost(t, S2), model.cost(t, union)
        if ab > a + b:
            report.counterexamples.append(dict(
                prop="P1", t=t, S=[x.id for x in S], S2=[x.id for x in S2],
                lhs=ab, rhs=a + b))
        elif ab < a + b and not set(x.id for x in S) & set(x.id for x in S2):
            report.strict_subadditive += 1
        old = {x.id for x in prefix[i]}
        suffix = [x for x in S if x.id not in old]
        if model.cost(t, suffix) > a:
            report.counterexamples.append(dict(
                prop="P2", t=t, i=i, S=[x.id for x in S], lhs=model.cost(t, suffix), rhs=a))
        early = rng.subset(prefix[i])
        late_cost, early_cost = model.cost(t, early), model.cost(i, early)
        if late_cost > early_cost:
            report.counterexamples.append(dict(
                prop="P3", t=t, i=i, S=[x.id for x in early], lhs=late_cost, rhs=early_cost))
    return report
