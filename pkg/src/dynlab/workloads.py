"""Seeded trace generators and the JSON Lines trace format.

Every random draw goes through :class:`~dynlab.rng.XorShift64Star` using
integer arithmetic only, so a config reproduces the same trace everywhere.

File format, one JSON object per line::

    {"format": "dynlab-trace/1", "variant": "kcomponent", "n": 3, "cost": null, "name": ""}
    {"t": 1, "items": [{"id": "x1", "w": "3/7"}]}
    {"t": 2, "items": []}
    {"t": 3, "items": [{"id": "x2", "w": "1", "key": "a", "ts": 2, "exp": 9, "tw": "1/2"}]}

``sched`` (optional) lists decreasing-weight breakpoints as ``[[t, "p/q"], ...]``.
"""

from __future__ import annotations

import io
import json
import os
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable

from .core import (
    DECREASING, GENERAL, GENERAL_COSTS, KCOMPONENT, LSM, VARIANTS, Batch, Item,
    Trace, ValidationError, parse_weight,
)
from .rng import XorShift64Star

FORMAT = "dynlab-trace/1"

UNIFORM = "Uniform"
HEAVY_THEN_LIGHT = "HeavyThenLight"
BURSTY = "Bursty"
ZIPF_LSM = "ZipfLsm"
KINDS = (UNIFORM, HEAVY_THEN_LIGHT, BURSTY, ZIPF_LSM)

LIGHT_WEIGHT = Fraction(1, 2 ** 20)


class TraceFormatError(ValidationError):
    def __init__(self, line: int | None, message: str):
        # line is None for whole-trace problems found after parsing
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class WorkloadConfig:
    kind: str = UNIFORM
    n: int = 16
    seed: int = 0
    variant: str = KCOMPONENT
    general_cost: str | None = None
    # Bursty / ZipfLsm
    weight_lo: int = 1
    weight_hi: int = 8
    burst_max: int = 3
    empty_prob: Fraction = Fraction(1, 3)
    max_items: int | None = None
    # decreasing variant: up to this many breakpoints per item
    decay_steps: int = 2
    # ZipfLsm
    keys: int = 8
    zipf_s: int = 1
    update_ratio: Fraction = Fraction(1, 2)
    delete_ratio: Fraction = Fraction(1, 8)
    expiry_ratio: Fraction = Fraction(1, 4)
    ttl_max: int = 4
    delete_weight: Fraction = Fraction(1)
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown workload kind {self.kind!r}; choose from {KINDS}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if not 0 <= self.weight_lo <= self.weight_hi:
            raise ValidationError("need 0 <= weight_lo <= weight_hi")
        if self.burst_max < 1:
            raise ValidationError("burst_max must be >= 1")
        for name in ("empty_prob", "update_ratio", "delete_ratio", "expiry_ratio"):
            v = Fraction(getattr(self, name))
            if not 0 <= v <= 1:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.kind == ZIPF_LSM and (self.keys < 1 or self.zipf_s < 0 or self.ttl_max < 1):
            raise ValidationError("ZipfLsm needs keys >= 1, zipf_s >= 0, ttl_max >= 1")
        if self.variant == GENERAL and (self.general_cost or "max-weight") not in GENERAL_COSTS:
            raise ValidationError(f"unknown general cost {self.general_cost!r}")


def _zipf_table(keys: int, s: int) -> list[int]:
    """Integer cumulative weights proportional to 1/i^s, i = 1..keys."""
    scale = 1
    for i in range(1, keys + 1):
        scale *= i ** s
    cum, acc = [], 0
    for i in range(1, keys + 1):
        acc += scale // i ** s
        cum.append(acc)
    return cum


def _decay(rng: XorShift64Star, w: Fraction, t0: int, n: int, steps: int) -> tuple:
    sched = []
    times = sorted({rng.randint(t0 + 1, n) for _ in range(rng.randint(0, steps))}) if t0 < n else []
    for bt in times:
        # drop to a random fraction num/4 of the current value
        w = w * rng.randint(0, 3) / 4
        sched.append((bt, w))
    return tuple(sched)


def gen_workload(config: WorkloadConfig) -> Trace:
    config.validate()
    rng = XorShift64Star(config.seed)
    n = config.n
    kind = config.kind
    variant = LSM if kind == ZIPF_LSM else config.variant
    cost = (config.general_cost or "max-weight") if variant == GENERAL else None
    batches: list[Batch] = []
    counter = 0
    ts = 0
    zipf = _zipf_table(config.keys, config.zipf_s) if kind == ZIPF_LSM else []
    keys_used: list[str] = []
    cap = config.max_items

    def new_id() -> str:
        nonlocal counter
        counter += 1
        return f"x{counter}"

    for t in range(1, n + 1):
        items: list[Item] = []
        if kind == UNIFORM:
            items.append(Item(new_id(), Fraction(1)))
        elif kind == HEAVY_THEN_LIGHT:
            items.append(Item(new_id(), Fraction(n * n) if t == 1 else LIGHT_WEIGHT))
        else:
            size = 0 if rng.chance(config.empty_prob) else rng.randint(1, config.burst_max)
            if cap is not None:
                size = min(size, cap - counter)
            for _ in range(size):
                w = Fraction(rng.randint(config.weight_lo, config.weight_hi))
                if kind == BURSTY:
                    items.append(Item(new_id(), w))
                    continue
                ts += 1
                if keys_used and rng.chance(config.update_ratio):
                    key = keys_used[rng.below(len(keys_used))]
                else:
                    key = f"k{bisect_right(zipf, rng.below(zipf[-1])) + 1}"
                if key not in keys_used:
                    keys_used.append(key)
                if rng.chance(config.delete_ratio):
                    dw = Fraction(config.delete_weight)
                    items.append(Item(new_id(), dw, key, ts, tombstone_weight=dw))
                    continue
                exp = tw = None
                if rng.chance(config.expiry_ratio):
                    exp = t + rng.randint(0, config.ttl_max - 1)
                    tw = w * rng.randint(0, 2) / 2
                items.append(Item(new_id(), w, key, ts, exp, tw))
        if variant == DECREASING and config.decay_steps:
            items = [Item(x.id, x.weight, x.key, x.ts, x.expiry, x.tombstone_weight,
                          _decay(rng, x.weight, t, n, config.decay_steps)) for x in items]
        batches.append(Batch(t, tuple(items)))
    name = f"{kind}-n{n}-s{config.seed}"
    return Trace(tuple(batches), variant, cost, name)


def corpus(count: int, seed: int = 0, variants: Iterable[str] = (KCOMPONENT,),
           n_range: tuple[int, int] = (1, 8), max_items: int | None = 12,
           kinds: Iterable[str] = (BURSTY,), **knobs) -> list[Trace]:
    """``count`` small random traces cycling through the given kinds and variants."""
    variants, kinds = list(variants), list(kinds)
    meta = XorShift64Star(seed)
    out = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        variant = variants[(i // len(kinds)) % len(variants)]
        cfg = WorkloadConfig(kind=kind, n=meta.randint(*n_range), seed=meta.next_u64(),
                             variant=variant, max_items=max_items, **knobs)
        out.append(gen_workload(cfg))
    return out


# ---------------------------------------------------------------- I/O

def _item_json(x: Item) -> dict:
    d = {"id": x.id, "w": str(x.weight)}
    if x.key is not None:
        d["key"] = x.key
    if x.ts is not None:
        d["ts"] = x.ts
    if x.expiry is not None:
        d["exp"] = x.expiry
    if x.tombstone_weight is not None:
        d["tw"] = str(x.tombstone_weight)
    if x.schedule:
        d["sched"] = [[bt, str(w)] for bt, w in x.schedule]
    return d


def dump_trace(trace: Trace, out: IO[str]):
    header = {"format": FORMAT, "variant": trace.variant, "n": trace.n,
              "cost": trace.general_cost, "name": trace.name}
    out.write(json.dumps(header) + "\n")
    for b in trace.batches:
        out.write(json.dumps({"t": b.time, "items": [_item_json(x) for x in b.items]}) + "\n")


def write_trace(trace: Trace, destination: str | os.PathLike | IO[str]):
    if hasattr(destination, "write"):
        dump_trace(trace, destination)
        return
    path = Path(destination)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        dump_trace(trace, fh)
    os.replace(tmp, path)


def _parse_item(raw, line: int) -> Item:
    if not isinstance(raw, dict):
        raise TraceFormatError(line, "item must be an object")
    unknown = set(raw) - {"id", "w", "key", "ts", "exp", "tw", "sched"}
    if unknown:
        raise TraceFormatError(line, f"unknown item fields {sorted(unknown)}")
    try:
        item_id = raw["id"]
        if not isinstance(item_id, str):
            raise TraceFormatError(line, "item id must be a string")
        w = _weight(raw["w"])
        key = raw.get("key")
        if key is not None and not isinstance(key, str):
            raise TraceFormatError(line, "key must be a string")
        ts, exp = raw.get("ts"), raw.get("exp")
        for name, v in (("ts", ts), ("exp", exp)):
            if v is not None and (not isinstance(v, int) or isinstance(v, bool)):
                raise TraceFormatError(line, f"{name} must be an integer")
        tw = _weight(raw["tw"]) if raw.get("tw") is not None else None
        sched = tuple((int(bt), _weight(bw)) for bt, bw in raw.get("sched", ()))
        return Item(item_id, w, key, ts, exp, tw, sched)
    except KeyError as exc:
        raise TraceFormatError(line, f"item lacks field {exc.args[0]!r}") from None
    except TraceFormatError:
        raise
    except (ValidationError, TypeError, ValueError) as exc:
        raise TraceFormatError(line, str(exc)) from None


def _weight(value) -> Fraction:
    if not isinstance(value, (str, int)) or isinstance(value, bool):
        raise ValidationError(f"weight must be a rational string, got {value!r}")
    return parse_weight(value)


def load_trace(source: IO[str], variant: str | None = None) -> Trace:
    header = None
    batches: list[Batch] = []
    seen: set[str] = set()
    for lineno, text in enumerate(source, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(lineno, f"malformed JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise TraceFormatError(lineno, "expected a JSON object")
        if "format" in obj:
            if header is not None or batches:
                raise TraceFormatError(lineno, "header must be the first line")
            if obj["format"] != FORMAT:
                raise TraceFormatError(lineno, f"unsupported format {obj['format']!r}")
            header = obj
            continue
        t = obj.get("t")
        if not isinstance(t, int) or isinstance(t, bool):
            raise TraceFormatError(lineno, "batch needs an integer 't'")
        if t <= len(batches):
            raise TraceFormatError(lineno, f"time {t} does not increase")
        raw_items = obj.get("items", [])
        if not isinstance(raw_items, list):
            raise TraceFormatError(lineno, "'items' must be a list")
        items = []
        for raw in raw_items:
            x = _parse_item(raw, lineno)
            if x.id in seen:
                raise TraceFormatError(lineno, f"duplicate item id {x.id!r}")
            seen.add(x.id)
            items.append(x)
        # gaps in t are empty batches
        while len(batches) < t - 1:
            batches.append(Batch(len(batches) + 1))
        batches.append(Batch(t, tuple(items)))
    header = header or {}
    n = header.get("n")
    if isinstance(n, int):
        if n < len(batches):
            raise TraceFormatError(None, f"header declares n={n} but {len(batches)} batches follow")
        while len(batches) < n:
            batches.append(Batch(len(batches) + 1))
    chosen = variant or header.get("variant") or KCOMPONENT
    cost = header.get("cost")
    if chosen == GENERAL and cost is None:
        cost = "max-weight"
    try:
        return Trace(tuple(batches), chosen, cost if chosen == GENERAL else None,
                     header.get("name", ""))
    except ValidationError as exc:
        raise TraceFormatError(None, str(exc)) from None


def read_trace(source: str | os.PathLike | IO[str], variant: str | None = None) -> Trace:
    if hasattr(source, "read"):
        return load_trace(source, variant)
    with open(source, encoding="utf-8") as fh:
        return load_trace(fh, variant)


def trace_to_string(trace: Trace) -> str:
    buf = io.StringIO()
    dump_trace(trace, buf)
    return buf.getvalue()


def trace_from_weights(weights: Iterable, variant: str = KCOMPONENT, name: str = "") -> Trace:
    """One singleton batch per entry; ``None`` or an empty list gives an empty batch.

    Entries may also be lists of weights for multi-item batches.
    """
    batches = []
    c = 0
    for t, entry in enumerate(weights, start=1):
        if entry is None:
            entry = []
        elif not isinstance(entry, (list, tuple)):
            entry = [entry]
        items = []
        for w in entry:
            c += 1
            items.append(Item(f"x{c}", parse_weight(w)))
        batches.append(Batch(t, tuple(items)))
    cost = "max-weight" if variant == GENERAL else None
    return Trace(tuple(batches), variant, cost, name)
