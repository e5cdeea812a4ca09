from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dynlab.core import (
    AdditiveCost, Batch, Component, Cover, CoverDelta, CoverViolation, CostModel,
    DecreasingCost, GeneralCost, Item, LedgerBuilder, LsmCost, Trace, ValidationError,
    accumulate_costs, check_cost_properties, decimal_str, eval_build_cost, nonredundant_items,
    parse_weight, replay, validate_cover,
)
from dynlab.workloads import BURSTY, ZIPF_LSM, corpus

from conftest import make_trace


def test_parse_weight_exact():
    assert parse_weight("3/7") == Fraction(3, 7)
    assert parse_weight(5) == 5
    with pytest.raises(ValidationError):
        parse_weight(0.5)
    with pytest.raises(ValidationError):
        parse_weight("-1")
    with pytest.raises(ValidationError):
        parse_weight("abc")


def test_decimal_rendering():
    assert decimal_str(Fraction(51, 2)) == "25.5"
    assert decimal_str(Fraction(1, 3)) == "0.333333333333"
    assert decimal_str(Fraction(0)) == "0"
    assert decimal_str(Fraction(80)) == "80" and decimal_str(Fraction(1048576)) == "1048576"
    assert decimal_str(Fraction(10 ** 13)) == "1E+13"


def test_item_schedule_and_expiry():
    x = Item("a", Fraction(8), schedule=((3, Fraction(4)), (6, Fraction(1))))
    assert [x.weight_at(t) for t in (1, 2, 3, 5, 6, 9)] == [8, 8, 4, 4, 1, 1]
    with pytest.raises(ValidationError):
        Item("b", Fraction(2), schedule=((2, Fraction(3)),))
    y = Item("c", Fraction(5), key="k", ts=1, expiry=4, tombstone_weight=Fraction(1))
    # expiry is strict: still live at t == expiry
    assert y.lsm_weight(4) == 5 and y.lsm_weight(5) == 1
    with pytest.raises(ValidationError):
        Item("d", Fraction(1), tombstone_weight=Fraction(2))


def test_trace_validation():
    with pytest.raises(ValidationError):
        Trace((Batch(1, (Item("a", Fraction(1)),)), Batch(2, (Item("a", Fraction(1)),))))
    with pytest.raises(ValidationError):
        Trace((Batch(2),))
    with pytest.raises(ValidationError):
        Trace((Batch(1, (Item("a", Fraction(1), "k", 5), Item("b", Fraction(1), "k", 3))),), "lsm")
    with pytest.raises(ValidationError):
        Trace((), "general")


def test_lsm_cost_counts_newest_per_key():
    a = Item("a", Fraction(4), "k", 1)
    b = Item("b", Fraction(3), "k", 2)
    c = Item("c", Fraction(2), None)
    assert [x.id for x in nonredundant_items([a, b, c])] == ["b", "c"]
    assert LsmCost().cost(1, [a, b, c]) == 5
    assert LsmCost().cost(1, [a, c]) == 6


def test_general_max_weight():
    g = GeneralCost("max-weight")
    assert g.cost(1, [Item("a", Fraction(2)), Item("b", Fraction(7))]) == 7
    with pytest.raises(ValidationError):
        GeneralCost("nope")


def test_eval_build_cost_rejects_future_items(trace_of):
    tr = trace_of([1, 2])
    assert eval_build_cost(AdditiveCost(), 2, ["x1", "x2"], tr) == 3
    with pytest.raises(ValidationError):
        eval_build_cost(AdditiveCost(), 1, ["x2"], tr)


def test_validate_cover_reports(trace_of):
    tr = trace_of([1, 1, 1])
    cover = Cover(3, (Component(1, frozenset({"x1"}), 1), Component(2, frozenset({"x2", "zz"}), 2)))
    rep = validate_cover(cover, tr, k=1)
    assert rep.missing == ["x3"] and rep.unknown == ["zz"] and rep.over_budget == 2
    assert not rep.ok


def test_builder_rejects_uncovered_item(trace_of):
    tr = trace_of([1, 1])
    b = LedgerBuilder(AdditiveCost())
    b.apply(tr.batch(1), CoverDelta(created=((1, frozenset({"x1"})),)))
    with pytest.raises(CoverViolation) as err:
        b.apply(tr.batch(2), CoverDelta(destroyed=frozenset({1}), created=((2, frozenset({"x2"})),)))
    assert err.value.t == 2


def test_builder_enforces_k_and_fresh_ids(trace_of):
    tr = trace_of([1, 1])
    b = LedgerBuilder(AdditiveCost(), k=1)
    b.apply(tr.batch(1), CoverDelta(created=((1, frozenset({"x1"})),)))
    with pytest.raises(CoverViolation):
        b.apply(tr.batch(2), CoverDelta(created=((2, frozenset({"x2"})),)))
    b2 = LedgerBuilder(AdditiveCost())
    b2.apply(tr.batch(1), CoverDelta(created=((1, frozenset({"x1"})),)))
    with pytest.raises(CoverViolation):
        b2.apply(tr.batch(2), CoverDelta(frozenset({1}), ((1, frozenset({"x1", "x2"})),)))


def test_identity_is_by_id(trace_of):
    # rebuilding the same member set under a new id is charged again
    tr = trace_of([2, None])
    same = [Cover(1, (Component(1, frozenset({"x1"}), 1),)), Cover(2, (Component(1, frozenset({"x1"}), 1),))]
    fresh = [Cover(1, (Component(1, frozenset({"x1"}), 1),)), Cover(2, (Component(2, frozenset({"x1"}), 2),))]
    assert accumulate_costs(same, AdditiveCost(), tr).total_build == 2
    assert accumulate_costs(fresh, AdditiveCost(), tr).total_build == 4


def test_minsum_cost_counts_components_every_step(trace_of):
    tr = trace_of([1, 1, None])
    deltas = [CoverDelta(created=((1, frozenset({"x1"})),)),
              CoverDelta(created=((2, frozenset({"x2"})),)),
              CoverDelta()]
    led = replay(tr, deltas)
    assert led.total_build == 2 and led.query == [1, 2, 2] and led.total == 7


@given(st.lists(st.one_of(st.none(), st.integers(0, 9)), min_size=1, max_size=10),
       st.lists(st.booleans(), min_size=10, max_size=10))
@settings(max_examples=150, deadline=None)
def test_covers_reaccumulate_to_ledger_totals(weights, merges):
    tr = make_trace(weights)
    # a solution that either merges everything or adds a singleton
    deltas, live, ids = [], {}, iter(range(1, 100))
    for t, b in enumerate(tr.batches, start=1):
        if not b.items:
            deltas.append(CoverDelta())
            continue
        mine = frozenset(x.id for x in b.items)
        if merges[t - 1] and live:
            cid = next(ids)
            deltas.append(CoverDelta(frozenset(live), ((cid, mine.union(*live.values())),)))
            live = {cid: mine.union(*live.values())}
        else:
            cid = next(ids)
            deltas.append(CoverDelta(created=((cid, mine),)))
            live[cid] = mine
    led = replay(tr, deltas)
    again = accumulate_costs(list(led.covers()), AdditiveCost(), tr)
    assert again.build == led.build and again.query == led.query
    assert led.total == sum(led.build) + sum(led.query)


@pytest.mark.parametrize("model", [AdditiveCost(), DecreasingCost(), LsmCost(), GeneralCost("max-weight")],
                         ids=lambda m: m.kind)
def test_cost_models_satisfy_properties(model):
    kinds = (ZIPF_LSM,) if model.kind == "lsm" else (BURSTY,)
    variant = "decreasing" if model.kind == "decreasing" else "kcomponent"
    for tr in corpus(6, seed=7, variants=(variant,), kinds=kinds, n_range=(3, 8)):
        rep = check_cost_properties(model, tr, seed=1, trials=300)
        assert rep.ok, rep.counterexamples[:3]


class _Squares(CostModel):
    kind = "squares"

    def cost(self, t, items):
        return sum((x.weight for x in items), Fraction(0)) ** 2


class _Inflating(CostModel):
    kind = "inflating"

    def cost(self, t, items):
        return sum((x.weight for x in items), Fraction(0)) * t


def test_property_checker_finds_violations(trace_of):
    tr = trace_of([1, 2, 3, 4, 5])
    assert any(c["prop"] == "P1" for c in check_cost_properties(_Squares(), tr, trials=200).counterexamples)
    assert any(c["prop"] == "P3" for c in check_cost_properties(_Inflating(), tr, trials=200).counterexamples)


def test_general_max_weight_is_strictly_subadditive(trace_of):
    tr = trace_of([[1, 2, 3], [4, 5]], variant="general")
    rep = check_cost_properties(GeneralCost("max-weight"), tr, trials=300)
    assert rep.ok and rep.strict_subadditive > 0
