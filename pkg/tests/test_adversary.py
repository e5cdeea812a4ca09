from __future__ import annotations

from collections import Counter
from fractions import Fraction

import pytest

from dynlab.adversary import (
    COST_REACHED, EXPONENT_CAP, STEP_CAP, _Sequences, build_merge_tree, check_merge_tree,
    first_merge_time, gen_minsum_lower_bound, ratio_lower_bound, run_kcomp_adversary,
)
from dynlab.core import (
    AdditiveCost, Batch, CapExceeded, Component, Cover, Item, Trace, ValidationError,
    accumulate_costs, replay,
)
from dynlab.policies import AdaptiveBinary, make_policy, run_policy


def test_tree_depth_zero():
    tree = build_merge_tree(0)
    assert tree.children[1] == [2, 3] and tree.leaves == [2, 3] and tree.N == 2


def test_tree_depth_two_shape():
    tree = build_merge_tree(2)
    assert tree.N == 18 and len(tree.leaves) == 132 and tree.count == 141
    assert Counter(tree.leaf_weights()) == {2 ** 9: 64, 2 ** 10: 32, 2 ** 11: 16,
                                            2 ** 12: 8, 2 ** 13: 8, 2 ** 14: 4}
    for v, kids in tree.children.items():
        assert len(kids) in (0, 2 ** (v - tree.parent[v]))
        if kids:
            assert sum(tree.weight(c) for c in kids) == tree.weight(v)
    assert sum(tree.leaf_weights()) == 2 ** tree.N


def test_depth_three_is_refused():
    with pytest.raises(CapExceeded):
        gen_minsum_lower_bound(3)


@pytest.mark.parametrize("depth,cost,first", [(0, 6, 2), (1, 3 * 2 ** 6, 8)])
def test_small_lower_bound_runs(depth, cost, first):
    tr, tree = gen_minsum_lower_bound(depth)
    led = replay(tr, run_policy(AdaptiveBinary(), tr))
    match, build = check_merge_tree(led, tree)
    assert match and build == cost and first_merge_time(led) == first


def test_perturbed_leaf_breaks_match():
    tr, tree = gen_minsum_lower_bound(1)
    b = tr.batches[0]
    x = b.items[0]
    bad = Trace((Batch(1, (Item(x.id, x.weight / 2),)),) + tr.batches[1:], tr.variant)
    led = replay(bad, run_policy(AdaptiveBinary(), bad))
    assert not check_merge_tree(led, tree)[0]


def test_sequence_formulas():
    s = _Sequences(2, Fraction(1, 4), 10 ** 6)
    assert s.exponent(3, 1) == 1
    s.ensure(2)
    assert s.length[2] == 8
    assert [s.exponent(2, i) for i in range(1, 9)] == list(range(9, 1, -1))


def test_first_insertions():
    run = run_kcomp_adversary(lambda k: make_policy("k-binomial", None, k), 2, Fraction(1, 4),
                              step_cap=2)
    first, second = run.transcript
    assert (first.sequence, first.exponent) == (3, 1)
    # the singleton built at t=1 holds sigma(3)'s representative
    assert (second.sequence, second.index, second.exponent, second.parent) == (2, 1, 9, "s3_1")
    assert run.stop_reason == STEP_CAP


def _candidate_cost(run, j):
    """cost(C(j)) recomputed through the core ledger from the transcript."""
    k = run.k
    groups = {h: (j if h in (j, j + 1) else h) for h in range(1, k + 2)}
    batches, covers, members, ids = [], [], {}, {}
    for n, ins in enumerate(run.transcript, start=1):
        batches.append(Batch(n, (Item(ins.item_id, run.epsilon ** ins.exponent),)))
        g = groups[ins.sequence]
        members[g] = members.get(g, frozenset()) | {ins.item_id}
        ids[g] = n * 10 + g
        covers.append(Cover(n, tuple(Component(ids[h], members[h], n) for h in members)))
    tr = Trace(tuple(batches))
    return accumulate_costs(covers, AdditiveCost(), tr, k).total_build


@pytest.mark.parametrize("name,k,eps", [("greedy-dual", 2, Fraction(1, 3)),
                                        ("greedy-dual", 2, Fraction(1, 2)),
                                        ("bigtable-default", 2, Fraction(1, 2)),
                                        ("k-binomial", 2, Fraction(1, 3))])
def test_completed_runs_meet_the_guarantee(name, k, eps):
    run = run_kcomp_adversary(lambda k: make_policy(name, None, k), k, eps)
    assert run.stop_reason == COST_REACHED
    assert run.alg_cost >= k
    assert run.achieved_ratio >= ratio_lower_bound(k, eps)
    for j in range(1, k + 1):
        assert run.candidate_costs[j] == _candidate_cost(run, j)
    assert run.opt_upper == min(run.candidate_costs.values())


def test_alg_cost_matches_ledger():
    run = run_kcomp_adversary(lambda k: make_policy("greedy-dual", None, k), 2, Fraction(1, 2))
    assert run.ledger.total_build == run.alg_cost


def test_parents_come_from_the_sequence_above():
    run = run_kcomp_adversary(lambda k: make_policy("greedy-dual", None, k), 2, Fraction(1, 3))
    seq = {x.item_id: x.sequence for x in run.transcript}
    for x in run.transcript[1:]:
        assert seq[x.parent] == x.sequence + 1


def test_exponent_cap_is_reported():
    run = run_kcomp_adversary(lambda k: make_policy("greedy-dual", None, k), 2, Fraction(1, 16))
    assert run.stop_reason == EXPONENT_CAP and run.steps == 2


def test_step_cap_honoured():
    run = run_kcomp_adversary(lambda k: make_policy("bigtable-default", None, k), 2, Fraction(1, 3),
                              step_cap=50)
    assert run.stop_reason == STEP_CAP and run.steps == 50


def test_bad_epsilon():
    with pytest.raises(ValidationError):
        run_kcomp_adversary(lambda k: make_policy("greedy-dual", None, k), 2, Fraction(1))
