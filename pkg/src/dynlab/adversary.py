"""Executable lower-bound constructions.

* ``gen_minsum_lower_bound`` builds the weighted merge tree T^N_D and the
  trace (one singleton batch per leaf, then empty batches) on which the
  adaptive binary policy reproduces that tree exactly.
* ``run_kcomp_adversary`` drives any deterministic k-component policy with
  items drawn from k+1 geometric sequences of epsilon powers, choosing each
  next item from what the policy just built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .core import (
    AdditiveCost, Batch, CapExceeded, CoverViolation, Item,
    LedgerBuilder, SolutionLedger, Trace, ValidationError,
)
from .policies import Policy

COST_REACHED = "CostReached"
STEP_CAP = "StepCap"
EXPONENT_CAP = "ExponentCap"

DEFAULT_LEAF_CAP = 1 << 20


# ---------------------------------------------------------------- Min-Sum tree

@dataclass
class MergeTree:
    depth: int
    N: int
    parent: dict[int, int]            # node -> parent (root maps to 0)
    children: dict[int, list[int]]
    node_depth: dict[int, int]
    leaves: list[int]                 # insertion order

    @property
    def count(self) -> int:
        return len(self.parent)

    def weight(self, node: int) -> int:
        return 2 ** (self.N - self.parent[node])

    def leaf_weights(self) -> list[int]:
        return [self.weight(v) for v in self.leaves]

    @property
    def length(self) -> int:
        return 2 ** (self.N - 1)


def tree_level_sizes(depth: int, cap: int = DEFAULT_LEAF_CAP) -> list[int]:
    """Number of nodes at each depth 0..depth+1 of T_inf, without building it.

    Raises CapExceeded as soon as a level would exceed ``cap``.
    """
    sizes = [1]
    first, last = 1, 1
    parents = {1: 0}
    for d in range(depth + 1):
        total = 0
        for i in range(first, last + 1):
            c = 2 ** (i - parents[i])
            total += c
            if total > cap:
                raise CapExceeded(f"level {d + 1} of the tree has more than {cap} nodes")
        nxt = last + 1
        for i in range(first, last + 1):
            c = 2 ** (i - parents[i])
            for j in range(nxt, nxt + c):
                parents[j] = i
            nxt += c
        sizes.append(total)
        first, last = last + 1, last + total
    return sizes


def build_merge_tree(depth: int, leaf_cap: int = DEFAULT_LEAF_CAP) -> MergeTree:
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    tree_level_sizes(depth, leaf_cap)  # refuse before allocating anything large
    parent = {1: 0}
    children: dict[int, list[int]] = {1: []}
    node_depth = {1: 0}
    next_id = 2
    level = [1]
    for d in range(depth + 1):
        nxt = []
        for i in level:
            kids = list(range(next_id, next_id + 2 ** (i - parent[i])))
            next_id += len(kids)
            children[i] = kids
            for c in kids:
                parent[c] = i
                children[c] = []
                node_depth[c] = d + 1
            nxt.extend(kids)
        level = nxt
    n_D = sum(1 for v in node_depth.values() if v <= depth)
    return MergeTree(depth, 2 * n_D, parent, children, node_depth, level)


def gen_minsum_lower_bound(depth: int, leaf_cap: int = DEFAULT_LEAF_CAP) -> tuple[Trace, MergeTree]:
    """Trace of one singleton batch per leaf of T^N_D, then empty batches through 2^(N-1)."""
    tree = build_merge_tree(depth, leaf_cap)
    if tree.length > leaf_cap * 1024:
        raise CapExceeded(f"trace length 2^{tree.N - 1} exceeds cap")
    batches = []
    for t, leaf in enumerate(tree.leaves, start=1):
        batches.append(Batch(t, (Item(f"leaf{leaf}", Fraction(tree.weight(leaf))),)))
    for t in range(len(tree.leaves) + 1, tree.length + 1):
        batches.append(Batch(t))
    return Trace(tuple(batches), "minsum", name=f"minsum-lower-bound-D{depth}"), tree


def check_merge_tree(ledger: SolutionLedger, tree: MergeTree) -> tuple[bool, Fraction]:
    """Does every built component correspond one-to-one to a node of the tree?

    A component matches node v when its members are exactly the leaves below
    v, its weight is v's weight, and (for internal v) the components it
    replaced are v's children.  Returns (match, total build cost).
    """
    below: dict[int, frozenset[str]] = {}
    for v in sorted(tree.parent, reverse=True):
        if tree.children[v]:
            below[v] = frozenset().union(*(below[c] for c in tree.children[v]))
        else:
            below[v] = frozenset([f"leaf{v}"])
    node_of = {m: v for v, m in below.items()}
    comp_node: dict[int, int] = {}
    seen: set[int] = set()
    ok = True
    for t in range(1, ledger.n + 1):
        created = ledger.created[t - 1]
        created_sets = {ledger.components[c].members for c in created}
        # a batch merged in its own step never appears as a component; its leaf
        # then counts as replaced by the merge directly
        transient = set()
        for x in ledger.batch_ids[t - 1]:
            v = node_of.get(frozenset([x]))
            if v is not None and frozenset([x]) not in created_sets:
                transient.add(v)
                seen.add(v)
        for cid in created:
            comp = ledger.components[cid]
            v = node_of.get(comp.members)
            if v is None or v in seen:
                ok = False
                continue
            seen.add(v)
            comp_node[cid] = v
            if tree.children[v]:
                replaced = {comp_node.get(c) for c in ledger.destroyed[t - 1]} | transient
                if replaced != set(tree.children[v]):
                    ok = False
        nodes = [comp_node.get(c) for c in created]
        if None in nodes or sum(tree.weight(v) for v in nodes) != ledger.build[t - 1]:
            ok = False
    if seen != set(tree.parent):
        ok = False
    return ok, ledger.total_build


def first_merge_time(ledger: SolutionLedger) -> int | None:
    for t in range(1, ledger.n + 1):
        if ledger.destroyed[t - 1]:
            return t
    return None


# ---------------------------------------------------------------- k-Component adversary

@dataclass
class Insertion:
    t: int
    item_id: str
    sequence: int
    index: int
    exponent: int
    parent: str | None


@dataclass
class AdversaryRun:
    epsilon: Fraction
    k: int
    transcript: list[Insertion] = field(default_factory=list)
    alg_cost: Fraction = Fraction(0)
    opt_upper: Fraction = Fraction(0)
    achieved_ratio: Fraction | None = None
    stop_reason: str = ""
    candidate_costs: dict[int, Fraction] = field(default_factory=dict)
    sequence_lengths: dict[int, int] = field(default_factory=dict)
    ledger: SolutionLedger | None = None

    @property
    def steps(self) -> int:
        return len(self.transcript)


class _Sequences:
    """Lazy view of sigma(1..k+1): lengths n_j and exponents of epsilon."""

    def __init__(self, k: int, epsilon: Fraction, exponent_cap: int):
        self.k = k
        self.eps = epsilon
        self.cap = exponent_cap
        # N[j] = n_k + ... + n_j; sigma(k+1) has one item of exponent 1
        self.length: dict[int, int] = {k + 1: 1}
        self.N: dict[int, int] = {k + 1: 0}

    def first_exponent(self, j: int) -> int:
        if j == self.k + 1:
            return 1
        return self.N[j] + 1

    def ensure(self, j: int):
        """Compute n_j (and everything above it) if the exponents stay within the cap."""
        for h in range(self.k, j - 1, -1):
            if h in self.length:
                continue
            e = self.first_exponent(h + 1)
            if e > self.cap:
                raise CapExceeded(f"sigma({h + 1}) starts at epsilon^{e}, beyond the exponent cap")
            # n_h = ceil(k / eps^e)
            q = Fraction(self.k) / self.eps ** e
            n = -((-q.numerator) // q.denominator)
            self.length[h] = n
            self.N[h] = self.N[h + 1] + n

    def exponent(self, j: int, i: int) -> int:
        if j == self.k + 1:
            return 1
        self.ensure(j)
        return self.N[j] - i + 2


def run_kcomp_adversary(policy_factory: Callable[[int], Policy], k: int, epsilon: Fraction,
                        step_cap: int = 10 ** 5, exponent_cap: int = 20000) -> AdversaryRun:
    """Play the adaptive k-Component adversary against a deterministic policy.

    The policy is rebuilt through ``policy_factory(k)``.  The run stops when the
    policy's cumulative build cost reaches k (CostReached), after ``step_cap``
    insertions (StepCap), or when the next item would be epsilon raised to a
    power above ``exponent_cap`` (ExponentCap); these weights cannot be held
    as exact rationals.
    """
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < 1:
        raise ValidationError("epsilon must lie in (0, 1)")
    if k < 1:
        raise ValidationError("k must be >= 1")
    policy = policy_factory(k)
    model = AdditiveCost()
    builder = LedgerBuilder(model, k)
    seqs = _Sequences(k, epsilon, exponent_cap)
    run = AdversaryRun(epsilon, k)

    used = {j: 0 for j in range(1, k + 2)}
    rep: dict[int, str] = {}             # sequence -> representative item id
    seq_of: dict[str, int] = {}
    where: dict[str, set[int]] = {}      # item -> live component ids holding it
    members: dict[int, frozenset[str]] = {}
    seq_sum = {j: Fraction(0) for j in range(1, k + 2)}
    cand = {j: Fraction(0) for j in range(1, k + 1)}

    nxt_seq, parent = k + 1, None
    t = 0
    while True:
        if t >= step_cap:
            run.stop_reason = STEP_CAP
            break
        j = nxt_seq
        i = used[j] + 1
        try:
            e = seqs.exponent(j, i)
            if j <= k and i > seqs.length[j]:
                raise ValidationError(f"sigma({j}) exhausted at t={t + 1}; transcript is inconsistent")
            if e > exponent_cap:
                raise CapExceeded(f"next item is epsilon^{e}")
        except CapExceeded:
            run.stop_reason = EXPONENT_CAP
            break
        t += 1
        used[j] = i
        w = epsilon ** e
        item = Item(f"s{j}_{i}", w)
        seq_of[item.id] = j
        rep[j] = item.id
        run.transcript.append(Insertion(t, item.id, j, i, e, parent))

        delta = policy.step(t, [item])
        try:
            run.alg_cost += builder.apply(Batch(t, (item,)), delta)
        except CoverViolation:
            run.stop_reason = "PolicyViolation"
            run.ledger = builder.ledger()
            raise
        for cid in delta.destroyed:
            for x in members.pop(cid):
                where[x].discard(cid)
        for cid, ms in delta.created:
            members[cid] = ms
            for x in ms:
                where.setdefault(x, set()).add(cid)

        # C(j) rebuilds the group that gained the item, at its full weight
        seq_sum[j] += w
        for c in cand:
            group = seq_sum[c] + seq_sum[c + 1] if j in (c, c + 1) else seq_sum[j]
            cand[c] += group

        created_ids = set().union(*(ms for _, ms in delta.created)) if delta.created else set()
        ell = max((seq_of[x] for x in created_ids if rep.get(seq_of[x]) == x), default=None)
        if ell is None:
            raise ValidationError(f"t={t}: no new component holds the inserted item")
        # invariant: representatives of sigma(ell..k+1) sit in pairwise distinct components
        holders = [where[rep[h]] for h in range(ell, k + 2)]
        if any(not hs for hs in holders):
            raise ValidationError(f"t={t}: a representative is uncovered")
        for a in range(len(holders)):
            for b in range(a + 1, len(holders)):
                if holders[a] & holders[b]:
                    raise ValidationError(f"t={t}: representatives share a component")

        if run.alg_cost >= k:
            run.stop_reason = COST_REACHED
            break
        if ell == 1:
            run.stop_reason = "PolicyViolation"
            raise ValidationError(f"t={t}: l(t)=1, so the policy must hold more than k components")
        nxt_seq, parent = ell - 1, rep[ell]

    run.candidate_costs = dict(cand)
    run.opt_upper = min(cand.values()) if cand else Fraction(0)
    if run.opt_upper > 0:
        run.achieved_ratio = run.alg_cost / run.opt_upper
    run.sequence_lengths = {j: n for j, n in seqs.length.items()}
    run.ledger = builder.ledger()
    return run


def ratio_lower_bound(k: int, epsilon: Fraction) -> Fraction:
    """(1 - eps)^2 k / (1 + eps): the guaranteed ratio of a CostReached run."""
    epsilon = Fraction(epsilon)
    return (1 - epsilon) ** 2 * k / (1 + epsilon)
