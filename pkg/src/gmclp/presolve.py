"""Presolve reductions: customer aggregation, dominance pairs, constraint removal.

The pipeline runs, in order: aggregation of customers with identical
coverage sets, singleton-coverage substitution (P1), dominance-pair
construction, the heuristic negative-negative constraint reduction,
transitive pruning of the surviving pairs, and the nested-coverage
constraint strengthening (P3).  Every step is toggleable and records enough
information (ledgers) for the LP builder to apply it.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

from .model import Customer, Instance

Pair = tuple[int, int]


@dataclass(frozen=True)
class AggregationMap:
    """How customers were merged by identical coverage set.

    Position k in the reduced instance corresponds to ``representatives[k]``
    (the first original customer with that coverage) and ``groups[k]`` (all
    of them).  ``pos_mass[k]``/``neg_mass[k]`` hold the summed nonnegative /
    negative weight inside group k; their absolute values drive the exact
    bound-tightening identity checked in the tests.
    """

    representatives: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]
    merged_weights: tuple
    coverages: tuple[tuple[int, ...], ...]
    pos_mass: tuple
    neg_mass: tuple

    @property
    def negative_reps(self) -> frozenset[int]:
        """Reduced positions whose merged weight is negative."""
        return frozenset(k for k, w in enumerate(self.merged_weights) if w < 0)


@dataclass(frozen=True)
class DominanceSet:
    """Dominance pairs (j, r) with coverage(j) a subset of coverage(r).

    ``cross_pairs`` restricts to nonnegative j and negative r (the only
    pairs that can tighten the relaxation); ``selected_negative_pairs`` and
    ``removed_constraints`` come from the constraint-reduction heuristic.
    """

    all_pairs: frozenset[Pair]
    cross_pairs: frozenset[Pair]
    selected_negative_pairs: tuple[Pair, ...] = ()
    removed_constraints: dict[int, frozenset[int]] = field(default_factory=dict)


@dataclass(frozen=True)
class PresolveArtifacts:
    """Everything the LP builder needs to realize the presolved formulation."""

    aggregation: AggregationMap | None
    dominance: DominanceSet | None
    pruned_pairs: tuple[Pair, ...]
    substitutions: dict[int, int]            # customer -> facility (P1)
    strengthened: dict[int, tuple[int, ...]]  # customer -> disjoint nested family (P3)


@dataclass
class PresolveReport:
    """Size effect of presolve, measured on the LP that would be built."""

    variables_before: int
    variables_after: int
    constraints_before: int
    constraints_after: int
    delta_v_pct: float
    delta_c_pct: float
    step_seconds: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variables_before": self.variables_before,
            "variables_after": self.variables_after,
            "constraints_before": self.constraints_before,
            "constraints_after": self.constraints_after,
            "delta_v_pct": self.delta_v_pct,
            "delta_c_pct": self.delta_c_pct,
            "step_seconds": dict(self.step_seconds),
        }


@dataclass(frozen=True)
class PresolveOptions:
    aggregate: bool = True
    substitute_singletons: bool = True   # P1
    dominance: bool = True               # pairs + constraint reduction + pruning
    strengthen_nested: bool = True       # P3


def isomorphic_aggregate(inst: Instance) -> tuple[Instance, AggregationMap]:
    """Merge customers with identical coverage sets, summing their weights.

    Groups keep first-appearance order.  A group whose weights cancel to
    zero stays in the reduced instance as a nonnegative customer.
    """
    order: list[tuple[int, ...]] = []
    members: dict[tuple[int, ...], list[int]] = defaultdict(list)
    for j, c in enumerate(inst.customers):
        if c.coverage not in members:
            order.append(c.coverage)
        members[c.coverage].append(j)
    reps, groups, merged, pos_mass, neg_mass = [], [], [], [], []
    for cov in order:
        group = tuple(members[cov])
        w_pos = sum(
            (inst.customers[j].weight for j in group if not inst.customers[j].is_negative),
            start=Fraction(0),
        )
        w_neg = sum(
            (inst.customers[j].weight for j in group if inst.customers[j].is_negative),
            start=Fraction(0),
        )
        reps.append(group[0])
        groups.append(group)
        merged.append(w_pos + w_neg)
        pos_mass.append(w_pos)
        neg_mass.append(w_neg)
    reduced = Instance(
        facility_count=inst.facility_count,
        customers=tuple(
            Customer(weight=w, coverage=cov) for w, cov in zip(merged, order)
        ),
        p=inst.p,
        meta=dict(inst.meta, aggregated_from=inst.n_customers),
    )
    aggmap = AggregationMap(
        representatives=tuple(reps),
        groups=tuple(groups),
        merged_weights=tuple(merged),
        coverages=tuple(order),
        pos_mass=tuple(pos_mass),
        neg_mass=tuple(neg_mass),
    )
    return reduced, aggmap


def build_dominance_pairs(inst: Instance) -> DominanceSet:
    """All pairs (j, r), j != r, with coverage(j) a subset of coverage(r).

    On an aggregated instance coverage sets are distinct, so the relation is
    a strict partial order; on raw instances equal sets yield both
    directions.
    """
    sets = [frozenset(c.coverage) for c in inst.customers]
    negative = [c.is_negative for c in inst.customers]
    all_pairs = set()
    for j, sj in enumerate(sets):
        for r, sr in enumerate(sets):
            if j != r and sj <= sr:
                all_pairs.add((j, r))
    cross = frozenset((j, r) for (j, r) in all_pairs if not negative[j] and negative[r])
    return DominanceSet(all_pairs=frozenset(all_pairs), cross_pairs=cross)


def constraint_reduction(inst: Instance) -> tuple[tuple[Pair, ...], dict[int, frozenset[int]]]:
    """Heuristic selection of negative-negative pairs that delete cover rows.

    Negative customers are visited in descending coverage-set size (ties by
    ascending index).  For each r in that order and each later j whose
    coverage nests inside r's, the pair (j, r) is selected when it deletes
    at least two remaining rows "x_r >= y_i"; the deleted facilities are
    removed from r's remaining set.
    """
    negatives = [j for j, c in enumerate(inst.customers) if c.is_negative]
    order = sorted(negatives, key=lambda j: (-len(inst.customers[j].coverage), j))
    sets = {j: frozenset(inst.customers[j].coverage) for j in negatives}
    remaining = {j: set(sets[j]) for j in negatives}
    selected: list[Pair] = []
    removed: dict[int, set[int]] = defaultdict(set)
    for a, r in enumerate(order):
        for j in order[a + 1 :]:
            if sets[j] <= sets[r]:
                overlap = sets[j] & remaining[r]
                if len(overlap) >= 2:
                    selected.append((j, r))
                    removed[r] |= overlap
                    remaining[r] -= sets[j]
    return tuple(selected), {r: frozenset(v) for r, v in removed.items()}


def transitive_prune(pairs) -> frozenset[Pair]:
    """Transitive reduction: drop every pair implied by a two-step chain.

    The input must be acyclic (guaranteed after aggregation, where subset
    relations on distinct sets form a strict partial order); a cycle raises
    RuntimeError.  Reachability between customers is unchanged.
    """
    pairs = set(pairs)
    succ: dict[int, set[int]] = defaultdict(set)
    nodes = set()
    for j, r in pairs:
        succ[j].add(r)
        nodes.add(j)
        nodes.add(r)
    # Kahn topological sort doubles as the cycle check.
    indeg = {v: 0 for v in nodes}
    for j, r in pairs:
        indeg[r] += 1
    queue = sorted(v for v in nodes if indeg[v] == 0)
    topo = []
    while queue:
        v = queue.pop(0)
        topo.append(v)
        for w in sorted(succ[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if len(topo) != len(nodes):
        raise RuntimeError("dominance pairs contain a cycle; aggregate first")
    reach: dict[int, set[int]] = {}
    for v in reversed(topo):
        acc = set()
        for s in succ[v]:
            acc.add(s)
            acc |= reach[s]
        reach[v] = acc
    keep = set()
    for j, r in pairs:
        implied = any(r in reach[s] for s in succ[j] if s != r)
        if not implied:
            keep.add((j, r))
    return frozenset(keep)


def apply_P1(inst: Instance) -> dict[int, int]:
    """Singleton-coverage substitution ledger for nonnegative customers.

    A nonnegative customer covered by exactly one facility has its variable
    identified with that facility's variable: the LP drops the customer
    variable and row and moves the weight onto the facility's objective
    coefficient.
    """
    return {
        j: c.coverage[0]
        for j, c in enumerate(inst.customers)
        if not c.is_negative and len(c.coverage) == 1
    }


def apply_P3(inst: Instance, substitutions: dict[int, int]) -> dict[int, tuple[int, ...]]:
    """Nested-coverage strengthening ledger.

    For a nonnegative customer r, a family of nonnegative customers with
    pairwise-disjoint coverage sets properly nested inside r's replaces the
    matching facility terms in r's cover row.  Proper nesting keeps the
    replacement chains acyclic (a pair with equal coverage sets must not
    rewrite each other's rows away); equal sets are aggregation's job.  The
    family is chosen greedily by descending coverage size (ties by index).
    Customers already substituted away by P1 are skipped: their contribution
    would rewrite the row identically.
    """
    sets = [frozenset(c.coverage) for c in inst.customers]
    candidates_pool = [
        j
        for j, c in enumerate(inst.customers)
        if not c.is_negative and c.coverage and j not in substitutions
    ]
    ledger: dict[int, tuple[int, ...]] = {}
    for r, cr in enumerate(inst.customers):
        if cr.is_negative or r in substitutions or len(cr.coverage) < 2:
            continue
        nested = [j for j in candidates_pool if j != r and sets[j] < sets[r]]
        nested.sort(key=lambda j: (-len(sets[j]), j))
        taken: list[int] = []
        used: set[int] = set()
        for j in nested:
            if not (sets[j] & used):
                taken.append(j)
                used |= sets[j]
        if taken:
            ledger[r] = tuple(taken)
    return ledger


def sign_split_aggregate(inst: Instance) -> Instance:
    """Merge customers per coverage set while keeping signs apart.

    Each distinct coverage set contributes at most two customers: one with
    the group's summed nonnegative weight and one with its summed negative
    weight.  Both the optimal value and the plain relaxation bound of the
    result equal the original's, because the objective is preserved
    pointwise over openings; this gives a compact way to evaluate the
    unreduced root bound on large instances.
    """
    order: list[tuple[int, ...]] = []
    members: dict[tuple[int, ...], list[int]] = defaultdict(list)
    for j, c in enumerate(inst.customers):
        if c.coverage not in members:
            order.append(c.coverage)
        members[c.coverage].append(j)
    customers = []
    for cov in order:
        w_pos = sum(
            (inst.customers[j].weight for j in members[cov] if not inst.customers[j].is_negative),
            start=Fraction(0),
        )
        w_neg = sum(
            (inst.customers[j].weight for j in members[cov] if inst.customers[j].is_negative),
            start=Fraction(0),
        )
        if w_pos != 0:
            customers.append(Customer(weight=w_pos, coverage=cov))
        if w_neg != 0:
            customers.append(Customer(weight=w_neg, coverage=cov))
    return Instance(
        facility_count=inst.facility_count,
        customers=tuple(customers),
        p=inst.p,
        meta=dict(inst.meta, sign_split=True),
    )


def presolve_pipeline(
    inst: Instance, options: PresolveOptions | None = None
) -> tuple[Instance, PresolveArtifacts, PresolveReport]:
    """Run the reduction steps in their fixed order and report the size effect.

    Counts compare the LP that would be built from the raw instance against
    the LP built from the reduced instance with all artifacts applied.
    """
    from .lp import LpMode, build_lp_relaxation

    opts = options or PresolveOptions()
    steps: dict[str, float] = {}
    reduced = inst
    aggmap = None
    if opts.aggregate:
        t0 = time.perf_counter()
        reduced, aggmap = isomorphic_aggregate(inst)
        steps["aggregate"] = time.perf_counter() - t0
    substitutions: dict[int, int] = {}
    if opts.substitute_singletons:
        t0 = time.perf_counter()
        substitutions = apply_P1(reduced)
        steps["substitute_singletons"] = time.perf_counter() - t0
    domset = None
    pruned: tuple[Pair, ...] = ()
    if opts.dominance:
        t0 = time.perf_counter()
        domset = build_dominance_pairs(reduced)
        selected, removed = constraint_reduction(reduced)
        domset = DominanceSet(
            all_pairs=domset.all_pairs,
            cross_pairs=domset.cross_pairs,
            selected_negative_pairs=selected,
            removed_constraints=removed,
        )
        pruned = tuple(sorted(transitive_prune(set(domset.cross_pairs) | set(selected))))
        steps["dominance"] = time.perf_counter() - t0
    strengthened: dict[int, tuple[int, ...]] = {}
    if opts.strengthen_nested:
        t0 = time.perf_counter()
        strengthened = apply_P3(reduced, substitutions)
        steps["strengthen_nested"] = time.perf_counter() - t0
    artifacts = PresolveArtifacts(
        aggregation=aggmap,
        dominance=domset,
        pruned_pairs=pruned,
        substitutions=substitutions,
        strengthened=strengthened,
    )
    before = build_lp_relaxation(inst, None, LpMode())
    after = build_lp_relaxation(
        reduced,
        artifacts,
        LpMode(
            dominance_rows=opts.dominance,
            apply_substitutions=opts.substitute_singletons,
            apply_strengthening=opts.strengthen_nested,
        ),
    )
    vb, va = before.n_cols, after.n_cols
    cb, ca = before.n_rows, after.n_rows
    report = PresolveReport(
        variables_before=vb,
        variables_after=va,
        constraints_before=cb,
        constraints_after=ca,
        delta_v_pct=100.0 * (vb - va) / vb if vb else 0.0,
        delta_c_pct=100.0 * (cb - ca) / cb if cb else 0.0,
        step_seconds=steps,
    )
    return reduced, artifacts, report
