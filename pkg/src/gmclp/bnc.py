"""Branch and cut over facility variables.

Best-bound (or depth-first) search: each node solves the presolved
relaxation warm-started from its parent basis, separates violated
two-customer rows on the fly, rounds the fractional opening into a
candidate solution, and branches on the most fractional facility variable.
Incumbents are evaluated on the original instance in exact arithmetic, so
reported optima are exact rationals.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lp import (
    LpMode,
    build_lp_relaxation,
    extract_point,
    simplex_solve,
    two_customer_coeffs,
)
from .model import Instance, Solution, complete_x_from_y, validate_instance
from .presolve import (
    PresolveOptions,
    PresolveReport,
    presolve_pipeline,
    sign_split_aggregate,
)

Pair = tuple[int, int]

SETTINGS = ("baseline", "presolve-only", "full", "no-agg", "no-dr", "no-tci")


@dataclass(frozen=True)
class Node:
    """A subproblem: facility fixings plus the parent's bound and basis."""

    fixed_one: frozenset[int]
    fixed_zero: frozenset[int]
    fixed_x_zero: frozenset[int]
    bound: float
    depth: int
    basis: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CutCandidate:
    j: int                      # nonnegative customer
    r: int                      # negative customer
    diff: tuple[int, ...]       # coverage(j) minus coverage(r)


@dataclass
class CutPool:
    """Candidate two-customer pairs plus the rows currently in the LP."""

    candidates: tuple[CutCandidate, ...]
    violation_tol: float = 1e-6
    active: dict[Pair, int] = field(default_factory=dict)
    purged: dict[Pair, int] = field(default_factory=dict)
    stale: dict[Pair, int] = field(default_factory=dict)


@dataclass
class SearchStats:
    """Root bounds, incumbent, and effort counters for one search."""

    status: str = ""
    nodes: int = 0
    z_lp: float = math.nan          # pre-cut root bound of this run's LP
    z_root: float = math.nan        # post-cut root bound
    z: float = math.nan             # incumbent value
    z_exact: str = ""
    gap: float = 0.0
    cuts_added: int = 0
    separation_seconds: float = 0.0
    presolve_seconds: float = 0.0
    total_seconds: float = 0.0
    bound_violations: int = 0       # child LP bounds above parent bound
    presolve_report: PresolveReport | None = None

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "nodes": self.nodes,
            "z_lp": self.z_lp,
            "z_root": self.z_root,
            "z": self.z,
            "z_exact": self.z_exact,
            "gap": self.gap,
            "cuts_added": self.cuts_added,
            "separation_seconds": self.separation_seconds,
            "presolve_seconds": self.presolve_seconds,
            "total_seconds": self.total_seconds,
        }
        if self.presolve_report is not None:
            out["presolve"] = self.presolve_report.to_dict()
        return out


@dataclass(frozen=True)
class SolveOptions:
    """Search configuration; presets for the benchmark settings below."""

    aggregate: bool = True
    p1: bool = True
    p3: bool = True
    p4: bool = True
    dominance: bool = True
    cuts: bool = True
    node_selection: str = "best-bound"   # or "depth-first"
    root_cut_rounds: int = 10
    node_cut_rounds: int = 2
    cuts_per_round: int = 200
    violation_tol: float = 1e-6
    purge_slack: float = 1e-3
    purge_after: int = 50
    integral_fathoming: bool = True
    gap_tol: float = 1e-6
    node_limit: int | None = None
    time_limit: float | None = None

    @classmethod
    def for_setting(cls, name: str, **overrides) -> "SolveOptions":
        presets = {
            "baseline": dict(
                aggregate=False, p1=False, p3=False, p4=False,
                dominance=False, cuts=False,
            ),
            "presolve-only": dict(aggregate=False, dominance=False, cuts=False),
            "full": dict(),
            "no-agg": dict(aggregate=False),
            "no-dr": dict(dominance=False),
            "no-tci": dict(cuts=False),
        }
        if name not in presets:
            raise ValueError(f"unknown setting {name!r}; choose from {SETTINGS}")
        return cls(**{**presets[name], **overrides})


def build_candidate_pairs(
    inst: Instance,
    artifacts=None,
    dominance_active: bool = True,
    violation_tol: float = 1e-6,
) -> CutPool:
    """Two-customer candidates: nonnegative j, negative r, overlap of size >= 2.

    Pairs with coverage(j) nested in coverage(r) degenerate to dominance
    rows, so they are dropped whenever dominance rows are statically in the
    formulation (the pruned row set implies them through chains).
    """
    sets = [frozenset(c.coverage) for c in inst.customers]
    negative = [c.is_negative for c in inst.customers]
    cands = []
    for j in range(inst.n_customers):
        if negative[j]:
            continue
        for r in range(inst.n_customers):
            if not negative[r]:
                continue
            if len(sets[j] & sets[r]) < 2:
                continue
            if dominance_active and sets[j] <= sets[r]:
                continue
            cands.append(
                CutCandidate(j=j, r=r, diff=tuple(sorted(sets[j] - sets[r])))
            )
    return CutPool(candidates=tuple(cands), violation_tol=violation_tol)


def separate_two_customer(
    pool: CutPool, x_vals: Sequence, y_vals: Sequence
) -> list[tuple[float, CutCandidate]]:
    """All candidate rows violated at the point, most violated first."""
    found = []
    for cand in pool.candidates:
        if (cand.j, cand.r) in pool.active:
            continue
        v = x_vals[cand.j] - x_vals[cand.r] - sum(y_vals[i - 1] for i in cand.diff)
        if v > pool.violation_tol:
            found.append((float(v), cand))
    found.sort(key=lambda t: (-t[0], t[1].j, t[1].r))
    return found


def propagate_P4(inst: Instance, node: Node, j0=None) -> Node | None:
    """Fix to zero every facility covering a zero-fixed nonnegative customer.

    ``j0`` defaults to the customers whose zero fixing is implied by the
    node: nonnegative customers with every covering facility already fixed
    to zero.  Returns None when fewer than p facilities remain openable.
    """
    if j0 is None:
        j0 = {
            j
            for j, c in enumerate(inst.customers)
            if not c.is_negative
            and c.coverage
            and set(c.coverage) <= node.fixed_zero
        }
    fixed_zero = set(node.fixed_zero)
    for r in j0:
        fixed_zero |= set(inst.customers[r].coverage)
    if fixed_zero & node.fixed_one:
        return None
    if inst.facility_count - len(fixed_zero) < inst.p:
        return None
    return Node(
        fixed_one=node.fixed_one,
        fixed_zero=frozenset(fixed_zero),
        fixed_x_zero=node.fixed_x_zero | frozenset(j0),
        bound=node.bound,
        depth=node.depth,
        basis=node.basis,
    )


def primal_round_heuristic(
    inst: Instance,
    y_bar: Sequence,
    fixed_one: frozenset[int] = frozenset(),
    fixed_zero: frozenset[int] = frozenset(),
) -> Solution:
    """Open the p facilities with the largest fractional values.

    Fixed-open facilities are always taken; fixed-closed ones never.  Ties
    break toward the lower facility id, so the rounding is deterministic and
    the result is always feasible for the node.
    """
    chosen = sorted(fixed_one)
    free = [
        i
        for i in range(1, inst.facility_count + 1)
        if i not in fixed_one and i not in fixed_zero
    ]
    free.sort(key=lambda i: (-float(y_bar[i - 1]), i))
    chosen.extend(free[: inst.p - len(chosen)])
    if len(chosen) != inst.p:
        raise ValueError("node fixings leave fewer than p facilities openable")
    y = [0] * inst.facility_count
    for i in chosen:
        y[i - 1] = 1
    return complete_x_from_y(inst, y)


def _incidence_matrix(inst: Instance):
    """Sparse customer x facility incidence used by the swap improvement."""
    from scipy.sparse import csr_matrix

    data, rows, cols = [], [], []
    for j, c in enumerate(inst.customers):
        for i in c.coverage:
            rows.append(j)
            cols.append(i - 1)
            data.append(1.0)
    return csr_matrix(
        (data, (rows, cols)), shape=(inst.n_customers, inst.facility_count)
    )


def _swap_improve(
    inst: Instance,
    sol: Solution,
    incidence,
    weights: np.ndarray,
    fixed_one: frozenset[int] = frozenset(),
    fixed_zero: frozenset[int] = frozenset(),
    max_passes: int = 30,
) -> Solution:
    """Deterministic best-improvement 1-swap polish of a rounded opening.

    Works on float weights to score swaps, then re-evaluates the final
    opening exactly.  Facilities fixed by the node never move.
    """
    y = np.array(sol.y, dtype=float)
    for _ in range(max_passes):
        counts = incidence @ y
        w_lost = weights * (counts == 1.0)   # customers kept alive by one facility
        w_gain = weights * (counts == 0.0)   # customers currently uncovered
        loss = incidence.T @ w_lost          # per closed facility: objective drop
        gain = incidence.T @ w_gain          # per opened facility: objective rise
        shared = (incidence.multiply(w_lost[:, None])).T @ incidence
        shared = np.asarray(shared.todense())
        open_idx = np.nonzero(y > 0.5)[0]
        closed_idx = np.nonzero(y < 0.5)[0]
        open_idx = np.array(
            [i for i in open_idx if (i + 1) not in fixed_one], dtype=int
        )
        closed_idx = np.array(
            [k for k in closed_idx if (k + 1) not in fixed_zero], dtype=int
        )
        if open_idx.size == 0 or closed_idx.size == 0:
            break
        delta = (
            gain[closed_idx][None, :]
            - loss[open_idx][:, None]
            + shared[np.ix_(open_idx, closed_idx)]
        )
        flat = int(np.argmax(delta))
        best = delta.flat[flat]
        if best <= 1e-9:
            break
        a, b = divmod(flat, closed_idx.size)
        y[open_idx[a]] = 0.0
        y[closed_idx[b]] = 1.0
    return complete_x_from_y(inst, tuple(int(round(v)) for v in y))


def select_branch_variable(y_bar: Sequence, int_tol: float = 1e-6) -> int:
    """Most fractional facility variable (closest to 1/2), ties by index.

    Distances to 1/2 are rounded to nine decimals so that values symmetric
    around one half (like 0.3 and 0.7) count as ties despite float noise.
    """
    fractional = [
        i + 1
        for i, v in enumerate(y_bar)
        if min(float(v), 1.0 - float(v)) > int_tol
    ]
    if not fractional:
        raise ValueError("opening vector is integral; nothing to branch on")
    return min(fractional, key=lambda i: (round(abs(float(y_bar[i - 1]) - 0.5), 9), i))


def _is_integral(y_vals: np.ndarray, tol: float = 1e-6) -> bool:
    return bool(np.all(np.minimum(y_vals, 1.0 - y_vals) <= tol))


def plain_root_bound(inst: Instance) -> float:
    """Relaxation bound of the unreduced formulation.

    Solved on the sign-split merge of the instance (one nonnegative and one
    negative customer per distinct coverage set), whose relaxation objective
    equals the original's pointwise over openings; this keeps the LP compact
    on instances with many coincident customers.
    """
    compact = sign_split_aggregate(inst)
    model = build_lp_relaxation(compact, None, LpMode())
    sol = simplex_solve(model)
    if sol.status != "optimal":
        raise RuntimeError(f"plain relaxation solve failed: {sol.status}")
    return sol.objective


def solve_bnc(
    inst: Instance, options: SolveOptions | None = None
) -> tuple[Solution, SearchStats]:
    """Solve the instance to proven optimality (or a limit) by branch and cut."""
    opts = options or SolveOptions()
    t_start = time.perf_counter()
    problems = validate_instance(inst)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    stats = SearchStats()

    t0 = time.perf_counter()
    reduced, artifacts, prereport = presolve_pipeline(
        inst,
        PresolveOptions(
            aggregate=opts.aggregate,
            substitute_singletons=opts.p1,
            dominance=opts.dominance,
            strengthen_nested=opts.p3,
        ),
    )
    stats.presolve_seconds = time.perf_counter() - t0
    stats.presolve_report = prereport
    subs = artifacts.substitutions if opts.p1 else {}
    model = build_lp_relaxation(
        reduced,
        artifacts,
        LpMode(
            dominance_rows=opts.dominance,
            apply_substitutions=opts.p1,
            apply_strengthening=opts.p3,
        ),
    )
    pool = (
        build_candidate_pairs(
            reduced, artifacts, dominance_active=opts.dominance,
            violation_tol=opts.violation_tol,
        )
        if opts.cuts
        else None
    )
    integral_rule = opts.integral_fathoming and inst.weights_integral()
    incidence = _incidence_matrix(inst)
    float_weights = np.array([float(c.weight) for c in inst.customers])

    incumbent: Solution | None = None

    def consider(candidate: Solution) -> None:
        nonlocal incumbent
        if incumbent is None or candidate.objective > incumbent.objective:
            incumbent = candidate

    def round_and_polish(y_vals, fixed_one=frozenset(), fixed_zero=frozenset()):
        rounded = primal_round_heuristic(inst, y_vals, fixed_one, fixed_zero)
        consider(rounded)
        consider(
            _swap_improve(
                inst, rounded, incidence, float_weights, fixed_one, fixed_zero
            )
        )

    def fathomed(bound: float) -> bool:
        if incumbent is None:
            return False
        inc = incumbent.objective
        if integral_rule:
            return math.floor(bound + 1e-9) <= int(inc)
        return bound <= float(inc) + opts.gap_tol

    def fathom_cutoff() -> float | None:
        # bound level below which a node LP may stop early (see fathomed)
        if incumbent is None:
            return None
        inc = incumbent.objective
        if integral_rule:
            return float(int(inc)) + 1.0 - 1e-6
        return float(inc) + opts.gap_tol

    def node_overrides(node: Node) -> dict[int, tuple[float, float]]:
        overrides: dict[int, tuple[float, float]] = {}
        for i in node.fixed_one:
            overrides[model.y_index(i)] = (1.0, 1.0)
        for i in node.fixed_zero:
            overrides[model.y_index(i)] = (0.0, 0.0)
        for j in node.fixed_x_zero:
            if model.has_x(j):
                overrides[model.x_index(j)] = (0.0, 0.0)
        return overrides

    def run_cut_rounds(lp_sol, rounds: int, overrides, cutoff=None):
        for _ in range(rounds):
            x_vals, y_vals = extract_point(model, lp_sol, reduced, subs)
            t_sep = time.perf_counter()
            found = separate_two_customer(pool, x_vals, y_vals)
            stats.separation_seconds += time.perf_counter() - t_sep
            if not found:
                break
            for _, cand in found[: opts.cuts_per_round]:
                pair = (cand.j, cand.r)
                if pair in pool.purged:
                    row = pool.purged.pop(pair)
                    model.set_rhs(row, 0.0)
                else:
                    row = model.add_row(
                        "two-customer",
                        two_customer_coeffs(model, reduced, cand.j, cand.r, subs),
                        ">=",
                        0.0,
                        meta=pair,
                    )
                pool.active[pair] = row
                pool.stale[pair] = 0
                stats.cuts_added += 1
            lp_sol = simplex_solve(
                model, warm_start=lp_sol.basis, bound_overrides=overrides,
                cutoff=cutoff,
            )
            if lp_sol.status == "cutoff":
                break
            if lp_sol.status != "optimal":
                raise RuntimeError(f"LP resolve failed: {lp_sol.status}")
        return lp_sol

    def age_cuts(lp_sol) -> None:
        # cuts loose for many consecutive node LPs leave the LP, stay in the pool
        for pair, row in list(pool.active.items()):
            slack = model.row_activity(row, lp_sol.values)
            if slack > opts.purge_slack:
                pool.stale[pair] = pool.stale.get(pair, 0) + 1
                if pool.stale[pair] >= opts.purge_after:
                    model.set_rhs(row, -2.0)  # activity >= -1 on the box: never binds
                    del pool.active[pair]
                    pool.purged[pair] = row
            else:
                pool.stale[pair] = 0

    # ----- root ---------------------------------------------------------------
    lp_sol = simplex_solve(model)
    if lp_sol.status != "optimal":
        raise RuntimeError(f"root LP failed: {lp_sol.status}")
    stats.z_lp = lp_sol.objective
    if pool is not None:
        lp_sol = run_cut_rounds(lp_sol, opts.root_cut_rounds, None)
    stats.z_root = lp_sol.objective

    x_vals, y_vals = extract_point(model, lp_sol, reduced, subs)
    round_and_polish(y_vals)
    root = Node(frozenset(), frozenset(), frozenset(), lp_sol.objective, 0, lp_sol.basis)

    best_first = opts.node_selection == "best-bound"
    counter = 0
    frontier: list = []

    def push(node: Node) -> None:
        nonlocal counter
        counter += 1
        if best_first:
            heapq.heappush(frontier, (-node.bound, counter, node))
        else:
            frontier.append(node)

    def pop() -> Node:
        if best_first:
            return heapq.heappop(frontier)[2]
        return frontier.pop()

    def branch(node: Node, lp_sol, y_vals) -> None:
        i = select_branch_variable(y_vals)
        for value in (0, 1):
            child = Node(
                fixed_one=node.fixed_one | ({i} if value == 1 else frozenset()),
                fixed_zero=node.fixed_zero | ({i} if value == 0 else frozenset()),
                fixed_x_zero=node.fixed_x_zero,
                bound=lp_sol.objective,
                depth=node.depth + 1,
                basis=lp_sol.basis,
            )
            if len(child.fixed_one) > reduced.p:
                continue
            if opts.p4:
                j0 = {
                    j
                    for j, c in enumerate(reduced.customers)
                    if not c.is_negative
                    and c.coverage
                    and set(c.coverage) <= child.fixed_zero
                }
                j0 |= {j for j, i_sub in subs.items() if i_sub in child.fixed_zero}
                propagated = propagate_P4(reduced, child, j0)
                if propagated is None:
                    continue
                child = propagated
            if reduced.facility_count - len(child.fixed_zero) < reduced.p:
                continue
            push(child)

    limit_hit = None
    if not (_is_integral(y_vals) or fathomed(lp_sol.objective)):
        branch(root, lp_sol, y_vals)

    while frontier:
        if opts.node_limit is not None and stats.nodes >= opts.node_limit:
            limit_hit = "node-limit"
            break
        if opts.time_limit is not None and time.perf_counter() - t_start > opts.time_limit:
            limit_hit = "time-limit"
            break
        node = pop()
        if fathomed(node.bound):
            continue
        overrides = node_overrides(node)
        lp_sol = simplex_solve(
            model, warm_start=node.basis, bound_overrides=overrides,
            cutoff=fathom_cutoff(),
        )
        stats.nodes += 1
        if lp_sol.status in ("infeasible", "cutoff"):
            continue
        if lp_sol.status != "optimal":
            raise RuntimeError(f"node LP failed: {lp_sol.status}")
        if lp_sol.objective > node.bound + 1e-6:
            stats.bound_violations += 1
        if fathomed(lp_sol.objective):
            continue
        x_vals, y_vals = extract_point(model, lp_sol, reduced, subs)
        round_and_polish(y_vals, node.fixed_one, node.fixed_zero)
        if _is_integral(y_vals) or fathomed(lp_sol.objective):
            continue
        if pool is not None:
            lp_sol = run_cut_rounds(
                lp_sol, opts.node_cut_rounds, overrides, cutoff=fathom_cutoff()
            )
            age_cuts(lp_sol)
            if lp_sol.status == "cutoff" or fathomed(lp_sol.objective):
                continue
            x_vals, y_vals = extract_point(model, lp_sol, reduced, subs)
            if _is_integral(y_vals):
                round_and_polish(y_vals, node.fixed_one, node.fixed_zero)
                continue
        branch(node, lp_sol, y_vals)

    assert incumbent is not None
    if limit_hit is None:
        stats.status = "optimal"
        stats.gap = 0.0
    else:
        stats.status = limit_hit
        if best_first:
            bounds = [entry[2].bound for entry in frontier]
        else:
            bounds = [n.bound for n in frontier]
        best_bound = max(bounds, default=float(incumbent.objective))
        stats.gap = max(0.0, best_bound - float(incumbent.objective))
    stats.z = float(incumbent.objective)
    obj = incumbent.objective
    stats.z_exact = str(obj if isinstance(obj, (int, Fraction)) else Fraction(obj))
    stats.total_seconds = time.perf_counter() - t_start
    return incumbent, stats
