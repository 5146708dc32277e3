"""LP relaxations: model container, formulation builder, closed-form evaluators.

The builder realizes the covering formulation in its variants: one
cardinality row, one cover row per nonnegative customer (possibly
strengthened by nested substitution), per-facility cover rows for negative
customers (or their aggregated one-row form), dominance rows for a pair
set, and statically injected two-customer rows for diagnostics.  Row order
is fixed for determinism: cardinality, cover rows by customer index,
dominance rows, then cuts.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np
from scipy.sparse import csc_matrix

from .model import Instance
from .simplex import BasisSnapshot, BoundedSimplex, SimplexOptions

if TYPE_CHECKING:  # pragma: no cover
    from .presolve import PresolveArtifacts

Pair = tuple[int, int]

_LOGICAL_BOUNDS = {
    "=": (0.0, 0.0),
    ">=": (-np.inf, 0.0),
    "<=": (0.0, np.inf),
}


@dataclass
class LpRow:
    tag: str
    coeffs: tuple[tuple[int, float], ...]
    rel: str
    rhs: float
    meta: tuple = ()


class LpModel:
    """Sparse bounded-variable LP with a maximize objective.

    Variables are identified by (kind, key): ("y", facility id) or
    ("x", customer index).  Rows carry provenance tags so tests and the
    search can reason about the formulation's structure.
    """

    def __init__(self):
        self.kinds: list[str] = []
        self.keys: list[int] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.objective: list[float] = []
        self.rows: list[LpRow] = []
        self.index: dict[tuple[str, int], int] = {}
        self._compiled = None

    @property
    def n_cols(self) -> int:
        return len(self.kinds)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_variable(self, kind: str, key: int, lb=0.0, ub=1.0, obj=0.0) -> int:
        idx = len(self.kinds)
        self.kinds.append(kind)
        self.keys.append(key)
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.objective.append(float(obj))
        self.index[(kind, key)] = idx
        self._compiled = None
        return idx

    def add_objective(self, idx: int, delta: float) -> None:
        self.objective[idx] += float(delta)

    def add_row(self, tag, coeffs, rel, rhs, meta=()) -> int:
        if rel not in _LOGICAL_BOUNDS:
            raise ValueError(f"unknown relation {rel!r}")
        merged: dict[int, float] = defaultdict(float)
        for idx, coef in coeffs:
            merged[idx] += float(coef)
        self.rows.append(
            LpRow(
                tag=tag,
                coeffs=tuple(sorted(merged.items())),
                rel=rel,
                rhs=float(rhs),
                meta=tuple(meta),
            )
        )
        self._compiled = None
        return len(self.rows) - 1

    def set_rhs(self, row_idx: int, rhs: float) -> None:
        """Cheap rhs update (used to deactivate and reactivate cut rows)."""
        self.rows[row_idx].rhs = float(rhs)
        if self._compiled is not None:
            self._compiled[1][row_idx] = float(rhs)

    def y_index(self, facility: int) -> int:
        return self.index[("y", facility)]

    def x_index(self, customer: int) -> int:
        return self.index[("x", customer)]

    def has_x(self, customer: int) -> bool:
        return ("x", customer) in self.index

    def rows_tagged(self, tag: str) -> list[LpRow]:
        return [r for r in self.rows if r.tag == tag]

    def compile(self):
        if self._compiled is None:
            m, n = len(self.rows), self.n_cols
            data, ri, ci = [], [], []
            b = np.zeros(m)
            llog = np.zeros(m)
            ulog = np.zeros(m)
            for k, row in enumerate(self.rows):
                b[k] = row.rhs
                llog[k], ulog[k] = _LOGICAL_BOUNDS[row.rel]
                for idx, coef in row.coeffs:
                    ri.append(k)
                    ci.append(idx)
                    data.append(coef)
            A = csc_matrix((data, (ri, ci)), shape=(m, n))
            self._compiled = (
                A,
                b,
                np.array(self.lower),
                np.array(self.upper),
                llog,
                ulog,
            )
        return self._compiled

    def row_activity(self, row_idx: int, values: np.ndarray) -> float:
        row = self.rows[row_idx]
        return float(sum(coef * values[idx] for idx, coef in row.coeffs))


@dataclass
class LpSolution:
    status: str
    values: np.ndarray          # structural values, aligned with model columns
    objective: float            # maximize-sense value
    iterations: int
    basis: BasisSnapshot | None

    def value(self, model: LpModel, kind: str, key: int) -> float:
        return float(self.values[model.index[(kind, key)]])


@dataclass(frozen=True)
class LpMode:
    """Formulation variant switches applied when artifacts are present."""

    aggregated_neg_rows: bool = False
    dominance_rows: bool = True
    apply_substitutions: bool = True
    apply_strengthening: bool = True


def build_lp_relaxation(
    inst: Instance,
    artifacts: "PresolveArtifacts | None" = None,
    mode: LpMode | None = None,
    dominance_pairs: Iterable[Pair] | None = None,
    two_customer_pairs: Iterable[Pair] | None = None,
) -> LpModel:
    """Build the relaxation of the covering formulation.

    With ``artifacts`` present, the mode flags select which presolve ledgers
    are realized (variable substitution, strengthened rows, dominance rows
    plus their paired cover-row removals).  ``dominance_pairs`` overrides
    the artifact pair set and also works without artifacts;
    ``two_customer_pairs`` injects static coverage-difference rows (used by
    the equivalence tests; the search adds these rows dynamically instead).
    """
    mode = mode or LpMode()
    subs = dict(artifacts.substitutions) if artifacts and mode.apply_substitutions else {}
    strong = dict(artifacts.strengthened) if artifacts and mode.apply_strengthening else {}
    removed: dict[int, frozenset[int]] = {}
    if artifacts and artifacts.dominance and mode.dominance_rows:
        removed = dict(artifacts.dominance.removed_constraints)
    if dominance_pairs is not None:
        dom_pairs = tuple(dominance_pairs)
    elif artifacts and mode.dominance_rows:
        dom_pairs = tuple(artifacts.pruned_pairs)
    else:
        dom_pairs = ()

    model = LpModel()
    for i in range(1, inst.facility_count + 1):
        model.add_variable("y", i)
    for j, cust in enumerate(inst.customers):
        if j in subs:
            continue
        model.add_variable("x", j, obj=float(cust.weight))
    for j, i in subs.items():
        model.add_objective(model.y_index(i), float(inst.customers[j].weight))

    def customer_var(j: int) -> int:
        return model.y_index(subs[j]) if j in subs else model.x_index(j)

    model.add_row(
        "cardinality",
        [(model.y_index(i), 1.0) for i in range(1, inst.facility_count + 1)],
        "=",
        float(inst.p),
    )
    for j, cust in enumerate(inst.customers):
        if j in subs:
            continue
        xj = model.x_index(j)
        if not cust.is_negative:
            if j in strong:
                family = strong[j]
                covered = set()
                for k in family:
                    covered |= set(inst.customers[k].coverage)
                coeffs = [(customer_var(k), 1.0) for k in family]
                coeffs += [
                    (model.y_index(i), 1.0)
                    for i in cust.coverage
                    if i not in covered
                ]
                coeffs.append((xj, -1.0))
                model.add_row("p3", coeffs, ">=", 0.0, meta=(j,))
            else:
                coeffs = [(model.y_index(i), 1.0) for i in cust.coverage]
                coeffs.append((xj, -1.0))
                model.add_row("cover-pos", coeffs, ">=", 0.0, meta=(j,))
        elif mode.aggregated_neg_rows:
            coeffs = [(xj, float(inst.p))]
            coeffs += [(model.y_index(i), -1.0) for i in cust.coverage]
            model.add_row("cover-aggregated", coeffs, ">=", 0.0, meta=(j,))
        else:
            dropped = removed.get(j, frozenset())
            for i in cust.coverage:
                if i in dropped:
                    continue
                model.add_row(
                    "cover-neg",
                    [(xj, 1.0), (model.y_index(i), -1.0)],
                    ">=",
                    0.0,
                    meta=(j, i),
                )
    for j, r in sorted(dom_pairs):
        model.add_row(
            "dominance",
            [(customer_var(r), 1.0), (customer_var(j), -1.0)],
            ">=",
            0.0,
            meta=(j, r),
        )
    for j, r in sorted(two_customer_pairs or ()):
        model.add_row(
            "two-customer",
            two_customer_coeffs(model, inst, j, r, subs),
            ">=",
            0.0,
            meta=(j, r),
        )
    return model


def two_customer_coeffs(model, inst, j, r, subs=None):
    """Coefficients of x_r + y(coverage(j) \\ coverage(r)) - x_j >= 0."""
    subs = subs or {}
    cj = set(inst.customers[j].coverage)
    cr = set(inst.customers[r].coverage)

    def var(k):
        return model.y_index(subs[k]) if k in subs else model.x_index(k)

    coeffs = [(var(r), 1.0), (var(j), -1.0)]
    coeffs += [(model.y_index(i), 1.0) for i in sorted(cj - cr)]
    return coeffs


def simplex_solve(
    model: LpModel,
    warm_start: BasisSnapshot | None = None,
    bound_overrides: dict[int, tuple[float, float]] | None = None,
    options: SimplexOptions | None = None,
    cutoff: float | None = None,
) -> LpSolution:
    """Solve the model with the internal simplex; deterministic given inputs.

    ``cutoff`` (maximize sense) lets a warm-started re-solve stop early with
    status "cutoff" once its bound certifies the objective cannot exceed the
    cutoff; the returned objective is then a valid upper bound.
    """
    A, b, lower, upper, llog, ulog = model.compile()
    if bound_overrides:
        lower = lower.copy()
        upper = upper.copy()
        for idx, (lo, hi) in bound_overrides.items():
            lower[idx] = lo
            upper[idx] = hi
    cost = -np.array(model.objective)  # engine minimizes
    engine = BoundedSimplex(A, b, cost, lower, upper, llog, ulog, options)
    out = engine.solve(warm_start, cutoff=cutoff)
    values = out.values[: model.n_cols].copy()
    objective = float(np.dot(model.objective, values))
    return LpSolution(
        status=out.status,
        values=values,
        objective=objective,
        iterations=out.iterations,
        basis=out.basis,
    )


# ----- closed-form relaxation evaluators -------------------------------------


def _check_fractional_y(inst: Instance, y: Sequence, tol: float) -> None:
    if len(y) != inst.facility_count:
        raise ValueError(f"y has length {len(y)}, expected {inst.facility_count}")
    if any(v < -tol or v > 1 + tol for v in y):
        raise ValueError("y entries must lie in [0, 1]")
    if abs(sum(y) - inst.p) > max(tol, 1e-9 * inst.facility_count):
        raise ValueError(f"y must sum to p={inst.p}")


def evaluate_relaxed_objective(inst: Instance, y: Sequence, tol: float = 1e-9):
    """Relaxation objective at a fractional opening.

    Negative-weight customers contribute weight times the largest opening
    value over their coverage set; others contribute weight times the
    coverage sum capped at one.  At integral openings this equals the
    integer objective.
    """
    _check_fractional_y(inst, y, tol)
    total = 0
    for cust in inst.customers:
        if not cust.coverage:
            continue
        if cust.is_negative:
            total += cust.weight * max(y[i - 1] for i in cust.coverage)
        else:
            total += cust.weight * min(1, sum(y[i - 1] for i in cust.coverage))
    return total


def evaluate_aggregated_relaxed_objective(aggmap, y: Sequence):
    """Relaxation objective of the aggregated instance at a fractional opening."""
    total = 0
    for w, cov in zip(aggmap.merged_weights, aggmap.coverages):
        if not cov:
            continue
        if w < 0:
            total += w * max(y[i - 1] for i in cov)
        else:
            total += w * min(1, sum(y[i - 1] for i in cov))
    return total


def coverage_slack(inst: Instance, k: int, y: Sequence):
    """Gap between capped coverage sum and largest single opening for customer k.

    Zero at every integral opening and for singleton or empty coverage sets;
    strictly positive slack is what aggregation converts into a tighter
    bound.
    """
    cov = inst.customers[k].coverage
    if not cov:
        return 0
    return min(1, sum(y[i - 1] for i in cov)) - max(y[i - 1] for i in cov)


# ----- dominance-augmented relaxation diagnostics ----------------------------


def apply_dominance_optimality_condition(
    inst: Instance, cross_pairs: Iterable[Pair], x: Sequence, y: Sequence
) -> np.ndarray:
    """Rewrite an optimal x onto the face where the argmax/argmin completion holds.

    ``cross_pairs`` must be the full (unpruned) cross dominance set.  One
    pass lowers each negative customer to the larger of its best coverage
    entry and its largest nonnegative predecessor, then one pass raises each
    nonnegative customer to the smallest of one, its coverage sum, and its
    smallest negative successor.  Objective value and feasibility of the
    dominance-augmented relaxation are preserved.  Not valid in the presence
    of strengthened rows or cut rows.
    """
    preds: dict[int, list[int]] = defaultdict(list)
    succs: dict[int, list[int]] = defaultdict(list)
    for s, t in cross_pairs:
        preds[t].append(s)
        succs[s].append(t)
    new = np.array([float(v) for v in x])
    for r, cust in enumerate(inst.customers):
        if cust.is_negative:
            cover = max((y[i - 1] for i in cust.coverage), default=0.0)
            best_pred = max((float(x[s]) for s in preds[r]), default=0.0)
            new[r] = max(cover, best_pred)
    for j, cust in enumerate(inst.customers):
        if not cust.is_negative:
            cover = sum(y[i - 1] for i in cust.coverage)
            best_succ = min((new[t] for t in succs[j]), default=1.0)
            new[j] = min(1.0, cover, best_succ)
    return new


def dominance_gap_lower_bound(
    inst: Instance, cross_pairs: Iterable[Pair], x: Sequence, y: Sequence
) -> float:
    """Guaranteed improvement of the plain bound over the dominance-augmented one.

    ``x`` must satisfy the argmax/argmin completion (see
    apply_dominance_optimality_condition).  Empty predecessor / successor
    sets use the conventions value-0 / value-1, which zero out the
    corresponding terms.  The result is nonnegative; it is zero whenever the
    solution is integral.
    """
    preds: dict[int, list[int]] = defaultdict(list)
    succs: dict[int, list[int]] = defaultdict(list)
    for s, t in cross_pairs:
        preds[t].append(s)
        succs[s].append(t)
    bound = 0.0
    for j, cust in enumerate(inst.customers):
        w = float(cust.weight)
        if cust.is_negative:
            cover = max((float(y[i - 1]) for i in cust.coverage), default=0.0)
            pred = max((float(x[s]) for s in preds[j]), default=0.0)
            bound += w * min(0.0, cover - pred)
        else:
            cover = min(1.0, sum(float(y[i - 1]) for i in cust.coverage))
            succ = min((float(x[t]) for t in succs[j]), default=1.0)
            bound += w * max(cover - succ, 0.0)
    return bound


def extract_point(
    model: LpModel,
    solution: LpSolution,
    inst: Instance,
    substitutions: dict[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-customer x values and per-facility y values of an LP solution.

    Substituted customers read their value from the facility variable that
    replaced them.
    """
    subs = substitutions or {}
    y = np.array(
        [solution.values[model.y_index(i)] for i in range(1, inst.facility_count + 1)]
    )
    x = np.empty(inst.n_customers)
    for j in range(inst.n_customers):
        if j in subs:
            x[j] = y[subs[j] - 1]
        else:
            x[j] = solution.values[model.x_index(j)]
    return x, y


def write_lp_format(model: LpModel, path: str | Path) -> None:
    """Export the model in CPLEX LP text format for external cross-checking."""
    path = Path(path)

    def term(coef, idx):
        name = f"{model.kinds[idx]}{model.keys[idx]}"
        return f"{'+' if coef >= 0 else '-'} {abs(coef):g} {name}"

    lines = ["Maximize", " obj:"]
    obj_terms = [
        term(c, i) for i, c in enumerate(model.objective) if c != 0.0
    ]
    lines[1] += " " + (" ".join(obj_terms) if obj_terms else "0 y1")
    lines.append("Subject To")
    rel_text = {">=": ">=", "<=": "<=", "=": "="}
    for k, row in enumerate(model.rows):
        body = " ".join(term(c, i) for i, c in row.coeffs)
        lines.append(f" r{k}_{row.tag.replace('-', '_')}: {body} {rel_text[row.rel]} {row.rhs:g}")
    lines.append("Bounds")
    for i in range(model.n_cols):
        name = f"{model.kinds[i]}{model.keys[i]}"
        lines.append(f" {model.lower[i]:g} <= {name} <= {model.upper[i]:g}")
    lines.append("End")
    path.write_text("\n".join(lines) + "\n")
