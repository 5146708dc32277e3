"""Core domain types: covering instances, solutions, and a brute-force oracle.

Facilities are numbered 1..facility_count.  A customer is covered by the
facilities in its coverage set; opening any one of them forces/allows the
customer to count toward the objective.  Weights may be positive, zero, or
negative and are kept as exact rationals (ints or fractions.Fraction) so
objective values are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

Number = int | Fraction | float


@dataclass(frozen=True)
class Customer:
    """A customer: signed weight plus the sorted facility ids able to cover it."""

    weight: Number
    coverage: tuple[int, ...]

    @property
    def is_negative(self) -> bool:
        return self.weight < 0


@dataclass(frozen=True)
class Instance:
    """A covering instance: facilities 1..facility_count, customers, open count p.

    ``meta`` carries provenance (seeds, source file, radius) and is excluded
    from equality so round-tripped instances compare equal.
    """

    facility_count: int
    customers: tuple[Customer, ...]
    p: int
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    def negative_customers(self) -> tuple[int, ...]:
        """Indices of customers with strictly negative weight."""
        return tuple(j for j, c in enumerate(self.customers) if c.is_negative)

    def weights_integral(self) -> bool:
        """True when every weight is an integer (enables integral bound fathoming)."""
        for c in self.customers:
            w = c.weight
            if isinstance(w, int):
                continue
            if isinstance(w, Fraction) and w.denominator == 1:
                continue
            if isinstance(w, float) and w.is_integer():
                continue
            return False
        return True


@dataclass(frozen=True)
class Solution:
    """An integral facility opening with its completed coverage vector."""

    y: tuple[int, ...]
    x: tuple[int, ...]
    objective: Number

    @property
    def open_facilities(self) -> tuple[int, ...]:
        return tuple(i + 1 for i, v in enumerate(self.y) if v == 1)


def validate_instance(inst: Instance) -> list[str]:
    """Diagnostic check of the instance invariants; empty list means pass."""
    problems: list[str] = []
    if inst.facility_count < 1:
        problems.append("facility count must be positive")
    if inst.p < 1:
        problems.append("p must be positive")
    elif inst.p > inst.facility_count:
        problems.append(
            f"p exceeds facility count ({inst.p} > {inst.facility_count})"
        )
    for j, cust in enumerate(inst.customers):
        prev = 0
        for i in cust.coverage:
            if not 1 <= i <= inst.facility_count:
                problems.append(f"customer {j}: coverage index {i} out of range")
            elif i == prev:
                problems.append(f"customer {j}: duplicate coverage entry {i}")
            elif i < prev:
                problems.append(f"customer {j}: coverage entries not increasing")
            prev = i
        w = cust.weight
        if isinstance(w, float) and not math.isfinite(w):
            problems.append(f"customer {j}: non-finite weight")
    return problems


def _check_integral_y(inst: Instance, y: Sequence[Number]) -> None:
    if len(y) != inst.facility_count:
        raise ValueError(
            f"y has length {len(y)}, expected {inst.facility_count}"
        )
    if any(v != 0 and v != 1 for v in y):
        raise ValueError("y must be integral (0/1 entries)")
    total = sum(y)
    if total != inst.p:
        raise ValueError(f"y opens {total} facilities, expected p={inst.p}")


def complete_x_from_y(inst: Instance, y: Sequence[Number]) -> Solution:
    """Complete an integral opening to a full solution.

    A customer counts as covered exactly when some facility in its coverage
    set is open; an empty coverage set leaves the customer uncovered.
    """
    _check_integral_y(inst, y)
    x = tuple(
        1 if any(y[i - 1] == 1 for i in c.coverage) else 0
        for c in inst.customers
    )
    objective = sum(
        (c.weight for c, xv in zip(inst.customers, x) if xv), start=Fraction(0)
    )
    return Solution(y=tuple(int(v) for v in y), x=x, objective=objective)


def evaluate_integer_objective(inst: Instance, y: Sequence[Number]) -> Number:
    """Objective of an integral opening: sum of w_j * min(1, opened coverage)."""
    _check_integral_y(inst, y)
    total = Fraction(0)
    for c in inst.customers:
        opened = sum(y[i - 1] for i in c.coverage)
        total += c.weight * min(1, opened)
    return total


def brute_force_solve(
    inst: Instance, enumeration_cap: int = 10_000_000
) -> Solution:
    """Exact oracle: enumerate every p-subset of facilities.

    Ties are broken toward the lexicographically smallest open set, so the
    result is deterministic.  Refuses instances whose subset count exceeds
    ``enumeration_cap``.
    """
    n, p = inst.facility_count, inst.p
    count = math.comb(n, p)
    if count > enumeration_cap:
        raise ValueError(
            f"enumeration of C({n},{p})={count} subsets exceeds cap {enumeration_cap}"
        )
    masks = [0] * len(inst.customers)
    for j, c in enumerate(inst.customers):
        for i in c.coverage:
            masks[j] |= 1 << (i - 1)
    weights = [c.weight for c in inst.customers]
    best_obj: Number | None = None
    best_open: tuple[int, ...] | None = None
    for opening in combinations(range(n), p):
        open_mask = 0
        for i in opening:
            open_mask |= 1 << i
        obj = sum(w for w, m in zip(weights, masks) if m & open_mask)
        if best_obj is None or obj > best_obj:
            best_obj = obj
            best_open = opening
    assert best_open is not None
    y = [0] * n
    for i in best_open:
        y[i] = 1
    return complete_x_from_y(inst, y)
