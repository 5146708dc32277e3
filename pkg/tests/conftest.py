"""Shared fixtures: the worked examples and seeded random instance factories."""

from fractions import Fraction

import numpy as np
import pytest

from gmclp import Customer, Instance


def gap_example(n_facilities: int = 4) -> Instance:
    """Two customers covered by every facility, weights (n+1)/n and -1, p=1.

    The relaxation bound is 1 while the optimum is 1/n, so the ratio grows
    without bound in n.
    """
    n = n_facilities
    full = tuple(range(1, n + 1))
    return Instance(
        facility_count=n,
        customers=(Customer(Fraction(n + 1, n), full), Customer(-1, full)),
        p=1,
    )


def dominance_example() -> Instance:
    """p=1, weights (1, -1), coverage {1,2} nested in {1,2,3}."""
    return Instance(
        facility_count=3,
        customers=(Customer(1, (1, 2)), Customer(-1, (1, 2, 3))),
        p=1,
    )


def two_customer_example() -> Instance:
    """p=1, weights (1, -1, -1), coverage {2,3,4}, {1,2,3}, {1,4}.

    No dominance pair exists; the single useful two-customer row drops the
    relaxation bound from 1/2 to 0.
    """
    return Instance(
        facility_count=4,
        customers=(
            Customer(1, (2, 3, 4)),
            Customer(-1, (1, 2, 3)),
            Customer(-1, (1, 4)),
        ),
        p=1,
    )


@pytest.fixture
def ex_gap():
    return gap_example()


@pytest.fixture
def ex_dom():
    return dominance_example()


@pytest.fixture
def ex_two():
    return two_customer_example()


def random_instance(
    rng: np.random.Generator,
    max_facilities: int = 12,
    max_customers: int = 20,
    max_p: int = 3,
    sign: str = "mixed",
) -> Instance:
    """Small random instance with integer weights; ``sign`` restricts weights."""
    n = int(rng.integers(3, max_facilities + 1))
    nj = int(rng.integers(2, max_customers + 1))
    p = int(rng.integers(1, min(max_p, n) + 1))
    customers = []
    for _ in range(nj):
        density = rng.uniform(0.1, 0.7)
        cov = tuple(int(i) for i in range(1, n + 1) if rng.random() < density)
        if sign == "nonneg":
            w = int(rng.integers(0, 11))
        elif sign == "negative":
            w = int(rng.integers(-10, 0))
        else:
            w = int(rng.integers(-10, 11))
        customers.append(Customer(weight=w, coverage=cov))
    return Instance(facility_count=n, customers=tuple(customers), p=p)


def random_fractional_y(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    """A random point of the fractional feasible set: entries in [0,1], sum p."""
    y = rng.uniform(0.05, 1.0, size=n)
    for _ in range(100):
        y = y * (p / y.sum())
        over = y > 1.0
        if not over.any():
            break
        y[over] = 1.0
    assert abs(y.sum() - p) < 1e-9
    return y
