"""Instance ingestion and generation.

Reads OR-Library p-median graph files (closing edge costs under all-pairs
shortest paths), generates planar instances on a 30x30 region, computes
coverage radii as a pairwise-distance percentile, assigns weight schemes,
and round-trips instances through a plain-text coverage format.

All randomness goes through numpy's PCG64 generator so instances are fully
reproducible from their seeds; the generator name is recorded in instance
metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .model import Customer, Instance, validate_instance

GENERATOR_NAME = "numpy-pcg64"

FORMAT_MAGIC = "GMCLP"
FORMAT_VERSION = "1"

# Ratios used for the non-unit weight scheme in the benchmark recipe.
ALLOWED_RATIOS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric nonnegative distances with zero diagonal (float64)."""

    n: int
    entries: np.ndarray


@dataclass(frozen=True)
class WeightScheme:
    """Weight assignment rule: unit-alternating or ratio-random.

    ``ratio`` is the fraction of customers given a negative weight and must
    come from the benchmark set {0.1, 0.3, 0.5, 0.7, 0.9}; it is ignored for
    the unit-alternating kind.
    """

    kind: str
    ratio: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("unit-alternating", "ratio-random"):
            raise ValueError(f"unknown weight scheme kind {self.kind!r}")
        if self.kind == "ratio-random":
            if self.ratio is None or not any(
                math.isclose(self.ratio, r) for r in ALLOWED_RATIOS
            ):
                raise ValueError(
                    f"ratio must be one of {ALLOWED_RATIOS}, got {self.ratio}"
                )


@dataclass(frozen=True)
class CoverageSkeleton:
    """An instance minus its weights: coverage sets, p, and provenance."""

    facility_count: int
    coverages: tuple[tuple[int, ...], ...]
    p: int
    meta: dict = field(default_factory=dict, compare=False, repr=False)


def floyd_warshall(d: np.ndarray) -> np.ndarray:
    """All-pairs shortest-path closure of a (possibly +inf) distance matrix."""
    d = d.copy()
    n = d.shape[0]
    for k in range(n):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)
    return d


def load_pmed(path: str | Path) -> tuple[DistanceMatrix, int, int]:
    """Parse an OR-Library p-median file into a closed distance matrix.

    Format: header "n m p", then m lines "u v cost" with 1-based vertices
    and positive integer costs.  Parallel edges keep the minimum cost; the
    matrix is closed under shortest paths before being returned.
    """
    path = Path(path)
    with path.open() as fh:
        tokens = fh.read().split()
    if len(tokens) < 3:
        raise ValueError(f"{path}: missing header 'n m p'")
    try:
        n, m, p = int(tokens[0]), int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed header: {exc}") from exc
    if n < 1 or m < 0 or p < 1:
        raise ValueError(f"{path}: nonsensical header n={n} m={m} p={p}")
    if len(tokens) != 3 + 3 * m:
        raise ValueError(
            f"{path}: expected {3 + 3 * m} tokens for {m} edges, got {len(tokens)}"
        )
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for e in range(m):
        try:
            u = int(tokens[3 + 3 * e])
            v = int(tokens[4 + 3 * e])
            cost = int(tokens[5 + 3 * e])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed edge line {e + 1}: {exc}") from exc
        if not (1 <= u <= n and 1 <= v <= n):
            raise ValueError(f"{path}: edge {e + 1} vertex out of range")
        if cost <= 0:
            raise ValueError(f"{path}: edge {e + 1} has nonpositive cost {cost}")
        if cost < d[u - 1, v - 1]:
            d[u - 1, v - 1] = cost
            d[v - 1, u - 1] = cost
    return DistanceMatrix(n=n, entries=floyd_warshall(d)), n, p


def compute_coverage_radius(dm: DistanceMatrix, p: int) -> float:
    """Coverage radius as the 1/(2p) percentile of pairwise distances.

    Nearest-rank definition: sort the n(n-1)/2 off-diagonal pair distances
    ascending and take the entry at index ceil(q*M) with q = 1/(2p), clamped
    to [1, M].
    """
    if dm.n < 2:
        raise ValueError("need at least two points for a pairwise percentile")
    if p < 1:
        raise ValueError("p must be positive")
    pairs = np.sort(dm.entries[np.triu_indices(dm.n, k=1)])
    m = len(pairs)
    q = 1.0 / (2 * p)
    idx = min(max(math.ceil(q * m), 1), m)
    return float(pairs[idx - 1])


def coverage_from_distances(dist: np.ndarray, radius: float) -> tuple[tuple[int, ...], ...]:
    """Coverage sets from a (facility x customer) distance array.

    Facility i covers customer j exactly when dist[i-1, j] <= radius; the
    comparison is inclusive on the boundary.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    within = dist <= radius
    return tuple(
        tuple(int(i) + 1 for i in np.nonzero(within[:, j])[0])
        for j in range(dist.shape[1])
    )


def pmed_skeleton(
    path: str | Path, p: int | None = None, radius: float | None = None
) -> CoverageSkeleton:
    """Build a skeleton from a p-median file (every vertex is both site and customer).

    The file's p is used unless overridden; the radius defaults to the
    pairwise-distance percentile rule.
    """
    dm, n, file_p = load_pmed(path)
    use_p = file_p if p is None else p
    use_radius = compute_coverage_radius(dm, use_p) if radius is None else radius
    return CoverageSkeleton(
        facility_count=n,
        coverages=coverage_from_distances(dm.entries, use_radius),
        p=use_p,
        meta={
            "source": str(path),
            "radius": use_radius,
            "file_p": file_p,
        },
    )


def generate_planar(
    n_customers: int,
    n_facilities: int,
    p: int,
    radius: float,
    seed: int,
) -> CoverageSkeleton:
    """Random planar skeleton: points i.i.d. uniform on [0, 30]^2.

    Facility coordinates are drawn before customer coordinates, so the
    skeleton is a pure function of the arguments.  Distances are Euclidean.
    """
    if n_customers < 1 or n_facilities < 1 or p < 1:
        raise ValueError("n_customers, n_facilities, and p must be positive")
    if p > n_facilities:
        raise ValueError(f"p={p} exceeds n_facilities={n_facilities}")
    rng = np.random.Generator(np.random.PCG64(seed))
    fac = rng.uniform(0.0, 30.0, size=(n_facilities, 2))
    cust = rng.uniform(0.0, 30.0, size=(n_customers, 2))
    dist = np.hypot(
        fac[:, 0][:, None] - cust[:, 0][None, :],
        fac[:, 1][:, None] - cust[:, 1][None, :],
    )
    return CoverageSkeleton(
        facility_count=n_facilities,
        coverages=coverage_from_distances(dist, radius),
        p=p,
        meta={
            "generator": GENERATOR_NAME,
            "seed": seed,
            "radius": radius,
            "n_customers": n_customers,
            "n_facilities": n_facilities,
        },
    )


def assign_weights(skeleton: CoverageSkeleton, scheme: WeightScheme) -> Instance:
    """Attach weights to a skeleton.

    unit-alternating: customers 1, 3, 5, ... (1-based) get +1, the rest -1.
    ratio-random: round(ratio * n) customers chosen uniformly at random get
    weights uniform on {-100..-1}; the rest get weights uniform on {1..100}.
    Rounding is half-up.
    """
    n = len(skeleton.coverages)
    if scheme.kind == "unit-alternating":
        weights = [1 if j % 2 == 0 else -1 for j in range(n)]
    else:
        k = int(math.floor(scheme.ratio * n + 0.5))
        rng = np.random.Generator(np.random.PCG64(scheme.seed))
        negative = set(rng.choice(n, size=k, replace=False).tolist()) if k else set()
        weights = [
            int(rng.integers(-100, 0)) if j in negative else int(rng.integers(1, 101))
            for j in range(n)
        ]
    meta = dict(skeleton.meta)
    meta["weight_scheme"] = {
        "kind": scheme.kind,
        "ratio": scheme.ratio,
        "seed": scheme.seed,
    }
    return Instance(
        facility_count=skeleton.facility_count,
        customers=tuple(
            Customer(weight=w, coverage=cov)
            for w, cov in zip(weights, skeleton.coverages)
        ),
        p=skeleton.p,
        meta=meta,
    )


def _format_weight(w) -> str:
    if isinstance(w, Fraction):
        return str(w)
    if isinstance(w, float):
        return str(Fraction(w))
    return str(w)


def write_coverage_file(inst: Instance, path: str | Path) -> None:
    """Write the native coverage format.

    Line 1: "GMCLP 1".  Line 2: "|I| |J| p".  Then one line per customer:
    "w k i_1 ... i_k" with the weight as an exact rational and 1-based
    facility ids.
    """
    path = Path(path)
    lines = [f"{FORMAT_MAGIC} {FORMAT_VERSION}"]
    lines.append(f"{inst.facility_count} {inst.n_customers} {inst.p}")
    for c in inst.customers:
        parts = [_format_weight(c.weight), str(len(c.coverage))]
        parts.extend(str(i) for i in c.coverage)
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def _parse_weight(token: str) -> Fraction | int:
    w = Fraction(token)
    return int(w) if w.denominator == 1 else w


def parse_coverage_file(path: str | Path) -> Instance:
    """Parse the native coverage format; raises ValueError on malformed input."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split()
    if header != [FORMAT_MAGIC, FORMAT_VERSION]:
        raise ValueError(f"{path}: bad magic line {lines[0]!r}")
    if len(lines) < 2:
        raise ValueError(f"{path}: missing size line")
    sizes = lines[1].split()
    if len(sizes) != 3:
        raise ValueError(f"{path}: size line must be '|I| |J| p'")
    try:
        n_fac, n_cust, p = (int(t) for t in sizes)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed size line: {exc}") from exc
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != n_cust:
        raise ValueError(
            f"{path}: expected {n_cust} customer lines, found {len(body)}"
        )
    customers = []
    for lineno, ln in enumerate(body, start=3):
        tokens = ln.split()
        try:
            w = _parse_weight(tokens[0])
            k = int(tokens[1])
        except (ValueError, IndexError, ZeroDivisionError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed customer line") from exc
        if len(tokens) != 2 + k:
            raise ValueError(
                f"{path}:{lineno}: expected {k} coverage entries, got {len(tokens) - 2}"
            )
        try:
            cov = tuple(int(t) for t in tokens[2:])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed coverage entry") from exc
        customers.append(Customer(weight=w, coverage=cov))
    inst = Instance(
        facility_count=n_fac,
        customers=tuple(customers),
        p=p,
        meta={"source": str(path)},
    )
    problems = validate_instance(inst)
    if problems:
        raise ValueError(f"{path}: invalid instance: " + "; ".join(problems))
    return inst
