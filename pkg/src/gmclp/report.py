"""Run records, benchmark metrics, and aggregation.

A run record captures one (instance, setting) solve: the exact optimum, the
unreduced relaxation bound, the post-presolve/post-cut root bound, the
derived gap metrics, presolve size reductions, and effort counters.
Aggregation uses shifted geometric means (shift 1) per (group, setting).
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

from .bnc import SolveOptions, plain_root_bound, solve_bnc
from .model import Instance

RECORD_FIELDS = [
    "instance",
    "group",
    "setting",
    "status",
    "z",
    "z_exact",
    "z_lp",
    "z_root",
    "lpg_pct",
    "gi_pct",
    "delta_v_pct",
    "delta_c_pct",
    "nodes",
    "cuts",
    "presolve_seconds",
    "separation_seconds",
    "total_seconds",
]

AGGREGATE_FIELDS = [
    "group",
    "setting",
    "instances",
    "solved",
    "lpg_pct",
    "gi_pct",
    "delta_v_pct",
    "delta_c_pct",
    "nodes",
    "cuts",
    "total_seconds",
]


def lpg_pct(z_lp: float, z: float) -> float | None:
    """Relative root gap in percent; undefined (None) unless the optimum is positive."""
    if z <= 0:
        return None
    return (z_lp - z) / z * 100.0


def gi_pct(z_lp: float, z_root: float, z: float) -> float:
    """Share of the root gap closed before branching, in percent.

    A root gap below 1e-9 counts as fully closed (100).  Clamped to
    [0, 100] to absorb float noise between the two bound computations.
    """
    if z_lp - z < 1e-9:
        return 100.0
    value = (z_lp - z_root) / (z_lp - z) * 100.0
    return max(0.0, min(100.0, value))


def shifted_geomean(values, shift: float = 1.0) -> float:
    """Geometric mean of (value + shift) minus shift."""
    vals = list(values)
    if not vals:
        return 0.0
    log_sum = 0.0
    for v in vals:
        if v + shift <= 0:
            raise ValueError(f"value {v} not compatible with shift {shift}")
        log_sum += math.log(v + shift)
    return math.exp(log_sum / len(vals)) - shift


def run_instance(
    inst: Instance,
    setting: str,
    instance_id: str = "",
    group: str = "",
    time_limit: float | None = None,
    node_limit: int | None = None,
) -> dict:
    """Solve one (instance, setting) pair and assemble its record."""
    opts = SolveOptions.for_setting(
        setting, time_limit=time_limit, node_limit=node_limit
    )
    t0 = time.perf_counter()
    z_lp = plain_root_bound(inst)
    solution, stats = solve_bnc(inst, opts)
    total = time.perf_counter() - t0
    z = float(solution.objective)
    report = stats.presolve_report
    return {
        "instance": instance_id,
        "group": group,
        "setting": setting,
        "status": stats.status,
        "z": z,
        "z_exact": stats.z_exact,
        "z_lp": z_lp,
        "z_root": stats.z_root,
        "lpg_pct": lpg_pct(z_lp, z),
        "gi_pct": gi_pct(z_lp, stats.z_root, z),
        "delta_v_pct": report.delta_v_pct if report else 0.0,
        "delta_c_pct": report.delta_c_pct if report else 0.0,
        "nodes": stats.nodes,
        "cuts": stats.cuts_added,
        "presolve_seconds": stats.presolve_seconds,
        "separation_seconds": stats.separation_seconds,
        "total_seconds": total,
        "open_facilities": list(solution.open_facilities),
    }


def aggregate_records(records) -> list[dict]:
    """Shifted geometric means (shift 1) per (group, setting)."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for rec in records:
        if rec.get("status") == "error":
            continue
        key = (rec.get("group", ""), rec.get("setting", ""))
        groups.setdefault(key, []).append(rec)
    out = []
    for (group, setting) in sorted(groups):
        rows = groups[(group, setting)]
        entry = {
            "group": group,
            "setting": setting,
            "instances": len(rows),
            "solved": sum(1 for r in rows if r["status"] == "optimal"),
        }
        for field in ("lpg_pct", "gi_pct", "delta_v_pct", "delta_c_pct",
                      "nodes", "cuts", "total_seconds"):
            vals = [r[field] for r in rows if r.get(field) is not None]
            entry[field] = shifted_geomean(vals) if vals else None
        out.append(entry)
    return out


def write_records_csv(records, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec)


def write_aggregates_csv(aggregates, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=AGGREGATE_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in aggregates:
            writer.writerow(row)


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
