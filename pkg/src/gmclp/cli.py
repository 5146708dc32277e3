"""Command-line front end: generate, solve, presolve, bench, report.

Exit codes: 0 success / proven optimum, 2 limit reached with an incumbent,
3 validation or parameter error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

from .bnc import SETTINGS, SolveOptions, solve_bnc
from .ingest import (
    WeightScheme,
    assign_weights,
    generate_planar,
    parse_coverage_file,
    pmed_skeleton,
    write_coverage_file,
)
from .presolve import PresolveOptions, presolve_pipeline
from .report import (
    aggregate_records,
    run_instance,
    write_aggregates_csv,
    write_json,
    write_records_csv,
)

EXIT_OK = 0
EXIT_LIMIT = 2
EXIT_INVALID = 3
EXIT_IO = 4


def _parse_weights_arg(text: str) -> WeightScheme:
    if text == "unit":
        return WeightScheme(kind="unit-alternating")
    if text.startswith("ratio:"):
        return WeightScheme(kind="ratio-random", ratio=float(text.split(":", 1)[1]))
    raise ValueError(f"--weights must be 'unit' or 'ratio:R', got {text!r}")


def _group_label(scheme: WeightScheme) -> str:
    if scheme.kind == "unit-alternating":
        return "U-0.5"
    return f"NU-{scheme.ratio}"


def cmd_generate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_scheme = _parse_weights_arg(args.weights)
    entries = []
    for k in range(args.count):
        seed = args.seed + k
        scheme = WeightScheme(
            kind=base_scheme.kind, ratio=base_scheme.ratio, seed=seed
        )
        if args.from_pmed:
            skeleton = pmed_skeleton(args.from_pmed, p=args.p, radius=args.radius)
            stem = Path(args.from_pmed).stem
            name = f"{stem}_p{skeleton.p}_{args.weights.replace(':', '')}_s{seed}.gmclp"
        else:
            if args.facilities is None or args.customers is None or args.p is None:
                raise ValueError(
                    "planar generation needs --facilities, --customers, and --p"
                )
            if args.radius is None:
                raise ValueError("planar generation needs --radius")
            if args.p < 1:
                raise ValueError("--p must be positive")
            skeleton = generate_planar(
                n_customers=args.customers,
                n_facilities=args.facilities,
                p=args.p,
                radius=args.radius,
                seed=seed,
            )
            name = (
                f"planar_f{args.facilities}_c{args.customers}_p{args.p}"
                f"_r{args.radius}_{args.weights.replace(':', '')}_s{seed}.gmclp"
            )
        inst = assign_weights(skeleton, scheme)
        path = out_dir / name
        write_coverage_file(inst, path)
        entries.append(
            {
                "path": str(path),
                "group": _group_label(scheme),
                "seed": seed,
                "p": skeleton.p,
                "facilities": inst.facility_count,
                "customers": inst.n_customers,
                "weights": args.weights,
                "radius": skeleton.meta.get("radius"),
                "generator": skeleton.meta.get("generator"),
            }
        )
    manifest = out_dir / "manifest.json"
    write_json({"instances": entries}, manifest)
    print(f"wrote {len(entries)} instance(s) and {manifest}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = parse_coverage_file(args.instance)
    record = run_instance(
        inst,
        args.setting,
        instance_id=str(args.instance),
        group="",
        time_limit=args.time_limit,
        node_limit=args.node_limit,
    )
    text = json.dumps(record, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.solution:
        lines = [
            f"objective {record['z_exact']}",
            "open " + " ".join(str(i) for i in record["open_facilities"]),
        ]
        Path(args.solution).write_text("\n".join(lines) + "\n")
    return EXIT_OK if record["status"] == "optimal" else EXIT_LIMIT


def cmd_presolve(args) -> int:
    inst = parse_coverage_file(args.instance)
    opts = PresolveOptions(
        aggregate=not args.no_aggregate,
        substitute_singletons=not args.no_p1,
        dominance=not args.no_dominance,
        strengthen_nested=not args.no_p3,
    )
    _, artifacts, report = presolve_pipeline(inst, opts)
    payload = report.to_dict()
    payload["substitutions"] = len(artifacts.substitutions)
    payload["dominance_rows"] = len(artifacts.pruned_pairs)
    payload["strengthened_rows"] = len(artifacts.strengthened)
    if artifacts.dominance:
        payload["cover_rows_removed"] = sum(
            len(v) for v in artifacts.dominance.removed_constraints.values()
        )
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _bench_one(task) -> dict:
    path, group, setting, time_limit, node_limit = task
    try:
        inst = parse_coverage_file(path)
        return run_instance(
            inst,
            setting,
            instance_id=str(path),
            group=group,
            time_limit=time_limit,
            node_limit=node_limit,
        )
    except Exception as exc:  # record the failure, never abort the batch
        return {
            "instance": str(path),
            "group": group,
            "setting": setting,
            "status": "error",
            "error": str(exc),
        }


def _load_manifest(path: Path) -> list[dict]:
    data = json.loads(path.read_text())
    if isinstance(data, dict) and "instances" in data:
        entries = data["instances"]
    elif isinstance(data, list):
        entries = [{"path": p} if isinstance(p, str) else p for p in data]
    else:
        raise ValueError(f"{path}: manifest must be a list or have an 'instances' key")
    base = path.parent
    out = []
    for e in entries:
        p = Path(e["path"])
        if not p.is_absolute():
            p = base / p
        out.append({"path": p, "group": e.get("group", "")})
    return out


def cmd_bench(args) -> int:
    manifest = _load_manifest(Path(args.manifest))
    settings = [s.strip() for s in args.settings.split(",") if s.strip()]
    for s in settings:
        if s not in SETTINGS:
            raise ValueError(f"unknown setting {s!r}; choose from {SETTINGS}")
    tasks = [
        (e["path"], e["group"], setting, args.time_limit, args.node_limit)
        for e in manifest
        for setting in settings
    ]
    workers = args.workers or int(os.environ.get("GMCLP_WORKERS", "1"))
    if workers > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_bench_one, tasks))
    else:
        records = [_bench_one(t) for t in tasks]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aggregates = aggregate_records(records)
    write_json(records, out_dir / "runs.json")
    write_records_csv(records, out_dir / "runs.csv")
    write_json(aggregates, out_dir / "aggregates.json")
    write_aggregates_csv(aggregates, out_dir / "aggregates.csv")
    n_err = sum(1 for r in records if r.get("status") == "error")
    print(
        f"bench: {len(records)} runs ({n_err} failed), outputs in {out_dir}"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    records = []
    for path in args.runs:
        records.extend(json.loads(Path(path).read_text()))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aggregates = aggregate_records(records)
    write_json(aggregates, out_dir / "aggregates.json")
    write_aggregates_csv(aggregates, out_dir / "aggregates.csv")
    write_records_csv(records, out_dir / "runs.csv")
    print(f"report: {len(records)} records aggregated into {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmclp",
        description="Exact solver and benchmark harness for covering location "
        "instances with signed customer weights.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate instance files + manifest")
    g.add_argument("--facilities", type=int, default=None)
    g.add_argument("--customers", type=int, default=None)
    g.add_argument("--p", type=int, default=None)
    g.add_argument("--radius", type=float, default=None)
    g.add_argument("--weights", default="unit", help="'unit' or 'ratio:R'")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1, help="instances (seeds seed..seed+count-1)")
    g.add_argument("--from-pmed", default=None, help="build from an OR-Library p-median file")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance")
    s.add_argument("--setting", choices=SETTINGS, default="full")
    s.add_argument("--time-limit", type=float, default=None)
    s.add_argument("--node-limit", type=int, default=None)
    s.add_argument("--out", default=None, help="write the JSON record here")
    s.add_argument("--solution", default=None, help="write the open-facility list here")
    s.set_defaults(func=cmd_solve)

    p = sub.add_parser("presolve", help="run the reductions and report sizes")
    p.add_argument("instance")
    p.add_argument("--no-aggregate", action="store_true")
    p.add_argument("--no-p1", action="store_true")
    p.add_argument("--no-dominance", action="store_true")
    p.add_argument("--no-p3", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_presolve)

    b = sub.add_parser("bench", help="run a manifest under several settings")
    b.add_argument("manifest")
    b.add_argument("--settings", default="full")
    b.add_argument("--time-limit", type=float, default=None)
    b.add_argument("--node-limit", type=int, default=None)
    b.add_argument("--workers", type=int, default=None,
                   help="parallel solves (default: env GMCLP_WORKERS or 1)")
    b.add_argument("--out-dir", default="bench-out")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="aggregate run records into tables")
    r.add_argument("runs", nargs="+", help="runs.json files")
    r.add_argument("--out-dir", default="report-out")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
