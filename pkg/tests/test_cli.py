"""Command-line verbs, exit codes, file outputs, and metric aggregation."""

import json
from pathlib import Path

import numpy as np
import pytest

from gmclp import write_coverage_file
from gmclp.cli import main
from gmclp.report import aggregate_records, gi_pct, lpg_pct, shifted_geomean

from conftest import gap_example, two_customer_example


def write_example(tmp_path, name="ex.gmclp"):
    path = tmp_path / name
    write_coverage_file(two_customer_example(), path)
    return path


class TestGenerate:
    def test_planar_generation_writes_files_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "instances"
        code = main(
            [
                "generate", "--facilities", "20", "--customers", "60", "--p", "3",
                "--radius", "5.5", "--weights", "unit", "--seed", "7",
                "--count", "2", "--out", str(out),
            ]
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["instances"]) == 2
        assert manifest["instances"][0]["group"] == "U-0.5"
        for entry in manifest["instances"]:
            assert Path(entry["path"]).exists()

    def test_generation_is_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        args = [
            "generate", "--facilities", "15", "--customers", "40", "--p", "2",
            "--radius", "6.0", "--weights", "ratio:0.5", "--seed", "7",
        ]
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        files_a = sorted(p.name for p in out_a.glob("*.gmclp"))
        files_b = sorted(p.name for p in out_b.glob("*.gmclp"))
        assert files_a == files_b
        for name in files_a:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_invalid_p_rejected(self, tmp_path):
        code = main(
            [
                "generate", "--facilities", "10", "--customers", "10", "--p", "0",
                "--radius", "3.0", "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 3

    def test_from_pmed(self, tmp_path):
        pmed = tmp_path / "pmed1.txt"
        pmed.write_text("3 2 1\n1 2 2\n2 3 3\n")
        out = tmp_path / "converted"
        code = main(
            ["generate", "--from-pmed", str(pmed), "--weights", "unit",
             "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["instances"][0]["facilities"] == 3


class TestSolve:
    def test_solve_writes_record_and_solution(self, tmp_path):
        inst_path = write_example(tmp_path)
        record_path = tmp_path / "record.json"
        sol_path = tmp_path / "solution.txt"
        code = main(
            ["solve", str(inst_path), "--setting", "full",
             "--out", str(record_path), "--solution", str(sol_path)]
        )
        assert code == 0
        record = json.loads(record_path.read_text())
        assert record["status"] == "optimal"
        assert record["z_exact"] == "0"
        assert record["z_lp"] == pytest.approx(0.5, abs=1e-6)
        assert record["z_root"] == pytest.approx(0.0, abs=1e-6)
        text = sol_path.read_text()
        assert text.startswith("objective 0")
        assert "open" in text

    def test_baseline_vs_full_root_bounds(self, tmp_path):
        path = tmp_path / "gap.gmclp"
        write_coverage_file(gap_example(), path)
        rec = tmp_path / "r.json"
        assert main(["solve", str(path), "--setting", "baseline", "--out", str(rec)]) == 0
        baseline = json.loads(rec.read_text())
        assert main(["solve", str(path), "--setting", "full", "--out", str(rec)]) == 0
        full = json.loads(rec.read_text())
        assert baseline["z_lp"] == pytest.approx(1.0, abs=1e-6)
        assert baseline["z_root"] == pytest.approx(1.0, abs=1e-6)
        assert full["z_root"] == pytest.approx(0.25, abs=1e-6)

    def test_unreadable_path_is_io_error(self, tmp_path):
        assert main(["solve", str(tmp_path / "missing.gmclp")]) == 4

    def test_malformed_file_is_validation_error(self, tmp_path):
        bad = tmp_path / "bad.gmclp"
        bad.write_text("GMCLP 1\n3 1 9\n1 1 2\n")
        assert main(["solve", str(bad)]) == 3

    def test_limit_exit_code(self, tmp_path):
        # node limit zero forces a limit status on an instance with a root gap
        path = tmp_path / "gap.gmclp"
        write_coverage_file(gap_example(10), path)
        code = main(
            ["solve", str(path), "--setting", "baseline", "--node-limit", "0",
             "--out", str(tmp_path / "r.json")]
        )
        assert code == 2


class TestPresolveVerb:
    def test_reports_reductions(self, tmp_path, capsys):
        path = tmp_path / "gap.gmclp"
        write_coverage_file(gap_example(), path)
        assert main(["presolve", str(path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["variables_before"] - payload["variables_after"] == 1
        assert payload["delta_v_pct"] > 0


class TestBench:
    def test_bench_runs_and_aggregates(self, tmp_path, capsys):
        out = tmp_path / "instances"
        main(
            ["generate", "--facilities", "12", "--customers", "30", "--p", "2",
             "--radius", "6.0", "--weights", "unit", "--seed", "3",
             "--count", "2", "--out", str(out)]
        )
        bench_dir = tmp_path / "bench"
        code = main(
            ["bench", str(out / "manifest.json"), "--settings", "baseline,full",
             "--out-dir", str(bench_dir)]
        )
        assert code == 0
        runs = json.loads((bench_dir / "runs.json").read_text())
        assert len(runs) == 4
        assert all(r["status"] == "optimal" for r in runs)
        aggregates = json.loads((bench_dir / "aggregates.json").read_text())
        assert {a["setting"] for a in aggregates} == {"baseline", "full"}
        assert (bench_dir / "runs.csv").exists()
        assert (bench_dir / "aggregates.csv").exists()

    def test_bench_determinism(self, tmp_path):
        out = tmp_path / "instances"
        main(
            ["generate", "--facilities", "12", "--customers", "25", "--p", "2",
             "--radius", "5.5", "--weights", "ratio:0.5", "--seed", "11",
             "--out", str(out)]
        )
        dirs = []
        for name in ("b1", "b2"):
            bench_dir = tmp_path / name
            main(
                ["bench", str(out / "manifest.json"), "--settings", "full",
                 "--out-dir", str(bench_dir)]
            )
            dirs.append(json.loads((bench_dir / "runs.json").read_text()))
        a, b = dirs
        for ra, rb in zip(a, b):
            for key in ("z", "z_exact", "z_lp", "z_root", "nodes", "cuts"):
                assert ra[key] == rb[key]

    def test_empty_manifest_succeeds(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text('{"instances": []}')
        bench_dir = tmp_path / "bench"
        assert main(["bench", str(manifest), "--out-dir", str(bench_dir)]) == 0
        assert json.loads((bench_dir / "runs.json").read_text()) == []

    def test_partial_failure_recorded_not_fatal(self, tmp_path):
        good = write_example(tmp_path)
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps({"instances": [
                {"path": str(good), "group": "g"},
                {"path": str(tmp_path / "missing.gmclp"), "group": "g"},
            ]})
        )
        bench_dir = tmp_path / "bench"
        assert main(["bench", str(manifest), "--out-dir", str(bench_dir)]) == 0
        runs = json.loads((bench_dir / "runs.json").read_text())
        statuses = sorted(r["status"] for r in runs)
        assert statuses == ["error", "optimal"]


class TestReportVerb:
    def test_report_reaggregates(self, tmp_path):
        records = [
            {"instance": "a", "group": "g", "setting": "full", "status": "optimal",
             "nodes": 3, "cuts": 0, "gi_pct": 100.0, "lpg_pct": 10.0,
             "delta_v_pct": 1.0, "delta_c_pct": 2.0, "total_seconds": 0.1},
            {"instance": "b", "group": "g", "setting": "full", "status": "optimal",
             "nodes": 8, "cuts": 0, "gi_pct": 50.0, "lpg_pct": None,
             "delta_v_pct": 1.0, "delta_c_pct": 2.0, "total_seconds": 0.2},
        ]
        runs = tmp_path / "runs.json"
        runs.write_text(json.dumps(records))
        out = tmp_path / "rep"
        assert main(["report", str(runs), "--out-dir", str(out)]) == 0
        aggregates = json.loads((out / "aggregates.json").read_text())
        assert aggregates[0]["nodes"] == pytest.approx(5.0)  # sgm of {3, 8}


class TestMetrics:
    def test_shifted_geomean_reference_value(self):
        assert shifted_geomean([3, 8]) == pytest.approx(5.0)

    def test_single_value_identity(self):
        assert shifted_geomean([7.0]) == pytest.approx(7.0)

    def test_lpg_flagged_for_nonpositive_optimum(self):
        assert lpg_pct(1.0, 0.0) is None
        assert lpg_pct(1.0, -2.0) is None
        assert lpg_pct(3.0, 2.0) == pytest.approx(50.0)

    def test_gi_tight_root_convention(self):
        assert gi_pct(1.0, 1.0, 1.0) == 100.0
        assert gi_pct(2.0, 1.5, 1.0) == pytest.approx(50.0)

    def test_aggregate_keys_by_group_and_setting(self):
        records = [
            {"group": "g1", "setting": "full", "status": "optimal",
             "nodes": 1, "cuts": 0, "gi_pct": 1.0, "lpg_pct": 1.0,
             "delta_v_pct": 0.0, "delta_c_pct": 0.0, "total_seconds": 0.1},
            {"group": "g2", "setting": "full", "status": "optimal",
             "nodes": 1, "cuts": 0, "gi_pct": 1.0, "lpg_pct": 1.0,
             "delta_v_pct": 0.0, "delta_c_pct": 0.0, "total_seconds": 0.1},
        ]
        rows = aggregate_records(records)
        assert [(r["group"], r["setting"]) for r in rows] == [
            ("g1", "full"), ("g2", "full"),
        ]
