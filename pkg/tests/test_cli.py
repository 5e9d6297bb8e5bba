import json
import os

import pytest

from blueprintd.cli import main

from conftest import write_scenario_variant


def read(path):
    return path.read_bytes()


class TestSimulateCommand:
    def test_missing_scenario_exits_2(self, tmp_path, capsys):
        code = main(["simulate", "--scenario", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_outputs_and_determinism(self, scenario_dir, tmp_path):
        scenario = scenario_dir / "scale_down.json"
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--scenario", str(scenario), "--out", str(out1)]) == 0
        assert main(["simulate", "--scenario", str(scenario), "--out", str(out2)]) == 0
        for name in ("metrics.csv", "events.json", "summary.json"):
            assert read(out1 / name) == read(out2 / name)
        summary = json.loads((out1 / "summary.json").read_text())
        assert {"cost_initial_per_hour", "cost_final_per_hour", "blueprint_changes",
                "compliance", "conservation", "final_blueprint"} <= set(summary)


class TestPlanCommand:
    def test_plan_report(self, scenario_dir, tmp_path, capsys):
        out = tmp_path / "plan.json"
        code = main(["plan", "--scenario", str(scenario_dir / "scale_down.json"),
                     "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["blueprint"]["provisionings"]["warehouse"]["node_count"] == 0
        assert report["candidates_scored"] > 0
        assert "selected blueprint" in capsys.readouterr().out

    def test_infeasible_exits_3(self, scenario_dir, tmp_path):
        path = write_scenario_variant(
            scenario_dir, tmp_path, "scale_down",
            slo={"txn_p90_s": 1e-9, "query_p90_s": 1e-9},
        )
        assert main(["plan", "--scenario", str(path)]) == 3


class TestFitCommand:
    def test_provisioning_fit(self, tmp_path):
        csv_path = tmp_path / "obs.csv"
        rows = ["g,dest_vcpus,runtime_s"]
        for g in (1.0, 2.0):
            for d in (2, 4, 8):
                rows.append(f"{g},{d},{(0.6 * (4 / d) + 0.4) * g}")
        csv_path.write_text("\n".join(rows))
        out = tmp_path / "fit.json"
        code = main(["fit", "--kind", "provisioning", "--input", str(csv_path),
                     "--base-vcpus", "4", "--out", str(out)])
        assert code == 0
        fit = json.loads(out.read_text())
        assert fit["c1"] == pytest.approx(0.6, abs=1e-9)
        assert fit["c2"] == pytest.approx(0.4, abs=1e-9)

    def test_txn_fit(self, tmp_path):
        csv_path = tmp_path / "obs.csv"
        rows = ["utilization,latency_s"]
        for rho in (0.1, 0.3, 0.5, 0.7, 0.9):
            rows.append(f"{rho},{1.0 / (1.0 - rho) + 0.005}")
        csv_path.write_text("\n".join(rows))
        code = main(["fit", "--kind", "txn", "--input", str(csv_path)])
        assert code == 0

    def test_degenerate_exits_2(self, tmp_path):
        csv_path = tmp_path / "obs.csv"
        csv_path.write_text("g,dest_vcpus,runtime_s\n1.0,4,1.0\n2.0,4,2.0\n")
        code = main(["fit", "--kind", "provisioning", "--input", str(csv_path)])
        assert code == 2


class TestRouteEvalCommand:
    def test_report(self, tmp_path):
        out = tmp_path / "routing.json"
        code = main(["route-eval", "--queries", "150", "--seed", "3",
                     "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["forest_slowdown"] <= 1.5
        assert report["forest_slowdown"] < report["random_slowdown"]
        assert report["max_nodes_tested"] <= report["node_bound"]

    def test_seed_env_override(self, tmp_path, monkeypatch):
        out = tmp_path / "routing.json"
        monkeypatch.setenv("BLUEPRINTD_SEED", "9")
        code = main(["route-eval", "--queries", "60", "--seed", "1", "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["seed"] == 9


class TestSearchCompareCommand:
    def test_explicit_workload_file(self, scenario_dir, tmp_path):
        out = tmp_path / "compare.json"
        code = main([
            "search-compare", "--scenario", str(scenario_dir / "scale_down.json"),
            "--workload", str(scenario_dir / "workload_light.jsonl"),
            "--max-queries", "6", "--out", str(out),
        ])
        assert code == 0
        assert json.loads(out.read_text())["queries"] == 6

    def test_beam_matches_exhaustive(self, scenario_dir, tmp_path, capsys):
        out = tmp_path / "compare.json"
        code = main([
            "search-compare", "--scenario", str(scenario_dir / "scale_down.json"),
            "--max-queries", "8", "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["queries"] == 8
        w = report["w"]
        assert w["beam"] == w["exhaustive"]
        assert w["beam"] <= w["naive_greedy"]
        assert w["beam"] <= w["random_10000"]
        printed = capsys.readouterr().out
        assert "exhaustive" in printed and "naive_greedy" in printed


class TestSensitivityCommand:
    def test_zero_error_matches_baseline(self, scenario_dir, tmp_path):
        out = tmp_path / "sens.json"
        code = main([
            "sensitivity", "--scenario", str(scenario_dir / "scale_down.json"),
            "--fractions", "0.2,0.4", "--errors", "-0.4,0,0.4", "--seeds", "2",
            "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        zero_cells = [c for c in report["cells"] if c["error"] == 0]
        assert zero_cells and all(not c["changed"] for c in zero_cells)

    def test_grid_deterministic(self, scenario_dir, tmp_path):
        args = [
            "sensitivity", "--scenario", str(scenario_dir / "scale_down.json"),
            "--fractions", "0.4", "--errors", "-0.4..0.4:0.4", "--seeds", "2",
        ]
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert read(out1) == read(out2)

    def test_range_spec_parsing(self):
        from blueprintd.cli import _parse_float_list

        assert _parse_float_list("-0.8..0.8") == pytest.approx(
            [-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8]
        )
        assert _parse_float_list("0.1,0.2,0.4,0.8") == [0.1, 0.2, 0.4, 0.8]
        assert _parse_float_list("-0.4..0.4:0.4") == pytest.approx([-0.4, 0.0, 0.4])
