import json
import math
from pathlib import Path as FsPath

import pytest

import relaynet.cli as cli
from relaynet.cli import (
    EXIT_INFEASIBLE,
    EXIT_IO,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_SCHEMA,
    ReplanBudgetError,
    SchemaError,
    generate_map,
    load_scenario,
    main,
    random_scenario,
    render_svg,
)
from relaynet.radio import RadioParams

import numpy as np

from conftest import fig2_map


def write_fig2_files(tmp_path: FsPath, **extra) -> FsPath:
    (tmp_path / "fig2.map").write_text(fig2_map().serialize())
    doc = {
        "map": "fig2.map",
        "bs": [3.0, 6.0],
        "robot_starts": [[1.0 + 0.5 * i, 10.5] for i in range(6)],
        "goals": [[9.0, 4.5], [13.0, 8.0], [16.0, 5.5], [17.0, 10.0],
                  [15.5, 1.0], [18.5, 1.0]],
        "radio": {"p_tx": -14.65},
    }
    doc.update(extra)
    path = tmp_path / "fig2.json"
    path.write_text(json.dumps(doc, indent=1))
    return path


def write_tiny_files(tmp_path: FsPath) -> FsPath:
    # one robot one cell from its goal; every pipeline produces the same row
    (tmp_path / "tiny.map").write_text(
        "width 12\nheight 5\nresolution 0.5\n" + "\n".join(["." * 12] * 5) + "\n")
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({
        "map": "tiny.map",
        "bs": [1.25, 1.25],
        "robot_starts": [[2.25, 1.25]],
        "goals": [[2.75, 1.25]],
    }))
    return path


class TestScenarioSchema:
    def test_load_valid(self, tmp_path):
        sc = load_scenario(write_fig2_files(tmp_path))
        assert len(sc.goals) == 6
        assert sc.radio.p_tx == -14.65

    def test_unknown_key_rejected(self, tmp_path):
        path = write_fig2_files(tmp_path, extra_knob=1)
        with pytest.raises(SchemaError, match="unknown keys"):
            load_scenario(path)

    def test_unknown_radio_key_rejected(self, tmp_path):
        path = write_fig2_files(tmp_path, radio={"p_tx": -14.65, "antenna": 3})
        with pytest.raises(SchemaError, match="radio keys"):
            load_scenario(path)

    def test_seed_feeds_radio(self, tmp_path):
        sc = load_scenario(write_fig2_files(tmp_path, seed=77))
        assert sc.radio.seed == 77

    def test_missing_key_rejected(self, tmp_path):
        (tmp_path / "bad.json").write_text(json.dumps({"map": "x.map"}))
        with pytest.raises(SchemaError, match="missing required key"):
            load_scenario(tmp_path / "bad.json")


class TestExitCodes:
    def test_plan_success_writes_files(self, tmp_path):
        path = write_fig2_files(tmp_path)
        code = main(["plan", str(path), "--mode", "dpa", "--out", str(tmp_path / "out")])
        assert code == EXIT_OK
        plan = json.loads((tmp_path / "out" / "plan.json").read_text())
        assert plan["mode"] == "DPA-FMM"
        svg = (tmp_path / "out" / "plan.svg").read_text()
        assert svg.startswith("<svg")

    def test_mode_alias_case_insensitive(self, tmp_path):
        path = write_fig2_files(tmp_path)
        code = main(["plan", str(path), "--mode", "DPA", "--out", str(tmp_path / "o2")])
        assert code == EXIT_OK

    def test_schema_error_exit_2(self, tmp_path):
        path = write_fig2_files(tmp_path, typo_key=True)
        assert main(["plan", str(path), "--mode", "fmm", "--out", str(tmp_path / "o")]) == EXIT_SCHEMA

    def test_bad_mode_exit_2(self, tmp_path):
        path = write_fig2_files(tmp_path)
        assert main(["plan", str(path), "--mode", "astar", "--out", str(tmp_path / "o")]) == EXIT_SCHEMA

    def test_infeasible_exit_3(self, tmp_path):
        # 70-cell corridor at d_cov 10 m with one robot: ratio over budget
        rows = ["#" * 70, "." * 70, "#" * 70]
        text = "width 70\nheight 3\nresolution 0.5\n" + "\n".join(rows) + "\n"
        (tmp_path / "c.map").write_text(text)
        (tmp_path / "c.json").write_text(json.dumps({
            "map": "c.map",
            "bs": [0.25, 0.75],
            "robot_starts": [[0.75, 0.75]],
            "goals": [[33.25, 0.75]],
            "radio": {"p_tx": -10.0, "n_los": 2.0, "n_nlos": 2.0},
        }))
        assert main(["plan", str(tmp_path / "c.json"), "--mode", "dp",
                     "--out", str(tmp_path / "o")]) == EXIT_INFEASIBLE

    def test_io_error_exit_5(self, tmp_path):
        assert main(["plan", str(tmp_path / "nope.json"), "--mode", "fmm",
                     "--out", str(tmp_path / "o")]) == EXIT_IO

    def test_runtime_error_exit_4(self, tmp_path, monkeypatch):
        path = write_fig2_files(tmp_path)

        def boom(*a, **k):
            raise ReplanBudgetError("budget exhausted")

        monkeypatch.setattr(cli, "run_with_replan", boom)
        assert main(["run", str(path), "--mode", "fmm",
                     "--out", str(tmp_path / "o")]) == EXIT_RUNTIME


class TestRun:
    def test_run_writes_trace_and_metrics(self, tmp_path):
        path = write_tiny_files(tmp_path)
        code = main(["run", str(path), "--mode", "fmm", "--out", str(tmp_path / "r")])
        assert code == EXIT_OK
        trace = json.loads((tmp_path / "r" / "trace.json").read_text())
        assert trace["completed"] is True
        lines = (tmp_path / "r" / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("scenario,mode,noise_seed")
        assert len(lines) == 2

    def test_noise_run_deterministic(self, tmp_path):
        path = write_fig2_files(tmp_path)
        main(["run", str(path), "--mode", "dp", "--noise-seed", "5",
              "--out", str(tmp_path / "n1")])
        main(["run", str(path), "--mode", "dp", "--noise-seed", "5",
              "--out", str(tmp_path / "n2")])
        assert ((tmp_path / "n1" / "metrics.csv").read_bytes()
                == (tmp_path / "n2" / "metrics.csv").read_bytes())
        assert ((tmp_path / "n1" / "trace.json").read_bytes()
                == (tmp_path / "n2" / "trace.json").read_bytes())

    def test_noisy_fmm_recovers_via_replan(self, tmp_path):
        # the far pair is unreachable without relays, so the plain pipeline
        # stalls at the goal and the reactive replan finishes the mission
        path = write_fig2_files(tmp_path)
        code = main(["run", str(path), "--mode", "fmm", "--noise-seed", "2",
                     "--out", str(tmp_path / "rp")])
        assert code == EXIT_OK
        row = (tmp_path / "rp" / "metrics.csv").read_text().splitlines()[1]
        replans = int(row.split(",")[3])
        assert replans >= 1
        trace = json.loads((tmp_path / "rp" / "trace.json").read_text())
        assert trace["completed"] is True
        assert trace["reached_goals"] == [0, 1, 2, 3, 4, 5]


class TestCompare:
    def test_degenerate_rows_identical(self, tmp_path):
        path = write_tiny_files(tmp_path)
        assert main(["compare", str(path), "--out", str(tmp_path / "cmp")]) == EXIT_OK
        lines = (tmp_path / "cmp" / "compare.csv").read_text().splitlines()
        assert len(lines) == 5
        data = [line.split(",", 1)[1] for line in lines[1:]]
        assert len(set(data)) == 1

    def test_na_rows_for_infeasible_modes(self, tmp_path):
        rows = ["#" * 70, "." * 70, "#" * 70]
        (tmp_path / "c.map").write_text("width 70\nheight 3\nresolution 0.5\n" + "\n".join(rows) + "\n")
        (tmp_path / "c.json").write_text(json.dumps({
            "map": "c.map",
            "bs": [0.25, 0.75],
            "robot_starts": [[0.75, 0.75]],
            "goals": [[33.25, 0.75]],
            "radio": {"p_tx": -10.0, "n_los": 2.0, "n_nlos": 2.0},
        }))
        assert main(["compare", str(tmp_path / "c.json"), "--out", str(tmp_path / "cmp")]) == EXIT_OK
        lines = (tmp_path / "cmp" / "compare.csv").read_text().splitlines()
        na = [line for line in lines if ",NA" in line]
        assert {line.split(",")[0] for line in na} == {"DP-FMM", "DPA-FMM"}

    def test_fig2_table_orderings(self, tmp_path):
        path = write_fig2_files(tmp_path)
        assert main(["compare", str(path), "--out", str(tmp_path / "cmp")]) == EXIT_OK
        lines = (tmp_path / "cmp" / "compare.csv").read_text().splitlines()
        vals = {}
        for line in lines[1:]:
            parts = line.split(",")
            vals[parts[0]] = {"d_tot": float(parts[2]), "T": float(parts[3]),
                              "R": int(parts[8 - 1])}
        assert vals["DPA-FMM"]["d_tot"] < vals["DP-FMM"]["d_tot"]
        assert vals["DPA-FMM"]["T"] > vals["DP-FMM"]["T"]
        assert vals["DPA-FMM"]["R"] < len(load_scenario(path).goals)


class TestSweep:
    def test_single_trial_aggregate_equals_trial(self, tmp_path):
        (tmp_path / "exp.json").write_text(json.dumps({
            "map_size": [26, 26], "obstacle_density": 0.4, "goal_counts": [3],
            "trials": 1, "seed_base": 2, "radio": {"p_tx": -12.0},
        }))
        assert main(["sweep", str(tmp_path / "exp.json"), "--out", str(tmp_path / "sw")]) == EXIT_OK
        trials = (tmp_path / "sw" / "trials.csv").read_text().splitlines()
        agg = (tmp_path / "sw" / "aggregate.csv").read_text().splitlines()
        assert len(trials) == 5  # header + 4 modes
        assert len(agg) >= 2
        t_dpa = [line for line in trials if ",DPA-FMM," in line][0].split(",")
        a_dpa = [line for line in agg if ",DPA-FMM," in line][0].split(",")
        assert t_dpa[-7:] == a_dpa[-7:]

    def test_unknown_experiment_key_exit_2(self, tmp_path):
        (tmp_path / "exp.json").write_text(json.dumps({"surprise": 1}))
        assert main(["sweep", str(tmp_path / "exp.json"), "--out", str(tmp_path / "sw")]) == EXIT_SCHEMA

    def test_dpa_uses_fewer_robots_on_average(self, tmp_path):
        (tmp_path / "exp.json").write_text(json.dumps({
            "map_size": [30, 30], "obstacle_density": 0.5, "goal_counts": [5],
            "trials": 2, "seed_base": 9, "radio": {"p_tx": -12.0},
        }))
        assert main(["sweep", str(tmp_path / "exp.json"), "--out", str(tmp_path / "sw")]) == EXIT_OK
        agg = (tmp_path / "sw" / "aggregate.csv").read_text().splitlines()
        dpa = [line for line in agg if ",DPA-FMM," in line]
        assert dpa, "DPA aggregate row missing"
        mean_r = float(dpa[0].split(",")[-1])
        assert mean_r < 5.0


class TestRender:
    def test_render_deterministic(self, tmp_path):
        path = write_fig2_files(tmp_path)
        main(["render", str(path), "--out", str(tmp_path / "a.svg")])
        main(["render", str(path), "--out", str(tmp_path / "b.svg")])
        a = (tmp_path / "a.svg").read_bytes()
        assert a == (tmp_path / "b.svg").read_bytes()
        assert a.startswith(b"<svg")

    def test_plan_render_marks_relays(self, tmp_path):
        path = write_fig2_files(tmp_path)
        sc = load_scenario(path)
        from relaynet.mission import plan_deployment

        plan = plan_deployment(sc, "DP-FMM")
        svg = render_svg(sc, plan)
        assert "stroke-dasharray" in svg  # relay moves drawn dashed
        assert svg.count("<circle") >= 6


class TestGenerator:
    def test_map_is_bordered_and_parsable(self):
        rng = np.random.default_rng(4)
        m = generate_map(24, 20, 0.5, rng)
        assert m.materials[0].all() and m.materials[-1].all()
        from relaynet.gridmap import parse_map

        assert parse_map(m.serialize()) == m

    def test_random_scenario_valid_and_seeded(self):
        a = random_scenario(123, 28, 28, 5, 0.5, RadioParams(p_tx=-12.0, seed=123))
        b = random_scenario(123, 28, 28, 5, 0.5, RadioParams(p_tx=-12.0, seed=123))
        assert a.goals == b.goals
        assert a.bs == b.bs
        a.validate()
        sep = min(math.hypot(p[0] - q[0], p[1] - q[1])
                  for i, p in enumerate(a.goals) for q in a.goals[i + 1:])
        assert sep >= 2 * a.map.resolution - 1e-9


class TestOverrides:
    def test_wc_and_margin_flags(self, tmp_path, monkeypatch):
        path = write_fig2_files(tmp_path)
        captured = {}
        real = cli.plan_deployment

        def spy(sc, mode, **kw):
            captured["w_c"] = sc.w_c
            captured["margin_k"] = sc.radio.margin_k
            return real(sc, mode, **kw)

        monkeypatch.setattr(cli, "plan_deployment", spy)
        main(["plan", str(path), "--mode", "fmm", "--w-c", "2.5",
              "--margin-k", "1.0", "--out", str(tmp_path / "o")])
        assert captured == {"w_c": 2.5, "margin_k": 1.0}
