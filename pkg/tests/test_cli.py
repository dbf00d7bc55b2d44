import json
from dataclasses import replace
from pathlib import Path

import pytest

from barrelmesh.cli import (
    EXPERIMENT_PRESETS,
    ExperimentPlan,
    PlanError,
    main,
    materialize,
    parse_length,
    parse_plan,
    relay_budget,
    run_matrix,
    write_outputs,
)
from barrelmesh.relay_selection import load_assignment_csv
from barrelmesh.topology import LayoutSpec, Segment, feet


def tiny_plan(**kw):
    """Four barrels, two seeds, short runs; fast enough for every test here."""
    layout = LayoutSpec(
        segments=(Segment("row", 270.0, 90.0),), sink_standoff_m=10.0
    )
    base = dict(
        layout=layout,
        rates_pps=(1.0,),
        n_seeds=2,
        base_seed=7,
        sim_time_s=2.0,
    )
    base.update(kw)
    return ExperimentPlan(**base)


def write_ini(tmp_path, text):
    path = tmp_path / "plan.ini"
    path.write_text(text)
    return path


class TestParseLength:
    def test_feet_suffix(self):
        assert parse_length("30ft") == pytest.approx(feet(30.0))

    def test_meter_suffix(self):
        assert parse_length("9.1m") == pytest.approx(9.1)

    def test_bare_number_is_meters(self):
        assert parse_length(" 100 ") == pytest.approx(100.0)

    def test_garbage_rejected(self):
        with pytest.raises(PlanError):
            parse_length("fast")


class TestParsePlan:
    def test_defaults_match_shipped_preset(self, tmp_path):
        plan = parse_plan(write_ini(tmp_path, "[layout]\npreset = fdot_45mph\n"))
        assert plan == EXPERIMENT_PRESETS["paper"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(PlanError):
            parse_plan(tmp_path / "nope.ini")

    def test_unknown_section_named_in_error(self, tmp_path):
        path = write_ini(tmp_path, "[radio]\nx = 1\n")
        with pytest.raises(PlanError, match=r"\[radio\]"):
            parse_plan(path)

    def test_unknown_key_named_in_error(self, tmp_path):
        path = write_ini(tmp_path, "[scenario]\nspeed = 9\n")
        with pytest.raises(PlanError, match="scenario.speed"):
            parse_plan(path)

    def test_preset_and_segments_conflict(self, tmp_path):
        path = write_ini(
            tmp_path,
            "[layout]\npreset = fdot_45mph\nsegments = row:100:50\n",
        )
        with pytest.raises(PlanError, match="not both"):
            parse_plan(path)

    def test_unknown_layout_preset(self, tmp_path):
        path = write_ini(tmp_path, "[layout]\npreset = interstate\n")
        with pytest.raises(PlanError, match="interstate"):
            parse_plan(path)

    def test_segments_accept_mixed_units(self, tmp_path):
        path = write_ini(
            tmp_path, "[layout]\nsegments = taper:540ft:30ft, work:100m:25m\n"
        )
        segments = parse_plan(path).layout.segments
        assert [s.name for s in segments] == ["taper", "work"]
        assert segments[0].length_m == pytest.approx(feet(540.0))
        assert segments[0].spacing_m == pytest.approx(feet(30.0))
        assert segments[1].length_m == pytest.approx(100.0)
        assert segments[1].spacing_m == pytest.approx(25.0)

    def test_malformed_segment_rejected(self, tmp_path):
        path = write_ini(tmp_path, "[layout]\nsegments = taper:540ft\n")
        with pytest.raises(PlanError, match="name:length:spacing"):
            parse_plan(path)

    def test_sink_placement_and_offsets(self, tmp_path):
        path = write_ini(
            tmp_path,
            "[layout]\npreset = fdot_45mph\nsink_placement = 50ft\n"
            "sink_standoff = 5m\nlateral_offset = 2\n",
        )
        layout = parse_plan(path).layout
        assert layout.sink_placement == pytest.approx(feet(50.0))
        assert layout.sink_standoff_m == pytest.approx(5.0)
        assert layout.lateral_offset_m == pytest.approx(2.0)

    def test_unknown_algorithm_rejected(self, tmp_path):
        path = write_ini(tmp_path, "[scenario]\nalgorithms = crns,best\n")
        with pytest.raises(PlanError, match="best"):
            parse_plan(path)

    def test_scenario_channel_power_plan_sections(self, tmp_path):
        path = write_ini(
            tmp_path,
            "[scenario]\nalgorithms = crns\nrates = 2,8\nseeds = 3\n"
            "base_seed = 55\nsim_time_s = 5\nttl = 9\nrange = 60m\n"
            "all_relays_range = 90\ntx_power_dbm = 4\n"
            "[channel]\nn_adv_channels = 2\nframe_duration_us = 700\n"
            "adv_jitter_ms = 5.5\nreception_model = independent_loss\nloss_p = 0.25\n"
            "[power]\ni_tx_ma = 11\ni_listen_ma = 5\ni_sleep_ma = 0.01\n"
            "[plan]\nmode = fixed\nfixed_count = 2\nrelay_budget = 4\n",
        )
        plan = parse_plan(path)
        assert plan.algorithms == ("crns",)
        assert plan.rates_pps == (2.0, 8.0)
        assert (plan.n_seeds, plan.base_seed) == (3, 55)
        assert (plan.sim_time_s, plan.ttl) == (5.0, 9)
        assert (plan.range_r_m, plan.all_relays_range_m) == (60.0, 90.0)
        assert plan.tx_power_dbm == 4.0
        assert plan.channel.n_adv_channels == 2
        assert plan.channel.frame_duration_us == 700
        assert plan.channel.adv_jitter_ms == 5.5
        assert plan.channel.reception_model == "independent_loss"
        assert plan.channel.loss_p == 0.25
        assert (plan.power.i_tx_ma, plan.power.i_listen_ma) == (11.0, 5.0)
        assert plan.power.i_sleep_ma == 0.01
        assert plan.repeat_policy.mode == "fixed"
        assert plan.repeat_policy.fixed_count == 2
        assert plan.relay_budget == 4

    def test_bad_int_reported_as_plan_error(self, tmp_path):
        path = write_ini(tmp_path, "[scenario]\nttl = many\n")
        with pytest.raises(PlanError, match="bad value"):
            parse_plan(path)


class TestBudgetAndMaterialize:
    def test_budget_follows_ranked_selection(self):
        assert relay_budget(EXPERIMENT_PRESETS["paper"]) == 18

    def test_explicit_budget_wins(self):
        plan = replace(EXPERIMENT_PRESETS["paper"], relay_budget=5)
        assert relay_budget(plan) == 5

    def test_all_runs_at_its_own_range(self):
        plan = EXPERIMENT_PRESETS["paper"]
        topo_all, _ = materialize(plan, "all", seed=0)
        topo_crns, _ = materialize(plan, "crns", seed=0)
        assert topo_all.range_r == plan.all_relays_range_m
        assert topo_crns.range_r == plan.range_r_m

    def test_sampled_strategies_sized_to_budget(self):
        plan = EXPERIMENT_PRESETS["paper"]
        _, rnd = materialize(plan, "random", seed=3)
        _, knn = materialize(plan, "knn", seed=3)
        assert len(rnd.relays) == 18
        assert 1 <= len(knn.relays) <= 18  # duplicate heads may collapse

    def test_unknown_algorithm(self):
        with pytest.raises(PlanError):
            materialize(EXPERIMENT_PRESETS["paper"], "flood", seed=0)


class TestRunMatrix:
    def test_results_ordered_and_complete(self):
        plan = tiny_plan(algorithms=("knn", "crns"), rates_pps=(4.0, 1.0))
        results = run_matrix(plan)
        keys = [(a, r, s) for a, r, s, _ in results]
        assert keys == [
            ("knn", 1.0, 7), ("knn", 1.0, 8),
            ("knn", 4.0, 7), ("knn", 4.0, 8),
            ("crns", 1.0, 7), ("crns", 1.0, 8),
            ("crns", 4.0, 7), ("crns", 4.0, 8),
        ]

    def test_rerun_is_identical(self):
        plan = tiny_plan(algorithms=("crns", "random"))
        assert run_matrix(plan) == run_matrix(plan)

    def test_worker_pool_matches_serial(self):
        plan = tiny_plan(algorithms=("crns", "all"))
        assert run_matrix(plan, workers=2) == run_matrix(plan, workers=1)


@pytest.fixture(scope="module")
def matrix():
    plan = tiny_plan(algorithms=("crns", "all"))
    return plan, run_matrix(plan, emit_events=True)


class TestWriteOutputs:

    def test_output_tree(self, matrix, tmp_path):
        plan, results = matrix
        write_outputs(plan, results, tmp_path, 1.0, workers=1)
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "comparison.csv").exists()
        assert (tmp_path / "metadata.json").exists()
        for name in ("pdr_density", "relay_load_hist", "power_vs_pdr"):
            assert (tmp_path / "plotdata" / f"{name}.csv").exists()
        run_files = sorted(p.name for p in (tmp_path / "runs").iterdir())
        assert "crns_1_7.csv" in run_files
        assert "crns_1_7_events.csv" in run_files
        assert len(run_files) == 2 * len(results)

    def test_reruns_byte_identical_outside_metadata(self, matrix, tmp_path):
        plan, results = matrix
        a, b = tmp_path / "a", tmp_path / "b"
        write_outputs(plan, results, a, 1.0, workers=1)
        write_outputs(plan, results, b, 2.0, workers=1)
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            if rel.name == "metadata.json":
                continue
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_comparison_change_formula(self, matrix, tmp_path):
        plan, results = matrix
        write_outputs(plan, results, tmp_path, 1.0, workers=1)
        rows = (tmp_path / "comparison.csv").read_text().splitlines()
        table = {line.split(",")[0]: line.split(",") for line in rows[1:]}
        crns_pdr = float(table["crns"][2])
        all_pdr = float(table["all"][2])
        expected = f"{100.0 * (crns_pdr - all_pdr) / all_pdr:+.1f}"
        assert table["crns"][3] == expected
        assert table["all"][3] == "+0.0"

    def test_metadata_fields(self, matrix, tmp_path):
        plan, results = matrix
        write_outputs(plan, results, tmp_path, 1.5, workers=3)
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert meta["runs"] == len(results)
        assert meta["workers"] == 3
        assert meta["seeds"] == [7, 8]
        assert "created_utc" in meta


class TestVerbs:
    def test_presets_lists_both_kinds(self, capsys):
        assert main(["presets"]) == 0
        out = capsys.readouterr().out
        assert "fdot_45mph" in out
        assert "paper" in out

    def test_select_reports_relay_set(self, capsys, tmp_path):
        out_csv = tmp_path / "assign.csv"
        assert main(["select", "--algorithm", "crns", "--out", str(out_csv)]) == 0
        out = capsys.readouterr().out
        assert "18 relays of 30 barrels" in out
        positions, sink, assignment = load_assignment_csv(out_csv)
        assert sink == 30
        assert assignment.relays == tuple(range(7, 25))

    def test_select_random_honors_count(self, capsys):
        assert main(["select", "--algorithm", "random", "--count", "5",
                     "--seed", "11"]) == 0
        assert "5 relays of 30 barrels" in capsys.readouterr().out

    def test_validate_accepts_good_assignment(self, capsys, tmp_path):
        out_csv = tmp_path / "assign.csv"
        main(["select", "--out", str(out_csv)])
        capsys.readouterr()
        assert main(["validate", "--assignment", str(out_csv)]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_validate_flags_bad_assignment(self, capsys, tmp_path):
        out_csv = tmp_path / "assign.csv"
        main(["select", "--algorithm", "random", "--count", "0",
              "--out", str(out_csv)])
        capsys.readouterr()
        assert main(["validate", "--assignment", str(out_csv)]) == 1
        assert "isolated" in capsys.readouterr().out

    def test_run_with_config(self, capsys, tmp_path):
        ini = write_ini(
            tmp_path,
            "[layout]\nsegments = row:270:90\n"
            "[scenario]\nalgorithms = crns,all\nrates = 1\nseeds = 1\n"
            "sim_time_s = 2\n",
        )
        out_dir = tmp_path / "results"
        assert main(["run", "--config", str(ini), "--out", str(out_dir)]) == 0
        assert "2 runs" in capsys.readouterr().out
        assert (out_dir / "summary.csv").exists()

    def test_run_seed_override_changes_run_names(self, tmp_path):
        ini = write_ini(
            tmp_path,
            "[layout]\nsegments = row:270:90\n"
            "[scenario]\nalgorithms = crns\nrates = 1\nseeds = 1\nsim_time_s = 2\n",
        )
        out_dir = tmp_path / "results"
        main(["run", "--config", str(ini), "--seed", "42", "--out", str(out_dir)])
        assert (out_dir / "runs" / "crns_1_42.csv").exists()

    def test_bad_config_exits_2(self, capsys, tmp_path):
        ini = write_ini(tmp_path, "[radio]\nx = 1\n")
        assert main(["run", "--config", str(ini)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_experiment_preset_exits_2(self, capsys):
        assert main(["run", "--preset", "bogus"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_unknown_layout_preset_in_select(self, capsys):
        assert main(["select", "--preset", "bogus"]) == 2
        assert "bogus" in capsys.readouterr().err
