import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from propriosim.cli import main, run_batch, write_metrics, write_trajectory
from propriosim.episode import TRAJECTORY_COLUMNS
from propriosim.scenario import (
    ParseError,
    ValidationError,
    build_scenario,
    build_world,
    builtin_scenario_path,
    list_builtin_scenarios,
    load_scenario,
    parse_scenario_text,
    scenario_to_text,
)


class TestParser:
    def test_basic_values(self):
        values = parse_scenario_text(
            """
            # comment
            a.b = 1.5
            a.c = [1, 2.5, -3]   # trailing comment
            a.d = inf
            a.e = revolute
            a.f = true
            a.g = 7
            """
        )
        assert values["a.b"] == 1.5
        assert values["a.c"] == [1.0, 2.5, -3.0]
        assert values["a.d"] == float("inf")
        assert values["a.e"] == "revolute"
        assert values["a.f"] is True
        assert values["a.g"] == 7

    def test_missing_equals_is_parse_error(self):
        with pytest.raises(ParseError) as e:
            parse_scenario_text("x = 1\njunk line\n")
        assert e.value.line == 2

    def test_bad_value_is_parse_error(self):
        with pytest.raises(ParseError) as e:
            parse_scenario_text("x = 1..2\n")
        assert e.value.line == 1

    def test_unterminated_list(self):
        with pytest.raises(ParseError):
            parse_scenario_text("x = [1, 2\n")


class TestValidation:
    def base(self, **overrides):
        values = parse_scenario_text(builtin_scenario_path("drawer").read_text())
        values.update(overrides)
        return values

    def test_negative_stiffness_names_key(self):
        with pytest.raises(ValidationError) as e:
            build_scenario(self.base(**{"controller.k_trans": [-5.0, 50.0, 200.0]}))
        assert e.value.key == "controller.k_trans"
        assert "must be > 0" in str(e.value)

    def test_unknown_key(self):
        with pytest.raises(ValidationError) as e:
            build_scenario(self.base(**{"object.joint.color": "red"}))
        assert e.value.key == "object.joint.color"

    def test_bad_joint_type(self):
        with pytest.raises(ValidationError):
            build_scenario(self.base(**{"object.joint.type": "spherical"}))

    def test_limits_out_of_order(self):
        with pytest.raises(ValidationError) as e:
            build_scenario(self.base(**{"object.joint.limits": [0.4, 0.1]}))
        assert e.value.key == "object.joint.limits"

    def test_target_outside_limits(self):
        with pytest.raises(ValidationError) as e:
            build_scenario(self.base(**{"runner.target_q": 0.5}))
        assert e.value.key == "runner.target_q"

    def test_dt_range(self):
        with pytest.raises(ValidationError):
            build_scenario(self.base(**{"runner.dt": 0.2}))


class TestShippedScenarios:
    def test_corpus_present(self):
        assert set(list_builtin_scenarios()) >= {"drawer", "door", "door_latch", "door_slip"}

    def test_drawer_round_values(self):
        sc = load_scenario(builtin_scenario_path("drawer"))
        assert sc.joint.joint_type == "prismatic"
        assert sc.joint.q_limits == (0.0, 0.3)
        assert sc.replicates == 50

    def test_door_degrees_converted(self):
        sc = load_scenario(builtin_scenario_path("door"))
        assert sc.joint.q_limits == pytest.approx((0.0, np.pi / 2))
        assert sc.runner.target_q == pytest.approx(np.radians(85.0))
        assert sc.runner.step_dq == pytest.approx(np.radians(1.2))
        np.testing.assert_allclose(np.linalg.norm(sc.joint.twist.angular), 1.0)

    def test_all_builtins_validate(self):
        for name in list_builtin_scenarios():
            sc = load_scenario(builtin_scenario_path(name))
            assert sc.replicates >= 1

    def test_round_trip(self):
        for name in list_builtin_scenarios():
            sc = load_scenario(builtin_scenario_path(name))
            sc2 = build_scenario(parse_scenario_text(scenario_to_text(sc)))
            assert sc.values == sc2.values
            assert sc.joint.q_limits == sc2.joint.q_limits
            assert sc.runner == sc2.runner
            np.testing.assert_array_equal(sc.controller.stiffness, sc2.controller.stiffness)
            np.testing.assert_array_equal(
                sc.joint.twist.as_array(), sc2.joint.twist.as_array()
            )


class TestBuildWorld:
    def test_gripper_starts_at_handle(self):
        sc = load_scenario(builtin_scenario_path("door"))
        w = build_world(sc)
        np.testing.assert_allclose(
            w.gripper_pose.matrix(), w.handle_pose().matrix(), atol=1e-12
        )
        np.testing.assert_array_equal(w.grasp.grasp_transform.matrix(), np.eye(4))

    def test_worlds_are_independent(self):
        sc = load_scenario(builtin_scenario_path("drawer"))
        w1, w2 = build_world(sc), build_world(sc)
        w1.grasp.accumulated_slip_angle = 1.0
        w1.q = 0.2
        assert w2.grasp.accumulated_slip_angle == 0.0
        assert w2.q == 0.0
        assert sc.grasp.accumulated_slip_angle == 0.0


def small_drawer(tmp_path, **overrides) -> Path:
    values = parse_scenario_text(builtin_scenario_path("drawer").read_text())
    values.update({"replicates": 2, "runner.max_steps": 8, "runner.target_q": 0.05})
    values.update(overrides)
    text = "\n".join(f"{k} = {v if not isinstance(v, list) else '[' + ', '.join(map(str, v)) + ']'}"
                     for k, v in values.items())
    p = tmp_path / "small.scenario"
    p.write_text(text + "\n")
    return p


class TestBatch:
    def test_single_replicate_aggregate_equals_episode(self, tmp_path):
        sc = load_scenario(small_drawer(tmp_path, replicates=1))
        report = run_batch(sc)
        agg = report.aggregates()
        e = report.episodes[0]
        assert agg["success_rate"] == float(e.success)
        assert agg["median_steps"] == e.steps
        assert agg["median_axis_direction_error"] == e.axis_direction_error

    def test_seed_base_determinism(self, tmp_path):
        sc = load_scenario(small_drawer(tmp_path))
        j1 = json.dumps(run_batch(sc).to_json_dict())
        j2 = json.dumps(run_batch(sc).to_json_dict())
        assert j1 == j2

    def test_workers_do_not_change_results(self, tmp_path):
        sc = load_scenario(small_drawer(tmp_path, replicates=4))
        j1 = json.dumps(run_batch(sc, workers=1).to_json_dict())
        j2 = json.dumps(run_batch(sc, workers=4).to_json_dict())
        assert j1 == j2

    def test_metrics_schema(self, tmp_path):
        sc = load_scenario(small_drawer(tmp_path))
        report = run_batch(sc)
        doc = report.to_json_dict()
        assert set(doc) == {"scenario", "replicates", "seed_base", "aggregates", "episodes"}
        assert set(doc["aggregates"]) == {
            "success_rate",
            "median_axis_direction_error",
            "median_axis_position_error",
            "median_steps",
            "median_sim_time",
        }
        episode_fields = {
            "seed",
            "success",
            "final_q_fraction",
            "steps",
            "sim_time",
            "estimates",
            "axis_direction_error",
            "axis_position_error",
            "peak_force",
            "accumulated_slip_angle",
            "failure_reason",
        }
        for row in doc["episodes"]:
            assert set(row) == episode_fields
        json.dumps(doc)  # must be serializable as-is

    def test_trajectory_row_count(self, tmp_path):
        sc = load_scenario(small_drawer(tmp_path, replicates=1))
        report = run_batch(sc, record_trajectories=True)
        e = report.episodes[0]
        assert len(e.trajectory) == e.steps + 1
        out = tmp_path / "traj.csv"
        write_trajectory(e.trajectory, out)
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
        assert len(lines) == e.steps + 2

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        sc = load_scenario(small_drawer(tmp_path, replicates=1))
        report = run_batch(sc)
        write_metrics(report, tmp_path / "m" / "metrics.json")
        files = [p.name for p in (tmp_path / "m").iterdir()]
        assert files == ["metrics.json"]
        json.loads((tmp_path / "m" / "metrics.json").read_text())


class TestCli:
    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "propriosim.cli", *args],
            capture_output=True,
            text=True,
        )

    def test_validate_builtin(self):
        proc = self.run_cli("validate", "drawer")
        assert proc.returncode == 0
        assert "OK" in proc.stdout

    def test_validate_missing_file(self):
        proc = self.run_cli("validate", "no_such_scenario")
        assert proc.returncode == 2

    def test_validate_bad_value(self, tmp_path):
        p = small_drawer(tmp_path, **{"controller.k_trans": [-5.0, 50.0, 200.0]})
        proc = self.run_cli("validate", str(p))
        assert proc.returncode == 2
        assert "controller.k_trans" in proc.stderr
        assert "must be > 0" in proc.stderr

    def test_run_writes_metrics_and_trajectories(self, tmp_path):
        p = small_drawer(tmp_path, replicates=2)
        out = tmp_path / "out"
        proc = self.run_cli("run", str(p), "--out", str(out), "--traj")
        assert proc.returncode == 0, proc.stderr
        doc = json.loads((out / "metrics.json").read_text())
        assert doc["replicates"] == 2
        assert (out / "trajectory_000.csv").exists()
        assert (out / "trajectory_001.csv").exists()

    def test_run_out_path_collision_is_runtime_error(self, tmp_path):
        p = small_drawer(tmp_path)
        blocker = tmp_path / "blocked"
        blocker.write_text("file, not a dir")
        proc = self.run_cli("run", str(p), "--out", str(blocker / "x"))
        assert proc.returncode == 3

    def test_sweep(self, tmp_path):
        p = small_drawer(tmp_path, replicates=1)
        out = tmp_path / "sweep_out"
        proc = self.run_cli(
            "sweep", str(p), "--param", "runner.force_limit",
            "--values", "5", "50", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        doc = json.loads((out / "sweep.json").read_text())
        assert doc["param"] == "runner.force_limit"
        assert [pt["value"] for pt in doc["points"]] == [5, 50]

    def test_sweep_bad_param(self, tmp_path):
        p = small_drawer(tmp_path)
        proc = self.run_cli("sweep", str(p), "--param", "no.such.key", "--values", "1")
        assert proc.returncode == 2
