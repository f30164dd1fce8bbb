import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from follower import cli, vision
from follower.kinematics import Pose
from follower.world import render_frame

SUBCOMMANDS = ["gen-data", "train", "simulate", "detect", "step-response", "envs", "repro"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_envs_lists_three(capsys):
    code, out, _ = run(capsys, "envs")
    envs = json.loads(out)
    assert code == 0 and [e["name"] for e in envs] == ["env1", "env2", "env3"]
    assert all(2.0 <= e["target_path_m"] <= 2.5 for e in envs)


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_on_every_subcommand(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([cmd, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    action_flags = [a.option_strings for a in cli.build_parser()._subparsers._group_actions[0]
                    .choices[cmd]._actions]
    for flags in action_flags:
        for f in flags:
            assert f in out


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["envs", "--bogus"])
    assert exc.value.code == 1
    assert "unrecognized" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1


def test_missing_file_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data", str(tmp_path / "nope.csv"),
                       "--out", str(tmp_path / "m.json"), "--seed", "1")
    assert code == 1 and "not found" in err
    code, _, err = run(capsys, "detect", "--image", str(tmp_path / "nope.ppm"))
    assert code == 1


def test_corrupt_model_is_runtime_failure(capsys, tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text('{"format": "something-else"}')
    code, _, err = run(capsys, "simulate", "--env", "env1", "--model", str(bad),
                       "--seed", "1", "--trace", str(tmp_path / "t.csv"))
    assert code == 2 and err


def test_detect_without_target(capsys, tmp_path):
    frame = np.zeros((240, 320, 3), dtype=np.uint8)
    frame[:] = (20, 60, 200)
    vision.write_ppm(tmp_path / "in.ppm", frame)
    code, out, _ = run(capsys, "detect", "--image", str(tmp_path / "in.ppm"),
                       "--out", str(tmp_path / "out.ppm"))
    assert code == 0 and json.loads(out) == {"detected": False}
    assert (tmp_path / "out.ppm.txt").read_text().strip() == "none"


def test_detect_with_target(capsys, tmp_path):
    vision.write_ppm(tmp_path / "in.ppm", render_frame(Pose(), (1.0, 0.2)))
    code, out, _ = run(capsys, "detect", "--image", str(tmp_path / "in.ppm"),
                       "--out", str(tmp_path / "out.ppm"))
    d = json.loads(out)
    assert code == 0 and d["detected"] and d["proximity"] == "far"
    assert int((tmp_path / "out.ppm.txt").read_text()) == d["x_angle"]
    annotated = vision.read_ppm(tmp_path / "out.ppm")
    assert (annotated == vision.GREEN).all(axis=-1).any()


def test_step_response(capsys, tmp_path):
    code, out, _ = run(capsys, "step-response", "--out", str(tmp_path / "r.csv"))
    m = json.loads(out)
    assert code == 0 and m["kp"] == 1.3 and m["overshoot_pct"] == 0.0
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "setpoint", "output", "u"]
    assert len(rows) == 2002


def test_step_response_overrides(capsys):
    code, out, _ = run(capsys, "step-response", "--kp", "2.0", "--tau", "0.3")
    m = json.loads(out)
    assert (m["kp"], m["tau"]) == (2.0, 0.3)
    assert m["rise_time_10_90"] == pytest.approx(0.3 / 2.0 * np.log(9), rel=0.02)
    code, out, _ = run(capsys, "step-response", "--set", "control.kp=2.0")
    assert json.loads(out)["kp"] == 2.0


def test_step_response_rejects_coarse_dt(capsys):
    code, _, _ = run(capsys, "step-response", "--dt", "0.01")
    assert code == 1


def test_config_file_and_bad_keys(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"control.kp": 3.0, "control.tau": 0.2}))
    code, out, _ = run(capsys, "step-response", "--config", str(cfg))
    assert json.loads(out)["kp"] == 3.0 and json.loads(out)["tau"] == 0.2
    code, _, err = run(capsys, "step-response", "--set", "control.kd=1")
    assert code == 1 and "unknown" in err
    code, _, _ = run(capsys, "step-response", "--set", "nosuchsection.x=1")
    assert code == 1
    code, _, _ = run(capsys, "step-response", "--config", str(tmp_path / "missing.json"))
    assert code == 1


def test_override_reaches_nested_dataclasses():
    cfg = cli.RunConfig()
    cfg = cli.apply_override(cfg, "vision.threshold_radius_px", "35")
    cfg = cli.apply_override(cfg, "vision.hsv.h_lo", "40")
    cfg = cli.apply_override(cfg, "sensors.cone_half_angle_deg", "10")
    cfg = cli.apply_override(cfg, "expert.v_max", "0.25")
    cfg = cli.apply_override(cfg, "train.epochs", "12")
    assert cfg.sim.vision.threshold_radius_px == 35.0
    assert cfg.sim.vision.hsv_range.h_lo == 40.0
    assert cfg.sim.sensors.cone_half_angle == pytest.approx(np.radians(10))
    assert cfg.expert.v_max == 0.25 and cfg.epochs == 12


def small_pipeline(capsys, d):
    assert run(capsys, "gen-data", "--rows", "200", "--seed", "9", "--out", str(d / "data.csv"))[0] == 0
    code, out, _ = run(capsys, "train", "--data", str(d / "data.csv"), "--out", str(d / "m.json"),
                       "--seed", "9", "--epochs", "4")
    assert code == 0 and json.loads(out)["epochs"] == 4
    code, out, _ = run(capsys, "simulate", "--env", "env2", "--model", str(d / "m.json"),
                       "--seed", "9", "--trace", str(d / "t.csv"), "--ticks", str(d / "k.csv"))
    assert code == 0
    return json.loads(out)


def test_pipeline_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    sa, sb = small_pipeline(capsys, a), small_pipeline(capsys, b)
    assert sa == sb and sa["outcome"] in ("Completed", "Collision", "Timeout")
    for name in ("data.csv", "m.json", "t.csv", "k.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_simulate_environment_file_and_frames(capsys, tmp_path):
    small_pipeline(capsys, tmp_path)
    from follower.world import static_target_scenario
    static_target_scenario().save(tmp_path / "env.json")
    code, out, _ = run(capsys, "simulate", "--env", str(tmp_path / "env.json"),
                       "--model", str(tmp_path / "m.json"), "--seed", "1",
                       "--trace", str(tmp_path / "s.csv"), "--frames", str(tmp_path / "frames"))
    s = json.loads(out)
    assert code == 0 and s["outcome"] == "Completed"
    assert len(list((tmp_path / "frames").glob("*.ppm"))) == s["planner_ticks"]


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "follower.cli", "envs"], capture_output=True, text=True)
    assert res.returncode == 0 and len(json.loads(res.stdout)) == 3
