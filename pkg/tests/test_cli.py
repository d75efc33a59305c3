"""Command-line surface: exit codes, pipelines, and byte-identity."""

import json

import pytest

from gaitforge import catalog
from gaitforge.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_synth_writes_canonical_gait(capsys, gait_t2_05):
    rc, out, _ = run(capsys, "synth", "--tl", "0.5", "--cost", "torque2")
    assert rc == 0
    assert out == catalog.canonical_json(gait_t2_05.to_dict()) + "\n"


def test_synth_to_file_matches_stdout(capsys, tmp_path, gait_t2_05):
    path = tmp_path / "gait.json"
    rc, out, _ = run(capsys, "synth", "--tl", "0.5", "--cost", "torque2",
                     "-o", str(path))
    assert rc == 0
    assert out == ""
    assert path.read_text() == catalog.canonical_json(gait_t2_05.to_dict()) + "\n"


def test_synth_failure_exits_1_with_report(capsys):
    rc, out, err = run(capsys, "synth", "--tl", "2.5", "--cost", "torque2")
    assert rc == 1
    assert out == ""
    report = json.loads(err.splitlines()[-1])
    assert report["failed_check"] == "kinematic_reach"


def test_unknown_cost_is_usage_error(capsys):
    rc, _, err = run(capsys, "synth", "--tl", "0.5", "--cost", "swirl")
    assert rc == 2
    assert "usage" in err


def test_missing_required_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--cost", "torque2"])
    assert info.value.code == 2


def test_sweep_export_pipeline(capsys, tmp_path, gait_t2_05):
    cat_path = tmp_path / "cat.json"
    rc, _, err = run(
        capsys, "sweep", "--tl-min", "0.5", "--tl-max", "0.5", "--tl-step", "0.1",
        "--costs", "torque2", "-o", str(cat_path),
    )
    assert rc == 0
    assert "1/1 verified" in err
    swept = catalog.load(cat_path)
    assert len(swept.entries) == 1

    # frames export: the animation must land the swing foot on the target
    rc, out, _ = run(capsys, "export", "--from", str(cat_path),
                     "--key", "0.5,torque2")
    assert rc == 0
    payload = json.loads(out)
    last = payload["frames"][-1]
    assert abs(last["swing"][2] - 0.5) <= 1e-6
    assert abs(last["swing"][3]) <= 1e-6

    # gait export is byte-identical to synth output for the same spec
    rc, out, _ = run(capsys, "export", "--from", str(cat_path),
                     "--key", "0.5,torque2", "--format", "gait")
    assert rc == 0
    assert out == catalog.canonical_json(gait_t2_05.to_dict()) + "\n"

    rc, out, _ = run(capsys, "export", "--from", str(cat_path),
                     "--key", "0.5,torque2", "--format", "csv")
    assert rc == 0
    assert out.splitlines()[0].startswith("t,stance_hip_x")

    rc, _, err = run(capsys, "export", "--from", str(cat_path),
                     "--key", "0.9,torque2")
    assert rc == 1
    assert "missing" in err

    rc, _, err = run(capsys, "export", "--from", str(cat_path), "--key", "nonsense")
    assert rc == 2
    assert "--key" in err


def test_simulate_multi_step_csv(capsys, tmp_path, gait_t2_05):
    gait_path = tmp_path / "gait.json"
    gait_path.write_text(catalog.canonical_json(gait_t2_05.to_dict()) + "\n")
    rc, out, _ = run(capsys, "simulate", "--gait", str(gait_path), "--steps", "2")
    assert rc == 0
    lines = out.splitlines()
    assert lines[0] == "t,q_st,q_sw,qd_st,qd_sw,u,F_T,F_N"
    times = [float(line.split(",")[0]) for line in lines[1:]]
    # one merged timeline: step two continues where step one impacted
    assert times[0] == 0.0
    assert all(b >= a for a, b in zip(times, times[1:]))
    assert times[-1] > gait_t2_05.t_f * 1.5


def test_simulate_accepts_solve_response_wrapper(capsys, tmp_path, gait_t2_05):
    gait_path = tmp_path / "wrapped.json"
    gait_path.write_text(json.dumps({"gait": gait_t2_05.to_dict()}))
    rc, out, _ = run(capsys, "simulate", "--gait", str(gait_path))
    assert rc == 0
    assert out.splitlines()[0].startswith("t,")


def test_simulate_reports_rollout_failure(capsys, tmp_path, gait_t2_05):
    raw = gait_t2_05.to_dict()
    raw["inputs"] = [25.0] * len(raw["inputs"])  # saturated torque topples it
    gait_path = tmp_path / "doctored.json"
    gait_path.write_text(json.dumps(raw))
    rc, out, err = run(capsys, "simulate", "--gait", str(gait_path), "--steps", "2")
    assert rc == 1
    report = json.loads(err.splitlines()[-1])
    assert report["status"] == "rollout_failed"
    assert report["step_index"] == 0


def test_simulate_missing_file_exits_1(capsys, tmp_path):
    rc, _, err = run(capsys, "simulate", "--gait", str(tmp_path / "absent.json"))
    assert rc == 1
    assert "absent.json" in err
