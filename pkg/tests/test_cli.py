import csv
import json
from pathlib import Path

import numpy as np
import pytest

from wrenchsim.cli import main, stack_runs, sweep
from wrenchsim.errors import ScenarioError
from wrenchsim.scenario_io import load_scenario, load_wrench_stream, parse_scenario, report_dict
from wrenchsim.sim import CSV_COLUMNS, reference_scenario, run_simulation

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
DATA = Path(__file__).parent / "data"
REFERENCE_TEXT = (SCENARIOS / "reference.yaml").read_text()


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _scenario_file(tmp_path, text):
    p = tmp_path / "s.yaml"
    p.write_text(text)
    return str(p)


# scenario files

def test_reference_file_matches_builtin_fixture():
    scn, layers = load_scenario(SCENARIOS / "reference.yaml")
    ref = reference_scenario()
    assert layers is None
    assert scn.payload.mass == ref.payload.mass
    assert np.array_equal(scn.payload.com_offset, ref.payload.com_offset)
    assert np.allclose(scn.payload.inertia, ref.payload.inertia, atol=1e-12)
    assert len(scn.plan.waypoints) == len(ref.plan.waypoints)
    for a, b in zip(scn.plan.waypoints, ref.plan.waypoints):
        assert np.array_equal(a.position, b.position)
        assert (a.tolerance, a.dwell, a.action) == (b.tolerance, b.dwell, b.action)
    a, _ = run_simulation(scn, compute_ideal=False)
    b, _ = run_simulation(ref, compute_ideal=False)
    assert np.array_equal(a.placement.actual_tcp, b.placement.actual_tcp)


@pytest.mark.parametrize("name", ["reference", "replay", "parallel", "stack", "noisy"])
def test_shipped_scenarios_parse(name):
    load_scenario(SCENARIOS / f"{name}.yaml")


def test_negative_mass_names_field():
    with pytest.raises(ScenarioError) as info:
        parse_scenario(REFERENCE_TEXT.replace("mass_kg: 1.0", "mass_kg: -1.0"))
    assert "payload.mass_kg" in str(info.value)
    assert info.value.line is not None


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError, match="colour"):
        parse_scenario(REFERENCE_TEXT + "colour: blue\n")


def test_nested_unknown_key_rejected():
    with pytest.raises(ScenarioError, match="sensor"):
        parse_scenario(REFERENCE_TEXT.replace("sigma_f_N: 0.0", "sigma_f_N: 0.0\n  sigma_x: 1.0"))


def test_wrong_shape_rejected():
    with pytest.raises(ScenarioError, match="com_offset_m"):
        parse_scenario(REFERENCE_TEXT.replace("com_offset_m: [0.085, 0.0, 0.0]", "com_offset_m: [0.085, 0.0]"))


def test_malformed_yaml_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario("payload: [unclosed\n")


# run

def test_run_writes_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(SCENARIOS / "reference.yaml"), "--out", str(out), "--quiet"]) == 0
    assert {p.name for p in out.iterdir()} == {"trajectory.csv", "report.json", "summary.txt"}
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "completed"
    assert report["offset_estimate"]["r_hat_raw_mm"][0] == pytest.approx(85.0, abs=1e-6)


def test_golden_trajectory_header(tmp_path):
    out = tmp_path / "out"
    main(["run", str(SCENARIOS / "reference.yaml"), "--out", str(out), "--quiet"])
    header = (out / "trajectory.csv").read_text().split("\n", 1)[0] + "\n"
    assert header == (DATA / "trajectory_header.csv").read_text()
    assert header.rstrip("\n").split(",") == CSV_COLUMNS


def test_report_mm_equals_meters_times_thousand():
    report, _ = run_simulation(reference_scenario(), compute_ideal=True)
    d = report_dict(report)
    pl = report.placement
    assert d["placement"]["commanded_tcp_mm"] == [v * 1000.0 for v in pl.commanded_tcp]
    assert d["placement"]["actual_tcp_mm"] == [v * 1000.0 for v in pl.actual_tcp]
    assert d["metrics"]["execution_error_mm"] == pl.execution_error * 1000.0
    assert d["metrics"]["tcp_rmse_x_mm"] == report.tcp_rmse_x * 1000.0
    assert d["offset_estimate"]["r_hat_raw_mm"] == [v * 1000.0 for v in report.offset_estimate.r_hat_raw]


def test_replay_reports_commanded_tcp(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(SCENARIOS / "replay.yaml"), "--out", str(out), "--quiet"]) == 0
    pl = json.loads((out / "report.json").read_text())["placement"]
    assert pl["commanded_tcp_mm"][:2] == pytest.approx([-217.16, 298.34], abs=1e-9)
    assert pl["ideal_corrected_tcp_mm"][:2] == pytest.approx([-215.0, 300.0], abs=1e-9)


def test_negative_mass_exit_one(tmp_path, capsys):
    path = _scenario_file(tmp_path, REFERENCE_TEXT.replace("mass_kg: 1.0", "mass_kg: -1.0"))
    assert main(["run", path, "--out", str(tmp_path / "o")]) == 1
    assert "payload.mass_kg" in capsys.readouterr().err


def test_missing_file_exit_one(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 1


def test_parallel_exit_two(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(SCENARIOS / "parallel.yaml"), "--out", str(out)]) == 2
    assert "NotIdentifiable" in capsys.readouterr().err
    report = json.loads((out / "report.json").read_text())
    assert report == {"status": "aborted", "reason": "NotIdentifiable", "detail": report["detail"]}
    assert (out / "trajectory.csv").exists()


@pytest.mark.parametrize("argv", [[], ["fly"], ["run"], ["run", "x.yaml"], ["--help"],
                                  ["sweep", "x.yaml", "--param", "mass", "--values", "1", "--out", "o"]])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == (0 if argv == ["--help"] else 1)


def test_bad_dt_override(tmp_path):
    assert main(["run", str(SCENARIOS / "reference.yaml"), "--out", str(tmp_path), "--dt", "0"]) == 1


def test_seed_override_changes_noisy_run(tmp_path):
    outs = []
    for seed in ("1", "2"):
        out = tmp_path / seed
        main(["run", str(SCENARIOS / "noisy.yaml"), "--out", str(out), "--quiet", "--seed-override", seed])
        outs.append(json.loads((out / "report.json").read_text())["offset_estimate"]["r_hat_raw_mm"])
    assert outs[0] != outs[1]


def test_wrench_replay_round_trip(tmp_path):
    out = tmp_path / "first"
    main(["run", str(SCENARIOS / "noisy.yaml"), "--out", str(out), "--quiet"])
    stream = load_wrench_stream(out / "trajectory.csv")
    assert stream.shape[1] == 6
    text = (SCENARIOS / "noisy.yaml").read_text() + f"replay:\n  wrench_csv: {out / 'trajectory.csv'}\n"
    path = _scenario_file(tmp_path, text)
    out2 = tmp_path / "second"
    assert main(["run", path, "--out", str(out2), "--quiet"]) == 0
    a = json.loads((out / "report.json").read_text())
    b = json.loads((out2 / "report.json").read_text())
    # replayed readings are rounded to 9 significant digits
    assert b["offset_estimate"]["r_hat_raw_mm"] == pytest.approx(a["offset_estimate"]["r_hat_raw_mm"], abs=1e-4)
    assert b["placement"]["commanded_tcp_mm"] == pytest.approx(a["placement"]["commanded_tcp_mm"], abs=1e-4)


# sweep

def test_sweep_empty_values(tmp_path):
    argv = ["sweep", str(SCENARIOS / "reference.yaml"), "--param", "sensor.sigma_tau", "--values",
            "--out", str(tmp_path)]
    assert main(argv) == 1


def test_sweep_single_value_matches_run():
    scn = reference_scenario()
    rows = sweep(scn, "sensor.sigma_tau", [0.0], 1)
    report, _ = run_simulation(scn, compute_ideal=False)
    assert len(rows) == 1 and rows[0]["aborted"] == 0
    assert rows[0]["offset_rmse_x_mm_mean"] == report.offset_rmse_x * 1000.0
    err = abs(report.placement.object_com_final_x - scn.plan.support_x) * 1000.0
    assert rows[0]["placement_error_mm_mean"] == err
    assert rows[0]["offset_rmse_x_mm_std"] == 0.0


def test_sweep_cli_writes_table(tmp_path, monkeypatch):
    monkeypatch.setenv("WRENCHSIM_THREADS", "1")
    argv = ["sweep", str(SCENARIOS / "noisy.yaml"), "--param", "sensor.sigma_tau",
            "--values", "0", "0.01", "--trials", "2", "--out", str(tmp_path), "--quiet"]
    assert main(argv) == 0
    rows = _csv(tmp_path / "sweep.csv")
    assert [r["value"] for r in rows] == ["0", "0.01"]
    assert list(rows[0]) == ["parameter", "value", "trials", "aborted", "offset_rmse_x_mm_mean",
                             "offset_rmse_x_mm_std", "placement_error_mm_mean", "placement_error_mm_std"]


def test_sweep_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("WRENCHSIM_THREADS", "many")
    argv = ["sweep", str(SCENARIOS / "reference.yaml"), "--param", "tracking_lag",
            "--values", "0", "--trials", "1", "--out", str(tmp_path)]
    assert main(argv) == 1


def test_sweep_process_pool_matches_serial():
    scn = reference_scenario()
    serial = sweep(scn, "tracking_lag", [0.0, 0.02], 1, workers=1)
    pooled = sweep(scn, "tracking_lag", [0.0, 0.02], 1, workers=2)
    assert serial == pooled


# stack

def test_stack_three_layers(tmp_path):
    out = tmp_path / "out"
    assert main(["stack", str(SCENARIOS / "stack.yaml"), "--layers", "3", "--out", str(out), "--quiet"]) == 0
    rows = _csv(out / "stack.csv")
    assert [r["object"] for r in rows] == ["1", "2", "3"]
    for r, truth in zip(rows, (-57.0, 0.0, -85.0)):
        assert float(r["actual_com_x_mm"]) == pytest.approx(truth, abs=1e-9)
        assert float(r["estimated_com_x_mm"]) == pytest.approx(truth, abs=1e-6)
        assert float(r["implemented_com_x_mm"]) == pytest.approx(truth, abs=1e-6)
        assert r["stable"] == "True"
    report = json.loads((out / "report.json").read_text())
    assert report["stable_layers"] == 3
    z = [layer["placement"]["commanded_tcp_mm"][2] for layer in report["layers"]]
    assert np.allclose(np.diff(z), 40.0)


def test_stack_single_layer(tmp_path):
    out = tmp_path / "out"
    assert main(["stack", str(SCENARIOS / "stack.yaml"), "--layers", "1", "--out", str(out), "--quiet"]) == 0
    assert len(_csv(out / "stack.csv")) == 1


def test_stack_halts_on_unidentifiable_layer(tmp_path):
    out = tmp_path / "out"
    assert main(["stack", str(SCENARIOS / "parallel.yaml"), "--layers", "2", "--out", str(out), "--quiet"]) == 2
    rows = _csv(out / "stack.csv")
    assert len(rows) == 1 and rows[0]["status"] == "aborted:NotIdentifiable"


def test_stack_needs_enough_layer_payloads():
    scn, layers = load_scenario(SCENARIOS / "stack.yaml")
    with pytest.raises(ScenarioError):
        stack_runs(scn, layers, 4)


@pytest.mark.parametrize("n", ["0", "-1"])
def test_stack_rejects_nonpositive_layers(tmp_path, n):
    assert main(["stack", str(SCENARIOS / "stack.yaml"), "--layers", n, "--out", str(tmp_path)]) == 1


# plotdata

@pytest.fixture(scope="module")
def trajectory(tmp_path_factory):
    out = tmp_path_factory.mktemp("traj")
    main(["run", str(SCENARIOS / "reference.yaml"), "--out", str(out), "--quiet"])
    return out / "trajectory.csv"


def test_plotdata_interleaves(trajectory, tmp_path):
    dest = tmp_path / "p.csv"
    assert main(["plotdata", str(trajectory), "--signals", "r_hat_x_raw", "r_hat_x_filtered",
                 "--out", str(dest)]) == 0
    rows = _csv(dest)
    n = len(_csv(trajectory))
    assert len(rows) == 2 * n
    assert [r["signal"] for r in rows[:4]] == ["r_hat_x_raw", "r_hat_x_filtered"] * 2
    assert rows[0]["time"] == rows[1]["time"]


def test_plotdata_unknown_signal(trajectory, tmp_path, capsys):
    assert main(["plotdata", str(trajectory), "--signals", "bogus", "--out", str(tmp_path / "p.csv")]) == 1
    assert "r_hat_x_raw" in capsys.readouterr().err


@pytest.mark.parametrize("content", ["", ",".join(CSV_COLUMNS) + "\n"])
def test_plotdata_empty_log(tmp_path, content):
    src = tmp_path / "empty.csv"
    src.write_text(content)
    assert main(["plotdata", str(src), "--signals", "m_hat", "--out", str(tmp_path / "p.csv")]) == 1
