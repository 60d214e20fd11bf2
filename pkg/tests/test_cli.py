import csv
import json

import numpy as np
import pytest
import yaml
from typer.testing import CliRunner

from src.cli import EXIT_CONFIG, EXIT_NUMERICAL, app
from src.lib.design.isolator import optimal_detuning, optimal_loop_phase

from .conftest import make_drives

runner = CliRunner()


def write_config(tmp_path, name="run.yaml", **sections):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(sections, sort_keys=False))
    return path


def read_csv(path):
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture
def effective_sections(effective_device, effective_drives):
    return {
        "device": effective_device.model_dump(mode="json"),
        "drives": effective_drives.model_dump(mode="json"),
        "model": {"kind": "effective"},
    }


def test_spectrum_single_point(tmp_path, effective_sections):
    config = write_config(
        tmp_path,
        **effective_sections,
        sweep={"offsets_hz": [0.0], "phases_deg": [38.0], "ports": [["cavity2", "cavity1"]]},
    )
    out = tmp_path / "spectrum.csv"
    result = runner.invoke(app, ["spectrum", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    rows = read_csv(out)
    assert len(rows) == 1
    assert list(rows[0]) == ["offset_hz", "phase_deg", "port_out", "port_in", "value", "value_db", "flag"]
    assert out.read_text().startswith("# ")


def test_spectrum_operating_point(tmp_path, effective_sections):
    config = write_config(
        tmp_path,
        **effective_sections,
        sweep={"offsets_hz": [0.0], "phases_deg": [38.0, -38.0]},
    )
    out = tmp_path / "spectrum.json"
    result = runner.invoke(app, ["spectrum", "-c", str(config), "-o", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())["rows"]
    db = {(row["phase_deg"], row["port_out"], row["port_in"]): row["value_db"] for row in rows}
    assert db[(38.0, "cavity2", "cavity1")] >= -1.6
    assert db[(38.0, "cavity1", "cavity2")] <= -20.0
    assert db[(-38.0, "cavity1", "cavity2")] >= -1.6
    assert db[(-38.0, "cavity2", "cavity1")] <= -20.0


def test_missing_drives_is_config_error(tmp_path, effective_sections):
    config = write_config(tmp_path, device=effective_sections["device"])
    result = runner.invoke(app, ["spectrum", "-c", str(config)])
    assert result.exit_code == EXIT_CONFIG


def test_unknown_section_is_config_error(tmp_path, effective_sections):
    config = write_config(tmp_path, **effective_sections, plotting={"dpi": 300})
    result = runner.invoke(app, ["sweep", "-c", str(config)])
    assert result.exit_code == EXIT_CONFIG


def test_sweep_grid_and_transposition(tmp_path, effective_sections):
    config = write_config(
        tmp_path,
        **effective_sections,
        sweep={"offsets_hz": [-1000.0, 2000.0], "phases_deg": [50.0, -50.0]},
    )
    out = tmp_path / "sweep.csv"
    result = runner.invoke(app, ["sweep", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    rows = read_csv(out)
    forward = [r for r in rows if (r["port_out"], r["port_in"]) == ("cavity2", "cavity1")]
    backward = [r for r in rows if (r["port_out"], r["port_in"]) == ("cavity1", "cavity2")]
    assert len(forward) == len(backward) == 4
    by_key = {(r["phase_deg"], r["offset_hz"]): r["value"] for r in backward}
    for row in forward:
        mirrored = f"{-float(row['phase_deg']):.10e}"
        assert float(row["value"]) == pytest.approx(float(by_key[(mirrored, row["offset_hz"])]), rel=1e-9)


def test_sweep_output_is_deterministic(tmp_path, effective_sections):
    config = write_config(tmp_path, **effective_sections, sweep={"offsets_hz": [0.0, 500.0], "phases_deg": [10.0]})
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        assert runner.invoke(app, ["sweep", "-c", str(config), "-o", str(out)]).exit_code == 0
    assert first.read_bytes() == second.read_bytes()


def test_design_reports_closed_form_agreement(tmp_path):
    config = write_config(tmp_path, isolator={"C3": 100.0, "C4": 100.0, "gamma3_hz": 1600.0, "gamma4_hz": 7500.0})
    out = tmp_path / "design.json"
    result = runner.invoke(app, ["design", "-c", str(config), "-o", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    forward, reverse = json.loads(out.read_text())["rows"]
    assert forward["branch"] == "forward"
    assert forward["phase_deg"] == pytest.approx(8.11, rel=0.02)
    assert forward["delta_T"] == pytest.approx(forward["closed_form_delta_T"], rel=0.02)
    assert reverse["phase_deg"] == pytest.approx(-forward["phase_deg"])
    assert forward["bandwidth_hz"] == pytest.approx(5274.7, rel=1e-4)


def design_rows(tmp_path, C):
    config = write_config(tmp_path, isolator={"C3": C, "C4": C})
    out = tmp_path / "design.json"
    result = runner.invoke(app, ["design", "-c", str(config), "-o", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    return json.loads(out.read_text())["rows"]


def test_design_unit_cooperativity_closed_form(tmp_path):
    forward, reverse = design_rows(tmp_path, 1.0)
    assert forward["closed_form_phase_deg"] == pytest.approx(90.0)
    assert reverse["closed_form_phase_deg"] == pytest.approx(-90.0)
    assert (forward["closed_form_delta3"], forward["closed_form_delta4"]) == pytest.approx((-0.5, 0.5))
    assert forward["closed_form_delta_T"] == pytest.approx(0.5)
    assert forward["delta_T"] >= forward["closed_form_delta_T"] - 1e-9


def test_design_operating_cooperativity_near_38_degrees(tmp_path):
    forward, reverse = design_rows(tmp_path, 4.72)
    assert forward["closed_form_phase_deg"] == pytest.approx(38.0, abs=0.1)
    assert reverse["closed_form_phase_deg"] == pytest.approx(-38.0, abs=0.1)


def test_spectrum_two_tone_conversion(tmp_path, effective_device):
    drives = make_drives({"11": 10.0, "12": 0.0, "21": 10.0, "22": 0.0})
    config = write_config(
        tmp_path,
        device=effective_device.model_dump(mode="json"),
        drives=drives.model_dump(mode="json"),
        model={"kind": "effective"},
        sweep={"offsets_hz": [0.0], "phases_deg": [0.0]},
    )
    out = tmp_path / "conversion.json"
    result = runner.invoke(app, ["spectrum", "-c", str(config), "-o", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    values = {(row["port_out"], row["port_in"]): row["value"] for row in json.loads(out.read_text())["rows"]}
    expected = 0.99 * 0.98 * 400.0 / 21.0**2
    assert values[("cavity2", "cavity1")] == pytest.approx(expected, rel=1e-6)
    assert values[("cavity1", "cavity2")] == pytest.approx(expected, rel=1e-6)


def test_design_rejects_nonpositive_cooperativity(tmp_path):
    config = write_config(tmp_path, isolator={"C3": 0.0, "C4": 1.0})
    result = runner.invoke(app, ["design", "-c", str(config)])
    assert result.exit_code == EXIT_CONFIG


def test_noise_rows(tmp_path, effective_sections):
    config = write_config(
        tmp_path,
        **effective_sections,
        sweep={"offsets_hz": [-500.0, 0.0, 500.0], "phases_deg": [38.0]},
        noise={"chain": {"cavity1": {"gain": 1e7, "added_noise": 30.0}}},
    )
    out = tmp_path / "noise.csv"
    result = runner.invoke(app, ["noise", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    rows = read_csv(out)
    assert len(rows) == 3 * 2
    assert "power_w_hz" in rows[0]
    assert all(float(row["value"]) >= 0 for row in rows)


def test_noise_isolated_port_carries_mechanical_noise(tmp_path, effective_device):
    C = 1e3
    phase = optimal_loop_phase(C, C)[0]
    delta3, delta4 = optimal_detuning(C, C, phase)[0]
    device = effective_device.model_copy(update={"gamma1": 10.0, "gamma2": 10.0})
    drives = make_drives({"11": C, "12": C, "21": C, "22": C}, (delta3 * 10.0, delta4 * 10.0), np.degrees(phase))
    config = write_config(
        tmp_path,
        device=device.model_dump(mode="json"),
        drives=drives.model_dump(mode="json"),
        model={"kind": "effective"},
        sweep={"offsets_hz": [0.0], "phases_deg": [float(np.degrees(phase))]},
    )
    out = tmp_path / "noise.json"
    result = runner.invoke(app, ["noise", "-c", str(config), "-o", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    quanta = {row["port_out"]: row["value"] for row in json.loads(out.read_text())["rows"]}
    assert quanta["cavity1"] == pytest.approx(6.4, abs=0.2)
    assert quanta["cavity2"] < 0.2


def test_reduce_banner_and_convergence(tmp_path, device, drives):
    config = write_config(
        tmp_path,
        device=device.model_dump(mode="json"),
        drives=drives.model_dump(mode="json"),
        model={"convergence_depths": [1, 2]},
    )
    out = tmp_path / "edges.json"
    result = runner.invoke(app, ["reduce", "-c", str(config), "-o", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    assert "10 modes, 16 couplings" in result.output
    payload = json.loads(out.read_text())
    assert len(payload["rows"]) == 16
    assert [row["depth"] for row in payload["config"]["convergence"]] == [1, 2]
    assert payload["config"]["effective"]["mode_count"] == 10


def test_fit_round_trip(tmp_path, effective_sections):
    sweep_config = write_config(
        tmp_path,
        "sweep.yaml",
        **effective_sections,
        sweep={
            "offset_start_hz": -40e3,
            "offset_stop_hz": 40e3,
            "offset_points": 21,
            "phase_start_deg": -180.0,
            "phase_stop_deg": 180.0,
            "phase_points": 13,
            "ports": [["cavity2", "cavity1"], ["cavity1", "cavity2"], ["cavity1", "cavity1"], ["cavity2", "cavity2"]],
        },
    )
    data = tmp_path / "measured.csv"
    assert runner.invoke(app, ["sweep", "-c", str(sweep_config), "-o", str(data)]).exit_code == 0

    truth = {"11": 5.4, "12": 5.7, "21": 2.9, "22": 2.0}
    free = [{"name": f"drive.{label}.cooperativity", "initial": value * 1.1} for label, value in truth.items()]
    fit_config = write_config(tmp_path, "fit.yaml", **effective_sections, fit={"free": free})
    out = tmp_path / "fit.json"
    result = runner.invoke(
        app, ["fit", "-c", str(fit_config), "--data", str(data), "-o", str(out), "--format", "json", "--seed", "3"]
    )
    assert result.exit_code == 0, result.output
    fitted = {row["parameter"]: row["value"] for row in json.loads(out.read_text())["rows"]}
    for label, value in truth.items():
        assert fitted[f"drive.{label}.cooperativity"] == pytest.approx(value, rel=1e-4)


def test_fit_malformed_data(tmp_path, effective_sections):
    data = tmp_path / "broken.csv"
    data.write_text("offset_hz,phase_deg\n1.0,2.0\n")
    config = write_config(tmp_path, **effective_sections, fit={"free": [{"name": "drive.11.cooperativity"}]})
    result = runner.invoke(app, ["fit", "-c", str(config), "--data", str(data)])
    assert result.exit_code == EXIT_CONFIG


def test_fit_underdetermined_is_numerical_failure(tmp_path, effective_sections):
    data = tmp_path / "one.csv"
    data.write_text(
        "offset_hz,phase_deg,port_out,port_in,value\n0.0,38.0,cavity2,cavity1,0.73\n"
    )
    free = [{"name": f"drive.{label}.cooperativity"} for label in ("11", "12", "21", "22")]
    config = write_config(tmp_path, **effective_sections, fit={"free": free})
    result = runner.invoke(app, ["fit", "-c", str(config), "--data", str(data)])
    assert result.exit_code == EXIT_NUMERICAL
