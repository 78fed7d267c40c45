import json

import pytest

from core.exceptions import ConfigError
from main import _overrides, build_parser, load_config, main
from models.results import SpikeRun
from services.diagnostics import convergence_table
from utils.file_utils import FileUtils


def _read(path):
    return json.loads(path.read_text())


def test_truncation_check_writes_report_and_manifest(tmp_path):
    assert main(["truncation-check", "--out", str(tmp_path), "--samples", "2000"]) == 0
    report = _read(tmp_path / "truncation_check.json")
    assert report["passes"]
    manifest = _read(tmp_path / "manifest.json")
    assert "truncation_check.json" in manifest["files"]
    assert len(manifest["config_sha256"]) == 64
    assert manifest["command"].startswith("truncation-check")


def test_slope_above_bound_is_rejected(tmp_path):
    assert main(["truncation-check", "--out", str(tmp_path), "--a", "0.5"]) == 1


def test_missing_config_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    assert main(["ground-state", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 1


def test_potential_check_fails_for_constant_potential(tmp_path):
    config = tmp_path / "constant.json"
    config.write_text(json.dumps({"potential": {"kind": "constant", "E_basis": [[1.0, 0.0]]}}))
    out = tmp_path / "out"
    assert main(["potential-check", "--config", str(config), "--out", str(out)]) == 1
    report = _read(out / "potential_check.json")
    assert report["radius_selection"]["accepted"] is None
    assert (out / "manifest.json").exists()


def test_potential_check_passes_for_saddle(tmp_path):
    assert main(["potential-check", "--out", str(tmp_path)]) == 0
    report = _read(tmp_path / "potential_check.json")
    assert report["classification"]["case"] == "V2"


def test_ground_state_outputs(tmp_path):
    assert main(["ground-state", "--out", str(tmp_path)]) == 0
    report = _read(tmp_path / "ground_state.json")
    assert report["pohozaev_residual"] < 1e-6
    assert report["grad_equals_l2_gap"] < 1e-5
    assert (tmp_path / "profile.csv").exists()
    assert (tmp_path / "mp_curve.csv").exists()


def test_mcurve_range(tmp_path):
    assert main(["mcurve", "--mcurve", "0.5:2:4", "--out", str(tmp_path)]) == 0
    report = _read(tmp_path / "mcurve.json")
    assert len(report["rows"]) == 4
    assert report["strictly_increasing"]


def test_bad_mcurve_range(tmp_path):
    assert main(["mcurve", "--mcurve", "0.5:2", "--out", str(tmp_path)]) == 1


def test_degree_command_on_coarse_grid(tmp_path):
    assert main(["degree", "--eps", "0.2", "--n", "65", "--out", str(tmp_path)]) == 0
    report = _read(tmp_path / "degree.json")
    assert report["all_one"]
    assert (tmp_path / "degree_trace.csv").exists()


@pytest.mark.parametrize("command", [["ground-state"], ["degree", "--eps", "0.2", "--n", "65"]])
def test_reruns_are_bit_identical(tmp_path, command):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(command + ["--out", str(first)]) == 0
    assert main(command + ["--out", str(second)]) == 0
    # the manifest carries a timestamp, everything else must match byte for byte
    names = sorted(p.name for p in first.iterdir() if p.name != "manifest.json")
    assert names
    assert names == sorted(p.name for p in second.iterdir() if p.name != "manifest.json")
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_report_reads_sweep_table(tmp_path):
    runs = [
        SpikeRun(
            eps=eps,
            status="ok",
            energy_lower=1.0 + eps ** 2,
            energy_upper=1.0 + 2.0 * eps,
            m=1.0,
            lambda_norm=eps,
            barycenter_norm=1e-12,
            delta_gap=0.05,
            degree=1,
            eps_y_norm=eps,
            h1_distance=eps,
            max_outside=1e-3,
            untruncation_passes=True,
        )
        for eps in (0.2, 0.1, 0.05)
    ]
    runs.append(SpikeRun(eps=0.4, status="saddle_divergence", detail="stalled"))
    sweep_dir = tmp_path / "sweep"
    FileUtils.ensure_dir(sweep_dir)
    FileUtils.write_csv(sweep_dir / "sweep.csv", convergence_table(runs))

    out = tmp_path / "report"
    assert main(["report", "--sweep-dir", str(sweep_dir), "--out", str(out)]) == 0
    summary = _read(out / "report.json")
    assert summary["rows"] == 4
    assert summary["ok_rows"] == 3
    assert summary["degrees"] == [1, 1, 1]
    assert summary["lambda_fit"]["exponent"] == pytest.approx(1.0, rel=1e-6)
    assert (out / "report.csv").exists()


def test_report_without_sweep_fails(tmp_path):
    assert main(["report", "--sweep-dir", str(tmp_path / "nothing"), "--out", str(tmp_path / "out")]) == 1


def test_eps_list_override():
    args = build_parser().parse_args(["sweep", "--eps-list", "0.2, 0.1"])
    assert _overrides(args) == {"sweep": {"eps_list": [0.2, 0.1]}}


@pytest.mark.slow
def test_spike_command_writes_outcome_and_field(tmp_path):
    assert main(["spike", "--eps", "0.2", "--n", "161", "--out", str(tmp_path)]) == 0
    report = _read(tmp_path / "spike_0.2.json")
    assert report["row"]["status"] == "ok"
    assert report["bracket"]["lower"] <= report["bracket"]["upper"] + 1e-6
    field = FileUtils.load_field(tmp_path / "u_eps_0.2.f64")
    assert field.n == 161
    assert (tmp_path / "u_eps_0.2_slice.csv").exists()


@pytest.mark.slow
def test_sweep_command_table_feeds_report(tmp_path):
    sweep_dir = tmp_path / "sweep"
    args = ["sweep", "--eps-list", "0.2,0.15", "--n", "161", "--workers", "1", "--out", str(sweep_dir)]
    assert main(args) == 0
    assert (sweep_dir / "sweep.csv").exists()
    assert main(["report", "--sweep-dir", str(sweep_dir), "--out", str(tmp_path / "report")]) == 0
    assert _read(tmp_path / "report" / "report.json")["ok_rows"] == 2
