import json
import math

import numpy as np
import pytest

from twmlab.cli import main
from twmlab.config import ConfigError, ExperimentConfig, apply_override, eval_number, load_text, parse_list
from twmlab.io import read_csv, write_csv


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_netr_command(capsys):
    code, out = _run(capsys, "netr", "6", "6")
    assert code == 0
    report = json.loads(out.out)
    assert report["F3"] == pytest.approx(5 / 6, abs=1e-12)
    assert report["F1"] == report["F2"] == pytest.approx(1.25, abs=1e-12)
    assert report["ratio_form"]["F3"] == pytest.approx(report["F3"], abs=1e-12)
    assert report["Omega_bar"] == pytest.approx(6 * math.sqrt(1.5))


def test_netr_command_writes_file_and_orders_modes(tmp_path, capsys):
    code, _ = _run(capsys, "netr", "4", "6", "--out", str(tmp_path))
    assert code == 0
    report = json.loads((tmp_path / "netr.json").read_text())
    assert report["F2"] > report["F1"]
    assert report["ratio_form"]["F2"] == pytest.approx(report["F2"], abs=1e-12)
    assert _run(capsys, "netr", "0", "1")[0] == 2


def test_usage_errors_exit_2(tmp_path, capsys):
    code, out = _run(capsys, "quantum", "--preset", "fig3", "--set", "time.count=0", "--out", str(tmp_path))
    assert code == 2
    assert "empty time grid" in out.err
    assert _run(capsys, "quantum", "--preset", "nope")[0] == 2
    assert _run(capsys, "quantum", "--set", "time.count")[0] == 2
    assert _run(capsys, "bogus")[0] == 2


def test_config_errors_name_line_and_field(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[model]\nkind = nondegenerate\n\n[initial]\nr1 = 6\nr2 = -4\n")
    code, out = _run(capsys, "classical", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 2
    assert f"{cfg}:6: [initial] r2" in out.err
    cfg.write_text("[initial]\nradius = 3\n")
    code, out = _run(capsys, "classical", "--config", str(cfg))
    assert code == 2 and "unknown key 'radius'" in out.err
    code, out = _run(capsys, "classical", "--config", str(tmp_path / "missing.ini"))
    assert code == 2 and "cannot read" in out.err


def test_config_parsing_helpers():
    assert eval_number("6/sqrt(2)") == pytest.approx(6 / math.sqrt(2))
    assert eval_number("-2*pi") == pytest.approx(-2 * math.pi)
    with pytest.raises(ValueError):
        eval_number("__import__('os')")
    with pytest.raises(ValueError):
        eval_number("1/0")
    assert parse_list("2:10:2") == (2, 4, 6, 8, 10)
    assert parse_list("0, 0.1, 1") == (0, 0.1, 1)
    assert parse_list("") == ()
    with pytest.raises(ValueError):
        parse_list("1:2")


def test_overrides_and_special_values():
    cfg = ExperimentConfig()
    load_text(cfg, "[initial]\nr1 = 6\nr2 = 4\nr3 = netr\n[time]\nstop = auto\ncount = 11\n", "t")
    apply_override(cfg, "model.g=2")
    assert cfg.moduli()[2] == pytest.approx(6 * 4 / math.hypot(6, 4))
    assert cfg.time_grid()[-1] == pytest.approx(40 / (2 * 6))
    with pytest.raises(ConfigError):
        apply_override(cfg, "model.kind=other")
    with pytest.raises(ConfigError):
        apply_override(cfg, "nosection=1")
    deg = ExperimentConfig()
    load_text(deg, "[model]\nkind = degenerate\n[initial]\nr1 = 6\nr3 = netr\n", "d")
    assert deg.amplitudes() == (6, 3)


def test_classical_tanh2_preset(tmp_path, capsys):
    code, _ = _run(capsys, "classical", "--preset", "tanh2", "--out", str(tmp_path))
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["max_abs_error_n3"] < 1e-8
    assert manifest["invariant_drift"] < 1e-8
    cols = read_csv(tmp_path / "trajectory.csv")
    assert list(cols)[:2] == ["gt", "re_alpha1"]
    assert cols["gt"].size == 501


def test_classical_netr_preset(tmp_path, capsys):
    code, _ = _run(capsys, "classical", "--preset", "netr_classical", "--out", str(tmp_path))
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["max_modulus_drift"] < 1e-8
    assert "invariant_drift" in manifest


def test_quantum_fig4a_dips_and_plateaus(tmp_path, capsys):
    code, _ = _run(capsys, "quantum", "--preset", "fig4a", "--set", "time.count=201", "--out", str(tmp_path))
    assert code == 0
    cols = read_csv(tmp_path / "series.csv")
    late = cols["fano3"][150:]
    assert late.max() < 1 and np.ptp(late) < 0.05
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["truncation_weight"] <= 1e-10
    assert max(manifest["conservation_drift"].values()) < 1e-9


def test_quantum_fig3_super_poissonian(tmp_path, capsys):
    code, _ = _run(capsys, "quantum", "--preset", "fig3", "--set", "time.count=101", "--out", str(tmp_path))
    assert code == 0
    cols = read_csv(tmp_path / "series.csv")
    for k in (1, 2, 3):
        assert cols[f"fano{k}"][-20:].min() > 1


def test_quantum_snapshots_json(tmp_path, capsys):
    code, _ = _run(capsys, "quantum", "--set", "initial.r1=1", "--set", "initial.r2=1", "--set", "time.count=3",
                   "--set", "quantum.snapshots=0.5", "--set", "quantum.q_points=21",
                   "--format", "json", "--out", str(tmp_path))
    assert code == 0
    q = json.loads((tmp_path / "q_t0p5_mode3.json").read_text())
    assert len(q["Q"]) == 21 * 21
    series = json.loads((tmp_path / "series.json").read_text())
    assert len(series["gt"]) == 3


def test_ensemble_is_byte_identical(tmp_path, capsys):
    args = ["ensemble", "--set", "initial.r1=6", "--set", "initial.r2=4", "--set", "initial.r3=netr",
            "--set", "time.stop=2", "--set", "time.count=21", "--set", "ensemble.n_traj=600",
            "--set", "ensemble.snapshots=0, 1", "--seed", "5"]
    assert _run(capsys, *args, "--out", str(tmp_path / "a"))[0] == 0
    assert _run(capsys, *args, "--workers", "2", "--out", str(tmp_path / "b"))[0] == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"stats.csv", "cloud_t0.csv", "cloud_t1.csv", "summary.json", "manifest.json"} <= set(names)
    for name in names:
        if name != "manifest.json":
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert "netr_prediction" in summary and "plateau" in summary
    cloud = read_csv(tmp_path / "a" / "cloud_t1.csv")
    assert cloud["mode"].size == 3 * 600


def test_sweep_writes_fits(tmp_path, capsys):
    code, _ = _run(capsys, "sweep", "--set", "sweep.amplitudes=2:5:1", "--set", "sweep.regime=netr",
                   "--set", "sweep.points=151", "--out", str(tmp_path))
    assert code == 0
    fits = json.loads((tmp_path / "fits.json").read_text())
    assert set(fits["vs_r"]) >= {"power_law", "inverse_polynomial", "power_law_residual_flag"}
    assert fits["vs_n3"]["inverse_polynomial"]["n_points"] == 4
    minima = read_csv(tmp_path / "minima.csv")
    assert np.all(minima["f_min"] < 1) and np.all(minima["n3_at_min"] > 0)


def test_csv_round_trip_is_lossless(tmp_path):
    x = np.random.default_rng(0).normal(size=50) * 10.0 ** np.arange(-25, 25)
    write_csv(tmp_path / "x.csv", {"x": x, "y": np.full(50, math.pi)})
    back = read_csv(tmp_path / "x.csv")
    np.testing.assert_array_equal(back["x"], x)
    assert back["y"][0] == math.pi
