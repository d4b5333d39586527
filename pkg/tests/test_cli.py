import copy
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pulseforge import config as C
from pulseforge.cli import main
from pulseforge.errors import ConfigError
from pulseforge.waveform import TimeGrid, Waveform, read_csv, write_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load(name):
    return json.loads((CONFIGS / name).read_text())


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def run(*argv):
    return main([str(a) for a in argv])


def summary(d):
    return json.loads((Path(d) / "summary.json").read_text())


# -- config -------------------------------------------------------------------------

def test_shipped_configs_validate():
    for p in sorted(CONFIGS.glob("*.json")):
        C.load_config(p)


def test_schema_rejects_unknown_and_bad_values():
    base = load("preshape_1us.json")
    for mutate in (lambda d: d.update(extra=1),
                   lambda d: d["amplifier"].update(e_sat=1.0),
                   lambda d: d["amplifier"].update(e_sat_j=-1.0),
                   lambda d: d.update(version=2),
                   lambda d: d["preshape"].pop("window")):
        doc = copy.deepcopy(base)
        mutate(doc)
        with pytest.raises(ConfigError):
            C.parse_config(json.dumps(doc).encode())
    with pytest.raises(ConfigError):
        C.parse_config(b"{not json")


def test_config_hash_tracks_bytes():
    raw = (CONFIGS / "preshape_1us.json").read_bytes()
    a = C.parse_config(raw)
    assert a.sha256 == C.parse_config(raw).sha256
    assert a.sha256 != C.parse_config(raw + b" ").sha256


def test_amplifier_section_variants():
    sc = C.parse_config(json.dumps({"version": 1, "amplifier": {"g0": 3.0, "e_sat_j": 1e-6}}).encode())
    assert C.amplifier_params(sc).g0 == 3.0
    for amp in ({"e_sat_j": 1e-6}, {"g0": 3.0, "pump_w": 1.0, "pump_alpha_per_w": 1.0, "e_sat_j": 1e-6},
                {"pump_w": 1.0, "e_sat_j": 1e-6}):
        sc = C.parse_config(json.dumps({"version": 1, "amplifier": amp}).encode())
        with pytest.raises(ConfigError):
            C.amplifier_params(sc)


def test_hz_fields_convert_to_rad_per_s():
    sc = C.load_config(CONFIGS / "rabi_pulsed.json")
    cfg = C.excitation_config(sc)
    assert cfg.omega_ref == pytest.approx(2 * math.pi * 1.35e6)
    assert cfg.delta_int == pytest.approx(2 * math.pi * 1.69e9)


# -- amplify --------------------------------------------------------------------------

def test_amplify_transparent_is_identity(tmp_path):
    g = TimeGrid.spanning(0, 2e-6, 201)
    inp = tmp_path / "in.csv"
    write_csv(inp, Waveform.square(g, 0.4e-6, 1e-6, 2.0))
    cfg = write(tmp_path, {"version": 1, "amplifier": {"g0": 1.0, "e_sat_j": 1e-6}})
    assert run("amplify", "--config", cfg, "--out-dir", tmp_path / "o", inp) == 0
    assert (tmp_path / "o" / "output.csv").read_bytes() == inp.read_bytes()
    s = summary(tmp_path / "o")
    assert s["command"] == "amplify" and set(s["files"]) == {"output.csv", "summary.json"}


def test_amplify_distorts_square(tmp_path):
    out = tmp_path / "o"
    assert run("amplify", "--config", CONFIGS / "amplify_square.json", "--out-dir", out) == 0
    w = read_csv(out / "output.csv")
    on = w.samples > 0
    assert np.all(np.diff(w.samples[on]) < 0)
    m = summary(out)["metrics"]
    assert m["output_energy_j"] == pytest.approx(m["output_energy_closed_form_j"], rel=1e-5)


def test_amplify_missing_input(tmp_path, capsys):
    cfg = write(tmp_path, {"version": 1, "amplifier": {"g0": 2.0, "e_sat_j": 1e-6}})
    missing = tmp_path / "nope.csv"
    assert run("amplify", "--config", cfg, "--out-dir", tmp_path / "o", missing) == 3
    err = capsys.readouterr().err.strip()
    assert str(missing) in err and len(err.splitlines()) == 1


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, {"version": 1, "amplifier": {"g0": 2.0, "e_sat_j": 1e-6, "x": 1}})
    assert run("amplify", "--config", cfg) == 2
    assert "config" in capsys.readouterr().err
    assert run("amplify", "--config", tmp_path / "missing.json") == 2


def test_malformed_csv_exit_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,1\n1e-9,x\n")
    cfg = write(tmp_path, {"version": 1, "amplifier": {"g0": 2.0, "e_sat_j": 1e-6}})
    assert run("amplify", "--config", cfg, "--out-dir", tmp_path / "o", bad) == 3


# -- preshape --------------------------------------------------------------------------

def test_preshape_reaches_one_percent(tmp_path):
    out = tmp_path / "o"
    assert run("preshape", "--config", CONFIGS / "preshape_1us.json", "--out-dir", out) == 0
    s = summary(out)
    assert s["metrics"]["best_rms"] <= 0.01 and s["metrics"]["iterations"] <= 50
    for f in s["files"]:
        assert (out / f).exists()
    rep = json.loads((out / "loop_report.json").read_text())
    assert rep["best_rms"] == s["metrics"]["best_rms"]
    for name in ("analytic.csv", "preshaped.csv", "achieved.csv"):
        read_csv(out / name)


def test_preshape_zero_tolerance_exit_4(tmp_path):
    doc = load("preshape_1us.json")
    doc["preshape"].update(tol=0.0, max_iter=15, dump_iterations=True)
    out = tmp_path / "o"
    assert run("preshape", "--config", write(tmp_path, doc), "--out-dir", out) == 4
    s = summary(out)
    assert s["status"] == "tolerance_not_reached"
    assert all((out / f).exists() for f in s["files"])
    assert (out / "iterations" / "drive_0015.csv").exists()


def test_preshape_target_csv(tmp_path):
    g = TimeGrid.spanning(0, 2e-6, 2001)
    target = tmp_path / "target.csv"
    write_csv(target, Waveform.square(g, 0.4e-6, 1e-6, 10.0))
    doc = load("preshape_1us.json")
    del doc["preshape"]["target"]
    out = tmp_path / "o"
    assert run("preshape", "--config", write(tmp_path, doc), "--out-dir", out, target) == 0
    # target given by file equals the synthesized one, so the run is identical
    ref = tmp_path / "ref"
    run("preshape", "--config", CONFIGS / "preshape_1us.json", "--out-dir", ref)
    assert (out / "achieved.csv").read_bytes() == (ref / "achieved.csv").read_bytes()


def test_preshape_window_outside_grid_exit_3(tmp_path):
    doc = load("preshape_1us.json")
    doc["preshape"]["window"] = {"start_s": 1e-6, "end_s": 5e-6}
    assert run("preshape", "--config", write(tmp_path, doc), "--out-dir", tmp_path / "o") == 3


# -- dynamics ---------------------------------------------------------------------------

def test_rabi_noiseless_contrast(tmp_path):
    out = tmp_path / "o"
    assert run("rabi", "--config", CONFIGS / "rabi_noiseless.json", "--out-dir", out) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["contrast"] >= 0.999
    assert fit["frequency_hz"] == pytest.approx(1.35e6, rel=1e-6)
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header == "x_s,p0_mean,p0_stderr"


def test_fit_degenerate_exit_5(tmp_path):
    doc = load("rabi_noiseless.json")
    doc["dynamics"]["omega_ref_hz"] = 1.0  # far too slow to oscillate within the scan
    out = tmp_path / "o"
    assert run("rabi", "--config", write(tmp_path, doc), "--out-dir", out) == 5
    assert (out / "trace.csv").exists()
    assert summary(out)["status"] == "fit_degenerate"


def test_seed_override_and_env_out_dir(tmp_path, monkeypatch):
    doc = load("rabi_pulsed.json")
    doc["dynamics"]["scan"]["points"] = 41
    cfg = write(tmp_path, doc)
    monkeypatch.setenv("PULSEFORGE_OUT_DIR", str(tmp_path / "env"))
    assert run("rabi", "--config", cfg) == 0
    assert (tmp_path / "env" / "trace.csv").exists()
    assert run("rabi", "--config", cfg, "--out-dir", tmp_path / "s9", "--seed", 9) == 0
    assert summary(tmp_path / "s9")["seed"] == 9
    assert (tmp_path / "s9" / "trace.csv").read_bytes() != (tmp_path / "env" / "trace.csv").read_bytes()


def test_sequence_plan(tmp_path):
    out = tmp_path / "o"
    assert run("sequence", "--config", CONFIGS / "sequence_burst.json", "--out-dir", out) == 0
    plan = json.loads((out / "plan.json").read_text())
    assert plan["margin_left_s"] == plan["margin_right_s"]
    assert plan["ir_pulse"]["start_s"] == pytest.approx(500e-6)
    doc = load("sequence_burst.json")
    doc["sequence"]["ttl"] = {"start_s": 0.0, "end_s": 1.2e-3}
    assert run("sequence", "--config", write(tmp_path, doc), "--out-dir", tmp_path / "b") == 3


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "o"
    assert run("preshape", "--config", CONFIGS / "preshape_1us.json", "--out-dir", out, "--dry-run") == 0
    plan = json.loads(capsys.readouterr().out)
    assert "achieved.csv" in plan["files"] and not out.exists()
    doc = load("rabi_pulsed.json")
    doc["dynamics"]["scan"]["stop_s"] = 0.0
    assert run("rabi", "--config", write(tmp_path, doc), "--dry-run") == 2


def test_schema_command(capsys):
    assert run("schema") == 0
    assert json.loads(capsys.readouterr().out)["additionalProperties"] is False


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pulseforge", "sequence", "--config",
                        str(CONFIGS / "sequence_burst.json"), "--out-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
