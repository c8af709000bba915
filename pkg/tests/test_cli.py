import json
from pathlib import Path

import numpy as np
import pytest

from fraccalderon.cli import main, run, validate_config
from fraccalderon.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def load_config(name):
    return json.loads((CONFIG_DIR / name).read_text())


def small_invert_config():
    cfg = load_config("invert_desk1d.json")
    return cfg


def test_schema_rejects_bad_s():
    cfg = small_invert_config()
    cfg["s"] = 1.5
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_schema_rejects_unknown_keys():
    cfg = small_invert_config()
    cfg["mystery_knob"] = 1
    with pytest.raises(ConfigError):
        validate_config(cfg)
    cfg = small_invert_config()
    cfg["grid"]["shape"] = "weird"
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_invert_pipeline_end_to_end(tmp_path):
    cfg = small_invert_config()
    code, manifest = run(cfg, output_dir=str(tmp_path))
    assert code == 0
    assert (tmp_path / "q_estimate.csv").exists()
    assert (tmp_path / "residuals.csv").exists()
    assert (tmp_path / "manifest.json").exists()
    assert manifest["gates"]["reconstruction_error"]["pass"]


def test_bit_reproducibility(tmp_path):
    cfg = small_invert_config()
    code1, man1 = run(cfg, output_dir=str(tmp_path / "a"))
    code2, man2 = run(cfg, output_dir=str(tmp_path / "b"))
    assert (tmp_path / "a" / "q_estimate.csv").read_bytes() \
        == (tmp_path / "b" / "q_estimate.csv").read_bytes()
    man1.pop("wall_time_s")
    man2.pop("wall_time_s")
    assert man1 == man2


def test_gate_failure_exit_code(tmp_path):
    cfg = small_invert_config()
    cfg["tolerances"]["reconstruction_error"] = 1e-9
    code, manifest = run(cfg, output_dir=str(tmp_path))
    assert code == 1
    assert not manifest["gates"]["reconstruction_error"]["pass"]


def test_main_cli_flow(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(small_invert_config()))
    code = main(["invert", "--config", str(cfg_path),
                 "--output-dir", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "[PASS] reconstruction_error" in out


def test_main_set_override_changes_hash(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(small_invert_config()))
    main(["invert", "--config", str(cfg_path), "--output-dir", str(tmp_path / "a")])
    main(["invert", "--config", str(cfg_path), "--output-dir", str(tmp_path / "b"),
          "--set", "noise.seed=11"])
    man_a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    man_b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man_a["config_hash"] != man_b["config_hash"]


def test_main_invalid_config_exit_2(tmp_path, capsys):
    cfg = small_invert_config()
    cfg["s"] = 2.0
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code = main(["invert", "--config", str(cfg_path),
                 "--output-dir", str(tmp_path / "out")])
    assert code == 2
    assert "CONFIG_INVALID" in capsys.readouterr().err


def test_writes_stay_inside_output_dir(tmp_path, monkeypatch):
    workdir = tmp_path / "cwd"
    workdir.mkdir()
    monkeypatch.chdir(workdir)
    out = tmp_path / "artifacts"
    cfg = small_invert_config()
    run(cfg, output_dir=str(out))
    assert list(workdir.iterdir()) == []
    assert (out / "manifest.json").exists()


def test_spectrum_pipeline(tmp_path):
    cfg = {
        "schema_version": 1,
        "pipeline": "spectrum",
        "grid": load_config("invert_desk1d.json")["grid"],
        "s": 0.5,
        "potential": {"type": "constant", "value": 0.0},
        "seed": 0,
    }
    code, manifest = run(cfg, output_dir=str(tmp_path))
    assert code == 0
    data = np.loadtxt(tmp_path / "spectrum.csv", delimiter=",", skiprows=1)
    assert np.all(np.diff(data[:, 1]) >= 0)


def test_constructive_invert_config(tmp_path):
    cfg = load_config("invert_desk1d_constructive.json")
    code, manifest = run(cfg, output_dir=str(tmp_path))
    assert code == 0
    assert manifest["gates"]["reconstruction_error"]["value"] <= 0.08
    rows = np.loadtxt(tmp_path / "residuals.csv", delimiter=",", skiprows=1, ndmin=2)
    assert rows.shape[1] == 3
