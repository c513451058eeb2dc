import dataclasses
import json
import math

import numpy as np
import pytest

from magsim.cli import (
    OUT_DIR_ENV,
    _alpha_grid,
    _grid,
    default_config,
    load_config,
    main,
)
from magsim.errors import ConfigError
from magsim.model import PhysicalParams


# ------------------------------------------------------------ configuration

def test_default_config_covers_every_section():
    cfg = default_config()
    for name in ("anticross", "at_scan", "chevron", "fourier", "swap",
                 "prepare", "wigner", "reconstruct"):
        assert name in cfg
    defaults = {f.name: f.default for f in dataclasses.fields(PhysicalParams)}
    assert cfg["params"] == defaults
    assert cfg["seed"] == 0
    assert cfg["output"]["format"] == "both"


def test_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"swaps": {}}))
    with pytest.raises(ConfigError, match="swaps"):
        load_config(str(path))
    path.write_text(json.dumps({"params": {"g_q_mhz": 5.0}}))
    with pytest.raises(ConfigError, match="g_q_mhz"):
        load_config(str(path))
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(str(path))
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(path))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


def test_config_file_merges_partially(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "seed": 7,
        "params": {"t1_magnon_ns": 256.0},
        "swap": {"tau_ns": {"start": 0.0, "stop": 80.0, "num": 81}},
    }))
    cfg = load_config(str(path))
    assert cfg["seed"] == 7
    assert cfg["params"]["t1_magnon_ns"] == 256.0
    assert cfg["params"]["qubit_freq_ghz"] == 5.846  # untouched default
    assert cfg["swap"]["tau_ns"]["stop"] == 80.0


def test_set_overrides():
    cfg = load_config(None, [
        "seed=3",
        "params.t1_magnon_ns=64",
        "chevron.tau_ns.num=11",
        "wigner.target=vacuum",
        "wigner.alpha=[[0.0, 0.0], [0.5, 0.0]]",
    ])
    assert cfg["seed"] == 3
    assert cfg["params"]["t1_magnon_ns"] == 64
    assert cfg["chevron"]["tau_ns"]["num"] == 11
    assert cfg["wigner"]["target"] == "vacuum"  # bare string value
    assert cfg["wigner"]["alpha"] == [[0.0, 0.0], [0.5, 0.0]]
    with pytest.raises(ConfigError):
        load_config(None, ["swap.bogus=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["no_equals_sign"])
    with pytest.raises(ConfigError):
        load_config(None, ["params.t1_magnon_ns.x=1"])  # path through a leaf


def test_flag_values_override_config():
    cfg = load_config(None, ["seed=3"], seed=9, workers=4, fmt="json",
                      out="/tmp/somewhere")
    assert cfg["seed"] == 9
    assert cfg["workers"] == 4
    assert cfg["output"]["format"] == "json"
    assert cfg["output"]["dir"] == "/tmp/somewhere"
    with pytest.raises(ConfigError):
        load_config(None, ['output.format="wide"'])


def test_grid_specs():
    g = _grid({"start": 0.0, "stop": 10.0, "num": 11}, "k")
    assert g.size == 11 and g[1] == 1.0
    assert np.array_equal(_grid([1.0, 3.0, 7.0], "k"), [1.0, 3.0, 7.0])
    with pytest.raises(ConfigError):
        _grid({"start": 0.0, "stop": 1.0}, "k")
    with pytest.raises(ConfigError):
        _grid({"start": 0.0, "stop": 1.0, "num": 5, "step": 1}, "k")
    with pytest.raises(ConfigError):
        _grid({"start": 0.0, "stop": 1.0, "num": 0}, "k")
    with pytest.raises(ConfigError):
        _grid([], "k")
    with pytest.raises(ConfigError):
        _grid("0:1:5", "k")


def test_alpha_grid_specs():
    a = _alpha_grid({"points": 3, "extent": 1.0}, "k")
    assert a.size == 9 and a[0] == -1.0 - 1.0j
    b = _alpha_grid([[0.0, 0.0], [0.5, -0.5]], "k")
    assert np.array_equal(b, [0.0, 0.5 - 0.5j])
    with pytest.raises(ConfigError):
        _alpha_grid({"points": 3}, "k")
    with pytest.raises(ConfigError):
        _alpha_grid([[0.0], [0.5]], "k")
    with pytest.raises(ConfigError):
        _alpha_grid([], "k")


# ------------------------------------------------------------- subcommands

def test_swap_command_artifacts(tmp_path, capsys):
    assert main(["swap", "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("swap: first P+ minimum at 45")
    doc = json.loads((tmp_path / "swap.json").read_text())
    assert doc["command"] == "swap"
    assert doc["seed"] == 0
    assert doc["summary"]["first_minimum_ns"] == pytest.approx(45.0, abs=1.0)
    assert "generated_at" in doc and "artifact_version" in doc
    assert doc["config"]["params"]["t1_magnon_ns"] == 128.0
    assert "workers" not in doc["config"]  # execution knob, not identity
    csv = (tmp_path / "swap.csv").read_text()
    assert csv.startswith("# command: swap\n")
    assert "tau_ns" in csv.splitlines()[4]


def test_anticross_summary_two_g(tmp_path, capsys):
    assert main(["anticross", "--out", str(tmp_path), "--format", "json"]) == 0
    assert "11.10 MHz" in capsys.readouterr().out
    doc = json.loads((tmp_path / "anticross.json").read_text())
    assert doc["summary"]["peak_separation_mhz"] == pytest.approx(11.10, abs=0.1)
    assert not (tmp_path / "anticross.csv").exists()


def test_fourier_consumes_chevron_artifact(tmp_path, capsys):
    rc = main([
        "chevron", "--out", str(tmp_path), "--workers", "3",
        "--set", 'chevron.tau_ns={"start": 0.0, "stop": 200.0, "num": 101}',
        "--set", "chevron.detuning_mhz=[-11.1, 0.0, 11.1]",
    ])
    assert rc == 0
    rc = main([
        "fourier", "--out", str(tmp_path),
        "--set", f"fourier.input={tmp_path / 'chevron.json'}",
    ])
    assert rc == 0
    assert "fitted g" in capsys.readouterr().out
    doc = json.loads((tmp_path / "fourier.json").read_text())
    assert doc["summary"]["fitted_g_mhz"] == pytest.approx(5.55, abs=0.3)


def test_prepare_command(tmp_path, capsys):
    rc = main(["prepare", "--out", str(tmp_path),
               "--set", "prepare.target=vacuum"])
    assert rc == 0
    assert "prepare vacuum" in capsys.readouterr().out
    doc = json.loads((tmp_path / "prepare.json").read_text())
    assert doc["summary"]["fidelity"] > 0.999
    assert (tmp_path / "prepare.csv").read_text().splitlines()[4] == "# real"


def test_reconstruct_from_wigner_artifact(tmp_path, capsys):
    rc = main([
        "wigner", "--out", str(tmp_path),
        "--set", "wigner.target=vacuum",
        "--set", "wigner.population_mode=exact",
        "--set", "wigner.n_max=5",
        "--set", 'wigner.alpha={"points": 3, "extent": 0.8}',
    ])
    assert rc == 0
    rc = main([
        "reconstruct", "--out", str(tmp_path),
        "--set", f"reconstruct.input={tmp_path / 'wigner.json'}",
    ])
    assert rc == 0
    assert "fidelity" in capsys.readouterr().out
    doc = json.loads((tmp_path / "reconstruct.json").read_text())
    assert doc["summary"]["fidelity"] > 0.99
    assert doc["result"]["dim"] == 3


def test_selftest_passes(tmp_path, capsys):
    assert main(["selftest", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out
    doc = json.loads((tmp_path / "selftest.json").read_text())
    assert doc["summary"]["passed"] == doc["summary"]["total"]


# ----------------------------------------------------------- contract tests

def _strip_timestamp(text: str) -> str:
    return "\n".join(
        ln for ln in text.splitlines() if '"generated_at"' not in ln
    )


WIGNER_ARGS = [
    "--set", "wigner.target=vacuum",
    "--set", "wigner.n_max=5",
    "--set", 'wigner.alpha=[[0.0, 0.0], [0.5, 0.0]]',
    "--set", 'wigner.tau_ns={"start": 0.0, "stop": 80.0, "num": 41}',
    "--set", "shots.shots=20000",
]


def test_repeat_runs_are_byte_identical(tmp_path, capsys):
    assert main(["wigner", "--out", str(tmp_path), "--seed", "5",
                 "--workers", "1"] + WIGNER_ARGS) == 0
    first_json = (tmp_path / "wigner.json").read_text()
    first_csv = (tmp_path / "wigner.csv").read_text()
    assert main(["wigner", "--out", str(tmp_path), "--seed", "5",
                 "--workers", "2"] + WIGNER_ARGS) == 0
    capsys.readouterr()
    assert (tmp_path / "wigner.csv").read_text() == first_csv
    second_json = (tmp_path / "wigner.json").read_text()
    assert _strip_timestamp(second_json) == _strip_timestamp(first_json)
    # a different seed changes the sampled values
    assert main(["wigner", "--out", str(tmp_path), "--seed", "6",
                 "--workers", "1"] + WIGNER_ARGS) == 0
    assert (tmp_path / "wigner.csv").read_text() != first_csv


def test_json_artifact_round_trips(tmp_path, capsys):
    from magsim.experiments import ScanResult

    assert main(["swap", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    doc = json.loads((tmp_path / "swap.json").read_text())
    res = ScanResult.from_dict(doc["result"])
    assert res.to_dict() == doc["result"]


def test_output_dir_environment_default(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "artifacts"))
    assert main(["at-scan"]) == 0
    capsys.readouterr()
    assert (tmp_path / "artifacts" / "at_scan.json").exists()


def test_exit_codes(tmp_path, capsys):
    assert main(["swap", "--out", str(tmp_path),
                 "--set", "swap.bogus=1"]) == 2
    assert main(["swap", "--out", str(tmp_path),
                 "--set", "output.format=wide"]) == 2
    # too few map points for the requested reconstruction dimension
    assert main([
        "wigner", "--out", str(tmp_path),
        "--set", "wigner.target=vacuum",
        "--set", "wigner.population_mode=exact",
        "--set", "wigner.n_max=5",
        "--set", "wigner.alpha=[[0.0, 0.0], [0.5, 0.0]]",
    ]) == 0
    assert main([
        "reconstruct", "--out", str(tmp_path),
        "--set", f"reconstruct.input={tmp_path / 'wigner.json'}",
    ]) == 3
    # guard violation: template basis needs at least n_max 1
    assert main([
        "wigner", "--out", str(tmp_path),
        "--set", "wigner.n_max=0",
        "--set", "wigner.alpha=[[0.0, 0.0]]",
    ]) == 4
    err = capsys.readouterr().err
    assert "config error" in err
    assert "numerical error" in err
    assert "guard error" in err
