import json
import subprocess
import sys
from pathlib import Path

import pytest

from lifshitz_lab import __version__
from lifshitz_lab.runner import ExperimentConfig, config_hash, main


def run_dir(out: Path, command: str) -> Path:
    (d,) = [p for p in out.iterdir() if p.name.startswith(command + "-")]
    return d


IDS_ARGS = ["run", "ids", "preset:free-d1", "--L", "100", "--m", "20", "--seed", "7", "--n", "1",
            "--emin", "0.5", "--emax", "4", "--ne", "50"]


def test_validate_manifest_only(tmp_path):
    assert main(["run", "validate", "preset:hl-D2", "--out", str(tmp_path)]) == 0
    d = run_dir(tmp_path, "validate")
    assert sorted(p.name for p in d.iterdir()) == ["manifest.json"]
    man = json.loads((d / "manifest.json").read_text())
    assert man["status"] == 0 and man["artifacts"] == [] and man["code_version"] == __version__


def test_validate_degenerate(tmp_path):
    assert main(["run", "validate", "preset:free-d1", "--out", str(tmp_path)]) == 1
    assert main(["run", "validate", "preset:free-d1", "--allow-degenerate", "--out", str(tmp_path)]) == 0


def test_ids_twice_identical(tmp_path, capsys):
    assert main(IDS_ARGS + ["--out", str(tmp_path)]) == 0
    d = run_dir(tmp_path, "ids")
    first = {p.name: p.read_bytes() for p in d.iterdir() if p.suffix in (".json", ".csv") and p.name != "manifest.json"}
    assert set(first) == {"ids.json", "ids.csv"} and (d / "ids.png").exists()
    assert main(IDS_ARGS + ["--out", str(tmp_path)]) == 0
    assert "cache hit" in capsys.readouterr().out
    assert main(IDS_ARGS + ["--out", str(tmp_path), "--force"]) == 0
    for name, data in first.items():
        assert (d / name).read_bytes() == data


def test_env_out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("LIFSHITZ_LAB_OUT", str(tmp_path))
    assert main(["run", "bands", "preset:lattice-anderson-d1", "--no-figures"]) == 0
    d = run_dir(tmp_path, "bands")
    assert (d / "bands.csv").exists() and (d / "minima.json").exists() and not (d / "bands.png").exists()


def test_seed_mandatory(tmp_path):
    args = [a for a in IDS_ARGS if a not in ("--seed", "7")]
    assert main(args + ["--out", str(tmp_path)]) == 1


def test_bad_grid(tmp_path):
    assert main(["run", "ids", "preset:free-d1", "--seed", "1", "--energies", "1,0.5", "--out", str(tmp_path)]) == 1


def test_numerical_failure_status(tmp_path, capsys):
    # nothing below E = 1e-4 in a small box: the tail fit has no points
    code = main(["run", "lifshitz", "preset:lattice-anderson-d1", "--L", "20", "--seed", "1", "--n", "2",
                 "--emin", "1e-5", "--emax", "1e-4", "--ne", "5", "--window", "1e-5", "1e-4", "--out", str(tmp_path)])
    assert code == 2
    assert "lifshitz.tail_points" in capsys.readouterr().err


def test_budget_status(tmp_path):
    code = main(["run", "ids", "preset:lattice-anderson-d1", "--L", "3000", "--seed", "1", "--n", "200",
                 "--energies", "0.5", "--time-budget", "0.05", "--out", str(tmp_path)])
    assert code == 3
    d = run_dir(tmp_path, "ids")
    man = json.loads((d / "manifest.json").read_text())
    assert man["status"] == 3 and json.loads((d / "ids.json").read_text())["partial"]


def test_reproduce_paths(tmp_path, capsys):
    assert main(IDS_ARGS + ["--out", str(tmp_path)]) == 0
    d = run_dir(tmp_path, "ids")
    manifest = d / "manifest.json"
    assert main(["reproduce", str(manifest)]) == 0
    (d / "ids.csv").unlink()
    assert main(["reproduce", str(manifest)]) == 0
    assert (d / "ids.csv").exists() and "restored ids.csv" in capsys.readouterr().out
    man = json.loads(manifest.read_text())
    man["code_version"] = "0.0.0"
    manifest.write_text(json.dumps(man))
    assert main(["reproduce", str(manifest)]) == 0
    man["config"]["seed"] = 8
    manifest.write_text(json.dumps(man))
    assert main(["reproduce", str(manifest)]) != 0


def test_version_warning_text(tmp_path, capsys):
    assert main(IDS_ARGS + ["--out", str(tmp_path)]) == 0
    manifest = run_dir(tmp_path, "ids") / "manifest.json"
    man = json.loads(manifest.read_text())
    man["code_version"] = "0.0.0"
    manifest.write_text(json.dumps(man))
    main(["reproduce", str(manifest)])
    assert "runner.reproduce" in capsys.readouterr().err


def test_config_hash_ignores_workers_and_out():
    a = ExperimentConfig(command="ids", model="preset:free-d1", energies=[1.0], seed=1, workers=1, out="x")
    b = ExperimentConfig(command="ids", model="preset:free-d1", energies=[1.0], seed=1, workers=4, out="y")
    c = ExperimentConfig(command="ids", model="preset:free-d1", energies=[1.0], seed=2)
    assert config_hash(a, b"m") == config_hash(b, b"m") != config_hash(c, b"m")
    assert config_hash(a, b"m") != config_hash(a, b"n")


def test_model_file(tmp_path):
    from lifshitz_lab.model import preset_models, save_models
    path = tmp_path / "m.json"
    save_models(path, list(preset_models().values()))
    assert main(["run", "validate", f"{path}:hl-D2", "--out", str(tmp_path / "o")]) == 0
    assert main(["run", "validate", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("cmd", [["run", "preset-list"], ["--version"]])
def test_module_entry_point(tmp_path, cmd):
    out = subprocess.run([sys.executable, "-m", "lifshitz_lab", *cmd] + (["--out", str(tmp_path)] if cmd[0] == "run" else []),
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert ("hl-D2" in out.stdout) if cmd[0] == "run" else (__version__ in out.stdout)


def test_compare_k_small(tmp_path):
    code = main(["run", "compare-k", "preset:lattice-anderson-d1", "--seed", "3", "--n", "3", "--ks", "1,2",
                 "--reference-L", "200", "--energies", "0.5,1.0", "--ntheta", "8", "--out", str(tmp_path)])
    assert code == 0
    d = run_dir(tmp_path, "compare-k")
    assert (d / "convergence.csv").read_text().splitlines()[0].startswith("k,E,mean")
    assert (d / "convergence.png").exists()
