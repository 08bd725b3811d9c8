import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from wavedet.cli import EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT, main
from wavedet.evaluation import CorrelationMatrix, load_rates

SMALL = [
    "--set", "pulse.n_samples=256", "--set", "pulse.f_start=0.02", "--set", "pulse.f_end=0.07",
    "--set", "shifts=[0,5,9]", "--set", "snr_grid=[0,-3,-6]", "--set", "pfa_targets=[0.1,0.01]",
    "--set", "counts.pulse=150", "--set", "counts.noise=150", "--set", "counts.calibration_noise=1000",
    "--set", "counts.eval_noise=1000", "--set", "counts.eval_pulse_per_snr=50",
    "--set", "counts.correlation=300", "--set", "counts.rates_pulse=100", "--set", "counts.rates_noise=500",
]


def run(cmd, out, *extra):
    return main([cmd, "--output-dir", str(out), *SMALL, *extra])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("gen", out) == 0
    assert run("train", out) == 0
    assert run("eval", out) == 0
    return out


def test_full_run_outputs(workdir):
    assert (workdir / "dataset.bin").exists() and (workdir / "dataset.json").exists()
    bundle = workdir / "pipeline"
    names = sorted(p.name for p in bundle.iterdir())
    assert [n for n in names if n.startswith("bank_shift")] == ["bank_shift0.json", "bank_shift5.json",
                                                               "bank_shift9.json"]
    assert "integrator_0_5_9.json" in names
    thresholds = json.loads((bundle / "thresholds.json").read_text())
    assert set(thresholds) == {"0-shift", "5-shift", "9-shift", "svm[0,5,9]"}
    assert all(set(v["by_target_pfa"]) == {"0.10000000000000001", "0.01"} for v in thresholds.values())
    lines = (workdir / "curves.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 * 2
    corr = CorrelationMatrix.load_csv(workdir / "corr.csv")
    assert corr.entries.shape == (3, 3)
    np.testing.assert_allclose(np.diag(corr.entries), 1.0)
    rates = load_rates(workdir / "rates.json")
    assert rates["scheme"] == "svm[0,5,9]"
    text = (workdir / "complexity.txt").read_text()
    assert "19200" in text


def test_train_refuses_existing_bundle(workdir, capsys):
    before = digest(workdir / "pipeline" / "manifest.json")
    assert run("train", workdir) == EXIT_DATA
    assert "--force" in capsys.readouterr().err
    assert run("train", workdir, "--force") == 0
    assert digest(workdir / "pipeline" / "manifest.json") == before


def test_deterministic_outputs(workdir, tmp_path):
    assert run("gen", tmp_path) == 0
    assert digest(tmp_path / "dataset.bin") == digest(workdir / "dataset.bin")
    assert digest(tmp_path / "dataset.json") == digest(workdir / "dataset.json")
    assert run("train", tmp_path) == 0
    assert run("eval", tmp_path) == 0
    for name in ("curves.csv", "corr.csv", "rates.json", "complexity.txt"):
        assert digest(tmp_path / name) == digest(workdir / name), name


def test_corr_subcommand(workdir, tmp_path, capsys):
    assert main(["corr", "--output-dir", str(tmp_path), "--bundle", str(workdir / "pipeline"), *SMALL]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "0-shift,5-shift,9-shift"
    assert digest(tmp_path / "corr.csv") == digest(workdir / "corr.csv")


def test_seed_env_override(tmp_path, monkeypatch, workdir):
    monkeypatch.setenv("WAVEDET_SEED", "99")
    assert run("gen", tmp_path) == 0
    assert json.loads((tmp_path / "dataset.json").read_text())["seed"] == 99
    assert digest(tmp_path / "dataset.bin") != digest(workdir / "dataset.bin")


def test_config_errors_write_nothing(tmp_path):
    out = tmp_path / "never"
    assert main(["gen", "--output-dir", str(out), "--set", "counts.pulse=0", "--set", "counts.noise=0"]) \
        == EXIT_CONFIG
    assert main(["gen", "--output-dir", str(out), "--set", "shifts=[0,3000]"]) == EXIT_CONFIG
    assert main(["gen", "--output-dir", str(out), "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert not out.exists()


def test_data_errors(tmp_path, workdir):
    assert run("train", tmp_path) == EXIT_DATA          # no dataset
    assert run("eval", tmp_path) == EXIT_DATA           # no bundle
    assert main(["train", "--output-dir", str(tmp_path), "--dataset", str(workdir / "dataset"),
                 *SMALL, "--set", "shifts=[0,5]"]) == EXIT_DATA
    # too few calibration scores for the smallest target, caught before training
    assert main(["train", "--output-dir", str(tmp_path), "--dataset", str(workdir / "dataset"), *SMALL,
                 "--set", "pfa_targets=[0.001]"]) == EXIT_DATA
    assert not (tmp_path / "pipeline").exists()


def test_invariant_failure_exit(workdir, tmp_path, monkeypatch):
    from wavedet import cli
    from wavedet.errors import InvariantError

    def broken(*args, **kwargs):
        raise InvariantError("monotone threshold invariant violated")

    monkeypatch.setattr(cli, "performance_curve", broken)
    assert main(["eval", "--output-dir", str(tmp_path), "--bundle", str(workdir / "pipeline"), *SMALL]) \
        == EXIT_INVARIANT


def test_single_shift_and_trivial_target(tmp_path):
    extra = ["--set", "shifts=[0]", "--set", "pfa_targets=[1.0]"]
    assert run("gen", tmp_path, *extra) == 0
    assert run("train", tmp_path, *extra) == 0
    manifest = json.loads((tmp_path / "pipeline" / "manifest.json").read_text())
    assert [p["name"] for p in manifest["pipelines"]] == ["0-shift"]
    assert run("eval", tmp_path, *extra) == 0
    rows = (tmp_path / "curves.csv").read_text().splitlines()[1:]
    assert [r.split(",")[3] for r in rows] == ["1"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "wavedet", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("gen", "train", "eval", "corr"):
        assert cmd in res.stdout
