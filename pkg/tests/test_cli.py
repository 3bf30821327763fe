import json
import subprocess
import sys

import pytest

import btmix.checks as checks
from btmix.cli import main
from btmix.config import ConfigError, RunConfig, parse_config
from btmix.model import read_dataset

MINIMAL = "[simulation]\nm = 3\nr = 1\nK = 2\nb = 1\nepsilon = 0\n"
SMALL = """[simulation]
m = 30
r = 2
K = 15
b = 3
epsilon = 0.4
seed = 7

[experiment]
m = 30
b_values = 0.1, 2, 20
trials = 3
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write(path, text):
    path.write_text(text)
    return str(path)


def test_generate_minimal(workdir, capsys):
    cfg = write(workdir / "c.ini", MINIMAL)
    assert main(["generate", "--config", cfg, "--out", "g"]) == 0
    data, _ = read_dataset(workdir / "g" / "dataset.txt")
    assert data.counts().tolist() == [3, 3]
    assert "n=2 m=3" in capsys.readouterr().out


def test_generate_is_deterministic(workdir):
    cfg = write(workdir / "c.ini", SMALL)
    main(["generate", "--config", cfg, "--out", "a", "--seed", "3"])
    main(["generate", "--config", cfg, "--out", "b", "--seed", "3"])
    for name in ("model.txt", "dataset.txt"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()


def test_emit_config_roundtrip(workdir):
    cfg = write(workdir / "c.ini", SMALL + "\n[clustering]\nmethod = threshold\ntau_constant = 0.25\n")
    assert main(["generate", "--config", cfg, "--out", "g", "--emit-config", "--seed", "11"]) == 0
    emitted = (workdir / "g" / "config.ini").read_text()
    parsed = parse_config(emitted)
    assert parsed.simulation.seed == 11
    assert parse_config(parsed.to_text()) == parsed
    original = parse_config((workdir / "c.ini").read_text())
    assert parsed.clustering == original.clustering and parsed.experiment == original.experiment


def test_run_with_and_without_truth(workdir):
    cfg = write(workdir / "c.ini", SMALL)
    main(["generate", "--config", cfg, "--out", "g"])
    assert main(["run", "g/dataset.txt", "--truth", "g/model.txt", "--out", "r"]) == 0
    metrics = json.loads((workdir / "r" / "metrics.json").read_text())
    assert "misclustered_fraction" in metrics and "median_relative_error" in metrics
    assert (workdir / "r" / "clustering.csv").read_text().startswith("user_id,label\n")
    assert (workdir / "r" / "scores_1.csv").read_text().startswith("item,theta_hat\n")

    assert main(["run", "g/dataset.txt", "--out", "r2", "--format", "json"]) == 0
    metrics = json.loads((workdir / "r2" / "metrics.json").read_text())
    assert "misclustered_fraction" not in metrics and len(metrics["solver"]) == 2
    labels = json.loads((workdir / "r2" / "clustering.json").read_text())
    assert labels[0].keys() == {"user_id", "label"} and isinstance(labels[0]["label"], int)


def test_run_dimension_mismatch(workdir):
    main(["generate", "--config", write(workdir / "a.ini", SMALL), "--out", "a"])
    main(["generate", "--config", write(workdir / "b.ini", MINIMAL), "--out", "b"])
    assert main(["run", "a/dataset.txt", "--truth", "b/model.txt", "--out", "r"]) == 2


def test_run_nonconvergence_exit_code(workdir):
    main(["generate", "--config", write(workdir / "c.ini", SMALL), "--out", "g"])
    cap = write(workdir / "cap.ini", "[mle]\nmax_iters = 1\n")
    assert main(["run", "g/dataset.txt", "--config", cap, "--out", "r"]) == 3
    assert (workdir / "r" / "metrics.json").exists()


def test_validation_exit_codes(workdir):
    assert main(["generate", "--config", "missing.ini", "--out", "x"]) == 2
    assert main(["generate", "--config", write(workdir / "bad.ini", "[simulation]\nm = 1\n"), "--out", "x"]) == 2
    assert main(["experiment", "fig9", "--out", "x"]) == 2
    assert main(["run", "nope.txt", "--out", "x"]) == 2
    assert main(["generate", "--out", "x"]) == 2
    assert main(["experiment", "fig1", "--out", "x", "--threads", "0"]) == 2


def test_experiment_thread_independence(workdir):
    cfg = write(workdir / "c.ini", SMALL)
    assert main(["experiment", "fig1", "--config", cfg, "--out", "t1", "--threads", "1"]) == 0
    assert main(["experiment", "fig1", "--config", cfg, "--out", "t8", "--threads", "8"]) == 0
    one = (workdir / "t1" / "fig1_angle.csv").read_bytes()
    assert one == (workdir / "t8" / "fig1_angle.csv").read_bytes()
    assert len(one.decode().splitlines()) == 4
    manifest = json.loads((workdir / "t8" / "fig1_manifest.json").read_text())
    assert manifest["grid"]["threads"] == 8


def test_seed_flag_changes_experiment(workdir):
    cfg = write(workdir / "c.ini", SMALL)
    main(["experiment", "fig1", "--config", cfg, "--out", "a", "--seed", "1"])
    main(["experiment", "fig1", "--config", cfg, "--out", "b", "--seed", "2"])
    assert (workdir / "a" / "fig1_angle.csv").read_text() != (workdir / "b" / "fig1_angle.csv").read_text()


def test_no_writes_outside_out(workdir):
    cfg = write(workdir / "c.ini", SMALL)
    before = {p.name for p in workdir.iterdir()}
    main(["generate", "--config", cfg, "--out", "only"])
    main(["run", "only/dataset.txt", "--truth", "only/model.txt", "--out", "only/run"])
    main(["experiment", "fig1", "--config", cfg, "--out", "only/exp"])
    assert {p.name for p in workdir.iterdir()} - before == {"only"}


def test_selfcheck_pass_and_fail(workdir, capsys, monkeypatch):
    assert main(["selfcheck", "--out", "s"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "2.236068" in out and "0.673333333333" in out
    assert all(entry["passed"] for entry in json.loads((workdir / "s" / "selfcheck.json").read_text()))
    monkeypatch.setitem(checks.CHECKS, "broken", lambda: (False, "forced"))
    assert main(["selfcheck"]) == 1
    assert "failed: broken" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "btmix", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "selfcheck" in proc.stdout


def test_config_errors_name_the_field():
    cases = {
        "[simulation]\nm = 1\nr = 1\nK = 1\nb = 1\nepsilon = 0\n": "simulation.m",
        "[simulation]\nm = 5\nr = 1\nK = 1\nb = 1\n": "simulation.epsilon",
        "[simulation]\nm = five\n": "simulation.m",
        "[mle]\nridge = -1\n": "mle.ridge",
        "[clustering]\nr = 2\nmethod = spectral\n": "clustering.method",
        "[clustering]\nmethod = kmeans\n": "clustering.r",
        "[experiment]\ntrials = 0\n": "experiment.trials",
        "[output]\nformat = xml\n": "output.format",
        "[output]\nthreads = 0\n": "output.threads",
        "[mle]\nspeed = 3\n": "mle.speed",
        "[extras]\n": "extras",
    }
    for text, field in cases.items():
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            parse_config(text)


def test_config_defaults_and_grid():
    cfg = parse_config(SMALL)
    assert cfg.mle.max_iters == 10_000 and cfg.threads == 1 and cfg.format == "csv"
    assert cfg.clustering_params().r == 2
    grid = cfg.grid("fig1", seed=4, threads=2)
    assert grid.m == 30 and grid.trials == 3 and grid.seed == 4 and grid.threads == 2
    with pytest.raises(ConfigError):
        RunConfig().clustering_params()
