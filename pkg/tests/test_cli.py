# tests/test_cli.py
import json

import pytest

from csmil.core.config import get_settings
from csmil.core.serialization import load_json, read_csv
from csmil.main import main

SMALL_SYNTH = [
    "--set", "synth.K_latent=4",
    "--set", "synth.s_informative=1",
    "--set", "synth.d=8",
    "--set", "synth.bags_per_class=6",
    "--set", "synth.instances_per_bag=[4, 6]",
]
QUICK = [
    "--set", "train.epochs=3",
    "--set", "model.hidden_dim=4",
    "--set", "clustering.n_init=2",
]


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["--out", str(out), "--seed", "7", *SMALL_SYNTH, "synth"]) == 0
    return out


def test_synth_writes_dataset(synth_dir):
    manifest = load_json(synth_dir / "manifest.json")
    assert manifest["dim"] == 8
    assert len(manifest["bags"]) == 12
    for entry in manifest["bags"]:
        assert (synth_dir / entry["path"]).is_file()
    assert (synth_dir / "ground_truth.json").is_file()
    assert set(load_json(synth_dir / "folds.json")["fold_of_bag"]) == {e["id"] for e in manifest["bags"]}


def test_synth_is_byte_identical(tmp_path, synth_dir):
    again = tmp_path / "again"
    assert main(["--out", str(again), "--seed", "7", *SMALL_SYNTH, "synth"]) == 0
    for path in synth_dir.iterdir():
        assert (again / path.name).read_bytes() == path.read_bytes(), path.name


def test_bad_json_config(tmp_path):
    config = tmp_path / "run.json"
    config.write_text('{"seed": 1,')
    assert main(["--config", str(config), "--out", str(tmp_path), "gradcheck"]) == 2


def test_yaml_config(tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text("gradcheck:\n  seeds: 1\n  K_values: [2]\n")
    assert main(["--config", str(config), "--out", str(tmp_path), "gradcheck"]) == 0
    assert len(load_json(tmp_path / "gradcheck.json")["runs"]) == 1


def test_unknown_setting(tmp_path):
    assert main(["--out", str(tmp_path), "--set", "train.nope=1", "gradcheck"]) == 2
    assert main(["--out", str(tmp_path), "--set", "train.gamma=-1", "gradcheck"]) == 2


def test_invalid_jobs(tmp_path):
    assert main(["--out", str(tmp_path), "--jobs", "0", "gradcheck"]) == 2


def test_invalid_environment_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("CSMIL_LOG", "loud")
    get_settings.cache_clear()
    try:
        assert main(["--out", str(tmp_path), "gradcheck"]) == 2
        assert not (tmp_path / "gradcheck.json").exists()
    finally:
        get_settings.cache_clear()


def test_missing_manifest(tmp_path):
    assert main(["--out", str(tmp_path), "cluster"]) == 2
    assert main(["--out", str(tmp_path), "cluster", "--manifest", str(tmp_path / "absent.json")]) == 2


def test_too_many_clusters(tmp_path, synth_dir):
    assert main(["--out", str(tmp_path), "cluster", "--manifest", str(synth_dir / "manifest.json"), "--K", "100000"]) == 2


def test_cluster_outputs(tmp_path, synth_dir):
    out = tmp_path / "clusters"
    assert main(["--out", str(out), *QUICK, "cluster", "--manifest", str(synth_dir / "manifest.json"), "--K", "3"]) == 0
    assert load_json(out / "centers.json")["K"] == 3
    counts = read_csv(out / "cluster_counts.csv")
    assert list(counts.columns) == ["bag_id", "label", "C_0", "C_1", "C_2"]
    assignments = read_csv(out / "assignments.csv")
    assert len(assignments) == counts[["C_0", "C_1", "C_2"]].to_numpy().sum()


def test_gradcheck_passes(tmp_path):
    assert main(["--out", str(tmp_path), "--set", "gradcheck.seeds=2", "gradcheck"]) == 0
    report = load_json(tmp_path / "gradcheck.json")
    assert report["passed"] is True
    assert report["max_rel_error"] < 1e-4
    assert len(report["runs"]) == 6


def test_train_outputs(tmp_path, synth_dir):
    out = tmp_path / "train"
    argv = ["--out", str(out), *QUICK, "train", "--manifest", str(synth_dir / "manifest.json"), "--K", "4"]
    assert main(argv) == 0
    for name in ("checkpoint.json", "centers.json", "assignments.csv", "history.csv", "selection.json"):
        assert (out / name).is_file(), name
    assert len(read_csv(out / "history.csv")) == 3
    assert load_json(out / "checkpoint.json")["K"] == 4

    rerun = tmp_path / "rerun"
    argv[1] = str(rerun)
    assert main(argv) == 0
    assert (rerun / "checkpoint.json").read_bytes() == (out / "checkpoint.json").read_bytes()


def test_eval_outputs(tmp_path, synth_dir):
    out = tmp_path / "eval"
    assert main(["--out", str(out), *QUICK, "eval", "--manifest", str(synth_dir / "manifest.json"), "--K", "2"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["csmil"]["folds"]) == 5
    assert report["abmil"]["K"] == 1
    assert (out / "roc.csv").is_file()
    assert (out / "roc.svg").read_text().startswith("<svg")


def test_sweep_gamma_outputs(tmp_path, synth_dir):
    out = tmp_path / "sweep"
    argv = [
        "--out", str(out), *QUICK,
        "--set", "sweep.gamma_grid=[0.001, 0.1]",
        "--set", "cv.n_folds=2",
        "sweep-gamma", "--manifest", str(synth_dir / "manifest.json"), "--K", "2",
    ]
    assert main(argv) == 0
    frame = read_csv(out / "sweep.csv")
    assert len(frame) == 2 * 3
    assert (out / "sweep.svg").is_file()


def test_recover_outputs(tmp_path):
    argv = [
        "--out", str(tmp_path),
        "--set", "recovery.K=8",
        "--set", "recovery.s=2",
        "--set", "recovery.M_grid=[16, 32]",
        "--set", "recovery.trials=3",
        "recover",
    ]
    assert main(argv) == 0
    phase = read_csv(tmp_path / "phase.csv")
    assert phase["M"].tolist() == [16, 32]
    diagnostics = load_json(tmp_path / "diagnostics.json")
    assert set(diagnostics["kappa_s"]) == {"1", "2"}
    assert (tmp_path / "phase.svg").is_file()
    assert not (tmp_path / "scaling.json").exists()


def test_ablate_outputs(tmp_path, synth_dir):
    out = tmp_path / "ablate"
    argv = ["--out", str(out), *QUICK, "--set", "cv.n_folds=2", "ablate", "--manifest", str(synth_dir / "manifest.json"), "--K", "4"]
    assert main(argv) == 0
    frame = read_csv(out / "ablation.csv")
    assert frame["removed_cluster"].astype(str).tolist() == ["baseline", "0", "1", "2", "3"]
    report = load_json(out / "ablation.json")
    assert all(len(entry["majority_component"]) == 1 for entry in report["entries"])
    assert (out / "ablation.svg").read_text().startswith("<svg")


def test_sweep_k_outputs(tmp_path, synth_dir):
    out = tmp_path / "sweep_k"
    argv = [
        "--out", str(out), *QUICK,
        "--set", "sweep.k_grid=[1, 2]",
        "--set", "cv.n_folds=2",
        "sweep-k", "--manifest", str(synth_dir / "manifest.json"),
    ]
    assert main(argv) == 0
    frame = read_csv(out / "sweep.csv")
    assert frame["param"].tolist() == [1, 1, 1, 2, 2, 2]
    assert load_json(out / "sweep.json")["param"] == "K"


FOLDS_2 = ["--set", "cv.n_folds=2"]
RECOVERY_SMALL = ["--set", "recovery.K=8", "--set", "recovery.s=2", "--set", "recovery.M_grid=[16, 32]", "--set", "recovery.trials=3"]
COMMANDS = {
    "cluster": ([], ["cluster", "--K", "3"]),
    "train": ([], ["train", "--K", "4"]),
    "eval": (FOLDS_2, ["eval", "--K", "2"]),
    "ablate": (FOLDS_2, ["ablate", "--K", "2"]),
    "sweep-gamma": (FOLDS_2 + ["--set", "sweep.gamma_grid=[0.001, 0.1]"], ["sweep-gamma", "--K", "2"]),
    "sweep-k": (FOLDS_2 + ["--set", "sweep.k_grid=[1, 2]"], ["sweep-k"]),
    "recover": (RECOVERY_SMALL, ["recover"]),
}


@pytest.mark.parametrize("command", list(COMMANDS))
def test_reruns_and_parallel_runs_are_byte_identical(tmp_path, synth_dir, command):
    options, sub = COMMANDS[command]
    if command != "recover":
        sub = [*sub, "--manifest", str(synth_dir / "manifest.json")]

    def run(name, *extra):
        out = tmp_path / name
        assert main(["--out", str(out), "--seed", "3", *extra, *QUICK, *options, *sub]) == 0
        return out

    serial = run("serial")
    names = sorted(path.name for path in serial.iterdir())
    assert names
    for other in (run("again"), run("parallel", "--jobs", "4")):
        assert sorted(path.name for path in other.iterdir()) == names
        for name in names:
            assert (other / name).read_bytes() == (serial / name).read_bytes(), name
