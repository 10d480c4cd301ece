import csv
import json

import numpy as np
import pytest

from mixpul.cli import main
from mixpul.data import gaussian_mixture, load_manifest
from mixpul.nn import load_checkpoint


@pytest.fixture
def csv_path(tmp_path):
    ds = gaussian_mixture(400, prior=0.5, d=3, seed=0)
    path = tmp_path / "toy.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x0", "x1", "x2", "label"])
        for row, y in zip(ds.x, ds.y):
            w.writerow([*row, y])
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_train_then_eval(csv_path, tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out, err = run(capsys, "train", "--dataset", csv_path, "--method", "mixpul", "--epochs", 3, "--seed", 1, "--out", out_dir)
    assert code == 0, err
    summary = json.loads(out)
    assert 0 <= summary["test_auc"] <= 1
    for name in ("model.ckpt", "scaler.json", "config.txt", "manifest.json", "report.json", "epochs.csv"):
        assert (out_dir / name).exists()
    with open(out_dir / "epochs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert {"epoch", "L_PN", "L_U", "L_PU", "train_error", "test_error", "test_auc"} <= set(rows[0])

    scores_csv = tmp_path / "scores.csv"
    code, out, err = run(capsys, "eval", "--model", out_dir / "model.ckpt", "--dataset", csv_path, "--out", scores_csv)
    assert code == 0, err
    result = json.loads(out)
    assert result["rows"] == 400
    with open(scores_csv) as fh:
        scored = list(csv.DictReader(fh))
    assert len(scored) == 400
    assert all(0 < float(r["score"]) < 1 for r in scored)
    assert load_checkpoint(out_dir / "model.ckpt").sizes == [3, 100, 100, 1]


@pytest.mark.parametrize("method", ["upu", "nnpu", "supervised"])
def test_train_baselines(method, csv_path, tmp_path, capsys):
    code, out, err = run(capsys, "train", "--dataset", csv_path, "--method", method, "--epochs", 2, "--out", tmp_path / method)
    assert code == 0, err
    assert json.loads((tmp_path / method / "report.json").read_text())["method"] == method


def test_config_file(csv_path, tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# small run\nhidden = 8, 4\nepochs = 2\nrn_method = dist\nlr = 0.01\n")
    code, _, err = run(capsys, "train", "--dataset", csv_path, "--config", cfg, "--out", tmp_path / "r")
    assert code == 0, err
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["config"]["hidden"] == [8, 4]
    assert report["config"]["rn_method"] == "dist"
    assert len(report["epochs"]) == 2


def test_simulate_then_train_from_manifest(csv_path, tmp_path, capsys):
    manifest = tmp_path / "split.json"
    code, out, err = run(capsys, "simulate", "--dataset", csv_path, "--n-labeled", 30, "--seed", 4, "--out", manifest)
    assert code == 0, err
    assert json.loads(out)["labeled"] == 30
    assert len(load_manifest(manifest)["labeled_indices"]) == 30
    code, _, err = run(capsys, "train", "--dataset", csv_path, "--manifest", manifest, "--epochs", 1, "--out", tmp_path / "r")
    assert code == 0, err
    saved = load_manifest(tmp_path / "r" / "manifest.json")
    assert saved["split"]["labeled_indices"] == load_manifest(manifest)["labeled_indices"]


def test_sweep_prior(csv_path, tmp_path, capsys):
    code, out, err = run(capsys, "sweep", "--suite", "prior", "--dataset", csv_path, "--values", "0.5,1", "--repeats", 1, "--epochs", 1, "--out", tmp_path / "s")
    assert code == 0, err
    assert (tmp_path / "s" / "prior_sweep.csv").exists()


def test_ablate_margin(csv_path, tmp_path, capsys):
    code, out, err = run(capsys, "ablate", "--suite", "margin", "--dataset", csv_path, "--n-labeled", 40, "--epochs", 2, "--out", tmp_path / "a")
    assert code == 0, err
    assert set(json.loads(out)["final_error"]) == {"with_margin", "without_margin"}
    assert (tmp_path / "a" / "margin_curves.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--dataset", "does-not-exist.csv", "--out", "x"],
        ["eval", "--model", "missing.ckpt", "--dataset", "missing.csv", "--out", "x.csv"],
        ["simulate", "--dataset", "nope.csv", "--class-frequency", "0.5", "--out", "m.json"],
    ],
)
def test_failure_is_machine_readable(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, err = run(capsys, *argv)
    assert code == 1
    line = err.strip().splitlines()[-1]
    assert line.startswith("error: ")
    payload = json.loads(line[len("error: ") :])
    assert payload["command"] == argv[0]
    assert payload["type"] and payload["message"]


def test_infeasible_class_frequency(csv_path, tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--dataset", csv_path, "--class-frequency", "1.5", "--out", tmp_path / "m.json")
    assert code == 1
    assert json.loads(err.split("error: ", 1)[1])["type"] == "ValueError"


def test_usage_error_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train"])
    assert info.value.code != 0
