import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from linfold.cli import main
from linfold.dataio import load_model, save_model, synth_dataset
from linfold.network import build_network, count_parameters


def write_csv(path, ds, label="label"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(ds.n_features)] + [label])
        for row, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [f"c{y}"])
    return path


@pytest.fixture
def data(tmp_path):
    return write_csv(tmp_path / "d.csv", synth_dataset(300, 4, 3, seed=0))


@pytest.fixture
def model(tmp_path, data):
    out = tmp_path / "m.json"
    assert main(["train", "--data", str(data), "--label-col", "label", "--arch", "16,16",
                 "--epochs", "5", "--out", str(out), "--out-dir", str(tmp_path)]) == 0
    return out


def run(*argv):
    return main([str(a) for a in argv])


def test_train_titanic_preset(tmp_path, data):
    out = tmp_path / "t.json"
    assert run("train", "--data", data, "--label-col", "label", "--arch", "titanic",
               "--seed", 1, "--epochs", 1, "--out", out, "--out-dir", tmp_path) == 0
    assert load_model(out).widths()[:-1] == (25, 50, 100, 100, 100, 100)


def test_missing_label_col_is_usage_error(tmp_path, data, capsys):
    with pytest.raises(SystemExit) as err:
        run("train", "--data", data, "--arch", "8", "--out-dir", tmp_path)
    assert err.value.code == 2
    assert "--label-col" in capsys.readouterr().err


def test_zero_epochs_equals_initialisation(tmp_path, data):
    out = tmp_path / "z.json"
    assert run("train", "--data", data, "--label-col", "label", "--arch", "8,8",
               "--epochs", 0, "--seed", 3, "--out", out, "--out-dir", tmp_path) == 0
    init = build_network(4, (8, 8), 3, seed=3)
    init.label_names = load_model(out).label_names
    save_model(init, tmp_path / "init.json")
    assert out.read_bytes() == (tmp_path / "init.json").read_bytes()


def test_threshold_out_of_range(tmp_path, data, model):
    with pytest.raises(SystemExit) as err:
        run("compress", "--model", model, "--data", data, "--label-col", "label",
            "--threshold", 1.5, "--out-dir", tmp_path)
    assert err.value.code == 2


def test_empty_prune_split_is_runtime_error(tmp_path, data, model):
    out = tmp_path / "p"
    assert run("profile", "--model", model, "--data", data, "--label-col", "label",
               "--split", "1,0,0", "--out-dir", out) == 1
    manifest = json.loads((out / "profile.manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert "error" in manifest


def test_shape_mismatch_is_runtime_error(tmp_path, model):
    other = write_csv(tmp_path / "o.csv", synth_dataset(60, 5, 3, seed=0))
    assert run("profile", "--model", model, "--data", other, "--label-col", "label",
               "--out-dir", tmp_path) == 1


def test_compress_self_check(tmp_path, data, model, capsys):
    out = tmp_path / "c"
    assert run("compress", "--model", model, "--data", data, "--label-col", "label",
               "--threshold", 1.0, "--layer-mode", "optimal", "--out-dir", out) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["prune_loss_drift"] <= 1e-9
    assert (out / "compressed.json").exists()
    assert json.loads((out / "compress.manifest.json").read_text())["status"] == "ok"
    assert run("compress", "--model", model, "--data", data, "--label-col", "label",
               "--threshold", 0.5, "--layer-mode", "abs:3", "--out-dir", out) == 0


def test_sweep_twenty_rows_and_deterministic(tmp_path, data, model):
    for sub in ("a", "b"):
        assert run("sweep", "--model", model, "--data", data, "--label-col", "label",
                   "--step", 0.05, "--out-dir", tmp_path / sub) == 0
    text = (tmp_path / "a" / "sweep.csv").read_text()
    body = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert len(body) == 21  # header + 20 thresholds
    assert text == (tmp_path / "b" / "sweep.csv").read_text()


def test_profile_provable_report(tmp_path, data, capsys):
    net = build_network(4, (6, 6, 6), 3, seed=0)
    for layer in net.layers[:2]:
        layer.weights[:, 0] = -np.abs(layer.weights[:, 0]) - 0.1
    net.layers[0].weights[0] = 1.0
    net.layers[0].biases[0] = 1.0
    net.layers[1].weights[:2] = 0.5
    net.layers[1].biases[:2] = 0.1
    net.label_names = ["c0", "c1", "c2"]
    save_model(net, tmp_path / "p.json")
    assert run("profile", "--model", tmp_path / "p.json", "--data", data, "--label-col", "label",
               "--report-provable", "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out
    assert "layer 1: 2" in out
    assert "excluded (first layer): 1" in out
    again = (tmp_path / "profile.json").read_bytes()
    assert run("profile", "--model", tmp_path / "p.json", "--data", data, "--label-col", "label",
               "--out-dir", tmp_path) == 0
    assert (tmp_path / "profile.json").read_bytes() == again


def _compressible_model(path):
    # layers 1..3 are non-negative with positive bias, so always active
    net = build_network(4, (40, 40, 40, 40), 3, seed=0)
    for layer in net.layers[1:4]:
        layer.weights = np.abs(layer.weights)
        layer.biases[:] = 1.0
    net.label_names = ["c0", "c1", "c2"]
    save_model(net, path)
    return net


def test_target_quarter_on_compressible_task(tmp_path, data, capsys):
    net = _compressible_model(tmp_path / "big.json")
    out = tmp_path / "t"
    assert run("target", "--model", tmp_path / "big.json", "--data", data, "--label-col", "label",
               "--fraction", "0.25", "--out-dir", out) == 0
    assert "WARN" not in capsys.readouterr().out
    with open(out / "target.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["achieved_fraction"]) <= 0.25
    small = load_model(out / "compressed_0.25.json")
    assert count_parameters(small).total <= 0.25 * count_parameters(net).total


def test_target_warns_when_unreachable(tmp_path, data, model, capsys):
    assert run("target", "--model", model, "--data", data, "--label-col", "label",
               "--fraction", "0.0001", "--out-dir", tmp_path) == 0
    assert "WARN target_not_reached" in capsys.readouterr().out


def test_combined_emits_two_reports(tmp_path, data, model):
    assert run("combined", "--model", model, "--data", data, "--label-col", "label",
               "--importance-target", 0.6, "--step", 0.25, "--out-dir", tmp_path) == 0
    for name in ("combined_unpruned.csv", "combined_pruned.csv", "prune_log.csv",
                 "pruned_model.json", "combined.manifest.json"):
        assert (tmp_path / name).exists()


def test_console_script(tmp_path, data):
    proc = subprocess.run([sys.executable, "-m", "linfold.cli", "train", "--data", str(data),
                           "--label-col", "label", "--arch", "small", "--epochs", "1",
                           "--out-dir", str(tmp_path)], capture_output=True, text=True,
                          env={"LINFOLD_THREADS": "1", "PATH": ""})
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "model.json").exists()
