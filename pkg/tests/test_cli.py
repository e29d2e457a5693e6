import json
import subprocess
import sys

import pytest

from reluadv.cli import main
from reluadv.experiments import read_csv
from reluadv.relunet import NetworkWeights


def test_scaling_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["scaling", "--d-values", "64,128", "--trials", "3", "--seed", "9", "--out", str(out)])
    assert code == 0
    assert {p.name for p in out.iterdir()} == {"results.csv", "aggregates.csv", "run.json"}
    assert len(read_csv(out / "results.csv")) == 6
    assert json.loads(capsys.readouterr().out.splitlines()[0])["d"] == 64


def test_flags_override_spec_file(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "scaling", "seed": 1, "trials": 4, "d_values": [64]}))
    assert main(["scaling", "--spec", str(spec), "--trials", "2", "--out", str(tmp_path / "o")]) == 0
    meta = json.loads((tmp_path / "o" / "run.json").read_text())
    assert meta["spec"]["trials"] == 2 and meta["spec"]["seed"] == 1


def test_spec_errors_exit_2(tmp_path):
    assert main(["scaling", "--dims", "8,8,1", "--trials", "1"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["scaling", "--spec", str(bad)]) == 2
    bad.write_text(json.dumps({"kind": "tailsum", "d_values": [4]}))
    assert main(["scaling", "--spec", str(bad)]) == 2
    out = tmp_path / "o"
    assert main(["tailsum", "--d-values", "10", "--trials", "2", "--out", str(out)]) == 0
    assert main(["tailsum", "--d-values", "10", "--trials", "2", "--out", str(out)]) == 2


def test_data_error_exit_3(tmp_path):
    assert main(["mnist", "--data-dir", str(tmp_path), "--depths", "2"]) == 3
    (tmp_path / "train-images-idx3-ubyte").write_bytes(b"\x00\x00\x08\x01" + bytes(12))
    (tmp_path / "train-labels-idx1-ubyte").write_bytes(b"\x00\x00\x08\x01\x00\x00\x00\x00")
    for name in ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
        (tmp_path / name).write_bytes(b"")
    assert main(["mnist", "--data-dir", str(tmp_path), "--depths", "2"]) == 3


def test_mnist_synthetic_fallback(tmp_path):
    out = tmp_path / "m"
    code = main(["mnist", "--synthetic-fallback", "--depths", "2,3", "--hidden", "8", "--epochs", "1",
                 "--n-train", "100", "--n-attack", "10", "--out", str(out)])
    assert code == 0
    assert (out / "histogram_2.csv").exists() and (out / "histogram_3.csv").exists()


@pytest.mark.parametrize("kind,extra", [
    ("surjectivity", ["--d-values", "40", "--tests", "c1c2,vershynin"]),
    ("typicality", ["--dims", "64,16,4,1", "--c2", "0.02"]),
])
def test_other_experiments(tmp_path, kind, extra):
    assert main([kind, "--trials", "2", "--out", str(tmp_path / kind), *extra]) == 0
    assert read_csv(tmp_path / kind / "aggregates.csv")


def test_gen_net_attack_and_check_grad(tmp_path, capsys):
    net_path = tmp_path / "net.json"
    assert main(["gen-net", "--dims", "32,8,1", "--seed", "4", "--out", str(net_path)]) == 0
    assert NetworkWeights.load(net_path).dims == [32, 8, 1]
    capsys.readouterr()
    assert main(["attack", "--net", str(net_path), "--seed", "2"]) == 0
    row = json.loads(capsys.readouterr().out)
    assert row["success"] == 1 and row["dims"] == "32-8-1"
    assert main(["attack", "--dims", "32,8,1", "--method", "gd", "--eta", "0.01"]) == 0
    capsys.readouterr()
    assert main(["check-grad", "--net", str(net_path), "--trials", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["max_relative_error"] <= 1e-5
    assert main(["attack"]) == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "reluadv.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("reluadv ")
    proc = subprocess.run([sys.executable, "-m", "reluadv.cli", "scaling", "--trials", "x"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
