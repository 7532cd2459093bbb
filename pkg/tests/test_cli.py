import json

import numpy as np
import pytest

from sparsefool import load_model, synth_blobs, write_idx
from sparsefool.cli import EXIT_FORMAT, EXIT_OK, EXIT_USAGE, load_dataset, main


@pytest.fixture(scope="module")
def blob_args(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    data = "synth:blobs,n=120,classes=3,dim=6,margin=1.0,seed=7"
    model_path = tmp / "blobs.sfmodel"
    code = main(["train", "--data", data, "--model-out", str(model_path),
                 "--epochs", "15", "--lr", "0.05", "--seed", "7",
                 "--out", str(tmp / "train.json")])
    assert code == EXIT_OK
    return tmp, data, str(model_path)


def test_train_produces_loadable_model(blob_args):
    tmp, _, model_path = blob_args
    model = load_model(model_path)
    assert model.num_classes == 10  # preset head width
    summary = json.loads((tmp / "train.json").read_text())
    assert summary["train_accuracy"] >= 0.95


def test_attack_writes_report(blob_args, capsys):
    tmp, data, model_path = blob_args
    out = tmp / "attack.json"
    code = main(["attack", "--model", model_path, "--data", data,
                 "--lambda", "2.0", "--out", str(out), "--limit", "40"])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert 0.0 <= rep["fooling_rate"] <= 1.0
    assert len(rep["per_sample"]) == 40


def test_sweep_and_baseline_commands(blob_args, capsys):
    tmp, data, model_path = blob_args
    code = main(["sweep-lambda", "--model", model_path, "--data", data,
                 "--lambdas", "1,3", "--limit", "20", "--out", str(tmp / "sw.json")])
    assert code == EXIT_OK
    rows = json.loads((tmp / "sw.json").read_text())
    assert [r["lambda"] for r in rows] == [1.0, 3.0]

    code = main(["baseline", "--model", model_path, "--data", data,
                 "--budget", "1", "--limit", "20", "--seed", "3"])
    assert code == EXIT_OK


def test_report_command(blob_args, capsys):
    tmp, data, model_path = blob_args
    out = tmp / "attack2.json"
    assert main(["attack", "--model", model_path, "--data", data,
                 "--out", str(out), "--limit", "10"]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["samples"] == 10


def test_idx_data_spec(tmp_path):
    from sparsefool import synth_digits

    ds = synth_digits(4, seed=1)
    write_idx(ds, tmp_path / "i.idx", tmp_path / "l.idx")
    loaded = load_dataset(f"idx:{tmp_path / 'i.idx'},{tmp_path / 'l.idx'}")
    assert len(loaded) == 4


def test_usage_errors():
    assert main(["attack", "--model", "x", "--data", "nonsense:spec"]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE


def test_format_error_exit_code(tmp_path, blob_args):
    _, data, _ = blob_args
    bad = tmp_path / "bad.sfmodel"
    bad.write_bytes(b"JUNKJUNKJUNK")
    assert main(["attack", "--model", str(bad), "--data", data]) == EXIT_FORMAT
    assert main(["attack", "--model", str(tmp_path / "missing"), "--data", data]) == EXIT_FORMAT
