"""
General tests of the y8mkit command-line application
"""

import json
import sys

import pytest

from .. import y8mkit
from ..config import dump_config
from ..data import read_split
from ..metrics import read_predictions
from ._core import tiny_config
from ._core import yaml_loader


@pytest.fixture(scope="function")
def argv():
    argv = [
        "y8mkit",
    ]
    return argv


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "tiny.yml"
    dump_config(tiny_config(**{"pooling.kind": "position", "classifier.kind": "moe"}), path)
    return path


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory, config_file, data_dir):
    path = tmp_path_factory.mktemp("ckpt") / "tiny.y8ck"
    assert y8mkit.main(["train", "--config", str(config_file), "--data", str(data_dir), "--out", str(path)]) == 0
    return path


def test_general(argv, monkeypatch):
    monkeypatch.setattr(sys, "argv", argv + ["--help"])
    with pytest.raises(SystemExit) as reason:
        y8mkit.main()
    assert reason.value.code == 0


def test_no_options(argv, monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", argv)
    parser, args = y8mkit.get_options()
    assert parser is not None
    assert args.subcommand is None
    assert y8mkit.main([]) == 0
    assert "usage" in capsys.readouterr().out


@pytest.mark.parametrize(
    "options, attributes",
    [
        [["evaluate", "--ckpt", "a.y8ck", "--data", "d"], {"split": "test", "k": 20, "csv": None}],
        [["stats", "--data", "d", "--out", "o"], {"split": "train"}],
        [["ensemble", "--inputs", "a.csv,b.csv", "--out", "m.csv"], {"weights": None, "diversity": False}],
        [["sweep", "--component", "loss", "--data", "d"], {"candidates": None, "k": 20, "base": None}],
        [["gradcheck", "--preset", "cnn-64", "--set", "dims.hidden=3"], {"tolerance": 1e-4}],
    ],
)
def test_options(argv, monkeypatch, options, attributes):
    monkeypatch.setattr(sys, "argv", argv + options)
    _, args = y8mkit.get_options()
    assert args.subcommand == options[0]
    for name, value in attributes.items():
        assert getattr(args, name) == value


def test_presets(capsys):
    assert y8mkit.main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("lstm-m-o-ln", "cnn-1024", "many-to-many", "label-1.0-0.01-0.01", "huber-3"):
        assert name in out

    assert y8mkit.main(["presets", "--component", "loss"]) == 0
    out = capsys.readouterr().out
    assert "huber-0.5" in out
    assert "moe-16" not in out


def test_generate(tmp_path, capsys):
    spec = tmp_path / "spec.yml"
    spec.write_text("num_videos: 30\nnum_classes: 4\nfeature_dim: 6\naudio_dim: 2\nnum_label_groups: 2\n")
    out = tmp_path / "data"
    assert y8mkit.main(["generate", "--spec", str(spec), "--out", str(out), "--set", "max_frames=6"]) == 0
    assert "Dataset written to" in capsys.readouterr().out
    assert read_split(out, "train").num_classes == 4
    assert yaml_loader(out / "dataset_spec.yml")["max_frames"] == 6


def test_generate_errors(tmp_path, capsys):
    assert y8mkit.main(["generate", "--out", str(tmp_path), "--set", "num_vidz=3"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("y8mkit-error: ConfigError:")
    assert len(err.strip().splitlines()) == 1

    assert y8mkit.main(["generate", "--out", str(tmp_path), "--set", "min_frames=2"]) == 1
    assert "min_frames" in capsys.readouterr().err


def test_train_and_evaluate(tmp_path, checkpoint, data_dir, capsys):
    capsys.readouterr()
    csv = tmp_path / "test.csv"
    argv = ["evaluate", "--ckpt", str(checkpoint), "--data", str(data_dir), "--csv", str(csv)]
    assert y8mkit.main(argv) == 0
    out = capsys.readouterr().out
    assert out.startswith("GAP@20: ")
    assert 0 <= float(out.split()[-1]) <= 1
    assert len(read_predictions(csv)) == 18


def test_train_metrics(tmp_path, config_file, data_dir, capsys):
    metrics = tmp_path / "metrics.jsonl"
    argv = [
        "train",
        "--config",
        str(config_file),
        "--data",
        str(data_dir),
        "--out",
        str(tmp_path / "m.y8ck"),
        "--metrics",
        str(metrics),
        "--set",
        "training.eval_interval=3",
        "--merge-validation",
    ]
    assert y8mkit.main(argv) == 0
    assert "classifier.moe.expert_w" in capsys.readouterr().out
    records = [json.loads(line) for line in metrics.read_text().splitlines()]
    assert [r["step"] for r in records] == [3, 6, 7]


def test_train_errors(tmp_path, config_file, data_dir, capsys):
    base = ["train", "--config", str(config_file), "--data", str(data_dir), "--out", str(tmp_path / "x.y8ck")]
    assert y8mkit.main(base + ["--set", "pooling.kind=wavelet"]) == 1
    assert "ConfigError" in capsys.readouterr().err
    assert y8mkit.main(base + ["--set", "dims.num_classes=7"]) == 1
    assert "C=6" in capsys.readouterr().err
    assert y8mkit.main(base + ["--preset", "moe-77"]) == 1
    assert "moe-77" in capsys.readouterr().err
    assert y8mkit.main(["train", "--data", str(tmp_path / "nothing"), "--out", str(tmp_path / "y.y8ck")]) == 1
    assert "DataError" in capsys.readouterr().err


def test_evaluate_missing_checkpoint(tmp_path, data_dir, capsys):
    assert y8mkit.main(["evaluate", "--ckpt", str(tmp_path / "none.y8ck"), "--data", str(data_dir)]) == 1
    assert capsys.readouterr().err.startswith("y8mkit-error: FileNotFoundError:")


def test_ensemble(tmp_path, checkpoint, data_dir, capsys):
    member = tmp_path / "member.csv"
    assert y8mkit.main(["evaluate", "--ckpt", str(checkpoint), "--data", str(data_dir), "--csv", str(member)]) == 0
    merged = tmp_path / "merged.csv"
    inputs = f"{member},{member}"
    assert y8mkit.main(["ensemble", "--inputs", inputs, "--out", str(merged), "--diversity"]) == 0
    assert "1.0000" in capsys.readouterr().out
    assert merged.read_bytes() == member.read_bytes()

    assert y8mkit.main(["ensemble", "--inputs", inputs, "--out", str(merged), "--weights", "1,x"]) == 1
    assert "--weights" in capsys.readouterr().err


def test_stats(tmp_path, data_dir, capsys):
    assert y8mkit.main(["stats", "--data", str(data_dir), "--out", str(tmp_path)]) == 0
    assert "label_stats.csv" in capsys.readouterr().out
    assert (tmp_path / "label_stats.csv").read_text().splitlines()[0] == "ClassId,Count"
    assert (tmp_path / "cooccurrence.csv").exists()


def test_sweep(tmp_path, config_file, data_dir, capsys):
    candidates = tmp_path / "candidates.yml"
    candidates.write_text("position:\n  pooling.kind: position\nbroken:\n  pooling.kind: wavelet\n")
    report, folded = tmp_path / "report.yml", tmp_path / "best.yml"
    argv = [
        "sweep",
        "--base",
        str(config_file),
        "--component",
        "pooling",
        "--candidates",
        str(candidates),
        "--data",
        str(data_dir),
        "--out",
        str(report),
        "--fold",
        str(folded),
    ]
    assert y8mkit.main(argv) == 0
    assert "failed" in capsys.readouterr().out
    rows = yaml_loader(report)["rows"]
    assert [row["name"] for row in rows] == ["position", "broken"]
    assert yaml_loader(folded)["pooling"]["kind"] == "position"


def test_gradcheck(capsys):
    assert y8mkit.main(["gradcheck", "--preset", "position-encoding", "--preset", "moe-2"]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")
