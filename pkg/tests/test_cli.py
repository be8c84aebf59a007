import json

import numpy as np
import pytest

from tksnn.cli import run
from tksnn.data import load_dataset


@pytest.fixture
def tiny_config(tmp_path):
    cfg = {
        "teacher": {"mode": "tks", "k": 2, "tau": 3.0},
        "data": {"n_per_class": 6, "t_native": 4, "classes": 3, "noise_sigma": 0.2},
        "run": {"t_train": 4, "epochs": 2, "batch_size": 8,
                "out_dir": str(tmp_path / "run")},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_train_then_eval_then_sweep(tiny_config, tmp_path, capsys):
    assert run(["train", "--config", str(tiny_config)]) == 0
    out = capsys.readouterr().out
    assert "resolved config:" in out
    assert "2 epochs" in out
    ckpt = tmp_path / "run" / "model.ckpt"
    assert ckpt.exists()

    report_path = tmp_path / "eval.json"
    assert run(["eval", "--config", str(tiny_config), "--checkpoint", str(ckpt),
                "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert 0.0 <= report["top1"] <= 1.0
    assert report["n_samples"] == 18
    assert len(report["per_timestep_acc"]) == 4

    csv_path = tmp_path / "sweep.csv"
    assert run(["sweep", "--config", str(tiny_config), "--checkpoint", str(ckpt),
                "--t", "1,2,3,4,6,8", "--out", str(csv_path)]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t_test,top1,aurc_x1000"
    assert len(lines) == 7  # header + six requested test lengths
    assert [int(l.split(",")[0]) for l in lines[1:]] == [1, 2, 3, 4, 6, 8]


def test_train_override_changes_run(tiny_config, tmp_path, capsys):
    assert run(["train", "--config", str(tiny_config),
                "--set", "teacher.mode=none",
                "--set", "run.out_dir=" + str(tmp_path / "none_run")]) == 0
    out = capsys.readouterr().out
    assert '"mode": "none"' in out
    metrics = (tmp_path / "none_run" / "metrics.jsonl").read_text().splitlines()
    for line in metrics:
        assert json.loads(line)["l_tks"] == 0.0


def test_unknown_override_key_exits_1(tiny_config, tmp_path, capsys):
    code = run(["train", "--config", str(tiny_config), "--set", "teacher.kk=3"])
    assert code == 1
    assert "unknown config key" in capsys.readouterr().err


def test_invalid_config_value_exits_1_without_outputs(tiny_config, tmp_path, capsys):
    code = run(["train", "--config", str(tiny_config), "--set", "run.t_train=0"])
    assert code == 1
    assert "error:" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()  # nothing written on validation failure


def test_malformed_override_exits_1(tiny_config, capsys):
    assert run(["train", "--config", str(tiny_config), "--set", "teacher.mode"]) == 1
    assert "key=value" in capsys.readouterr().err


def test_missing_config_file_exits_1(tmp_path, capsys):
    assert run(["train", "--config", str(tmp_path / "absent.json")]) == 1
    capsys.readouterr()


def test_missing_subcommand_exits_1(capsys):
    assert run([]) == 1
    capsys.readouterr()


def test_resume_flag(tiny_config, tmp_path, capsys):
    assert run(["train", "--config", str(tiny_config)]) == 0
    ckpt = tmp_path / "run" / "model.ckpt"
    cfg = json.loads(tiny_config.read_text())
    cfg["run"]["epochs"] = 4
    tiny_config.write_text(json.dumps(cfg))
    assert run(["train", "--config", str(tiny_config), "--resume", str(ckpt)]) == 0
    capsys.readouterr()
    lines = (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(l)["epoch"] for l in lines] == [0, 1, 2, 3]


def test_synth_command_writes_loadable_dataset(tmp_path, capsys):
    base = str(tmp_path / "ds")
    assert run(["synth", "--out", base, "--n-per-class", "3", "--t", "4",
                "--classes", "2", "--noise", "0.1", "--seed", "3"]) == 0
    capsys.readouterr()
    ds = load_dataset(base)
    assert ds.inputs.shape == (6, 4, 16)
    assert np.array_equal(np.bincount(ds.labels), [3, 3])


def test_gradcheck_command_passes(capsys):
    assert run(["gradcheck", "--seeds", "2"]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
