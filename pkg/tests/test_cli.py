import csv
import json
import shutil
from pathlib import Path

import pytest

from credrisk.cli import main

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"
CHAIN = ["generate-data", "preprocess", "train-nonseq", "pretrain-mlm", "train-seq", "finetune-joint"]


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    for cmd in CHAIN:
        assert run(cmd, "--config", SMOKE, "--out", out) == 0, cmd
    for model in ("nonseq", "seq", "joint"):
        assert run("evaluate", "--config", SMOKE, "--out", out, "--model", model) == 0
    return out


def test_chain_layout(run_dir):
    for stage in ("data", "preprocess", "nonseq", "mlm", "seq", "joint", "eval_nonseq", "eval_seq", "eval_joint"):
        m = json.loads((run_dir / stage / "manifest.json").read_text())
        assert m["seed"] == 7 and m["stage"] == stage and m["output_hash"]
    for stage in ("nonseq", "seq", "joint"):
        assert (run_dir / stage / "model" / "weights.npz").exists()
        with open(run_dir / stage / "metrics.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "train_loss", "valid_auc"]
        assert [r[0] for r in rows[1:]] == [str(i) for i in range(len(rows) - 1)]
    report = json.loads((run_dir / "eval_joint" / "report.json").read_text())
    assert set(report["auc"]) == {"y_short_eval", "y_short_other2", "y_short_other3"}
    assert all(0.5 < a <= 1 for a in report["auc"].values())
    seq_inputs = json.loads((run_dir / "seq" / "manifest.json").read_text())["inputs"]
    assert set(seq_inputs) == {"data", "preprocess", "mlm"}


def test_rerun_is_a_no_op(run_dir, capsys):
    before = (run_dir / "nonseq" / "manifest.json").read_text()
    mtime = (run_dir / "nonseq" / "model" / "weights.npz").stat().st_mtime_ns
    assert run("train-nonseq", "--config", SMOKE, "--out", run_dir) == 0
    assert "up to date" in capsys.readouterr().out
    assert (run_dir / "nonseq" / "manifest.json").read_text() == before
    assert (run_dir / "nonseq" / "model" / "weights.npz").stat().st_mtime_ns == mtime


def test_force_reruns_identically(run_dir, capsys):
    from credrisk.evaluation import EvalReport

    def report():
        return EvalReport.from_dict(json.loads((run_dir / "eval_nonseq" / "report.json").read_text()))

    before = report()
    assert run("evaluate", "--config", SMOKE, "--out", run_dir, "--model", "nonseq", "--force") == 0
    assert "wrote" in capsys.readouterr().out
    assert report() == before  # equality ignores wall time


def test_missing_artifact_names_producer(tmp_path, capsys):
    assert run("train-seq", "--config", SMOKE, "--out", tmp_path) == 2
    assert "credrisk generate-data" in capsys.readouterr().err


def test_wrong_seed_names_producer(run_dir, capsys):
    assert run("train-nonseq", "--config", SMOKE, "--out", run_dir, "--seed", 8) == 2
    assert "credrisk generate-data" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "trainig": {}}))
    assert run("generate-data", "--config", cfg, "--out", tmp_path / "r") == 2
    assert "unknown keys" in capsys.readouterr().err


def test_report_table(run_dir, tmp_path, capsys):
    out = tmp_path / "table.md"
    assert run("report", run_dir, "--out", out) == 0
    text = out.read_text()
    assert text.count("\n") == 2 + 3 and "y_short_eval" in text.splitlines()[0]


def test_report_refuses_mismatched_data(run_dir, tmp_path, capsys):
    other = tmp_path / "other"
    shutil.copytree(run_dir / "eval_joint", other / "eval_joint")
    m = json.loads((other / "eval_joint" / "manifest.json").read_text())
    m["data_hash"] = "0" * 16
    (other / "eval_joint" / "manifest.json").write_text(json.dumps(m))
    assert run("report", run_dir, other) == 2
    assert "different data" in capsys.readouterr().err


@pytest.mark.slow
def test_ablate_loss_axis(run_dir, tmp_path):
    cfg = json.loads(SMOKE.read_text())
    cfg["evaluation"]["seeds"] = [1]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert run("ablate", "--config", path, "--out", run_dir, "--axis", "loss") == 0
    table = json.loads((run_dir / "ablate_loss" / "table.json").read_text())
    text = json.dumps(table)
    for loss in ("wbce", "bce", "focal"):
        assert loss in text
    assert (run_dir / "ablate_loss" / "table.csv").exists()
