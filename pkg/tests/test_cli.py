import json
import subprocess
import sys

import pytest

from rhnet.checks import SMALL_DIMS
from rhnet.cli import main
from rhnet.corpus import load_corpus
from rhnet.pipeline import load_model


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "spec.json").write_text(json.dumps({
        "num_relations": 4, "taxonomy_branching": [2, 1], "num_entity_pairs": 60,
        "vocab_size": 50, "embedding_dim": SMALL_DIMS["relation_dim"]}))
    assert main(["generate", "--spec", str(d / "spec.json"), "--seed", "2",
                 "--out", str(d / "data")]) == 0
    cfg = json.loads((d / "data" / "config.json").read_text())
    cfg.update(SMALL_DIMS, pretrain_epochs=1, joint_iterations=1)
    (d / "data" / "config.json").write_text(json.dumps(cfg))
    return d


def test_generate_outputs(workdir):
    data = workdir / "data"
    for name in ("train.jsonl", "test.jsonl", "train.jsonl.noise", "entities.txt",
                 "relations.txt", "config.json"):
        assert (data / name).exists()
    bags = load_corpus(data / "train.jsonl")
    assert bags and all(b.noise_flags is not None for b in bags)


def test_full_cli_flow(workdir, capsys):
    data = workdir / "data"
    cfg = str(data / "config.json")
    assert main(["pretrain", "--config", cfg, "--corpus", str(data / "train.jsonl"),
                 "--out", str(workdir / "pre.ckpt")]) == 0
    assert main(["train", "--config", cfg, "--corpus", str(data / "train.jsonl"),
                 "--init", str(workdir / "pre.ckpt"), "--out", str(workdir / "full.ckpt")]) == 0
    assert main(["eval", "--ckpt", str(workdir / "full.ckpt"), "--test", str(data / "test.jsonl"),
                 "--out", str(workdir / "report")]) == 0
    metrics = json.loads((workdir / "report" / "metrics.json").read_text())
    assert {"auc", "p_at_n", "hits_at_k", "denoise"} <= set(metrics)
    capsys.readouterr()
    assert main(["inspect-tree", "--ckpt", str(workdir / "full.ckpt")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("<root>  layer=4")
    model = load_model(workdir / "full.ckpt")
    assert all(leaf in out for leaf in model.tree.ids[1])


def test_gradcheck_command(tmp_path, capsys):
    (tmp_path / "small.json").write_text(json.dumps(SMALL_DIMS))
    assert main(["gradcheck", "--config", str(tmp_path / "small.json")]) == 0
    assert "(ok)" in capsys.readouterr().out


def test_errors_are_one_line(workdir, capsys):
    assert main(["eval", "--ckpt", str(workdir / "missing.ckpt"), "--test", "x",
                 "--out", str(workdir / "r")]) != 0
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.startswith("rhnet eval:")
    bad = workdir / "bad.json"
    bad.write_text(json.dumps({"filters": 99}))
    assert main(["train", "--config", str(bad), "--corpus", str(workdir / "data" / "train.jsonl"),
                 "--init", str(workdir / "pre.ckpt"), "--out", str(workdir / "x.ckpt")]) != 0
    assert "CompatibilityError" in capsys.readouterr().err


def test_console_script_exit_codes():
    ok = subprocess.run([sys.executable, "-m", "rhnet.cli", "--help"], capture_output=True)
    assert ok.returncode == 0
    bad = subprocess.run([sys.executable, "-m", "rhnet.cli", "inspect-tree", "--ckpt", "/nonexistent"],
                         capture_output=True, text=True)
    assert bad.returncode != 0 and len(bad.stderr.strip().splitlines()) == 1
