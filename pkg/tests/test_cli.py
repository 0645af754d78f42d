"""CLI behaviour, exercised in-process through main(argv): the full micro
pipeline on a tiny config, plus exit codes for the documented error paths."""

import json

import numpy as np
import pytest

from widthnet.cli import main

TINY_CFG = """\
[pipeline]
seed = 9
batch_size = 3

[model]
omega = 16
width_ratios = 0.6, 0.7, 0.8, 0.9, 1.0
trunk_depth = 1
c_de = 4

[train]
epochs_wab = 3
epochs_ws = 3

[data]
tasks = noise25, rain
image_size = 12
samples_per_task = 6
eval_samples_per_task = 3
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Run the whole pipeline once; individual tests assert on the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    c = ["--config", str(cfg)]

    assert main(["synth", *c, "--out", str(root / "pack")]) == 0
    assert main(["train-wab", *c, "--data", str(root / "pack"),
                 "--out", str(root / "wab.ckpt")]) == 0
    assert main(["train-ws", *c, "--data", str(root / "pack"),
                 "--wab", str(root / "wab.ckpt"),
                 "--out", str(root / "ws.ckpt")]) == 0
    return root, c


def test_synth_writes_pack(workdir):
    root, _ = workdir
    assert (root / "pack" / "manifest.json").exists()
    manifest = json.loads((root / "pack" / "manifest.json").read_text())
    assert manifest["count"] == 12


def test_train_outputs_exist(workdir):
    root, _ = workdir
    assert (root / "wab.ckpt").exists()
    assert (root / "wab.ckpt.loss.csv").exists()
    assert (root / "ws.ckpt").exists()
    header = (root / "wab.ckpt").read_bytes()[:6]
    assert header == b"UWADN1"


def test_eval_fixed_width(workdir, capsys):
    root, c = workdir
    code = main(["eval", *c, "--data", str(root / "pack"),
                 "--wab", str(root / "wab.ckpt"), "--width", "0.6",
                 "--out", str(root / "eval_fixed")])
    assert code == 0
    report = json.loads((root / "eval_fixed.json").read_text())
    assert report["mode"] == "fixed"
    assert {t["task"] for t in report["per_task"]} == {"noise25", "rain"}
    csv_text = (root / "eval_fixed.csv").read_text()
    assert csv_text.count("\n") == 4  # header + 2 tasks + average


def test_eval_routed(workdir):
    root, c = workdir
    code = main(["eval", *c, "--data", str(root / "pack"),
                 "--wab", str(root / "wab.ckpt"), "--ws", str(root / "ws.ckpt"),
                 "--out", str(root / "eval_routed")])
    assert code == 0
    report = json.loads((root / "eval_routed.json").read_text())
    assert report["mode"] == "routed"
    ratios = [t["mean_ratio"] for t in report["per_task"]]
    assert all(0.0 < r <= 1.0 for r in ratios)


def test_eval_rejects_noncandidate_width(workdir, capsys):
    root, c = workdir
    code = main(["eval", *c, "--data", str(root / "pack"),
                 "--wab", str(root / "wab.ckpt"), "--width", "0.65",
                 "--out", str(root / "nope")])
    assert code == 2
    assert "candidate" in capsys.readouterr().err


def test_eval_width_and_ws_are_exclusive(workdir, capsys):
    root, c = workdir
    with pytest.raises(SystemExit) as exc:
        main(["eval", *c, "--data", str(root / "pack"),
              "--wab", str(root / "wab.ckpt"),
              "--width", "0.6", "--ws", str(root / "ws.ckpt"),
              "--out", str(root / "nope")])
    assert exc.value.code == 2


def test_sweep_t_csv(workdir):
    root, c = workdir
    code = main(["sweep-t", *c, "--data", str(root / "pack"),
                 "--wab", str(root / "wab.ckpt"), "--targets", "0.7,1.0",
                 "--out", str(root / "sweep.csv")])
    assert code == 0
    lines = (root / "sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 3  # header + one row per target
    assert lines[0].startswith("target,")


def test_export_ppm(workdir):
    root, c = workdir
    code = main(["export-ppm", *c, "--data", str(root / "pack"),
                 "--which", "degraded", "--out", str(root / "ppm")])
    assert code == 0
    files = sorted((root / "ppm").glob("*.ppm"))
    assert len(files) == 12


def test_verify_suite_passes(capsys):
    assert main(["verify", "--suite", "loss"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_verify_mutated_prefix_fails(capsys):
    assert main(["verify", "--suite", "prefix", "--mutate"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_train_ws_requires_wab_checkpoint(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    main(["synth", "--config", str(cfg), "--out", str(tmp_path / "pack")])
    code = main(["train-ws", "--config", str(cfg), "--data", str(tmp_path / "pack"),
                 "--wab", str(tmp_path / "missing.ckpt"),
                 "--out", str(tmp_path / "ws.ckpt")])
    assert code == 2
    assert "train-wab" in capsys.readouterr().err


def test_seed_is_required_without_config(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path / "pack")])
    assert code == 2
    assert "seed" in capsys.readouterr().err.lower()


def test_seed_flag_overrides_config(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    assert main(["synth", "--config", str(cfg), "--seed", "123",
                 "--out", str(tmp_path / "pack")]) == 0
    manifest = json.loads((tmp_path / "pack" / "manifest.json").read_text())
    assert manifest["seed"] == 123


def test_missing_out_is_an_error(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    assert main(["synth", "--config", str(cfg)]) == 2
    assert "--out" in capsys.readouterr().err


def test_unknown_task_name_fails(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    code = main(["synth", "--config", str(cfg), "--tasks", "noise25,sleet",
                 "--out", str(tmp_path / "pack")])
    assert code == 2
    assert "sleet" in capsys.readouterr().err


def test_determinism_across_cli_runs(tmp_path):
    """Same config, separate invocations: identical checkpoint bytes."""
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    blobs = []
    for run in ("a", "b"):
        d = tmp_path / run
        main(["synth", "--config", str(cfg), "--out", str(d / "pack")])
        main(["train-wab", "--config", str(cfg), "--data", str(d / "pack"),
              "--out", str(d / "wab.ckpt")])
        blobs.append((d / "wab.ckpt").read_bytes())
    assert blobs[0] == blobs[1]
