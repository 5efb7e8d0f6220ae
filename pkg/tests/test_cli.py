import json
import subprocess
import sys

import numpy as np
import yaml

from unrain.cli import load_run_config, main
from unrain.data import load_image, load_paired_dataset, save_image
from unrain.metrics import psnr, read_report
from unrain.trainer import TrainConfig, write_identity_checkpoint


def run(*argv):
    return main(list(argv))


# ---------------------------------------------------------------------------
# gen-toy
# ---------------------------------------------------------------------------

def test_gen_toy_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gen-toy", "--out", str(a), "--count", "3", "--size", "32",
               "--seed", "7", "--domain-gap") == 0
    assert run("gen-toy", "--out", str(b), "--count", "3", "--size", "32",
               "--seed", "7", "--domain-gap") == 0
    for rel in ["rain/000.png", "clean/001.png", "real/000.png"]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_gen_toy_idempotent_in_place(tmp_path):
    out = tmp_path / "toy"
    args = ("gen-toy", "--out", str(out), "--count", "2", "--size", "24",
            "--seed", "5")
    assert run(*args) == 0
    first = {p.name: p.read_bytes() for p in (out / "rain").iterdir()}
    assert run(*args) == 0  # overwrite, never append
    second = {p.name: p.read_bytes() for p in (out / "rain").iterdir()}
    assert first == second


def test_gen_toy_count_zero(tmp_path):
    out = tmp_path / "empty"
    assert run("gen-toy", "--out", str(out), "--count", "0") == 0
    assert (out / "toy_config.json").exists()
    assert not any((out / "rain").iterdir())


def test_gen_toy_pairs_additive_after_quantization(tmp_path):
    out = tmp_path / "toy"
    assert run("gen-toy", "--out", str(out), "--count", "2", "--size", "32",
               "--seed", "1") == 0
    for s in load_paired_dataset(out):
        assert (s.rainy >= s.clean - 1.0 / 255).all()


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TINY_TRAIN = {
    "epochs": 1, "batch_size": 2, "decay_start_epoch": 1, "patch": 32,
    "stride": 32, "seed": 0, "backbone": "surrogate", "checkpoint_every": 1,
    "model": {"mask_channels": 4, "mask_iterations": 1, "mask_blocks": 1,
              "unet_depth": 2, "unet_base_channels": 8, "disc_scales": 2,
              "disc_layers_per_scale": 4, "disc_base_channels": 8},
}


def _toy_data(tmp_path):
    out = tmp_path / "data"
    if not out.exists():
        run("gen-toy", "--out", str(out), "--count", "2", "--size", "32",
            "--seed", "3", "--domain-gap", "--real-count", "2")
    return out


def test_train_missing_paired_root(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"train": TINY_TRAIN}))
    assert run("train", "--config", str(cfg), "--out", str(tmp_path / "run")) == 1
    assert "paired_root" in capsys.readouterr().err


def test_train_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"train": {"epoochs": 3}}))
    assert run("train", "--config", str(cfg), "--paired-root", "x",
               "--out", str(tmp_path / "run")) == 1
    assert "epoochs" in capsys.readouterr().err


def test_train_yaml_syntax_error_reports_line(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("train:\n  epochs: [unclosed\n")
    assert run("train", "--config", str(cfg), "--paired-root", "x",
               "--out", str(tmp_path / "run")) == 1
    assert "line" in capsys.readouterr().err


def test_train_end_to_end_with_ablation_flag(tmp_path, capsys):
    data = _toy_data(tmp_path)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"train": TINY_TRAIN}))
    out = tmp_path / "run"
    code = run("train", "--config", str(cfg), "--paired-root", str(data),
               "--unpaired-root", str(data / "real"), "--out", str(out),
               "--ablation", "no-paired-disc")
    assert code == 0, capsys.readouterr().err
    effective = yaml.safe_load((out / "effective_config.yaml").read_text())
    assert effective["train"]["ablations"]["use_paired_disc"] is False
    assert (out / "checkpoint_final.zip").exists()
    # the echoed effective config parses back to the identical TrainConfig
    reparsed = load_run_config(out / "effective_config.yaml")
    assert reparsed["train"] == TrainConfig.from_dict(effective["train"])
    assert reparsed["data"]["paired_root"] == str(data)


def test_effective_config_reproduces_the_run(tmp_path):
    data = _toy_data(tmp_path)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"train": TINY_TRAIN}))
    out_a = tmp_path / "run_a"
    assert run("train", "--config", str(cfg), "--paired-root", str(data),
               "--unpaired-root", str(data / "real"), "--out", str(out_a)) == 0
    out_b = tmp_path / "run_b"
    assert run("train", "--config", str(out_a / "effective_config.yaml"),
               "--out", str(out_b)) == 0
    assert (out_a / "loss_log.jsonl").read_text() == \
        (out_b / "loss_log.jsonl").read_text()


def test_train_via_manifest(tmp_path):
    data = _toy_data(tmp_path)
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"paired_root": str(data),
                                    "unpaired_root": str(data / "real"),
                                    "seed": 4}))
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"train": TINY_TRAIN}))
    out = tmp_path / "run_manifest"
    assert run("train", "--config", str(cfg), "--manifest", str(manifest),
               "--out", str(out)) == 0
    effective = yaml.safe_load((out / "effective_config.yaml").read_text())
    assert effective["train"]["seed"] == 4


def test_train_unknown_ablation(tmp_path, capsys):
    assert run("train", "--paired-root", "x", "--out", str(tmp_path),
               "--ablation", "no-such-thing") == 1
    assert "no-such-thing" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# derain
# ---------------------------------------------------------------------------

def test_derain_identity_stub_round_trip(tmp_path):
    stub = tmp_path / "stub.zip"
    write_identity_checkpoint(stub)
    in_dir = tmp_path / "in"
    in_dir.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        save_image(in_dir / f"{i}.png",
                   rng.uniform(0, 1, size=(3, 16, 12)).astype(np.float32))
    out_dir = tmp_path / "out"
    assert run("derain", "--checkpoint", str(stub), "--input", str(in_dir),
               "--output", str(out_dir)) == 0
    outs = sorted(out_dir.iterdir())
    assert [p.name for p in outs] == ["0.png", "1.png", "2.png"]
    for p in outs:
        # identity stub: output equals input exactly (inputs are 8-bit data)
        assert np.array_equal(load_image(p), load_image(in_dir / p.name))


def test_derain_tolerates_undecodable_files(tmp_path, capsys):
    stub = tmp_path / "stub.zip"
    write_identity_checkpoint(stub)
    in_dir = tmp_path / "in"
    in_dir.mkdir()
    save_image(in_dir / "good.png",
               np.random.default_rng(1).uniform(0, 1, (3, 8, 8)).astype(np.float32))
    (in_dir / "bad.png").write_bytes(b"garbage")
    out_dir = tmp_path / "out"
    assert run("derain", "--checkpoint", str(stub), "--input", str(in_dir),
               "--output", str(out_dir)) == 1
    assert (out_dir / "good.png").exists()
    assert not (out_dir / "bad.png").exists()
    assert "bad.png" in capsys.readouterr().err


def test_derain_missing_checkpoint(tmp_path, capsys):
    assert run("derain", "--checkpoint", str(tmp_path / "nope.zip"),
               "--input", str(tmp_path), "--output", str(tmp_path / "o")) == 1


def test_derain_trained_toy_checkpoint_beats_baseline(tmp_path, toy_run):
    out_dir = tmp_path / "derained"
    code = run("derain", "--checkpoint", str(toy_run["checkpoint"]),
               "--input", str(toy_run["paired_root"] / "rain"),
               "--output", str(out_dir))
    assert code == 0
    gains_model, gains_input = [], []
    for s in load_paired_dataset(toy_run["paired_root"]):
        derained = load_image(out_dir / s.name)
        gains_model.append(psnr(derained, s.clean))
        gains_input.append(psnr(s.rainy, s.clean))
    assert np.mean(gains_model) > np.mean(gains_input)


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def test_evaluate_identity_stub_report_and_print(tmp_path, capsys):
    stub = tmp_path / "stub.zip"
    write_identity_checkpoint(stub)
    data = tmp_path / "data"
    rng = np.random.default_rng(2)
    (data / "rain").mkdir(parents=True)
    (data / "clean").mkdir(parents=True)
    for i in range(2):
        img = rng.uniform(0, 1, size=(3, 16, 16)).astype(np.float32)
        save_image(data / "rain" / f"{i}.png", img)
        save_image(data / "clean" / f"{i}.png", img)
    report_path = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    code = run("evaluate", "--checkpoint", str(stub), "--test-root", str(data),
               "--report", str(report_path), "--csv", str(csv_path),
               "--with-baseline")
    assert code == 0
    report = read_report(report_path)
    assert report.mean_psnr_db == 99.0 and abs(report.mean_ssim - 1.0) < 1e-9
    raw = json.loads(report_path.read_text())
    assert set(raw) == {"dataset_id", "checkpoint_id", "mean_psnr_db",
                        "mean_ssim", "per_image"}
    assert csv_path.exists()
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.strip()]
    assert any("model" in l and "99.00" in l for l in lines)
    assert any("input" in l for l in lines)  # baseline row printed too


def test_evaluate_unpaired_root_fails(tmp_path, capsys):
    stub = tmp_path / "stub.zip"
    write_identity_checkpoint(stub)
    flat = tmp_path / "flat"
    flat.mkdir()
    assert run("evaluate", "--checkpoint", str(stub), "--test-root", str(flat),
               "--report", str(tmp_path / "r.json")) == 1


# ---------------------------------------------------------------------------
# module entry point
# ---------------------------------------------------------------------------

def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "unrain", "gen-toy", "--out",
         str(tmp_path / "toy"), "--count", "1", "--size", "16"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "toy" / "toy_config.json").exists()
