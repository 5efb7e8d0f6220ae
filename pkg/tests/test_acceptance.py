"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete. The toy end-to-end run is shared through the
session-scoped ``toy_run`` fixture; its wall time counts toward criterion 9's
budget.
"""

import json
import math
import time

import numpy as np
import torch

from conftest import param_hashes, rand_batch, randomize_module, toy_train_config
from unrain.data import load_paired_dataset
from unrain.losses import (LossWeights, cycle_loss, disc_loss, gen_adv_loss,
                           perceptual_loss, ssim_loss, supervised_loss,
                           total_loss, tv_loss, unsupervised_loss)
from unrain.metrics import evaluate_dataset, input_baseline, psnr, ssim
from unrain.networks import (DISCRIMINATOR_GROUPS, GENERATOR_GROUPS,
                             DerainModel, FeatureExtractor, ModelConfig)
from unrain.trainer import (Trainer, load_checkpoint, load_derainer,
                            save_checkpoint, train)

PASS = "[criterion {}] PASS - {}"


# ---------------------------------------------------------------------------
# independent references
# ---------------------------------------------------------------------------

def _psnr_ref(x, y):
    total, count = 0.0, 0
    for idx in np.ndindex(x.shape):
        total += (float(x[idx]) - float(y[idx])) ** 2
        count += 1
    mse = total / count
    return 99.0 if mse == 0 else min(99.0, 10 * math.log10(1 / mse))


def _ssim_ref(x, y, win=11, sigma=1.5):
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    coords = np.arange(win) - (win - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    w2 = np.outer(g, g)
    vals = []
    for ch in range(x.shape[0]):
        for i in range(x.shape[1] - win + 1):
            for j in range(x.shape[2] - win + 1):
                px, py = x[ch, i:i + win, j:j + win], y[ch, i:i + win, j:j + win]
                mx, my = (w2 * px).sum(), (w2 * py).sum()
                vx = (w2 * px * px).sum() - mx * mx
                vy = (w2 * py * py).sum() - my * my
                cxy = (w2 * px * py).sum() - mx * my
                vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                            / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_criterion_1_metric_oracles():
    start = time.monotonic()
    rng = np.random.default_rng(100)
    for _ in range(50):
        x = rng.uniform(0, 1, size=(3, 16, 16))
        y = np.clip(x + rng.normal(0, rng.uniform(0.02, 0.3), size=x.shape), 0, 1)
        assert abs(psnr(x, y) - _psnr_ref(x, y)) < 1e-6
        assert abs(ssim(x, y) - _ssim_ref(x, y)) < 1e-6
    x = rng.uniform(0, 1, size=(3, 16, 16))
    assert abs(ssim(x, x) - 1.0) < 1e-9
    const = ssim(np.full((3, 16, 16), 0.5), np.full((3, 16, 16), 0.25))
    closed_form = (2 * 0.5 * 0.25 + 1e-4) / (0.25 + 0.0625 + 1e-4)
    assert abs(const - closed_form) < 1e-9
    assert abs(closed_form - 0.80006) < 1e-5
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(PASS.format(1, f"psnr/ssim match nested-loop references ({elapsed:.1f}s)"))


def test_criterion_2_loss_term_oracles():
    start = time.monotonic()
    rng = np.random.default_rng(101)
    a = rand_batch(rng, b=4, h=8, w=8)
    b = rand_batch(rng, b=4, h=8, w=8)

    cyc_ref = float(np.mean(np.abs(a.numpy() - b.numpy())))
    assert abs(float(cycle_loss(a, b)) - cyc_ref) < 1e-7

    y = a.numpy()
    tv_ref = np.mean([
        sum(abs(y[n, c, i + 1, j] - y[n, c, i, j])
            for c in range(3) for i in range(7) for j in range(8)) / y[n].size
        + sum(abs(y[n, c, i, j + 1] - y[n, c, i, j])
              for c in range(3) for i in range(8) for j in range(7)) / y[n].size
        for n in range(4)])
    assert abs(float(tv_loss(a)) - tv_ref) < 1e-7

    fe = FeatureExtractor("surrogate", seed=5).double()
    with torch.no_grad():
        fa, fb = fe(a).numpy(), fe(b).numpy()
    per_ref = float(np.mean((fa - fb) ** 2))
    assert abs(float(perceptual_loss(fe, a, b)) - per_ref) < 1e-7

    reals = [torch.from_numpy(rng.uniform(0.05, 0.95, size=(4, 1, s, s)))
             for s in (8, 4)]
    fakes = [torch.from_numpy(rng.uniform(0.05, 0.95, size=(4, 1, s, s)))
             for s in (8, 4)]
    disc_ref = float(np.mean([np.mean(-np.log(r.numpy())) +
                              np.mean(-np.log(1 - f.numpy()))
                              for r, f in zip(reals, fakes)]))
    assert abs(float(disc_loss(reals, fakes)) - disc_ref) < 1e-7
    gen_ref = float(np.mean([np.mean(-np.log(f.numpy())) for f in fakes]))
    assert abs(float(gen_adv_loss(fakes)) - gen_ref) < 1e-7

    # analytic zero/constant cases
    assert float(cycle_loss(a, a)) == 0.0
    assert float(tv_loss(torch.full((1, 3, 8, 8), 0.4, dtype=torch.float64))) == 0.0
    assert float(perceptual_loss(fe, a, a)) == 0.0
    half = [torch.full((2, 1, 4, 4), 0.5, dtype=torch.float64)]
    assert abs(float(disc_loss(half, half)) - 2 * math.log(2)) < 1e-12
    assert abs(float(gen_adv_loss(half)) - math.log(2)) < 1e-12
    step = torch.tensor([[[[0.0, 1.0], [0.0, 1.0]]]], dtype=torch.float64)
    assert abs(float(tv_loss(step)) - 0.5) < 1e-15
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    print(PASS.format(2, f"loss terms match brute-force recomputation ({elapsed:.1f}s)"))


def test_criterion_3_gradient_consistency():
    start = time.monotonic()
    rng = np.random.default_rng(102)

    def fd_check(f, x, eps=1e-5, tol=1e-4):
        xg = x.clone().requires_grad_(True)
        f(xg).backward()
        an = xg.grad.detach()
        fd = torch.zeros_like(x)
        flat, fdflat = x.reshape(-1), fd.reshape(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                hi = float(f(x))
                flat[i] = orig - eps
                lo = float(f(x))
                flat[i] = orig
                fdflat[i] = (hi - lo) / (2 * eps)
        rel = float((fd - an).norm()) / max(float(an.norm()), 1e-12)
        assert rel < tol, rel

    img = lambda lo=0.05, hi=0.95: torch.from_numpy(
        rng.uniform(lo, hi, size=(1, 3, 4, 4)))
    ref = img()
    fd_check(lambda t: ssim_loss(ref, t), img())
    fe = FeatureExtractor("surrogate", seed=6).double()
    fd_check(lambda t: perceptual_loss(fe, t, ref), img())
    cyc_ref = img(0.05, 0.4)  # far side: the FD step never crosses an L1 kink
    fd_check(lambda t: cycle_loss(cyc_ref, t), img(0.6, 0.95))
    y = img()
    assert float((y[..., 1:, :] - y[..., :-1, :]).abs().min()) > 1e-3
    assert float((y[..., :, 1:] - y[..., :, :-1]).abs().min()) > 1e-3
    fd_check(tv_loss, y)
    # scores kept away from the 1e-7 clamp boundaries
    scores = lambda: torch.from_numpy(rng.uniform(0.1, 0.9, size=(1, 1, 3, 3)))
    fixed_r, fixed_f = scores(), scores()
    fd_check(lambda t: disc_loss([t], [fixed_f]), scores())
    fd_check(lambda t: disc_loss([fixed_r], [t]), scores())
    fd_check(lambda t: gen_adv_loss([t]), scores())
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    print(PASS.format(3, f"analytic gradients match central differences ({elapsed:.1f}s)"))


def test_criterion_4_composite_linearity():
    rng = np.random.default_rng(103)
    draws = [LossWeights(*rng.uniform(0, 5, size=8)) for _ in range(99)]
    draws.append(LossWeights())  # the published weight vector
    assert (draws[-1].adv_super, draws[-1].per_super, draws[-1].ssim) == (1, 1, 1)
    assert (draws[-1].adv_unsup, draws[-1].cc, draws[-1].per_unsup,
            draws[-1].tv) == (1.5e-5, 10, 1, 100)
    assert draws[-1].unsup == 1
    for w in draws:
        t = rng.uniform(-2, 2, size=4)
        sup = supervised_loss(t[0], t[1], t[2], w)
        assert abs(sup - (w.adv_super * t[0] + w.per_super * t[1]
                          + w.ssim * t[2])) < 1e-12
        uns = unsupervised_loss(t[0], t[1], t[2], t[3], w)
        assert abs(uns - (w.adv_unsup * t[0] + w.cc * t[1]
                          + w.per_unsup * t[2] + w.tv * t[3])) < 1e-12
        assert abs(total_loss(sup, uns, w) - (sup + w.unsup * uns)) < 1e-12
    print(PASS.format(4, "composite losses reproduce weighted-sum oracles"))


def test_criterion_5_architecture_contracts():
    start = time.monotonic()
    torch.manual_seed(104)
    desk = ModelConfig.desk()
    assert desk.unet_depth == 2 and desk.unet_base_channels == 16
    model = DerainModel(desk)
    x = torch.rand(2, 3, 96, 96)
    mask = model.mask_learner(x)
    assert mask.shape == (2, 1, 96, 96)
    assert mask.min() > 0.0 and mask.max() < 1.0
    out = model.gen_syn(mask, x)
    assert out.shape == x.shape
    back = model.rerainer(out)
    assert back.shape == x.shape
    scores = model.disc_syn(x)
    assert len(scores) == 3
    sizes = [s.shape[-2:] for s in scores]
    assert sizes[0] > sizes[1] > sizes[2]
    for s in scores:
        assert s.min() > 0.0 and s.max() < 1.0
    assert model.disc_pair.scorer.convs[0].in_channels == 6
    pair = model.disc_pair(x, out)
    assert pair.min() > 0.0 and pair.max() < 1.0
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    print(PASS.format(5, f"mask/generator/discriminator contracts hold ({elapsed:.1f}s)"))


def _toy_batches(toy_corpus, n=2, dtype=torch.float64):
    samples = load_paired_dataset(toy_corpus["paired_root"])
    rainy = torch.from_numpy(np.stack([s.rainy for s in samples[:n]])).to(dtype)
    clean = torch.from_numpy(np.stack([s.clean for s in samples[:n]])).to(dtype)
    from unrain.data import load_unpaired_dataset
    real = load_unpaired_dataset(toy_corpus["unpaired_root"],
                                 [s.clean for s in samples], seed=0)
    r_rainy = torch.from_numpy(np.stack([s.rainy for s in real[:n]])).to(dtype)
    r_fake = torch.from_numpy(np.stack([s.fake_label for s in real[:n]])).to(dtype)
    return (rainy, clean), (r_rainy, r_fake)


def test_criterion_6_shared_learner_gradient_sum(toy_corpus):
    start = time.monotonic()
    cfg = toy_train_config()
    torch.manual_seed(105)
    model = DerainModel(cfg.model)
    randomize_module(model, seed=105)  # fresh zero heads would mute a branch
    model = model.double()
    backbone = FeatureExtractor("surrogate", seed=cfg.backbone_seed).double()
    trainer = Trainer(model, cfg, backbone)
    paired, unpaired = _toy_batches(toy_corpus)
    terms = trainer.objective(paired, unpaired)
    params = list(model.mask_learner.parameters())

    def grads(scalar):
        gs = torch.autograd.grad(scalar, params, retain_graph=True,
                                 allow_unused=True)
        return [g if g is not None else torch.zeros_like(p)
                for g, p in zip(gs, params)]

    g_sup = grads(terms["super_total"])
    g_uns = grads(cfg.weights.unsup * terms["unsup_total"])
    g_all = grads(terms["total"])
    assert sum(float(g.abs().sum()) for g in g_sup) > 0
    assert sum(float(g.abs().sum()) for g in g_uns) > 0
    num = sum(float(((s + u) - a).norm() ** 2)
              for s, u, a in zip(g_sup, g_uns, g_all))
    den = sum(float(a.norm() ** 2) for a in g_all)
    rel = (num / den) ** 0.5
    assert rel < 1e-6, rel
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    print(PASS.format(6, f"shared-learner gradient = branch sum, rel err {rel:.1e} "
                         f"({elapsed:.1f}s)"))


def test_criterion_7_parameter_partition_hashing(toy_corpus):
    cfg = toy_train_config()
    torch.manual_seed(106)
    model = DerainModel(cfg.model)
    # generic position: fresh zero output heads would leave upstream
    # gradients exactly zero on the first step
    randomize_module(model, seed=106)
    trainer = Trainer(model, cfg)
    paired, unpaired = _toy_batches(toy_corpus, dtype=torch.float32)
    for step in range(10):
        before = param_hashes(model)
        trainer.discriminator_phase(paired, unpaired)
        mid = param_hashes(model)
        for g in GENERATOR_GROUPS:
            assert before[g] == mid[g], f"step {step}: phase D touched {g}"
        for g in DISCRIMINATOR_GROUPS:
            assert before[g] != mid[g], f"step {step}: phase D left {g} unchanged"
        trainer.generator_phase(paired, unpaired)
        after = param_hashes(model)
        for g in DISCRIMINATOR_GROUPS:
            assert mid[g] == after[g], f"step {step}: phase G touched {g}"
        for g in GENERATOR_GROUPS:
            assert mid[g] != after[g], f"step {step}: phase G left {g} unchanged"
    print(PASS.format(7, "phase D/G updates stay inside their parameter groups"))


def test_criterion_8_ablation_switches(toy_corpus):
    import dataclasses
    base = toy_train_config()
    paired, unpaired = _toy_batches(toy_corpus, dtype=torch.float32)

    def fresh(ablations):
        cfg = dataclasses.replace(base, ablations=ablations)
        torch.manual_seed(107)
        return Trainer(DerainModel(cfg.model), cfg)

    from unrain.trainer import Ablations
    tr = fresh(Ablations(use_unsupervised=False))
    bd = tr.train_step(paired, None)
    assert bd.total == bd.super_total
    assert bd.unsup_total == 0.0

    tr = fresh(Ablations(use_paired_disc=False))
    before = param_hashes(tr.model)["disc_pair"]
    for _ in range(2):
        bd = tr.train_step(paired, unpaired)
        assert bd.adv_pair == 0.0
    assert param_hashes(tr.model)["disc_pair"] == before

    tr = fresh(Ablations(use_perceptual=False, use_tv=False))
    bd = tr.train_step(paired, unpaired)
    assert bd.per_super == 0.0 and bd.per_unsup == 0.0 and bd.tv == 0.0
    print(PASS.format(8, "supervised-only / no-paired-disc / no-perceptual / "
                         "no-tv switches behave"))


def test_criterion_9_toy_end_to_end(toy_run, tmp_path):
    log_lines = [json.loads(l) for l in
                 (toy_run["out_dir"] / "loss_log.jsonl").read_text().splitlines()]
    assert len(log_lines) == 200  # 100 epochs x 2 steps
    for line in log_lines:
        for key, value in line.items():
            if isinstance(value, float):
                assert math.isfinite(value), f"step {line['step']}: {key}"

    baseline = input_baseline(toy_run["paired_root"])
    derainer = load_derainer(toy_run["checkpoint"])
    report = evaluate_dataset(derainer, toy_run["paired_root"])
    gain = report.mean_psnr_db - baseline.mean_psnr_db
    assert gain >= 2.0, f"PSNR gain {gain:.2f} dB < 2 dB"

    # same-seed rerun reproduces the final total loss
    start = time.monotonic()
    rerun_dir = tmp_path / "rerun"
    train(toy_run["cfg"], toy_run["paired_root"], toy_run["unpaired_root"],
          rerun_dir)
    rerun_elapsed = time.monotonic() - start
    rerun_lines = [json.loads(l) for l in
                   (rerun_dir / "loss_log.jsonl").read_text().splitlines()]
    assert abs(rerun_lines[-1]["total"] - log_lines[-1]["total"]) < 1e-6

    total_elapsed = toy_run["elapsed_s"] + rerun_elapsed
    assert total_elapsed < 600.0
    print(PASS.format(9, f"toy overfit +{gain:.2f} dB over the {baseline.mean_psnr_db:.2f} dB "
                         f"input baseline; deterministic rerun; "
                         f"{total_elapsed:.0f}s total"))


def test_criterion_10_checkpoint_round_trip(toy_corpus, tmp_path):
    cfg = toy_train_config()
    torch.manual_seed(108)
    trainer = Trainer(DerainModel(cfg.model), cfg)
    paired, unpaired = _toy_batches(toy_corpus, dtype=torch.float32)
    trainer.train_step(paired, unpaired)
    path = tmp_path / "ck.zip"
    save_checkpoint(trainer.state, cfg, path)
    state2, cfg2 = load_checkpoint(path)
    twin = Trainer.from_state(state2, cfg2, backbone=trainer.backbone)
    bd_a = trainer.train_step(paired, unpaired)
    bd_b = twin.train_step(paired, unpaired)
    assert bd_a.to_dict() == bd_b.to_dict()  # bitwise-equal floats
    print(PASS.format(10, "load(save(state)) reproduces the next step bitwise"))
