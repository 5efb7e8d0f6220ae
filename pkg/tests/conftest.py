"""Shared fixtures and helpers.

The toy corpus and the 200-step toy training run are session-scoped: the
end-to-end acceptance criterion and the CLI tests share one run.
"""

import time

import numpy as np
import pytest
import torch

from unrain.data import write_toy_corpus
from unrain.networks import ModelConfig
from unrain.trainer import TrainConfig, train

TOY_SEED = 7


def rand_image(rng, c=3, h=16, w=16, lo=0.0, hi=1.0) -> np.ndarray:
    return rng.uniform(lo, hi, size=(c, h, w)).astype(np.float64)


def rand_batch(rng, b=2, c=3, h=8, w=8, lo=0.0, hi=1.0, dtype=torch.float64) -> torch.Tensor:
    return torch.from_numpy(rng.uniform(lo, hi, size=(b, c, h, w))).to(dtype)


def randomize_module(module, seed, std=0.1):
    """Put parameters in generic position; fresh U-nets have zero-initialized
    output heads, which blocks gradient flow through downstream consumers."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.normal_(0.0, std, generator=gen)


def param_hashes(model) -> dict:
    """One fingerprint per parameter group, for partition checks."""
    import hashlib
    from unrain.networks import PARAM_GROUPS
    out = {}
    for group in PARAM_GROUPS:
        h = hashlib.sha256()
        for _, p in sorted(model.group(group).state_dict().items()):
            h.update(p.detach().cpu().numpy().tobytes())
        out[group] = h.hexdigest()
    return out


def toy_train_config() -> TrainConfig:
    """Desk-scale recipe: 8 paired + 4 pseudo-real 64x64 patches, batch 4,
    2 steps/epoch x 100 epochs = 200 steps."""
    return TrainConfig(epochs=100, batch_size=4, lr_super=2e-3, lr_unsup=1e-3,
                       decay_start_epoch=50, patch=64, stride=64, seed=3,
                       checkpoint_every=50, backbone="surrogate",
                       model=ModelConfig.desk())


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy_corpus")
    info = write_toy_corpus(root, count=8, size=64, seed=TOY_SEED,
                            domain_gap=True, real_count=4)
    return {"paired_root": root, "unpaired_root": root / "real", "info": info}


@pytest.fixture(scope="session")
def toy_run(toy_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("toy_run")
    cfg = toy_train_config()
    start = time.monotonic()
    final = train(cfg, toy_corpus["paired_root"], toy_corpus["unpaired_root"], out)
    elapsed = time.monotonic() - start
    return {"cfg": cfg, "checkpoint": final, "out_dir": out,
            "elapsed_s": elapsed, **toy_corpus}
