"""Two-process training orchestration.

Each step runs phase D (one adaptive-moment update of the discriminators on
detached generator outputs) followed by phase G (one combined backward pass
through the total objective, updating the shared mask learner and all three
generators). The shared mask learner accumulates gradients from both the
paired and unpaired branch in the single phase-G backward.

Checkpoints are a single zip archive of named ``.npy`` arrays plus a
``meta.json`` record {format_version, config, epoch, global_step}.
"""

import io
import json
import warnings
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import (extract_paired_patches, extract_unpaired_patches,
                   load_paired_dataset, load_unpaired_dataset, mixed_loader,
                   save_image)
from .inference import Derainer, IdentityDerainer
from .losses import (LossBreakdown, LossWeights, cycle_loss, gen_adv_loss,
                     disc_loss, perceptual_loss, ssim_loss, supervised_loss,
                     total_loss, tv_loss, unsupervised_loss)
from .networks import (PARAM_GROUPS, DerainModel, FeatureExtractor,
                       ModelConfig)

ADAM_BETAS = (0.5, 0.999)
CHECKPOINT_FORMAT_VERSION = 1


class NonFiniteLossError(RuntimeError):
    """A loss term or parameter went non-finite; the offending update was
    skipped with parameters of that phase untouched."""


class CheckpointError(RuntimeError):
    pass


def _strict_fields(cls, d: dict, where: str) -> dict:
    unknown = sorted(set(d) - set(cls.__dataclass_fields__))
    if unknown:
        raise ValueError(f"{where}: unknown key '{unknown[0]}'")
    return d


@dataclass(frozen=True)
class Ablations:
    """Loss/module switches for the ablation modes."""
    use_perceptual: bool = True
    use_tv: bool = True
    use_paired_disc: bool = True
    use_unsupervised: bool = True

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "Ablations":
        return cls(**_strict_fields(cls, d, "ablations"))


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters.

    The supervised and unsupervised processes carry separate learning rates;
    the shared mask learner trains at the supervised rate unless `lr_shared`
    overrides it. Rates hold steady until `decay_start_epoch`, then decay
    linearly to zero at `epochs`.
    """
    epochs: int = 200
    batch_size: int = 4
    lr_super: float = 1e-4
    lr_unsup: float = 1e-3
    lr_shared: float | None = None
    decay_start_epoch: int = 100
    patch: int = 100
    stride: int = 80
    seed: int = 0
    checkpoint_every: int = 10
    backbone: str = "vgg16"
    perceptual_layer: str = "relu2_2"
    backbone_seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    ablations: Ablations = field(default_factory=Ablations)

    def __post_init__(self):
        if not (0 < self.decay_start_epoch <= self.epochs):
            raise ValueError("need 0 < decay_start_epoch <= epochs")
        if self.lr_super <= 0 or self.lr_unsup <= 0:
            raise ValueError("learning rates must be > 0")
        if self.lr_shared is not None and self.lr_shared <= 0:
            raise ValueError("lr_shared must be > 0 when set")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patch < 1 or self.stride < 1:
            raise ValueError("patch and stride must be >= 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.backbone not in ("vgg16", "surrogate", "identity"):
            raise ValueError(f"unknown backbone '{self.backbone}'")

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["weights"] = self.weights.to_dict()
        d["model"] = self.model.to_dict()
        d["ablations"] = self.ablations.to_dict()
        return d

    _INT_FIELDS = ("epochs", "batch_size", "decay_start_epoch", "patch",
                   "stride", "seed", "checkpoint_every", "backbone_seed")
    _FLOAT_FIELDS = ("lr_super", "lr_unsup", "lr_shared")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(_strict_fields(cls, d, "train config"))
        # YAML 1.1 reads bare scientific notation like 2e-3 as a string
        for k in cls._INT_FIELDS:
            if k in d:
                d[k] = int(d[k])
        for k in cls._FLOAT_FIELDS:
            if k in d and d[k] is not None:
                d[k] = float(d[k])
        if "weights" in d and isinstance(d["weights"], dict):
            w = _strict_fields(LossWeights, d["weights"], "weights")
            d["weights"] = LossWeights.from_dict(
                {k: float(v) for k, v in w.items()})
        if "model" in d and isinstance(d["model"], dict):
            m = _strict_fields(ModelConfig, d["model"], "model")
            d["model"] = ModelConfig.from_dict({k: int(v) for k, v in m.items()})
        if "ablations" in d and isinstance(d["ablations"], dict):
            d["ablations"] = Ablations.from_dict(d["ablations"])
        return cls(**d)


@dataclass
class TrainState:
    """Everything needed to continue or evaluate a run."""
    model: DerainModel
    optimizers: dict
    epoch: int = 0
    global_step: int = 0
    rng_state: torch.Tensor | None = None


def lr_schedule(epoch: int, base_lr: float, cfg: TrainConfig) -> float:
    """Constant until decay_start_epoch, then linear to zero at `epochs`."""
    if epoch < cfg.decay_start_epoch:
        return base_lr
    span = cfg.epochs - cfg.decay_start_epoch
    if span <= 0:
        return 0.0 if epoch >= cfg.epochs else base_lr
    return base_lr * max(0, cfg.epochs - epoch) / span


def build_backbone(cfg: TrainConfig) -> FeatureExtractor:
    return FeatureExtractor(cfg.backbone, cfg.perceptual_layer, cfg.backbone_seed)


def build_optimizers(model: DerainModel, cfg: TrainConfig) -> dict:
    """One Adam per role; the shared mask learner sits in the supervised
    generator optimizer (its own param group, so lr_shared can differ)."""
    lr_shared = cfg.lr_shared if cfg.lr_shared is not None else cfg.lr_super
    opts = {
        "g_super": torch.optim.Adam(
            [{"params": list(model.gen_syn.parameters()), "lr": cfg.lr_super},
             {"params": list(model.mask_learner.parameters()), "lr": lr_shared}],
            lr=cfg.lr_super, betas=ADAM_BETAS),
        "g_unsup": torch.optim.Adam(
            [{"params": list(model.gen_real.parameters()), "lr": cfg.lr_unsup},
             {"params": list(model.rerainer.parameters()), "lr": cfg.lr_unsup}],
            lr=cfg.lr_unsup, betas=ADAM_BETAS),
        "d_syn": torch.optim.Adam(model.disc_syn.parameters(),
                                  lr=cfg.lr_super, betas=ADAM_BETAS),
        "d_pair": torch.optim.Adam(model.disc_pair.parameters(),
                                   lr=cfg.lr_super, betas=ADAM_BETAS),
        "d_real": torch.optim.Adam(model.disc_real.parameters(),
                                   lr=cfg.lr_unsup, betas=ADAM_BETAS),
    }
    for opt in opts.values():
        for group in opt.param_groups:
            group["base_lr"] = group["lr"]
    return opts


class Trainer:
    """Owns the model, the five optimizers and the step/epoch counters."""

    # objective term order doubles as the non-finite reporting order
    TERM_ORDER = ("adv_super", "adv_pair", "per_super", "ssim", "super_total",
                  "adv_unsup", "cc", "per_unsup", "tv", "unsup_total", "total")

    def __init__(self, model: DerainModel, cfg: TrainConfig, backbone=None,
                 optimizers: dict | None = None, epoch: int = 0, global_step: int = 0):
        self.model = model
        self.cfg = cfg
        self._dtype = next(model.parameters()).dtype
        self.backbone = (backbone if backbone is not None else build_backbone(cfg))
        self.backbone = self.backbone.to(self._dtype)
        self.optimizers = optimizers if optimizers is not None else build_optimizers(model, cfg)
        self.epoch = epoch
        self.global_step = global_step

    @property
    def state(self) -> TrainState:
        return TrainState(self.model, self.optimizers, self.epoch,
                          self.global_step, torch.get_rng_state())

    @classmethod
    def from_state(cls, state: TrainState, cfg: TrainConfig, backbone=None) -> "Trainer":
        return cls(state.model, cfg, backbone, optimizers=state.optimizers,
                   epoch=state.epoch, global_step=state.global_step)

    def set_epoch(self, epoch: int):
        """Advance the epoch counter and apply the decayed learning rates."""
        self.epoch = epoch
        factor = lr_schedule(epoch, 1.0, self.cfg)
        for opt in self.optimizers.values():
            for group in opt.param_groups:
                group["lr"] = group["base_lr"] * factor

    # -- batches ------------------------------------------------------------

    def _pair(self, batch):
        a, b = batch
        return self._tensor(a), self._tensor(b)

    def _tensor(self, arr):
        if torch.is_tensor(arr):
            return arr.to(self._dtype)
        return torch.from_numpy(np.array(arr, dtype=np.float32)).to(self._dtype)

    # -- phase D ------------------------------------------------------------

    def discriminator_phase(self, paired_batch, unpaired_batch) -> dict:
        """One adaptive-moment step per enabled discriminator, on generator
        outputs detached from the generators. Checks all terms finite before
        touching any parameter."""
        abl = self.cfg.ablations
        x_s, y_s = self._pair(paired_batch)
        with torch.no_grad():
            y_s_fake = self.model.derain_syn(x_s)

        losses = {}
        losses["d_s"] = disc_loss(self.model.disc_syn(y_s),
                                  self.model.disc_syn(y_s_fake))
        if abl.use_paired_disc:
            losses["d_p"] = disc_loss(self.model.disc_pair(x_s, y_s),
                                      self.model.disc_pair(x_s, y_s_fake))
        if abl.use_unsupervised:
            if unpaired_batch is None:
                raise ValueError("unsupervised process is enabled but the "
                                 "unpaired batch is absent")
            x_r, y_hat_r = self._pair(unpaired_batch)
            with torch.no_grad():
                y_r_fake = self.model.derain_real(x_r)
            losses["d_r"] = disc_loss(self.model.disc_real(y_hat_r),
                                      self.model.disc_real(y_r_fake))
        self._check_finite(losses)

        steps = {"d_s": "d_syn", "d_p": "d_pair", "d_r": "d_real"}
        for term, opt_name in steps.items():
            if term not in losses:
                continue
            opt = self.optimizers[opt_name]
            opt.zero_grad(set_to_none=True)
            losses[term].backward()
            opt.step()
        return {k: float(v.detach()) for k, v in losses.items()}

    # -- phase G ------------------------------------------------------------

    def objective(self, paired_batch, unpaired_batch) -> dict:
        """Forward both branches and assemble every generator-side loss term
        (graph attached). Disabled ablation terms enter as exact zeros."""
        w, abl = self.cfg.weights, self.cfg.ablations
        x_s, y_s = self._pair(paired_batch)
        zero = x_s.new_zeros(())

        m_s = self.model.mask_learner(x_s)
        y_s_t = self.model.gen_syn(m_s, x_s)
        adv_syn = gen_adv_loss(self.model.disc_syn(y_s_t))
        adv_pair = (gen_adv_loss(self.model.disc_pair(x_s, y_s_t))
                    if abl.use_paired_disc else zero)
        adv_super = adv_syn + adv_pair
        per_super = (perceptual_loss(self.backbone, y_s, y_s_t)
                     if abl.use_perceptual else zero)
        ssim_term = ssim_loss(y_s, y_s_t)
        super_total = supervised_loss(adv_super, per_super, ssim_term, w)

        if abl.use_unsupervised:
            if unpaired_batch is None:
                raise ValueError("unsupervised process is enabled but the "
                                 "unpaired batch is absent")
            x_r, _ = self._pair(unpaired_batch)
            m_r = self.model.mask_learner(x_r)
            y_r_t = self.model.gen_real(m_r, x_r)
            x_r_back = self.model.rerainer(y_r_t)
            adv_unsup = gen_adv_loss(self.model.disc_real(y_r_t))
            cc = cycle_loss(x_r, x_r_back)
            per_unsup = (perceptual_loss(self.backbone, x_r, y_r_t)
                         if abl.use_perceptual else zero)
            tv = tv_loss(y_r_t) if abl.use_tv else zero
            unsup_total = unsupervised_loss(adv_unsup, cc, per_unsup, tv, w)
        else:
            adv_unsup = cc = per_unsup = tv = unsup_total = zero

        return {"adv_super": adv_super, "adv_pair": adv_pair,
                "per_super": per_super, "ssim": ssim_term,
                "super_total": super_total, "adv_unsup": adv_unsup, "cc": cc,
                "per_unsup": per_unsup, "tv": tv, "unsup_total": unsup_total,
                "total": total_loss(super_total, unsup_total, w)}

    def generator_phase(self, paired_batch, unpaired_batch) -> dict:
        """One combined backward through the total objective; the shared mask
        learner receives the sum of both branches' gradients."""
        terms = self.objective(paired_batch, unpaired_batch)
        self._check_finite(terms)
        self.optimizers["g_super"].zero_grad(set_to_none=True)
        self.optimizers["g_unsup"].zero_grad(set_to_none=True)
        terms["total"].backward()
        self.optimizers["g_super"].step()
        if self.cfg.ablations.use_unsupervised:
            self.optimizers["g_unsup"].step()
        return {k: float(v.detach()) for k, v in terms.items()}

    # -- full step ----------------------------------------------------------

    def train_step(self, paired_batch, unpaired_batch=None) -> LossBreakdown:
        """Phase D then phase G. A non-finite term aborts the current phase
        with its parameters untouched (a phase-G abort leaves the already
        valid phase-D update in place)."""
        d_terms = self.discriminator_phase(paired_batch, unpaired_batch)
        g_terms = self.generator_phase(paired_batch, unpaired_batch)
        self.global_step += 1
        self._assert_params_finite()
        return self._breakdown(d_terms, g_terms)

    def _breakdown(self, d_terms: dict, g_terms: dict) -> LossBreakdown:
        # totals recomputed in float64 from the logged per-term values, so a
        # log replay against the configured weights reproduces them exactly
        w = self.cfg.weights
        sup = (w.adv_super * g_terms["adv_super"] + w.per_super * g_terms["per_super"]
               + w.ssim * g_terms["ssim"])
        uns = (w.adv_unsup * g_terms["adv_unsup"] + w.cc * g_terms["cc"]
               + w.per_unsup * g_terms["per_unsup"] + w.tv * g_terms["tv"])
        return LossBreakdown(
            adv_super=g_terms["adv_super"], adv_pair=g_terms["adv_pair"],
            per_super=g_terms["per_super"], ssim=g_terms["ssim"],
            super_total=sup, adv_unsup=g_terms["adv_unsup"], cc=g_terms["cc"],
            per_unsup=g_terms["per_unsup"], tv=g_terms["tv"], unsup_total=uns,
            total=sup + w.unsup * uns, d_s=d_terms.get("d_s", 0.0),
            d_r=d_terms.get("d_r", 0.0), d_p=d_terms.get("d_p", 0.0))

    def _check_finite(self, terms: dict):
        order = [t for t in self.TERM_ORDER if t in terms] + \
                [t for t in terms if t not in self.TERM_ORDER]
        for name in order:
            if not bool(torch.isfinite(terms[name].detach()).all()):
                raise NonFiniteLossError(
                    f"non-finite loss term '{name}' at step {self.global_step}")

    def _assert_params_finite(self):
        for name, p in self.model.named_parameters():
            if not bool(torch.isfinite(p).all()):
                raise NonFiniteLossError(
                    f"parameter '{name}' became non-finite after step {self.global_step}")


# ---------------------------------------------------------------------------
# full training loop
# ---------------------------------------------------------------------------

def _dump_samples(trainer: Trainer, paired_patches, unpaired_patches, out_dir: Path):
    """Side-by-side PNG panels: input | derained | reference-if-any."""
    out_dir.mkdir(parents=True, exist_ok=True)
    model, depth = trainer.model, trainer.cfg.model.unet_depth
    derain_syn = Derainer(model.mask_learner, model.gen_syn, depth, trainer._dtype)
    for i, s in enumerate(paired_patches[:2]):
        panel = np.concatenate([s.rainy, derain_syn(s.rainy), s.clean], axis=2)
        save_image(out_dir / f"paired_{i}.png", panel)
    if unpaired_patches:
        derain_real = Derainer(model.mask_learner, model.gen_real, depth, trainer._dtype)
        s = unpaired_patches[0]
        panel = np.concatenate([s.rainy, derain_real(s.rainy)], axis=2)
        save_image(out_dir / "real_0.png", panel)


def train(cfg: TrainConfig, paired_root, unpaired_root=None, out_dir="runs/latest") -> Path:
    """Run the full two-process optimization; returns the final checkpoint path.

    Writes a JSON-lines loss log (one record per step), a checkpoint plus
    sample derained panels every `checkpoint_every` epochs, and the final
    checkpoint. All data and model randomness derives from cfg.seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paired = load_paired_dataset(paired_root)
    paired_patches = extract_paired_patches(paired, cfg.patch, cfg.stride)
    if not paired_patches:
        raise ValueError("paired dataset produced no patches at "
                         f"patch={cfg.patch}, stride={cfg.stride}")
    unpaired_patches = []
    if cfg.ablations.use_unsupervised:
        if unpaired_root is None:
            raise ValueError("unsupervised process is enabled but no unpaired "
                             "dataset root was given")
        clean_pool = [s.clean for s in paired]
        unpaired = load_unpaired_dataset(unpaired_root, clean_pool, cfg.seed)
        unpaired_patches = extract_unpaired_patches(unpaired, cfg.patch, cfg.stride)
        if not unpaired_patches:
            raise ValueError("unpaired dataset produced no patches at "
                             f"patch={cfg.patch}, stride={cfg.stride}")

    torch.manual_seed(cfg.seed)
    model = DerainModel(cfg.model)
    trainer = Trainer(model, cfg)

    with open(out_dir / "loss_log.jsonl", "w") as log:
        for epoch in range(cfg.epochs):
            trainer.set_epoch(epoch)
            loader = mixed_loader(paired_patches, unpaired_patches,
                                  cfg.batch_size, cfg.seed, epoch)
            for paired_b, unpaired_b in loader:
                try:
                    bd = trainer.train_step(paired_b, unpaired_b)
                except NonFiniteLossError as err:
                    warnings.warn(f"skipping step: {err}")
                    continue
                record = {"step": trainer.global_step, "epoch": epoch, **bd.to_dict()}
                log.write(json.dumps(record) + "\n")
            if (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(trainer.state, cfg,
                                out_dir / f"checkpoint_epoch{epoch + 1:04d}.zip")
                _dump_samples(trainer, paired_patches, unpaired_patches,
                              out_dir / "samples" / f"epoch_{epoch + 1}")

    final = out_dir / "checkpoint_final.zip"
    save_checkpoint(trainer.state, cfg, final)
    return final


# ---------------------------------------------------------------------------
# checkpoints: zip of named .npy arrays + meta.json
# ---------------------------------------------------------------------------

def _write_array(zf: zipfile.ZipFile, name: str, arr: np.ndarray):
    buf = io.BytesIO()
    np.save(buf, arr)
    zf.writestr(name, buf.getvalue())


def _read_array(zf: zipfile.ZipFile, name: str) -> np.ndarray:
    try:
        payload = zf.read(name)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing array '{name}'") from exc
    return np.load(io.BytesIO(payload))


def save_checkpoint(state: TrainState, cfg: TrainConfig, path) -> None:
    """Persist parameters, optimizer moments, counters and RNG state."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format_version": CHECKPOINT_FORMAT_VERSION, "kind": "train",
            "config": cfg.to_dict(), "epoch": state.epoch,
            "global_step": state.global_step}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=2))
        for group in PARAM_GROUPS:
            module = state.model.group(group)
            for pname, tensor in module.state_dict().items():
                _write_array(zf, f"params/{group}/{pname}.npy",
                             tensor.detach().cpu().numpy())
        for opt_name, opt in state.optimizers.items():
            for gi, pgroup in enumerate(opt.param_groups):
                for pi, p in enumerate(pgroup["params"]):
                    st = opt.state.get(p)
                    if not st:
                        continue
                    base = f"opt/{opt_name}/{gi}/{pi}"
                    _write_array(zf, f"{base}/step.npy",
                                 np.asarray(float(st["step"]), dtype=np.float64))
                    _write_array(zf, f"{base}/exp_avg.npy",
                                 st["exp_avg"].detach().cpu().numpy())
                    _write_array(zf, f"{base}/exp_avg_sq.npy",
                                 st["exp_avg_sq"].detach().cpu().numpy())
        rng = state.rng_state if state.rng_state is not None else torch.get_rng_state()
        _write_array(zf, "rng/torch.npy", rng.cpu().numpy())


def _open_checkpoint(path) -> zipfile.ZipFile:
    try:
        return zipfile.ZipFile(path)
    except FileNotFoundError:
        raise
    except (zipfile.BadZipFile, OSError) as exc:
        raise CheckpointError(f"corrupt checkpoint archive '{path}': {exc}") from exc


def _read_meta(zf: zipfile.ZipFile, path) -> dict:
    try:
        meta = json.loads(zf.read("meta.json"))
    except (KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint archive '{path}': {exc}") from exc
    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} does not match this build's "
            f"version {CHECKPOINT_FORMAT_VERSION}")
    return meta


def load_checkpoint(path):
    """Rebuild (TrainState, TrainConfig) from an archive, bitwise."""
    with _open_checkpoint(path) as zf:
        meta = _read_meta(zf, path)
        if meta.get("kind") != "train":
            raise CheckpointError(
                f"checkpoint kind '{meta.get('kind')}' holds no training state")
        cfg = TrainConfig.from_dict(meta["config"])
        model = DerainModel(cfg.model)
        for group in PARAM_GROUPS:
            module = model.group(group)
            loaded = {}
            for pname, tensor in module.state_dict().items():
                arr = _read_array(zf, f"params/{group}/{pname}.npy")
                if tuple(arr.shape) != tuple(tensor.shape):
                    raise CheckpointError(
                        f"shape mismatch for parameter '{group}.{pname}': "
                        f"checkpoint has {tuple(arr.shape)}, model expects "
                        f"{tuple(tensor.shape)}")
                loaded[pname] = torch.from_numpy(arr.copy())
            module.load_state_dict(loaded)
        optimizers = build_optimizers(model, cfg)
        names = set(zf.namelist())
        for opt_name, opt in optimizers.items():
            for gi, pgroup in enumerate(opt.param_groups):
                for pi, p in enumerate(pgroup["params"]):
                    base = f"opt/{opt_name}/{gi}/{pi}"
                    if f"{base}/step.npy" not in names:
                        continue
                    opt.state[p] = {
                        "step": torch.tensor(float(_read_array(zf, f"{base}/step.npy"))),
                        "exp_avg": torch.from_numpy(
                            _read_array(zf, f"{base}/exp_avg.npy").copy()),
                        "exp_avg_sq": torch.from_numpy(
                            _read_array(zf, f"{base}/exp_avg_sq.npy").copy()),
                    }
        rng = torch.from_numpy(_read_array(zf, "rng/torch.npy").copy())
        state = TrainState(model, optimizers, meta["epoch"], meta["global_step"], rng)
        return state, cfg


def write_identity_checkpoint(path) -> None:
    """Stub checkpoint whose derainer is the identity; for tests and plumbing."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format_version": CHECKPOINT_FORMAT_VERSION, "kind": "identity"}
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("meta.json", json.dumps(meta))


def load_derainer(path, generator: str = "syn"):
    """Build the inference callable from a checkpoint.

    `generator` picks the branch: "syn" (the paired-branch generator, the
    one evaluated against ground truth) or "real" (the unpaired branch).
    """
    with _open_checkpoint(path) as zf:
        meta = _read_meta(zf, path)
    if meta.get("kind") == "identity":
        return IdentityDerainer()
    state, cfg = load_checkpoint(path)
    state.model.eval()
    if generator not in ("syn", "real"):
        raise ValueError(f"unknown generator '{generator}', expected 'syn' or 'real'")
    gen = state.model.gen_syn if generator == "syn" else state.model.gen_real
    return Derainer(state.model.mask_learner, gen, cfg.model.unet_depth)
