"""The full loss stack.

Every term is a pure function of its tensors: adversarial scores enter as
sigmoid maps (clamped before logs), images as [B, C, H, W] tensors in [0, 1].
All terms are differentiable and dtype/device agnostic.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

# sigmoid scores are clamped to [EPS, 1-EPS] before any log
SCORE_EPS = 1e-7

SSIM_C1 = 0.01 ** 2  # (K1 * dynamic_range)^2 with K1 = 0.01, range 1
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossWeights:
    """Tradeoff scalars of the two branch objectives and their combination.

    Defaults: every supervised-branch weight and the branch-mixing weight are
    1; the unsupervised branch uses (adv, cycle, perceptual, tv) =
    (1.5e-5, 10, 1, 100).
    """
    adv_super: float = 1.0
    per_super: float = 1.0
    ssim: float = 1.0
    adv_unsup: float = 1.5e-5
    cc: float = 10.0
    per_unsup: float = 1.0
    tv: float = 100.0
    unsup: float = 1.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"LossWeights.{name} must be >= 0")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass
class LossBreakdown:
    """Per-term scalars for one training step.

    `adv_super` already contains the paired-discriminator generator term
    `adv_pair` additively; `ssim` is the (negative) SSIM loss value. The
    `d_*` entries are the discriminator-side losses of phase D.
    """
    adv_super: float = 0.0
    adv_pair: float = 0.0
    per_super: float = 0.0
    ssim: float = 0.0
    super_total: float = 0.0
    adv_unsup: float = 0.0
    cc: float = 0.0
    per_unsup: float = 0.0
    tv: float = 0.0
    unsup_total: float = 0.0
    total: float = 0.0
    d_s: float = 0.0
    d_r: float = 0.0
    d_p: float = 0.0

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def _as_batch(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:
        return x[None]
    if x.dim() != 4:
        raise ValueError(f"expected [B, C, H, W] or [C, H, W], got shape {tuple(x.shape)}")
    return x


def _gaussian_kernel(win: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(win, dtype=dtype, device=device) - (win - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(x: torch.Tensor, y: torch.Tensor, win_size: int = 11,
         sigma: float = 1.5) -> torch.Tensor:
    """Structural similarity, averaged over windows, channels and batch.

    Local statistics are Gaussian-weighted (default 11x11, sigma 1.5) over
    valid window positions only; constants C1 = 0.01^2 and C2 = 0.03^2
    assume dynamic range 1. For images smaller than the window the window
    shrinks to the largest odd size that fits.
    """
    x, y = _as_batch(x), _as_batch(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    _, c, h, w = x.shape
    win = min(win_size, h, w)
    if win % 2 == 0:
        win -= 1
    kernel = _gaussian_kernel(win, sigma, x.dtype, x.device)
    kernel = kernel[None, None].repeat(c, 1, 1, 1)

    def filt(t):
        return F.conv2d(t, kernel, groups=c)

    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x * mu_x
    var_y = filt(y * y) - mu_y * mu_y
    cov = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return (num / den).mean()


def ssim_loss(y: torch.Tensor, y_tilde: torch.Tensor) -> torch.Tensor:
    """Negative mean SSIM: minimizing it maximizes structural similarity."""
    return -ssim(y, y_tilde)


def perceptual_loss(backbone, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean squared distance between frozen backbone features of a and b."""
    a, b = _as_batch(a), _as_batch(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (backbone(a) - backbone(b)).pow(2).mean()


def cycle_loss(x: torch.Tensor, x_back: torch.Tensor) -> torch.Tensor:
    """Mean absolute reconstruction error of the rainy image after the cycle."""
    x, x_back = _as_batch(x), _as_batch(x_back)
    if x.shape != x_back.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_back.shape)}")
    return (x - x_back).abs().mean()


def tv_loss(y: torch.Tensor) -> torch.Tensor:
    """Anisotropic total variation, normalized by element count per sample.

    Sum of |y[i+1, j] - y[i, j]| + |y[i, j+1] - y[i, j]| over all channels,
    divided by C*H*W, then averaged over the batch.
    """
    y = _as_batch(y)
    _, c, h, w = y.shape
    dv = (y[..., 1:, :] - y[..., :-1, :]).abs().sum(dim=(1, 2, 3))
    dh = (y[..., :, 1:] - y[..., :, :-1]).abs().sum(dim=(1, 2, 3))
    return ((dv + dh) / (c * h * w)).mean()


def _as_score_list(scores) -> list:
    if torch.is_tensor(scores):
        return [scores]
    return list(scores)


def _clamp_scores(s: torch.Tensor) -> torch.Tensor:
    return s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)


def disc_loss(real_scores, fake_scores) -> torch.Tensor:
    """Discriminator objective (negated for minimization).

    Per scale: mean of -log(real) plus mean of -log(1 - fake); scales are
    averaged, not summed, so the value is independent of the scale count.
    """
    real_scores, fake_scores = _as_score_list(real_scores), _as_score_list(fake_scores)
    if len(real_scores) != len(fake_scores):
        raise ValueError(f"scale count mismatch: {len(real_scores)} real vs "
                         f"{len(fake_scores)} fake score maps")
    per_scale = [(-torch.log(_clamp_scores(r))).mean() +
                 (-torch.log(1.0 - _clamp_scores(f))).mean()
                 for r, f in zip(real_scores, fake_scores)]
    return torch.stack(per_scale).mean()


def gen_adv_loss(fake_scores) -> torch.Tensor:
    """Generator adversarial term, non-saturating form: mean of -log(fake)."""
    fake_scores = _as_score_list(fake_scores)
    per_scale = [(-torch.log(_clamp_scores(f))).mean() for f in fake_scores]
    return torch.stack(per_scale).mean()


def _require_finite(**terms):
    for name, value in terms.items():
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(v):
            raise ValueError(f"non-finite loss term '{name}': {v}")


def supervised_loss(adv_super, per_super, ssim_term, weights: LossWeights):
    """Paired-branch objective: weighted adversarial + perceptual + SSIM.

    `adv_super` is expected to already include the paired-discriminator
    generator term with implicit weight 1.
    """
    _require_finite(adv_super=adv_super, per_super=per_super, ssim=ssim_term)
    return (weights.adv_super * adv_super + weights.per_super * per_super
            + weights.ssim * ssim_term)


def unsupervised_loss(adv_unsup, cc, per_unsup, tv, weights: LossWeights):
    """Unpaired-branch objective: weighted adversarial + cycle + perceptual + TV."""
    _require_finite(adv_unsup=adv_unsup, cc=cc, per_unsup=per_unsup, tv=tv)
    return (weights.adv_unsup * adv_unsup + weights.cc * cc
            + weights.per_unsup * per_unsup + weights.tv * tv)


def total_loss(super_total, unsup_total, weights: LossWeights):
    """Combined objective: supervised branch plus weighted unsupervised branch."""
    _require_finite(super_total=super_total, unsup_total=unsup_total)
    return super_total + weights.unsup * unsup_total
