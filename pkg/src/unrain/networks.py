"""Learnable components.

One shared recurrent rain-mask learner feeds two U-net deraining generators
(one per data domain); a third generator re-synthesizes rain for the cycle
constraint. Real/fake judging is done by two multi-scale discriminators plus
a paired discriminator over (rainy, derained) concatenations. A frozen
feature backbone serves the perceptual loss.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for every network in the bundle."""
    mask_channels: int = 32
    mask_iterations: int = 4
    mask_blocks: int = 5
    unet_depth: int = 4
    unet_base_channels: int = 64
    disc_scales: int = 3
    disc_layers_per_scale: int = 5
    disc_base_channels: int = 64

    def __post_init__(self):
        for name in ("mask_channels", "mask_iterations", "mask_blocks", "unet_depth",
                     "unet_base_channels", "disc_scales", "disc_layers_per_scale",
                     "disc_base_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"ModelConfig.{name} must be >= 1")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @classmethod
    def desk(cls) -> "ModelConfig":
        """Small configuration for CPU-scale runs and tests."""
        return cls(mask_channels=8, mask_iterations=2, mask_blocks=2,
                   unet_depth=2, unet_base_channels=16,
                   disc_scales=3, disc_layers_per_scale=4, disc_base_channels=16)


# ---------------------------------------------------------------------------
# rain mask learner
# ---------------------------------------------------------------------------

class ConvLSTMCell(nn.Module):
    """Convolutional LSTM cell carrying the mask learner's memory across
    refinement steps."""

    def __init__(self, channels: int):
        super().__init__()
        self.gates = nn.Conv2d(2 * channels, 4 * channels, 3, padding=1)

    def forward(self, x, state):
        h, c = state
        i, f, o, g = torch.chunk(self.gates(torch.cat([x, h], dim=1)), 4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, (h, c)


class ResidualBlock(nn.Module):
    """Conv-ReLU-Conv-ReLU unit with a residual connection."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1), nn.ReLU(inplace=True))

    def forward(self, x):
        return x + self.body(x)


class RainMaskLearner(nn.Module):
    """Recurrent single-channel rain-mask estimator.

    Each refinement step concatenates the image with the previous mask
    (initialized to 0.5) and pushes it through residual Conv-ReLU-Conv-ReLU
    units with one convolutional LSTM cell in the middle of the stack; a
    final sigmoid emits the refined mask. The last step's mask is returned.
    """

    def __init__(self, channels: int = 32, blocks: int = 5, iterations: int = 4):
        super().__init__()
        if iterations < 1:
            raise ValueError("iterations must be >= 1")
        if blocks < 1:
            raise ValueError("blocks must be >= 1")
        self.channels = channels
        self.iterations = iterations
        head = (blocks + 1) // 2
        self.conv_in = nn.Sequential(nn.Conv2d(4, channels, 3, padding=1),
                                     nn.ReLU(inplace=True))
        self.blocks_pre = nn.Sequential(*[ResidualBlock(channels) for _ in range(head)])
        self.cell = ConvLSTMCell(channels)
        self.blocks_post = nn.Sequential(*[ResidualBlock(channels)
                                           for _ in range(blocks - head)])
        self.conv_out = nn.Conv2d(channels, 1, 3, padding=1)

    def forward(self, x, iterations: int | None = None):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected [B, 3, H, W] input, got shape {tuple(x.shape)}")
        steps = self.iterations if iterations is None else iterations
        b, _, h, w = x.shape
        mask = x.new_full((b, 1, h, w), 0.5)
        state = (x.new_zeros(b, self.channels, h, w),
                 x.new_zeros(b, self.channels, h, w))
        for _ in range(steps):
            feat = self.conv_in(torch.cat([x, mask], dim=1))
            feat = self.blocks_pre(feat)
            feat, state = self.cell(feat, state)
            feat = self.blocks_post(feat)
            mask = torch.sigmoid(self.conv_out(feat))
        return mask


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

class DoubleConv(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1), nn.ReLU(inplace=True))

    def forward(self, x):
        return self.body(x)


class UNet(nn.Module):
    """Encoder-decoder with skip connections and a sigmoid output head.

    Spatial dims must be divisible by 2**depth; callers pad reflectively and
    crop back (see inference helpers). The output head is zero-initialized,
    so a freshly constructed network emits a constant 0.5.
    """

    def __init__(self, in_channels: int, out_channels: int = 3,
                 depth: int = 4, base_channels: int = 64):
        super().__init__()
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        ch = [base_channels * 2 ** i for i in range(depth + 1)]
        self.enc = nn.ModuleList()
        prev = in_channels
        for i in range(depth):
            self.enc.append(DoubleConv(prev, ch[i]))
            prev = ch[i]
        self.bottleneck = DoubleConv(ch[depth - 1], ch[depth])
        self.up = nn.ModuleList([nn.ConvTranspose2d(ch[i + 1], ch[i], 2, stride=2)
                                 for i in reversed(range(depth))])
        self.dec = nn.ModuleList([DoubleConv(2 * ch[i], ch[i])
                                  for i in reversed(range(depth))])
        self.head = nn.Conv2d(ch[0], out_channels, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x):
        div = 2 ** self.depth
        if x.shape[-2] % div or x.shape[-1] % div:
            raise ValueError(
                f"spatial dims {tuple(x.shape[-2:])} not divisible by 2**depth = {div}; "
                "reflect-pad the input and crop the output back")
        skips = []
        for enc in self.enc:
            x = enc(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.up, self.dec, reversed(skips)):
            x = dec(torch.cat([skip, up(x)], dim=1))
        return torch.sigmoid(self.head(x))


class DerainGenerator(nn.Module):
    """U-net conditioned on a rain mask: derained = G(mask, rainy)."""

    def __init__(self, depth: int = 4, base_channels: int = 64):
        super().__init__()
        self.unet = UNet(4, 3, depth, base_channels)

    def forward(self, mask, x):
        if mask.dim() != 4 or mask.shape[1] != 1:
            raise ValueError(f"mask must be [B, 1, H, W], got shape {tuple(mask.shape)}")
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"image must be [B, 3, H, W], got shape {tuple(x.shape)}")
        if mask.shape[-2:] != x.shape[-2:] or mask.shape[0] != x.shape[0]:
            raise ValueError(
                f"mask {tuple(mask.shape)} and image {tuple(x.shape)} are misaligned")
        return self.unet(torch.cat([mask, x], dim=1))


class ReRainer(nn.Module):
    """Rain re-synthesizer closing the cycle: x_back = R(derained).

    Owns a private mask head rather than sharing the deraining mask learner;
    rain addition and rain removal are inverse objectives.
    """

    def __init__(self, mask_channels: int = 32, mask_blocks: int = 5,
                 mask_iterations: int = 4, depth: int = 4, base_channels: int = 64):
        super().__init__()
        self.mask_head = RainMaskLearner(mask_channels, mask_blocks, mask_iterations)
        self.unet = UNet(4, 3, depth, base_channels)

    def forward(self, y):
        if y.dim() != 4 or y.shape[1] != 3:
            raise ValueError(f"expected [B, 3, H, W] input, got shape {tuple(y.shape)}")
        mask = self.mask_head(y)
        return self.unet(torch.cat([mask, y], dim=1))


# ---------------------------------------------------------------------------
# discriminators
# ---------------------------------------------------------------------------

def min_disc_input(scales: int, layers: int) -> int:
    """Smallest admissible input side: every stride-2 conv must see >= 2 px
    at the coarsest pyramid level (sizes follow the ceil-division chain)."""
    return (2 ** (layers - 1) + 1) * 2 ** (scales - 1)


class PatchScorer(nn.Module):
    """Stack of stride-2 kernel-4 convolutions ending in a sigmoid score map.

    Odd inputs are replicate-padded to even before each conv, so every layer
    halves the size by ceil division.
    """

    def __init__(self, in_channels: int, layers: int = 5, base_channels: int = 64):
        super().__init__()
        self.layers = layers
        convs = []
        cin = in_channels
        for i in range(layers - 1):
            cout = min(base_channels * 2 ** i, base_channels * 8)
            convs.append(nn.Conv2d(cin, cout, 4, stride=2, padding=1))
            cin = cout
        convs.append(nn.Conv2d(cin, 1, 4, stride=2, padding=1))
        self.convs = nn.ModuleList(convs)

    def forward(self, x):
        if min(x.shape[-2:]) < min_disc_input(1, self.layers):
            raise ValueError(
                f"input {tuple(x.shape[-2:])} too small for {self.layers} stride-2 "
                f"layers; minimum admissible side is {min_disc_input(1, self.layers)}")
        for i, conv in enumerate(self.convs):
            x = F.pad(x, (0, x.shape[-1] % 2, 0, x.shape[-2] % 2), mode="replicate")
            x = conv(x)
            if i < len(self.convs) - 1:
                x = F.leaky_relu(x, 0.2)
        return torch.sigmoid(x)


class MultiScaleDiscriminator(nn.Module):
    """Judges an image pyramid: factor-2 average-pooled copies, one conv
    scorer per scale, one sigmoid map per scale."""

    def __init__(self, scales: int = 3, layers: int = 5, base_channels: int = 64,
                 in_channels: int = 3):
        super().__init__()
        if scales < 1:
            raise ValueError("scales must be >= 1")
        self.scales = scales
        self.layers = layers
        self.scorers = nn.ModuleList([PatchScorer(in_channels, layers, base_channels)
                                      for _ in range(scales)])

    def forward(self, x) -> list:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected [B, 3, H, W] input, got shape {tuple(x.shape)}")
        need = min_disc_input(self.scales, self.layers)
        if min(x.shape[-2:]) < need:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} too small for {self.scales} scales of "
                f"{self.layers} stride-2 layers; minimum admissible side is {need}")
        scores = []
        for k, scorer in enumerate(self.scorers):
            scores.append(scorer(x))
            if k < self.scales - 1:
                x = F.avg_pool2d(x, 2, ceil_mode=True)
        return scores


class PairedDiscriminator(nn.Module):
    """Single-scale scorer over channel-concatenated (rainy, derained) pairs,
    distinguishing real pairs from fake ones."""

    def __init__(self, layers: int = 5, base_channels: int = 64):
        super().__init__()
        self.scorer = PatchScorer(6, layers, base_channels)

    def forward(self, rainy, derained):
        if rainy.shape != derained.shape:
            raise ValueError(
                f"pair shapes differ: {tuple(rainy.shape)} vs {tuple(derained.shape)}")
        if rainy.dim() != 4 or rainy.shape[1] != 3:
            raise ValueError(f"expected [B, 3, H, W] inputs, got {tuple(rainy.shape)}")
        return self.scorer(torch.cat([rainy, derained], dim=1))


# ---------------------------------------------------------------------------
# perceptual feature backbone
# ---------------------------------------------------------------------------

VGG16_LAYER_SLICES = {"relu1_2": 4, "relu2_2": 9, "relu3_3": 16, "relu4_3": 23}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class BackboneUnavailableError(RuntimeError):
    pass


class FeatureExtractor(nn.Module):
    """Frozen backbone for the perceptual loss. Never updated by training.

    kind="vgg16": ImageNet-pretrained VGG-16 truncated at `layer` (default
    relu2_2, i.e. the last activation of the second conv block). Needs the
    torchvision weight download.

    kind="surrogate": fixed-seed random conv stack with the same geometry as
    the default vgg16 cut; fully hermetic, intended for tests and desk runs.

    kind="identity": features are the raw pixels.
    """

    def __init__(self, kind: str = "vgg16", layer: str = "relu2_2",
                 seed: int = 0, pretrained: bool = True):
        super().__init__()
        self.kind = kind
        if kind == "identity":
            self.body = nn.Identity()
        elif kind == "surrogate":
            self.body = self._build_surrogate(seed)
        elif kind == "vgg16":
            if layer not in VGG16_LAYER_SLICES:
                raise ValueError(f"unknown vgg16 layer '{layer}'; "
                                 f"choose from {sorted(VGG16_LAYER_SLICES)}")
            try:
                import torchvision.models as tvm
                weights = tvm.VGG16_Weights.IMAGENET1K_V1 if pretrained else None
                vgg = tvm.vgg16(weights=weights)
            except Exception as exc:
                raise BackboneUnavailableError(
                    f"pretrained vgg16 backbone unavailable ({exc}); construct the "
                    "extractor with kind='surrogate' for a hermetic fixed-seed backbone"
                ) from exc
            self.body = vgg.features[:VGG16_LAYER_SLICES[layer]]
            self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
            self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        else:
            raise ValueError(f"unknown backbone kind '{kind}'")
        for p in self.parameters():
            p.requires_grad_(False)
        super().train(False)

    @staticmethod
    def _build_surrogate(seed: int) -> nn.Sequential:
        gen = torch.Generator().manual_seed(seed)
        plan = [(3, 64), (64, 64), "pool", (64, 128), (128, 128)]
        layers = []
        for item in plan:
            if item == "pool":
                layers.append(nn.AvgPool2d(2, ceil_mode=True))
                continue
            cin, cout = item
            conv = nn.Conv2d(cin, cout, 3, padding=1)
            with torch.no_grad():
                std = (2.0 / (9 * cin)) ** 0.5
                conv.weight.normal_(0.0, std, generator=gen)
                conv.bias.zero_()
            layers += [conv, nn.ReLU()]
        return nn.Sequential(*layers)

    def train(self, mode: bool = True):
        return super().train(False)  # stays frozen

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected [B, 3, H, W] input, got shape {tuple(x.shape)}")
        if self.kind == "vgg16":
            x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        return self.body(x)


# ---------------------------------------------------------------------------
# full bundle
# ---------------------------------------------------------------------------

GENERATOR_GROUPS = ("mask_learner", "gen_syn", "gen_real", "rerainer")
DISCRIMINATOR_GROUPS = ("disc_syn", "disc_real", "disc_pair")
PARAM_GROUPS = GENERATOR_GROUPS + DISCRIMINATOR_GROUPS


class DerainModel(nn.Module):
    """Every trainable piece in one bundle.

    `mask_learner` is a single parameter set invoked from both the paired
    and the unpaired training branch; `rerainer` carries its own private
    mask head.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.mask_learner = RainMaskLearner(config.mask_channels, config.mask_blocks,
                                            config.mask_iterations)
        self.gen_syn = DerainGenerator(config.unet_depth, config.unet_base_channels)
        self.gen_real = DerainGenerator(config.unet_depth, config.unet_base_channels)
        self.rerainer = ReRainer(config.mask_channels, config.mask_blocks,
                                 config.mask_iterations, config.unet_depth,
                                 config.unet_base_channels)
        self.disc_syn = MultiScaleDiscriminator(config.disc_scales,
                                                config.disc_layers_per_scale,
                                                config.disc_base_channels)
        self.disc_real = MultiScaleDiscriminator(config.disc_scales,
                                                 config.disc_layers_per_scale,
                                                 config.disc_base_channels)
        self.disc_pair = PairedDiscriminator(config.disc_layers_per_scale,
                                             config.disc_base_channels)

    def group(self, name: str) -> nn.Module:
        if name not in PARAM_GROUPS:
            raise KeyError(f"unknown parameter group '{name}'")
        return getattr(self, name)

    def derain_syn(self, x):
        """Supervised-branch forward: mask then U-net."""
        return self.gen_syn(self.mask_learner(x), x)

    def derain_real(self, x):
        """Unsupervised-branch forward through the shared mask learner."""
        return self.gen_real(self.mask_learner(x), x)
