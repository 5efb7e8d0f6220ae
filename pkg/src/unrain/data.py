"""Dataset loading, patch extraction, mixed batching and toy rain synthesis.

Images are float32 arrays shaped [channels, height, width] with values in
[0, 1]. Paired corpora live on disk as ``root/rain/*.png`` + ``root/clean/*.png``
with matching filenames; real (unpaired) corpora are a flat directory of
rainy images.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from skimage.draw import line_aa

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")

# Toy streak directions, degrees from vertical. The pseudo-real range is
# deliberately disjoint from the synthetic one so the two toy domains have a
# measurable statistical gap.
SYNTHETIC_ANGLE_RANGE = (-10.0, 10.0)
PSEUDO_REAL_ANGLE_RANGE = (20.0, 40.0)


# ---------------------------------------------------------------------------
# image I/O
# ---------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Decode an 8-bit RGB image file to float32 [3, H, W] in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot decode image file '{path}': {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1)) / 255.0


def save_image(path, image) -> None:
    """Quantize a [C, H, W] float image in [0, 1] to 8 bits and write it."""
    arr = np.clip(np.asarray(image, dtype=np.float32), 0.0, 1.0)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected [C, H, W] with 1 or 3 channels, got shape {arr.shape}")
    data = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    if data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(data).save(path)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _image_names(directory: Path) -> list[str]:
    return sorted(p.name for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


# ---------------------------------------------------------------------------
# sample types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairedSample:
    """A synthetic rainy image with its rain-free ground truth."""
    rainy: np.ndarray
    clean: np.ndarray
    name: str = ""


@dataclass(frozen=True)
class UnpairedSample:
    """A real rainy image plus a clean image borrowed from the synthetic
    pool to stand in for the missing ground truth (the fake label)."""
    rainy: np.ndarray
    fake_label: np.ndarray
    name: str = ""


@dataclass(frozen=True)
class ToyRainConfig:
    """Parameters of the additive toy rain renderer.

    Angles are degrees from vertical; lengths are pixels; intensities are
    peak streak brightness added on top of the clean background.
    """
    image_size: int = 64
    streak_count: int = 20
    angle_range: tuple = SYNTHETIC_ANGLE_RANGE
    streak_length: tuple = (10.0, 20.0)
    streak_intensity: tuple = (0.2, 0.8)
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 1:
            raise ValueError("image_size must be >= 1")
        if self.streak_count < 0:
            raise ValueError("streak_count must be >= 0")
        for field in ("angle_range", "streak_length", "streak_intensity"):
            lo, hi = getattr(self, field)
            if lo > hi:
                raise ValueError(f"{field}: lo={lo} exceeds hi={hi}")
        lo, hi = self.streak_intensity
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"streak_intensity must lie in [0, 1], got {self.streak_intensity}")

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "streak_count": self.streak_count,
            "angle_range": list(self.angle_range),
            "streak_length": list(self.streak_length),
            "streak_intensity": list(self.streak_intensity),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyRainConfig":
        kw = dict(d)
        for field in ("angle_range", "streak_length", "streak_intensity"):
            if field in kw:
                kw[field] = tuple(kw[field])
        return cls(**kw)


# ---------------------------------------------------------------------------
# dataset loaders
# ---------------------------------------------------------------------------

def load_paired_dataset(root) -> list[PairedSample]:
    """Load a paired corpus from ``root/rain`` + ``root/clean``.

    Pairing is by identical filename; samples come back in lexicographic
    filename order. A file present on one side only is an error naming the
    orphan.
    """
    root = Path(root)
    rain_dir, clean_dir = root / "rain", root / "clean"
    if not rain_dir.is_dir() or not clean_dir.is_dir():
        raise FileNotFoundError(
            f"paired dataset root '{root}' must contain rain/ and clean/ subdirectories")
    rain_names, clean_names = _image_names(rain_dir), _image_names(clean_dir)
    orphans = sorted(set(rain_names) ^ set(clean_names))
    if orphans:
        side = "clean/" if orphans[0] in rain_names else "rain/"
        raise FileNotFoundError(
            f"unmatched pair: '{orphans[0]}' has no counterpart in {side}")
    samples = []
    for name in rain_names:
        rainy = load_image(rain_dir / name)
        clean = load_image(clean_dir / name)
        if rainy.shape != clean.shape:
            raise ValueError(
                f"pair '{name}': rainy shape {rainy.shape} != clean shape {clean.shape}")
        samples.append(PairedSample(_freeze(rainy), _freeze(clean), name=name))
    return samples


def _fit_to_shape(image: np.ndarray, target_hw: tuple) -> np.ndarray:
    """Center-crop to the target aspect ratio, then resize bilinearly."""
    _, h, w = image.shape
    th, tw = target_hw
    if (h, w) == (th, tw):
        return image.copy()
    # largest centered window with aspect th:tw
    if h * tw >= w * th:
        crop_w, crop_h = w, max(1, int(round(w * th / tw)))
    else:
        crop_h, crop_w = h, max(1, int(round(h * tw / th)))
    top, left = (h - crop_h) // 2, (w - crop_w) // 2
    crop = image[:, top:top + crop_h, left:left + crop_w]
    t = torch.from_numpy(np.ascontiguousarray(crop))[None]
    out = F.interpolate(t, size=(th, tw), mode="bilinear", align_corners=False)
    return np.clip(out[0].numpy(), 0.0, 1.0)


def fake_label_indices(count: int, pool_size: int, seed: int) -> list[int]:
    """Seeded uniform draw of fake-label assignments from a clean pool."""
    if pool_size < 1:
        raise ValueError("clean pool must be nonempty")
    rng = np.random.default_rng(seed)
    return [int(rng.integers(pool_size)) for _ in range(count)]


def load_unpaired_dataset(rain_root, clean_pool, seed: int) -> list[UnpairedSample]:
    """Load a flat directory of real rainy images, assigning each a fake
    label drawn uniformly (seeded) from ``clean_pool`` and reshaped to match."""
    rain_root = Path(rain_root)
    if not rain_root.is_dir():
        raise FileNotFoundError(f"unpaired dataset root '{rain_root}' is not a directory")
    names = _image_names(rain_root)
    if not names:
        raise ValueError(f"unpaired dataset root '{rain_root}' contains no images")
    clean_pool = list(clean_pool)
    if not clean_pool:
        raise ValueError("clean_pool is empty; fake labels need at least one clean image")
    picks = fake_label_indices(len(names), len(clean_pool), seed)
    samples = []
    for name, pick in zip(names, picks):
        rainy = load_image(rain_root / name)
        fake = _fit_to_shape(np.asarray(clean_pool[pick], dtype=np.float32),
                             rainy.shape[1:])
        samples.append(UnpairedSample(_freeze(rainy), _freeze(fake), name=name))
    return samples


def load_manifest(path) -> dict:
    """Read a dataset-mixing manifest: JSON with keys paired_root,
    unpaired_root (optional) and seed."""
    with open(path) as fh:
        raw = json.load(fh)
    allowed = {"paired_root", "unpaired_root", "seed"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"manifest '{path}': unknown keys {sorted(unknown)}")
    if "paired_root" not in raw:
        raise ValueError(f"manifest '{path}': missing required key 'paired_root'")
    raw.setdefault("unpaired_root", None)
    raw.setdefault("seed", 0)
    return raw


# ---------------------------------------------------------------------------
# patches and batching
# ---------------------------------------------------------------------------

def extract_patches(image: np.ndarray, patch: int, stride: int) -> list[np.ndarray]:
    """Slice a [C, H, W] image into patch×patch crops at the given stride.

    Offsets along each axis are 0, stride, 2*stride, ... as long as the
    patch still fits; output order is row-major.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    _, h, w = image.shape
    if h < patch or w < patch:
        raise ValueError(f"image {h}x{w} is smaller than patch size {patch}")
    out = []
    for top in range(0, h - patch + 1, stride):
        for left in range(0, w - patch + 1, stride):
            out.append(image[:, top:top + patch, left:left + patch])
    return out


def patch_count(dim: int, patch: int, stride: int) -> int:
    """Closed-form patch count along one axis: floor((dim - patch)/stride) + 1."""
    return (dim - patch) // stride + 1


def extract_paired_patches(samples, patch: int, stride: int) -> list[PairedSample]:
    """Patch every paired sample; samples smaller than the patch are skipped
    with a warning (padding would inject fake borders into the GAN)."""
    out = []
    for s in samples:
        try:
            rp = extract_patches(s.rainy, patch, stride)
            cp = extract_patches(s.clean, patch, stride)
        except ValueError:
            warnings.warn(f"skipping '{s.name}': smaller than patch size {patch}")
            continue
        for i, (r, c) in enumerate(zip(rp, cp)):
            out.append(PairedSample(_freeze(r.copy()), _freeze(c.copy()),
                                    name=f"{s.name}#p{i}"))
    return out


def extract_unpaired_patches(samples, patch: int, stride: int) -> list[UnpairedSample]:
    """Same patch geometry as the paired stream, applied to real images."""
    out = []
    for s in samples:
        try:
            rp = extract_patches(s.rainy, patch, stride)
            fp = extract_patches(s.fake_label, patch, stride)
        except ValueError:
            warnings.warn(f"skipping '{s.name}': smaller than patch size {patch}")
            continue
        for i, (r, f) in enumerate(zip(rp, fp)):
            out.append(UnpairedSample(_freeze(r.copy()), _freeze(f.copy()),
                                      name=f"{s.name}#p{i}"))
    return out


def _stack(arrays) -> np.ndarray:
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise ValueError(f"cannot stack ragged batch, shapes {sorted(shapes)}")
    return np.stack(arrays).astype(np.float32)


def mixed_loader(paired, unpaired, batch_size: int, seed: int, epoch: int = 0):
    """Yield (paired batch, unpaired batch) steps for one epoch.

    One epoch is one shuffled pass over the paired stream; the unpaired
    stream cycles, reshuffled per cycle from the same seed, so it repeats
    within the epoch when shorter. With an empty unpaired stream the second
    element of every step is None (supervised-only mode). Batches are
    (rainy, clean) / (rainy, fake_label) tuples of [B, C, h, w] arrays.
    """
    paired = list(paired)
    unpaired = list(unpaired) if unpaired is not None else []
    if not paired:
        raise ValueError("paired stream is empty; the supervised process is mandatory")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")

    order = np.random.default_rng([seed, epoch]).permutation(len(paired))

    def unpaired_indices():
        cycle = 0
        while True:
            rng = np.random.default_rng([seed, epoch, cycle])
            yield from rng.permutation(len(unpaired))
            cycle += 1

    real_iter = unpaired_indices() if unpaired else None
    for start in range(0, len(paired), batch_size):
        idx = order[start:start + batch_size]
        paired_batch = (_stack([paired[i].rainy for i in idx]),
                        _stack([paired[i].clean for i in idx]))
        if real_iter is None:
            yield paired_batch, None
        else:
            ridx = [next(real_iter) for _ in range(len(idx))]
            unpaired_batch = (_stack([unpaired[i].rainy for i in ridx]),
                              _stack([unpaired[i].fake_label for i in ridx]))
            yield paired_batch, unpaired_batch


def steps_per_epoch(n_paired: int, batch_size: int) -> int:
    return (n_paired + batch_size - 1) // batch_size


# ---------------------------------------------------------------------------
# toy rain synthesis (additive model: rainy = clip(clean + streaks))
# ---------------------------------------------------------------------------

def generate_toy_rain(cfg: ToyRainConfig, clean: np.ndarray):
    """Composite anti-aliased rain streaks over a clean image.

    Returns (rainy, streaks) where streaks is a [1, H, W] map in [0, 1] and
    rainy = clip(clean + streaks, 0, 1). Rain is strictly additive: before
    clipping saturates, rainy >= clean everywhere.
    """
    clean = np.asarray(clean, dtype=np.float32)
    if clean.ndim != 3 or clean.shape[0] != 3:
        raise ValueError(f"clean image must be [3, H, W], got shape {clean.shape}")
    _, h, w = clean.shape
    rng = np.random.default_rng(cfg.seed)
    mask = np.zeros((h, w), dtype=np.float64)
    for _ in range(cfg.streak_count):
        cy = rng.uniform(0, h - 1)
        cx = rng.uniform(0, w - 1)
        ang = np.deg2rad(rng.uniform(*cfg.angle_range))
        length = rng.uniform(*cfg.streak_length)
        inten = rng.uniform(*cfg.streak_intensity)
        dy, dx = 0.5 * length * np.cos(ang), 0.5 * length * np.sin(ang)
        r0 = int(np.clip(round(cy - dy), 0, h - 1))
        c0 = int(np.clip(round(cx - dx), 0, w - 1))
        r1 = int(np.clip(round(cy + dy), 0, h - 1))
        c1 = int(np.clip(round(cx + dx), 0, w - 1))
        rr, cc, val = line_aa(r0, c0, r1, c1)
        np.maximum.at(mask, (rr, cc), val * inten)
    streaks = mask.astype(np.float32)[None]
    rainy = np.clip(clean + streaks, 0.0, 1.0).astype(np.float32)
    return rainy, streaks


def make_toy_clean(size: int, seed: int, grid: int = 5) -> np.ndarray:
    """Smooth random RGB background: a coarse random grid upsampled bilinearly."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.15, 0.85, size=(3, grid, grid)).astype(np.float32)
    t = torch.from_numpy(coarse)[None]
    up = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=True)
    return np.clip(up[0].numpy(), 0.0, 1.0)


def write_toy_corpus(out_dir, count: int, size: int = 64, seed: int = 0,
                     domain_gap: bool = False, real_count: int | None = None,
                     streak_count: int = 20,
                     streak_length: tuple = (10.0, 20.0),
                     streak_intensity: tuple = (0.2, 0.8)) -> dict:
    """Write a desk-scale toy corpus under ``out_dir``.

    Layout: ``rain/`` + ``clean/`` paired PNGs, and with domain_gap also a
    flat ``real/`` directory of pseudo-real rainy images whose streak angles
    are shifted relative to the synthetic range. The generating parameters
    land in ``toy_config.json`` next to the data.
    """
    out_dir = Path(out_dir)
    rain_dir, clean_dir = out_dir / "rain", out_dir / "clean"
    rain_dir.mkdir(parents=True, exist_ok=True)
    clean_dir.mkdir(parents=True, exist_ok=True)

    base = dict(image_size=size, streak_count=streak_count,
                streak_length=streak_length, streak_intensity=streak_intensity)
    for i in range(count):
        clean = make_toy_clean(size, seed=seed * 100003 + i)
        cfg = ToyRainConfig(angle_range=SYNTHETIC_ANGLE_RANGE, seed=seed * 7919 + i, **base)
        rainy, _ = generate_toy_rain(cfg, clean)
        save_image(rain_dir / f"{i:03d}.png", rainy)
        save_image(clean_dir / f"{i:03d}.png", clean)

    n_real = 0
    if domain_gap:
        real_dir = out_dir / "real"
        real_dir.mkdir(parents=True, exist_ok=True)
        n_real = real_count if real_count is not None else max(1, count // 2)
        for i in range(n_real):
            clean = make_toy_clean(size, seed=seed * 100003 + 50021 + i)
            cfg = ToyRainConfig(angle_range=PSEUDO_REAL_ANGLE_RANGE,
                                seed=seed * 7919 + 50021 + i, **base)
            rainy, _ = generate_toy_rain(cfg, clean)
            save_image(real_dir / f"{i:03d}.png", rainy)

    config = {
        "count": count, "size": size, "seed": seed,
        "domain_gap": domain_gap, "real_count": n_real,
        "streak_count": streak_count,
        "streak_length": list(streak_length),
        "streak_intensity": list(streak_intensity),
        "synthetic_angle_range": list(SYNTHETIC_ANGLE_RANGE),
        "pseudo_real_angle_range": list(PSEUDO_REAL_ANGLE_RANGE),
    }
    with open(out_dir / "toy_config.json", "w") as fh:
        json.dump(config, fh, indent=2)
    return {"paired_root": str(out_dir),
            "unpaired_root": str(out_dir / "real") if domain_gap else None,
            "config": config}
