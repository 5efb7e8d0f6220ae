"""Whole-image inference.

Generators are fully convolutional, so test images are derained whole:
reflect-pad up to the U-net divisibility requirement, run the mask learner
plus generator, crop back. Patch geometry is a training-only concern.
"""

import numpy as np
import torch
import torch.nn.functional as F


def pad_to_multiple(x: torch.Tensor, multiple: int):
    """Pad the last two dims up to a multiple; returns (padded, original hw)."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        # reflect needs pad < dim; replicate covers the tiny-image corner
        mode = "reflect" if ph < h and pw < w else "replicate"
        x = F.pad(x, (0, pw, 0, ph), mode=mode)
    return x, (h, w)


class Derainer:
    """Callable turning a rainy [3, H, W] numpy image into its derained twin."""

    def __init__(self, mask_learner, generator, depth: int,
                 dtype: torch.dtype = torch.float32):
        self.mask_learner = mask_learner
        self.generator = generator
        self.multiple = 2 ** depth
        self.dtype = dtype

    def __call__(self, image: np.ndarray) -> np.ndarray:
        arr = np.array(image, dtype=np.float32)  # copy: inputs may be read-only
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected a [3, H, W] image, got shape {arr.shape}")
        t = torch.from_numpy(arr)[None].to(self.dtype)
        with torch.no_grad():
            padded, (h, w) = pad_to_multiple(t, self.multiple)
            out = self.generator(self.mask_learner(padded), padded)[..., :h, :w]
        return np.clip(out[0].to(torch.float32).numpy(), 0.0, 1.0)


class IdentityDerainer:
    """Pass-through stand-in used by stub checkpoints and tests."""

    def __call__(self, image: np.ndarray) -> np.ndarray:
        return np.asarray(image, dtype=np.float32).copy()
