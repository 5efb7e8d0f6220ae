"""Reference-quality PSNR/SSIM and dataset-level evaluation reports.

Both metrics take [C, H, W] float images in [0, 1] and compute in double
precision. PSNR uses MAX = 1 and caps at 99 dB so reports stay finite and
sortable; SSIM averages over RGB channels unless luminance-only is asked for.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .data import load_paired_dataset
from .inference import IdentityDerainer

PSNR_CAP_DB = 99.0
LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601


def psnr(x, y) -> float:
    """Peak signal-to-noise ratio in dB: 10*log10(1/MSE), capped at 99 dB."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse)))


def ssim(x, y, luminance_only: bool = False) -> float:
    """Structural similarity (Gaussian 11x11 windows, sigma 1.5, range 1)."""
    x = np.array(x, dtype=np.float64)  # copy: inputs may be read-only
    y = np.array(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if luminance_only and x.ndim == 3 and x.shape[0] == 3:
        w = np.asarray(LUMA_WEIGHTS, dtype=np.float64).reshape(3, 1, 1)
        x = (x * w).sum(axis=0, keepdims=True)
        y = (y * w).sum(axis=0, keepdims=True)
    with torch.no_grad():
        return float(losses.ssim(torch.from_numpy(x), torch.from_numpy(y)))


@dataclass
class MetricsReport:
    """Per-image and aggregate quality numbers for one evaluation pass."""
    per_image: list = field(default_factory=list)  # {"name", "psnr_db", "ssim"}
    mean_psnr_db: float = 0.0
    mean_ssim: float = 0.0
    dataset_id: str = ""
    checkpoint_id: str = ""

    @classmethod
    def from_rows(cls, rows: list, dataset_id: str = "",
                  checkpoint_id: str = "") -> "MetricsReport":
        if not rows:
            raise ValueError("cannot aggregate an empty evaluation")
        return cls(per_image=rows,
                   mean_psnr_db=float(np.mean([r["psnr_db"] for r in rows])),
                   mean_ssim=float(np.mean([r["ssim"] for r in rows])),
                   dataset_id=dataset_id, checkpoint_id=checkpoint_id)

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, "checkpoint_id": self.checkpoint_id,
                "mean_psnr_db": self.mean_psnr_db, "mean_ssim": self.mean_ssim,
                "per_image": self.per_image}


def write_report(report: MetricsReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def read_report(path) -> MetricsReport:
    with open(path) as fh:
        d = json.load(fh)
    return MetricsReport(per_image=d["per_image"], mean_psnr_db=d["mean_psnr_db"],
                         mean_ssim=d["mean_ssim"], dataset_id=d["dataset_id"],
                         checkpoint_id=d["checkpoint_id"])


def write_csv(report: MetricsReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "psnr_db", "ssim"])
        for row in report.per_image:
            writer.writerow([row["name"], row["psnr_db"], row["ssim"]])


def evaluate_dataset(derainer, paired_test_root, dataset_id: str = "",
                     checkpoint_id: str = "") -> MetricsReport:
    """Derain every test image whole and score it against its ground truth.

    The test root must be a paired layout (rain/ + clean/); metrics need
    references. `derainer` is any callable mapping a [3, H, W] image in
    [0, 1] to its derained twin.
    """
    samples = load_paired_dataset(paired_test_root)
    rows = []
    for s in samples:
        out = derainer(s.rainy)
        rows.append({"name": s.name,
                     "psnr_db": psnr(out, s.clean),
                     "ssim": ssim(out, s.clean)})
    return MetricsReport.from_rows(rows, dataset_id, checkpoint_id)


def input_baseline(paired_test_root, dataset_id: str = "") -> MetricsReport:
    """Metrics of the rainy inputs themselves: the no-model baseline that a
    trained model has to beat."""
    return evaluate_dataset(IdentityDerainer(), paired_test_root,
                            dataset_id=dataset_id, checkpoint_id="input")


def evaluate_checkpoint(checkpoint_path, paired_test_root, dataset_id: str = "",
                        generator: str = "syn") -> MetricsReport:
    from .trainer import load_derainer
    derainer = load_derainer(checkpoint_path, generator=generator)
    return evaluate_dataset(derainer, paired_test_root, dataset_id=dataset_id,
                            checkpoint_id=str(checkpoint_path))
