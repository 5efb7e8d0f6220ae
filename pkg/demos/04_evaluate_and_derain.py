"""Inference and reporting with a trained checkpoint.

Expects demo_output/run/checkpoint_final.zip from 03_train_toy.py. Derains
the toy corpus whole-image (reflect-padded to the U-net divisibility), writes
a JSON + CSV metrics report, and shows the per-image numbers.
"""

from pathlib import Path

from unrain.data import load_image, save_image
from unrain.metrics import (evaluate_dataset, input_baseline, read_report,
                            write_csv, write_report)
from unrain.trainer import load_derainer

run = Path("demo_output/run")
data = Path("demo_output/toy_corpus")
ckpt = run / "checkpoint_final.zip"
if not ckpt.exists():
    raise SystemExit("run demos/03_train_toy.py first (missing checkpoint)")

derainer = load_derainer(ckpt)  # generator="syn": the paired-branch U-net

derained_dir = run / "derained"
derained_dir.mkdir(exist_ok=True)
for path in sorted((data / "rain").iterdir()):
    save_image(derained_dir / path.name, derainer(load_image(path)))
print(f"derained images written to {derained_dir}")

report = evaluate_dataset(derainer, data, dataset_id="toy",
                          checkpoint_id=str(ckpt))
write_report(report, run / "report.json")
write_csv(report, run / "report.csv")
baseline = input_baseline(data)

print()
print(f"{'image':<10}{'input dB':>9} {'model dB':>9} {'model SSIM':>11}")
for base_row, row in zip(baseline.per_image, report.per_image):
    print(f"{row['name']:<10}{base_row['psnr_db']:>9.2f} "
          f"{row['psnr_db']:>9.2f} {row['ssim']:>11.3f}")
print(f"{'mean':<10}{baseline.mean_psnr_db:>9.2f} "
      f"{report.mean_psnr_db:>9.2f} {report.mean_ssim:>11.3f}")

again = read_report(run / "report.json")
assert again.mean_psnr_db == report.mean_psnr_db
print()
print(f"report round-trips through {run / 'report.json'}; CSV alongside")
