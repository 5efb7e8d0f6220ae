"""Tour of the hybrid loss stack.

Builds a rainy/clean pair, fakes a partial deraining, and walks every term:
adversarial scores through the discriminators, perceptual distance on the
surrogate backbone, SSIM, cycle and TV, then the weighted branch totals.
"""

import torch

from unrain.data import ToyRainConfig, generate_toy_rain, make_toy_clean
from unrain.losses import (LossWeights, cycle_loss, disc_loss, gen_adv_loss,
                           perceptual_loss, ssim, ssim_loss, supervised_loss,
                           total_loss, tv_loss, unsupervised_loss)
from unrain.networks import DerainModel, FeatureExtractor, ModelConfig

torch.manual_seed(0)
torch.set_grad_enabled(False)  # inspection only

clean_np = make_toy_clean(64, seed=3)
rainy_np, _ = generate_toy_rain(ToyRainConfig(streak_count=25, seed=4), clean_np)
clean = torch.from_numpy(clean_np)[None]
rainy = torch.from_numpy(rainy_np)[None]
halfway = 0.5 * rainy + 0.5 * clean  # a pretend partially-derained output

print("image-space terms (clean vs rainy vs half-derained):")
print(f"  ssim(clean, rainy)     = {float(ssim(clean, rainy)):+.4f}")
print(f"  ssim(clean, halfway)   = {float(ssim(clean, halfway)):+.4f}")
print(f"  ssim_loss(clean, half) = {float(ssim_loss(clean, halfway)):+.4f}  (negated)")
print(f"  cycle_loss(rainy, half)= {float(cycle_loss(rainy, halfway)):.4f}")
print(f"  tv(rainy) / tv(clean)  = {float(tv_loss(rainy)):.4f} / {float(tv_loss(clean)):.4f}")

backbone = FeatureExtractor("surrogate", seed=0)
print(f"  perceptual(clean,half) = {float(perceptual_loss(backbone, clean, halfway)):.6f}")

model = DerainModel(ModelConfig.desk())
scores_real = model.disc_syn(clean)
scores_fake = model.disc_syn(halfway)
print()
print("adversarial terms (untrained 3-scale discriminator, scores near 0.5):")
print(f"  disc_loss    = {float(disc_loss(scores_real, scores_fake)):.4f}   (2*ln2 = 1.3863 at 0.5)")
print(f"  gen_adv_loss = {float(gen_adv_loss(scores_fake)):.4f}   (ln2 = 0.6931 at 0.5)")
pair = model.disc_pair(rainy, halfway)
print(f"  paired discriminator consumes 6 channels -> map {tuple(pair.shape[-2:])}")

w = LossWeights()
sup = supervised_loss(float(gen_adv_loss(scores_fake)) + float(gen_adv_loss([pair])),
                      float(perceptual_loss(backbone, clean, halfway)),
                      float(ssim_loss(clean, halfway)), w)
uns = unsupervised_loss(float(gen_adv_loss(scores_fake)),
                        float(cycle_loss(rainy, halfway)),
                        float(perceptual_loss(backbone, rainy, halfway)),
                        float(tv_loss(halfway)), w)
print()
print(f"branch weights: supervised all 1; unsupervised "
      f"(adv, cc, per, tv) = ({w.adv_unsup}, {w.cc}, {w.per_unsup}, {w.tv})")
print(f"  supervised branch   = {sup:+.4f}")
print(f"  unsupervised branch = {uns:+.4f}")
print(f"  total (unsup weight {w.unsup}) = {total_loss(sup, uns, w):+.4f}")
