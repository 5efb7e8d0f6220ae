"""Semi-supervised single-image deraining.

A shared recurrent rain-mask learner drives two coupled adversarial
processes: a supervised one on paired synthetic data and an unsupervised,
cycle-consistent one on unpaired real data. The package covers data
pipelines (including a toy rain generator), the networks, the hybrid loss
stack, the trainer, PSNR/SSIM evaluation, and a CLI.
"""

from .data import (PairedSample, ToyRainConfig, UnpairedSample, extract_patches,
                   generate_toy_rain, load_paired_dataset, load_unpaired_dataset,
                   mixed_loader, write_toy_corpus)
from .inference import Derainer, IdentityDerainer
from .losses import (LossBreakdown, LossWeights, cycle_loss, disc_loss,
                     gen_adv_loss, perceptual_loss, ssim, ssim_loss,
                     supervised_loss, total_loss, tv_loss, unsupervised_loss)
from .metrics import (MetricsReport, evaluate_checkpoint, evaluate_dataset,
                      input_baseline, psnr)
from .networks import (DerainModel, FeatureExtractor, ModelConfig,
                       MultiScaleDiscriminator, PairedDiscriminator,
                       RainMaskLearner, ReRainer, UNet)
from .trainer import (Ablations, CheckpointError, NonFiniteLossError,
                      TrainConfig, Trainer, TrainState, load_checkpoint,
                      load_derainer, lr_schedule, save_checkpoint, train,
                      write_identity_checkpoint)

__version__ = "0.1.0"
