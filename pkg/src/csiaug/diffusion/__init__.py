"""Class-conditional DDPM: schedule, noise predictor, loss, sampler, trainer."""
from .ddpm import generate, p_sample_step, training_loss
from .schedule import NoiseSchedule, make_linear_schedule, q_sample
from .training import (
    DiffusionConfig,
    DiffusionRun,
    load_diffusion,
    save_diffusion,
    train_diffusion,
    write_losses_csv,
)
from .unet import ConditionalUNet

__all__ = [
    "ConditionalUNet",
    "DiffusionConfig",
    "DiffusionRun",
    "NoiseSchedule",
    "generate",
    "load_diffusion",
    "make_linear_schedule",
    "p_sample_step",
    "q_sample",
    "save_diffusion",
    "train_diffusion",
    "training_loss",
    "write_losses_csv",
]
