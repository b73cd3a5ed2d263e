"""Training loop for the conditional noise predictor."""
from __future__ import annotations

import copy
import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..checkpoint import read_checkpoint, restore, save_checkpoint
from ..errors import ConfigError, LabelError, TrainingDivergedError
from .ddpm import training_loss
from .schedule import NoiseSchedule, make_linear_schedule
from .unet import ConditionalUNet

log = logging.getLogger(__name__)


@dataclass
class DiffusionConfig:
    T: int = 500
    beta_start: float = 1e-4
    beta_end: float = 0.28
    image_shape: tuple[int, int, int] = (4, 256, 256)
    num_classes: int = 21
    base_width: int = 64
    stage_multipliers: tuple[int, ...] = (1, 2, 4)
    embedding_dim: int = 128
    dropout: float = 0.0
    label_dropout: float = 0.0
    guidance_scale: float = 0.0
    standardize: bool = False
    ema_decay: float = 0.0
    class_balanced: bool = False
    batch_size: int = 16
    learning_rate: float = 2e-4
    weight_decay: float = 0.0
    max_steps: int = 20000
    log_every: int = 100
    checkpoint_every: int = 0
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        self.image_shape = tuple(self.image_shape)
        self.stage_multipliers = tuple(self.stage_multipliers)
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if not self.beta_start < self.beta_end:
            raise ConfigError("beta_start must be below beta_end")
        if min(self.image_shape) < 1 or self.base_width < 1 or self.batch_size < 1:
            raise ConfigError("shapes and sizes must be positive")
        factor = 2 ** (len(self.stage_multipliers) - 1)
        if self.image_shape[1] % factor or self.image_shape[2] % factor:
            raise ConfigError(f"image height/width must be divisible by {factor}")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError("ema_decay must lie in [0, 1)")
        if not 0 <= self.label_dropout < 1:
            raise ConfigError("label_dropout must lie in [0, 1)")
        if self.guidance_scale < 0 or (self.guidance_scale and not self.label_dropout):
            raise ConfigError("guidance_scale must be >= 0 and needs label_dropout > 0")

    def schedule(self) -> NoiseSchedule:
        return make_linear_schedule(self.T, self.beta_start, self.beta_end)

    def build_model(self) -> ConditionalUNet:
        torch.manual_seed(self.seed)
        model = ConditionalUNet(
            self.image_shape[0],
            self.num_classes,
            self.base_width,
            self.stage_multipliers,
            self.embedding_dim,
            self.dropout,
            null_label=self.label_dropout > 0,
        )
        model.image_shape = self.image_shape
        return model

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class DiffusionRun:
    """A trained noise predictor.

    ``model`` is the network used for sampling: the exponential weight
    average when ``config.ema_decay`` > 0, else the trained weights.
    ``online`` is the network the optimizer updates (the same object
    without averaging).
    """

    model: ConditionalUNet
    schedule: NoiseSchedule
    config: DiffusionConfig
    losses: list[tuple[int, float]] = field(default_factory=list)
    step: int = 0
    online: ConditionalUNet | None = None

    def __post_init__(self):
        if self.online is None:
            self.online = self.model


def _ema_update(ema: torch.nn.Module, model: torch.nn.Module, decay: float, step: int) -> None:
    # warm-up keeps early averages from being dominated by the initial weights
    d = min(decay, (1 + step) / (10 + step))
    with torch.no_grad():
        for pe, p in zip(ema.parameters(), model.parameters()):
            pe.lerp_(p, 1.0 - d)
        for be, b in zip(ema.buffers(), model.buffers()):
            be.copy_(b)


class BatchSampler:
    """Batch indices drawn with replacement, uniformly over samples or over classes."""

    def __init__(self, labels: torch.Tensor, batch_size: int, class_balanced: bool = False):
        self.n, self.batch_size, self.class_balanced = len(labels), batch_size, class_balanced
        # per-class index blocks
        self.order = torch.argsort(labels, stable=True)
        self.classes, self.counts = torch.unique(labels, return_counts=True)
        self.starts = torch.cumsum(self.counts, 0) - self.counts

    def __call__(self, gen: torch.Generator) -> torch.Tensor:
        if not self.class_balanced:
            return torch.randint(0, self.n, (self.batch_size,), generator=gen)
        k = torch.randint(0, len(self.classes), (self.batch_size,), generator=gen)
        within = (torch.rand(self.batch_size, generator=gen) * self.counts[k]).long()
        return self.order[self.starts[k] + within]


def _optimizer(model, config: DiffusionConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)


def train_diffusion(
    config: DiffusionConfig,
    data: np.ndarray | torch.Tensor,
    labels: np.ndarray | torch.Tensor,
    checkpoint_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    stop_at: int | None = None,
    device: torch.device | str = "cpu",
) -> DiffusionRun:
    """Minimize the noise-prediction loss for ``config.max_steps`` steps.

    ``data`` must already be scaled to [-1, 1]. Batches are drawn with
    replacement from a seeded generator whose state is checkpointed, so a
    resumed run continues the exact sample stream. ``stop_at`` ends early
    (used to produce resumable partial runs). The returned loss curve holds
    the mean loss of each ``log_every``-step window.

    With ``config.class_balanced`` each batch element first draws a class
    uniformly among the classes present, then a sample of that class, so
    scarce classes get as many conditioning updates as common ones.

    With ``config.standardize`` the network diffuses per-channel standardized
    data; the shift and scale are stored on the model and undone by
    :func:`generate`.
    """
    x_all = torch.as_tensor(np.asarray(data), dtype=torch.float32)
    y_all = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    if x_all.shape[0] == 0:
        raise ConfigError("empty training set")
    if tuple(x_all.shape[1:]) != config.image_shape:
        raise ConfigError(f"data shape {tuple(x_all.shape[1:])} != config {config.image_shape}")
    if y_all.min() < 0 or y_all.max() >= config.num_classes:
        raise LabelError(f"labels must lie in 0..{config.num_classes - 1}")
    if config.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)

    device = torch.device(device)
    schedule = config.schedule()
    model = config.build_model()
    if config.standardize:
        mean = x_all.mean(dim=(0, 2, 3))
        std = x_all.std(dim=(0, 2, 3)).clamp_min(1e-6)
        model.data_shift.copy_(mean)
        model.data_scale.copy_(std)
    x_all = model.to_model_space(x_all)
    model = model.to(device)
    opt = _optimizer(model, config)
    gen = torch.Generator().manual_seed(config.seed)
    ema = copy.deepcopy(model) if config.ema_decay else None
    run = DiffusionRun(ema if ema is not None else model, schedule, config, online=model)

    if resume_from is not None:
        ckpt = read_checkpoint(resume_from)
        run.step = restore(ckpt, model, opt, gen)
        if ema is not None:
            restore(ckpt, ema, weights="ema")
        run.losses = [tuple(x) for x in ckpt["meta"]["extra"].get("losses", [])]
    window: list[float] = list(ckpt["meta"]["extra"].get("window", [])) if resume_from else []

    draw = BatchSampler(y_all, config.batch_size, config.class_balanced)
    end = config.max_steps if stop_at is None else min(stop_at, config.max_steps)
    model.train()
    while run.step < end:
        idx = draw(gen)
        loss = training_loss(model, x_all[idx].to(device), y_all[idx].to(device), schedule, gen,
                             config.label_dropout)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at step {run.step + 1}; last window mean "
                f"{np.mean(window) if window else float('nan'):.4g}"
            )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if ema is not None:
            _ema_update(ema, model, config.ema_decay, run.step)
        run.step += 1
        window.append(loss.item())
        if run.step % config.log_every == 0:
            run.losses.append((run.step, float(np.mean(window))))
            log.info("diffusion step %d loss %.5f", run.step, run.losses[-1][1])
            window = []
        if checkpoint_dir and config.checkpoint_every and run.step % config.checkpoint_every == 0:
            save_diffusion(Path(checkpoint_dir) / f"diffusion_step{run.step:07d}.npz", run, opt, gen, window)

    if checkpoint_dir:
        save_diffusion(Path(checkpoint_dir) / "diffusion.npz", run, opt, gen, window)
    run.optimizer, run.generator, run.window = opt, gen, window
    model.eval()
    run.model.eval()
    return run


def save_diffusion(path, run: DiffusionRun, optimizer=None, generator=None, window=()) -> Path:
    return save_checkpoint(
        path,
        run.online,
        ema=run.model if run.model is not run.online else None,
        kind="diffusion",
        config=run.config.to_dict(),
        step=run.step,
        optimizer=optimizer,
        generator=generator,
        extra={"losses": run.losses, "window": list(window)},
    )


def load_diffusion(path: str | Path, device="cpu") -> DiffusionRun:
    ckpt = read_checkpoint(path)
    if ckpt["meta"]["kind"] != "diffusion":
        raise ConfigError(f"{path} holds a {ckpt['meta']['kind']} checkpoint")
    config = DiffusionConfig.from_dict(ckpt["meta"]["config"])
    model = config.build_model()
    step = restore(ckpt, model, weights="ema" if ckpt["ema"] else "model")
    model.to(device).eval()
    losses = [tuple(x) for x in ckpt["meta"]["extra"].get("losses", [])]
    return DiffusionRun(model, config.schedule(), config, losses, step)


def write_losses_csv(path: str | Path, losses) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        w.writerows(losses)
    return path
