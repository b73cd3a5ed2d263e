"""Noise-prediction loss and ancestral sampling."""
from __future__ import annotations

from typing import Callable

import torch

from ..errors import GenerationError, LabelError, StepError
from .schedule import NoiseSchedule, q_sample


def _check_labels(model, labels: torch.Tensor) -> None:
    num_classes = getattr(model, "num_classes", None)
    if labels.numel() and (labels.min() < 0 or (num_classes is not None and labels.max() >= num_classes)):
        raise LabelError(f"labels must lie in 0..{num_classes - 1}")


def _data_bounds(model, like: torch.Tensor):
    """The data range [-1, 1] expressed in the model's diffusion space."""
    if not hasattr(model, "to_model_space"):
        return -1.0, 1.0
    ones = torch.ones((like.shape[1], 1, 1), dtype=like.dtype, device=like.device)
    lo, hi = model.to_model_space(-ones), model.to_model_space(ones)
    return torch.minimum(lo, hi), torch.maximum(lo, hi)


def _to_data(model, x: torch.Tensor) -> torch.Tensor:
    return model.to_data_space(x) if hasattr(model, "to_data_space") else x


def training_loss(
    model: Callable,
    x0: torch.Tensor,
    labels: torch.Tensor,
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
    label_dropout: float = 0.0,
) -> torch.Tensor:
    """Mean squared error between the injected and the predicted noise.

    One step t ~ U{1..T} and one eps ~ N(0, I) are drawn per sample. With
    ``label_dropout`` > 0 that share of labels is replaced by the model's
    null label, so the same network also learns the unconditional noise.
    """
    if x0.shape[0] == 0:
        raise ValueError("empty batch")
    _check_labels(model, labels)
    B = x0.shape[0]
    t = torch.randint(1, schedule.T + 1, (B,), generator=generator, device="cpu").to(x0.device)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype, device="cpu").to(x0.device)
    x_t = q_sample(x0, t, eps, schedule)
    if label_dropout > 0:
        if getattr(model, "null_index", None) is None:
            raise ValueError("label_dropout needs a model with a null label")
        drop = torch.rand(B, generator=generator, device="cpu").to(x0.device) < label_dropout
        labels = torch.where(drop, torch.full_like(labels, model.null_index), labels)
    return ((eps - model(x_t, t, labels)) ** 2).mean()


@torch.no_grad()
def p_sample_step(
    model: Callable,
    x_t: torch.Tensor,
    t: int,
    labels: torch.Tensor,
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
    clip_denoised: bool = False,
    guidance_scale: float = 0.0,
) -> torch.Tensor:
    """Draw x_{t-1} from the learned reverse kernel.

    mean = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t);
    the added noise is scaled by the posterior standard deviation, which
    vanishes at t = 1.

    With ``clip_denoised`` the mean is computed in its equivalent posterior
    form from the implied x0 estimate, clipped to the data range [-1, 1]
    (mapped into the model's diffusion space) first. The two
    forms agree exactly whenever the estimate already lies in that range;
    clipping stops the 1/sqrt(alpha_t) growth of off-manifold error that a
    large beta_T otherwise compounds over the early reverse steps.

    ``guidance_scale`` w > 0 replaces eps_hat by (1 + w) eps(c) - w eps(null)
    (classifier-free guidance); w = 0 is the plain conditional prediction.
    """
    if not 1 <= t <= schedule.T:
        raise StepError(f"diffusion step must lie in 1..{schedule.T}, got {t}")
    steps = torch.full((x_t.shape[0],), t, dtype=torch.long, device=x_t.device)
    if guidance_scale:
        null = torch.full_like(labels, model.null_index)
        both = model(torch.cat([x_t, x_t]), torch.cat([steps, steps]), torch.cat([labels, null]))
        cond, uncond = both.chunk(2)
        eps_hat = (1.0 + guidance_scale) * cond - guidance_scale * uncond
    else:
        eps_hat = model(x_t, steps, labels)
    beta, alpha, ab = schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t)
    if clip_denoised:
        ab_prev = schedule.alpha_bar(t - 1)
        lo, hi = _data_bounds(model, x_t)
        x0_hat = torch.clamp((x_t - (1.0 - ab) ** 0.5 * eps_hat) / ab ** 0.5, lo, hi)
        mean = (ab_prev ** 0.5 * beta * x0_hat + alpha ** 0.5 * (1.0 - ab_prev) * x_t) / (1.0 - ab)
    else:
        mean = (x_t - beta / (1.0 - ab) ** 0.5 * eps_hat) / alpha ** 0.5
    if t == 1:
        return mean
    z = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype, device="cpu").to(x_t.device)
    return mean + schedule.posterior_variance(t) ** 0.5 * z


@torch.no_grad()
def generate(
    model: Callable,
    label: int,
    n: int,
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
    image_shape: tuple[int, ...] | None = None,
    snapshots: dict | None = None,
    snapshot_steps=(),
    batch_size: int = 256,
    clamp: bool = True,
    clip_denoised: bool = True,
    guidance_scale: float = 0.0,
) -> torch.Tensor:
    """``n`` samples of class ``label`` starting from x_T ~ N(0, I).

    ``clip_denoised`` and ``guidance_scale`` are passed to every
    :func:`p_sample_step`.

    If ``snapshots`` is a dict, the state after each step in
    ``snapshot_steps`` is stored under that step (step T is the initial
    noise, step 0 the final sample). Samples and snapshots are returned in
    data space.
    """
    if image_shape is None:
        image_shape = tuple(model.image_shape)
    try:
        param = next(model.parameters())
        device, dtype = param.device, param.dtype
    except (AttributeError, StopIteration):
        device, dtype = torch.device("cpu"), torch.float32
    _check_labels(model, torch.tensor([label]))
    if n == 0:
        return torch.empty((0, *image_shape), dtype=dtype, device=device)
    was_training = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    wanted = set(snapshot_steps)
    chunks = []
    try:
        for start in range(0, n, batch_size):
            b = min(batch_size, n - start)
            x = torch.randn((b, *image_shape), generator=generator, dtype=dtype, device="cpu").to(device)
            labels = torch.full((b,), label, dtype=torch.long, device=device)
            if snapshots is not None and schedule.T in wanted:
                snapshots.setdefault(schedule.T, []).append(_to_data(model, x).cpu())
            for t in range(schedule.T, 0, -1):
                x = p_sample_step(model, x, t, labels, schedule, generator, clip_denoised, guidance_scale)
                if not torch.isfinite(x).all():
                    raise GenerationError(t)
                if snapshots is not None and (t - 1) in wanted:
                    snapshots.setdefault(t - 1, []).append(_to_data(model, x).cpu())
            x = _to_data(model, x)
            chunks.append(x.clamp(-1.0, 1.0) if clamp else x)
    finally:
        if was_training:
            model.train()
    if snapshots is not None:
        for k, v in list(snapshots.items()):
            if isinstance(v, list):
                snapshots[k] = torch.cat(v)
    return torch.cat(chunks)
