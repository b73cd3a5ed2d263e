"""Linear variance schedule and closed-form forward noising."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigError, StepError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step tables indexed by diffusion step ``t`` in 1..T.

    Arrays are stored 0-based (``betas[t - 1]`` is beta_t); use the accessor
    methods to avoid off-by-one mistakes. ``alpha_bar(0)`` is defined as 1.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return self.betas.size

    def check_step(self, t) -> None:
        tt = np.asarray(t.cpu() if isinstance(t, torch.Tensor) else t)
        if tt.size == 0 or tt.min() < 1 or tt.max() > self.T:
            raise StepError(f"diffusion step must lie in 1..{self.T}")

    def beta(self, t: int) -> float:
        self.check_step(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self.check_step(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self.check_step(t)
        return float(self.alpha_bars[t - 1])

    def posterior_variance(self, t: int) -> float:
        """(1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t; exactly 0 at t = 1."""
        ab_prev = self.alpha_bar(t - 1)
        return (1.0 - ab_prev) / (1.0 - self.alpha_bar(t)) * self.beta(t)

    def table(self, name: str, t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        """Gather ``name`` at integer steps ``t`` (shape (B,)) reshaped to broadcast with ``like``."""
        values = torch.as_tensor(getattr(self, name), dtype=like.dtype, device=like.device)
        out = values[t.to(like.device).long() - 1]
        return out.reshape(-1, *([1] * (like.dim() - 1)))


def make_linear_schedule(T: int = 500, beta_start: float = 1e-4, beta_end: float = 0.28) -> NoiseSchedule:
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not (0 < beta_start <= beta_end < 1):
        raise ConfigError("need 0 < beta_start <= beta_end < 1")
    if T == 1:
        betas = np.array([beta_start], dtype=np.float64)
    else:
        betas = beta_start + np.arange(T) / (T - 1) * (beta_end - beta_start)
    alphas = 1.0 - betas
    return NoiseSchedule(betas, alphas, np.cumprod(alphas))


def _as_steps(t, batch: int, device) -> torch.Tensor:
    if isinstance(t, torch.Tensor) and t.dim() > 0:
        return t.to(device)
    return torch.full((batch,), int(t), dtype=torch.long, device=device)


def q_sample(x0: torch.Tensor, t, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.

    ``t`` is an int or a (B,) tensor of per-sample steps.
    """
    if x0.shape != eps.shape:
        raise ConfigError(f"x0 {tuple(x0.shape)} and eps {tuple(eps.shape)} differ in shape")
    schedule.check_step(t)
    if isinstance(t, torch.Tensor) and t.dim() > 0:
        ab = schedule.table("alpha_bars", t, x0)
    else:
        ab = torch.as_tensor(schedule.alpha_bar(int(t)), dtype=x0.dtype, device=x0.device)
    return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps
