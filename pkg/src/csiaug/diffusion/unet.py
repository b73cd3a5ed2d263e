"""Class-conditional U-Net noise predictor."""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def _groups(ch: int, max_groups: int = 8) -> int:
    for g in range(min(max_groups, ch), 0, -1):
        if ch % g == 0:
            return g
    return 1


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, device=t.device) / max(half - 1, 1))
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([args.sin(), args.cos()], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, emb_dim: int, dropout: float = 0.0):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.emb = nn.Linear(emb_dim, out_ch)
        self.norm2 = nn.GroupNorm(_groups(out_ch), out_ch)
        self.dropout = nn.Dropout(dropout)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb(F.silu(emb))[:, :, None, None]
        h = self.conv2(self.dropout(F.silu(self.norm2(h))))
        return h + self.skip(x)


class ConditionalUNet(nn.Module):
    """eps_theta(x_t, t, c).

    head conv -> per stage (residual block, strided-conv downsample) ->
    two middle residual blocks -> per stage (concat skip, residual block,
    upsample) -> norm/conv tail back to the input channel count. The step
    and class embeddings are summed and fed to every residual block.

    ``null_label`` reserves one extra embedding row, index ``num_classes``,
    for the unconditional prediction used by guided sampling.

    The buffers ``data_shift`` and ``data_scale`` map data to the space the
    network diffuses in, ``(x - shift) / scale`` per channel. They default to
    the identity.
    """

    def __init__(
        self,
        in_channels: int = 4,
        num_classes: int = 21,
        base_width: int = 64,
        stage_multipliers: tuple[int, ...] = (1, 2, 4),
        embedding_dim: int = 128,
        dropout: float = 0.0,
        null_label: bool = False,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.base_width = base_width
        self.stage_multipliers = tuple(stage_multipliers)
        widths = [base_width * m for m in stage_multipliers]

        self.time_mlp = nn.Sequential(
            nn.Linear(base_width, embedding_dim), nn.SiLU(), nn.Linear(embedding_dim, embedding_dim)
        )
        self.null_index = num_classes if null_label else None
        self.label_emb = nn.Embedding(num_classes + int(null_label), embedding_dim)
        self.register_buffer("data_shift", torch.zeros(in_channels))
        self.register_buffer("data_scale", torch.ones(in_channels))

        self.head = nn.Conv2d(in_channels, base_width, 3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        ch = base_width
        for i, w in enumerate(widths):
            self.down_blocks.append(ResBlock(ch, w, embedding_dim, dropout))
            ch = w
            last = i == len(widths) - 1
            self.downsamplers.append(nn.Identity() if last else nn.Conv2d(ch, ch, 3, stride=2, padding=1))

        self.mid1 = ResBlock(ch, ch, embedding_dim, dropout)
        self.mid2 = ResBlock(ch, ch, embedding_dim, dropout)

        self.up_blocks = nn.ModuleList()
        self.upsamplers = nn.ModuleList()
        for i in reversed(range(len(widths))):
            w = widths[i]
            self.up_blocks.append(ResBlock(ch + w, w, embedding_dim, dropout))
            ch = w
            self.upsamplers.append(nn.Conv2d(ch, ch, 3, padding=1) if i > 0 else nn.Identity())

        self.tail = nn.Sequential(
            nn.GroupNorm(_groups(ch), ch), nn.SiLU(), nn.Conv2d(ch, in_channels, 3, padding=1)
        )

    def to_model_space(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.data_shift[:, None, None]) / self.data_scale[:, None, None]

    def to_data_space(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.data_scale[:, None, None] + self.data_shift[:, None, None]

    @property
    def downsample_factor(self) -> int:
        return 2 ** (len(self.stage_multipliers) - 1)

    def forward(self, x: torch.Tensor, t: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        if t.dim() == 0:
            t = t.expand(x.shape[0])
        emb = self.time_mlp(sinusoidal_embedding(t, self.base_width).to(x.dtype)) + self.label_emb(labels)

        h = self.head(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downsamplers):
            h = block(h, emb)
            skips.append(h)
            h = down(h)
        h = self.mid2(self.mid1(h, emb), emb)
        for block, up in zip(self.up_blocks, self.upsamplers):
            h = block(torch.cat([h, skips.pop()], dim=1), emb)
            if not isinstance(up, nn.Identity):
                h = up(F.interpolate(h, scale_factor=2, mode="nearest"))
        return self.tail(h)
