"""SimpleViTFi: a two-block vision transformer over time slabs of a CSI image."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from ..errors import ConfigError, ShapeError


@dataclass
class ViTConfig:
    num_classes: int = 21
    input_shape: tuple[int, int, int] = (4, 256, 256)
    downsample_factor: int = 2
    num_patches: int = 16
    token_dim: int = 64
    depth: int = 2
    heads: int = 4
    mlp_dim: int = 128
    dropout: float = 0.15
    learning_rate: float = 1e-4
    weight_decay: float = 0.1
    head_eps: float = 1e-5
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        C, K, T = self.input_shape
        f = self.downsample_factor
        if K % f or T % f:
            raise ConfigError(f"input {self.input_shape} not divisible by downsample factor {f}")
        if (T // f) % self.num_patches:
            raise ConfigError("patches must tile the downsampled time axis exactly")
        if self.token_dim % self.heads:
            raise ConfigError("token_dim must be divisible by heads")
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")

    @property
    def downsampled_shape(self) -> tuple[int, int, int]:
        C, K, T = self.input_shape
        f = self.downsample_factor
        return (C, K // f, T // f)

    @property
    def patch_shape(self) -> tuple[int, int, int]:
        C, K, T = self.downsampled_shape
        return (C, K, T // self.num_patches)

    @property
    def patch_size(self) -> int:
        return int(np.prod(self.patch_shape))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ViTConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


def parameter_count(config: ViTConfig) -> int:
    """Closed-form trainable parameter count.

    patch projection P*d + d, position table n*d, per block
    2d + 3d^2 + (d^2 + d) + 2d + (d*m + m) + (m*d + d), classifier d*k + k,
    with P the flattened patch size, d the token dim, n the patch count, m the
    MLP width and k the class count. The pre-head normalization has no
    parameters.
    """
    P, d, n, m, k = config.patch_size, config.token_dim, config.num_patches, config.mlp_dim, config.num_classes
    block = 2 * d + 3 * d * d + (d * d + d) + 2 * d + (d * m + m) + (m * d + d)
    return (P * d + d) + n * d + config.depth * block + (d * k + k)


def downsample(x, factor: int = 2):
    """Average pooling over non-overlapping ``factor x factor`` blocks of the last two axes."""
    if isinstance(x, np.ndarray):
        K, T = x.shape[-2:]
        if K % factor or T % factor:
            raise ShapeError(f"({K}, {T}) not divisible by {factor}")
        return x.reshape(*x.shape[:-2], K // factor, factor, T // factor, factor).mean(axis=(-3, -1))
    if x.shape[-2] % factor or x.shape[-1] % factor:
        raise ShapeError(f"{tuple(x.shape[-2:])} not divisible by {factor}")
    squeeze = x.dim() == 3
    y = F.avg_pool2d(x[None] if squeeze else x, factor)
    return y[0] if squeeze else y


def patchify(x: torch.Tensor, num_patches: int) -> torch.Tensor:
    """(B, C, K, T) -> (B, num_patches, C*K*w): slab i covers time columns [w*i, w*i + w)."""
    if x.shape[-1] % num_patches:
        raise ShapeError(f"time axis {x.shape[-1]} not divisible into {num_patches} slabs")
    return rearrange(x, "b c k (n w) -> b n (c k w)", n=num_patches)


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.to_qkv = nn.Linear(dim, 3 * dim, bias=False)
        self.to_out = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, return_attention: bool = False):
        q, k, v = (rearrange(t, "b n (h d) -> b h n d", h=self.heads) for t in self.to_qkv(x).chunk(3, dim=-1))
        attn = torch.softmax(q @ k.transpose(-1, -2) * self.scale, dim=-1)
        out = rearrange(self.dropout(attn) @ v, "b h n d -> b n (h d)")
        out = self.dropout(self.to_out(out))
        return (out, attn) if return_attention else out


class Block(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, heads: int, mlp_dim: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads, dropout)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_dim), nn.GELU(), nn.Dropout(dropout), nn.Linear(mlp_dim, dim), nn.Dropout(dropout)
        )

    def forward(self, x, return_attention: bool = False):
        a, attn = self.attn(self.norm1(x), return_attention=True)
        x = x + a
        x = x + self.mlp(self.norm2(x))
        return (x, attn) if return_attention else x


class SimpleViTFi(nn.Module):
    def __init__(self, config: ViTConfig):
        super().__init__()
        self.config = config
        d = config.token_dim
        self.proj = nn.Linear(config.patch_size, d)
        self.pos_embedding = nn.Parameter(0.02 * torch.randn(config.num_patches, d))
        self.emb_dropout = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            Block(d, config.heads, config.mlp_dim, config.dropout) for _ in range(config.depth)
        )
        self.head_norm = nn.LayerNorm(d, eps=config.head_eps, elementwise_affine=False)
        self.head = nn.Linear(d, config.num_classes)

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def slabs(self, x: torch.Tensor) -> torch.Tensor:
        if tuple(x.shape[1:]) != self.config.input_shape:
            raise ShapeError(f"expected input {self.config.input_shape}, got {tuple(x.shape[1:])}")
        return patchify(downsample(x, self.config.downsample_factor), self.config.num_patches)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Tokens: projected slabs plus learnable position embeddings."""
        return self.proj(self.slabs(x)) + self.pos_embedding

    def encode(self, tokens: torch.Tensor, return_attention: bool = False):
        if tokens.shape[-1] != self.config.token_dim:
            raise ShapeError(f"tokens must have dim {self.config.token_dim}")
        h = self.emb_dropout(tokens)
        maps = []
        for block in self.blocks:
            h, attn = block(h, return_attention=True)
            maps.append(attn)
        pooled = h.mean(dim=1)
        return (pooled, maps) if return_attention else pooled

    def classify(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.head(self.head_norm(pooled))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classify(self.encode(self.embed(x)))

    def summary(self) -> str:
        c = self.config
        n_params = sum(p.numel() for p in self.parameters())
        lines = [
            "SimpleViTFi",
            f"  input            {c.input_shape}",
            f"  downsampling     {c.downsampled_shape}",
            f"  patches          {c.num_patches} x {c.patch_shape}",
            f"  token dim        {c.token_dim}",
            f"  depth            {c.depth}",
            f"  heads            {c.heads}",
            f"  mlp dim          {c.mlp_dim}",
            f"  dropout          {c.dropout}",
            f"  pooling          mean over {c.num_patches} tokens",
            f"  classes          {c.num_classes}",
            f"  parameters       {n_params} (closed form {parameter_count(c)})",
        ]
        return "\n".join(lines)


def predict(logits) -> np.ndarray:
    """Argmax over the last axis; ties resolve to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=-1)
