"""Cross-entropy training and evaluation of SimpleViTFi."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..checkpoint import read_checkpoint, restore, save_checkpoint
from ..errors import ConfigError
from .metrics import ClassifierMetrics
from .model import SimpleViTFi, ViTConfig, predict

log = logging.getLogger(__name__)


@dataclass
class TrainedClassifier:
    model: SimpleViTFi
    metrics: ClassifierMetrics | None
    epoch_losses: list[float] = field(default_factory=list)
    first_batch_loss: float = float("nan")


def build_classifier(config: ViTConfig) -> SimpleViTFi:
    torch.manual_seed(config.seed)
    return SimpleViTFi(config)


@torch.no_grad()
def logits_for(model: SimpleViTFi, data, batch_size: int = 256, device="cpu") -> np.ndarray:
    model.eval()
    x = torch.as_tensor(np.asarray(data), dtype=torch.float32)
    out = [model(x[i:i + batch_size].to(device)).cpu() for i in range(0, x.shape[0], batch_size)]
    return torch.cat(out).numpy() if out else np.zeros((0, model.num_classes), dtype=np.float32)


def evaluate(model: SimpleViTFi, data, labels, device="cpu") -> ClassifierMetrics:
    pred = predict(logits_for(model, data, device=device))
    return ClassifierMetrics.from_predictions(labels, pred, model.num_classes)


def train_classifier(
    config: ViTConfig,
    train_data,
    train_labels,
    eval_data=None,
    eval_labels=None,
    device="cpu",
) -> TrainedClassifier:
    """AdamW on cross-entropy for ``config.epochs`` shuffled epochs.

    Returns the trained model and, when an evaluation split is given, its
    confusion metrics.
    """
    x = torch.as_tensor(np.asarray(train_data), dtype=torch.float32)
    y = torch.as_tensor(np.asarray(train_labels), dtype=torch.long)
    if x.shape[0] == 0:
        raise ConfigError("empty training split")
    if eval_data is not None and len(eval_data) == 0:
        raise ConfigError("empty evaluation split")
    if y.min() < 0 or y.max() >= config.num_classes:
        raise ConfigError("training labels exceed num_classes")

    device = torch.device(device)
    model = build_classifier(config).to(device)
    opt = torch.optim.AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    gen = torch.Generator().manual_seed(config.seed)
    result = TrainedClassifier(model, None)

    for epoch in range(config.epochs):
        model.train()
        order = torch.randperm(x.shape[0], generator=gen)
        total = 0.0
        for start in range(0, x.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = F.cross_entropy(model(x[idx].to(device)), y[idx].to(device))
            if epoch == 0 and start == 0:
                result.first_batch_loss = loss.item()
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item() * idx.numel()
        result.epoch_losses.append(total / x.shape[0])
        if (epoch + 1) % 10 == 0:
            log.info("classifier epoch %d loss %.4f", epoch + 1, result.epoch_losses[-1])

    model.eval()
    if eval_data is not None:
        result.metrics = evaluate(model, eval_data, eval_labels, device)
    return result


def save_classifier(path: str | Path, trained: TrainedClassifier) -> Path:
    return save_checkpoint(
        path,
        trained.model,
        kind="vit",
        config=trained.model.config.to_dict(),
        step=len(trained.epoch_losses),
        extra={"epoch_losses": trained.epoch_losses},
    )


def load_classifier(path: str | Path) -> SimpleViTFi:
    ckpt = read_checkpoint(path)
    if ckpt["meta"]["kind"] != "vit":
        raise ConfigError(f"{path} holds a {ckpt['meta']['kind']} checkpoint")
    model = SimpleViTFi(ViTConfig.from_dict(ckpt["meta"]["config"]))
    restore(ckpt, model)
    return model.eval()
