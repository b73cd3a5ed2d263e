"""Train/test splitting, minority down-sampling and diffusion augmentation."""
from __future__ import annotations

import numpy as np
import torch

from ..container import CsiDataset, concat
from ..diffusion import DiffusionRun, generate
from ..errors import ConfigError, SplitError
from ..synthgen import mix_seed
from .plan import ExperimentPlan


def split_dataset(ds: CsiDataset, plan: ExperimentPlan) -> tuple[CsiDataset, CsiDataset]:
    """Per-class shuffle under ``split_seed``; the first floor(f * n_c) go to train.

    The test split depends only on the data and ``split_seed``, so every
    scenario evaluates on the same samples.
    """
    train_idx, test_idx = [], []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise SplitError(f"class {c} has {idx.size} sample(s); need at least 2")
        rng = np.random.default_rng(mix_seed(plan.split_seed, c))
        idx = idx[rng.permutation(idx.size)]
        n_train = int(np.floor(plan.train_fraction * idx.size))
        if n_train == 0 or n_train == idx.size:
            raise SplitError(f"class {c} with {idx.size} samples leaves an empty split")
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    return ds.subset(train_idx), ds.subset(test_idx)


def apply_imbalance(train: CsiDataset, plan: ExperimentPlan) -> CsiDataset:
    """Keep the first floor(keep_fraction * n) training samples of each minority class."""
    keep = np.ones(len(train), dtype=bool)
    for c in plan.minority_classes:
        idx = np.flatnonzero(train.labels == c)
        n_keep = int(np.floor(plan.minority_keep_fraction * idx.size))
        keep[idx[n_keep:]] = False
    return train.subset(np.flatnonzero(keep))


def augmentation_counts(train: CsiDataset, plan: ExperimentPlan) -> dict[int, int]:
    """Samples to generate per minority class to reach the augmentation target."""
    counts = train.class_counts()
    target = plan.augmentation_target or int(counts.max())
    return {c: max(0, target - int(counts[c])) for c in plan.minority_classes}


def augment(
    train: CsiDataset,
    run: DiffusionRun,
    plan: ExperimentPlan,
    snapshots: dict | None = None,
) -> tuple[CsiDataset, dict[int, int]]:
    """Top up every minority class with class-conditioned diffusion samples.

    Generated samples carry provenance ``generated`` and ids ``gen-...``.
    Returns the merged set and the number generated per class.
    """
    if run.config.num_classes != plan.num_classes:
        raise ConfigError(
            f"diffusion checkpoint knows {run.config.num_classes} classes, plan has {plan.num_classes}"
        )
    if tuple(run.config.image_shape) != train.image_shape:
        raise ConfigError(f"checkpoint image shape {run.config.image_shape} != data {train.image_shape}")
    todo = augmentation_counts(train, plan)
    gen = torch.Generator().manual_seed(plan.gen_seed)
    parts, labels, ids = [], [], []
    for c, n in todo.items():
        if n == 0:
            continue
        snap = {} if (snapshots is not None and not snapshots) else None
        x = generate(run.model, c, n, run.schedule, gen, snapshots=snap,
                     snapshot_steps=plan.snapshot_steps if snap is not None else (),
                     guidance_scale=run.config.guidance_scale)
        if snap:
            snapshots.update({"label": c, "steps": snap})
        parts.append(x.cpu().numpy())
        labels += [c] * n
        ids += [f"gen-c{c:02d}-{i:05d}" for i in range(n)]
    if not parts:
        return train, todo
    generated = CsiDataset(
        np.concatenate(parts),
        np.array(labels),
        train.num_classes,
        ["generated"] * len(labels),
        ids,
        train.channel_roles,
        train.carrier_mask,
        train.stats,
    )
    return concat(train, generated), todo
