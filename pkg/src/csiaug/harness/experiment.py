"""Scenario orchestration: split -> imbalance -> augment -> classify -> evaluate."""
from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import os
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from .. import __version__
from ..container import CsiDataset, read_csit, write_csit
from ..csi_core import ChannelStats, block_mean, normalize_array
from ..device import default_device
from ..diffusion import DiffusionRun, train_diffusion, write_losses_csv
from ..diffusion.training import save_diffusion
from ..errors import ConfigError, CsiaugError, StageError
from ..synthgen import SynthProfile, synth_image_dataset
from ..vit import ClassifierMetrics, plot_confusion, save_classifier, train_classifier
from .plan import ExperimentPlan, RunManifest, config_hash
from .splits import apply_imbalance, augment, split_dataset

log = logging.getLogger(__name__)


@contextlib.contextmanager
def directory_lock(out_dir: str | Path):
    """Exclusive ``.lock`` file in ``out_dir`` for the duration of a run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"{out_dir} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (CsiaugError, ValueError, RuntimeError, OSError) as exc:
        raise StageError(name, exc) from exc


def load_dataset(plan: ExperimentPlan) -> CsiDataset:
    """Real data from ``dataset_path`` or a synthetic set, resized to ``image_hw``."""
    if plan.dataset_path:
        ds = read_csit(plan.dataset_path)
        if ds.num_classes != plan.num_classes:
            raise ConfigError(f"dataset has {ds.num_classes} classes, plan {plan.num_classes}")
        if plan.image_hw is not None and ds.data.shape[2:] != tuple(plan.image_hw):
            fk = ds.data.shape[2] // plan.image_hw[0]
            ft = ds.data.shape[3] // plan.image_hw[1]
            ds = CsiDataset(block_mean(ds.data, fk, ft), ds.labels, ds.num_classes, ds.provenance,
                            ds.sample_ids, ds.channel_roles, None, None, ds.extra)
        return ds
    if not plan.synth:
        raise ConfigError("plan needs either dataset_path or synth")
    profile = dict(plan.synth.get("profile", {}))
    n_classes = profile.pop("num_classes", plan.num_classes)
    if n_classes != plan.num_classes:
        raise ConfigError("synthetic profile and plan disagree on num_classes")
    seed = profile.pop("seed", plan.split_seed)
    p = SynthProfile.default(n_classes, seed=seed, **_profile_kwargs(profile))
    return synth_image_dataset(p, int(plan.synth.get("samples_per_class", 100)), plan.image_hw)


def _profile_kwargs(d: dict) -> dict:
    d = dict(d)
    if "phase_error_model" in d:
        s, o = d["phase_error_model"]
        d["phase_error_model"] = (tuple(s), tuple(o))
    if "antenna_pair" in d:
        d["antenna_pair"] = tuple(d["antenna_pair"])
    return d


def normalized(train: CsiDataset, others: list[CsiDataset]) -> tuple[CsiDataset, list[CsiDataset], ChannelStats]:
    """Scale all splits to [-1, 1] with per-channel stats of ``train`` only."""
    stats = ChannelStats.from_array(train.data, train.carrier_mask)

    def apply(ds: CsiDataset) -> CsiDataset:
        return CsiDataset(normalize_array(ds.data, stats, ds.carrier_mask), ds.labels, ds.num_classes,
                          ds.provenance, ds.sample_ids, ds.channel_roles, ds.carrier_mask, stats, ds.extra)

    return apply(train), [apply(o) for o in others], stats


def _ids_digest(ids) -> str:
    return hashlib.sha256("\n".join(ids).encode()).hexdigest()


def check_no_leakage(test: CsiDataset, *training_sets: CsiDataset) -> None:
    test_ids = set(test.sample_ids)
    if "generated" in test.provenance:
        raise ConfigError("generated samples found in the test split")
    for ds in training_sets:
        overlap = test_ids & set(ds.sample_ids)
        if overlap:
            raise ConfigError(f"{len(overlap)} test samples leaked into training (e.g. {sorted(overlap)[0]})")


def run_scenario(
    plan: ExperimentPlan,
    out_dir: str | Path,
    dataset: CsiDataset | None = None,
    diffusion_run: DiffusionRun | None = None,
    write_datasets: bool = True,
) -> tuple[RunManifest, ClassifierMetrics]:
    """Execute one scenario end to end and write its artifacts under ``out_dir``.

    ``dataset`` and ``diffusion_run`` may be supplied to share work between
    scenarios; a supplied diffusion run must have been trained on this plan's
    imbalanced training split.
    """
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    device = default_device()
    with directory_lock(out_dir) as out:
        with stage("load"):
            ds = dataset if dataset is not None else load_dataset(plan)
        with stage("split"):
            train, test = split_dataset(ds, plan)
            if plan.scenario != "balanced":
                train = apply_imbalance(train, plan)
            train, (test,), stats = normalized(train, [test])

        paths: dict[str, str | None] = {}
        counts = {"train_real": train.class_counts().tolist(), "test": test.class_counts().tolist()}
        hashes = {"plan": config_hash(plan.to_dict())}
        diffusion_ids: list[str] = []
        if plan.scenario == "augmented":
            with stage("diffusion"):
                dcfg = plan.diffusion_config(train.image_shape)
                hashes["diffusion"] = config_hash(dcfg.to_dict())
                if diffusion_run is None:
                    diffusion_run = train_diffusion(dcfg, train.data, train.labels, device=device)
                diffusion_ids = list(train.sample_ids)
                save_diffusion(out / "diffusion.npz", diffusion_run)
                write_losses_csv(out / "diffusion_losses.csv", diffusion_run.losses)
                paths["diffusion_checkpoint"] = "diffusion.npz"
                paths["diffusion_losses"] = "diffusion_losses.csv"
            with stage("augment"):
                snaps: dict = {}
                train, generated = augment(train, diffusion_run, plan, snapshots=snaps if plan.snapshot_steps else None)
                counts["generated"] = [generated.get(c, 0) for c in range(plan.num_classes)]
                if snaps:
                    np.savez(out / "snapshots.npz", label=snaps["label"],
                             **{f"t{k:04d}": v.numpy() for k, v in snaps["steps"].items()})
                    paths["snapshots"] = "snapshots.npz"
                if write_datasets:
                    gen_idx = [i for i, p in enumerate(train.provenance) if p == "generated"]
                    if gen_idx:
                        write_csit(out / "generated.csit", train.subset(gen_idx))
                        paths["generated"] = "generated.csit"
        counts["train"] = train.class_counts().tolist()

        with stage("leakage"):
            check_no_leakage(test, train)
            if diffusion_ids:
                check_no_leakage(test, train.subset(range(len(diffusion_ids))))

        with stage("classifier"):
            vcfg = plan.classifier_config(train.image_shape)
            hashes["classifier"] = config_hash(vcfg.to_dict())
            trained = train_classifier(vcfg, train.data, train.labels, test.data, test.labels, device=device)
            save_classifier(out / "classifier.npz", trained)
            write_losses_csv(out / "losses.csv", list(enumerate(trained.epoch_losses, start=1)))
            paths["classifier_checkpoint"] = "classifier.npz"
            paths["losses"] = "losses.csv"

        with stage("evaluate"):
            metrics = trained.metrics
            metrics.write_json(out / "metrics.json")
            plot_confusion(metrics, out / "confusion.png", title=plan.scenario,
                           highlight=plan.minority_classes)
            paths["metrics"] = "metrics.json"
            paths["confusion"] = "confusion.png"
            if write_datasets:
                write_csit(out / "train.csit", train)
                write_csit(out / "test.csit", test)
                paths["train"] = "train.csit"
                paths["test"] = "test.csit"

        manifest = RunManifest(
            scenario=plan.scenario,
            plan=plan.to_dict(),
            config_hashes=hashes,
            paths=paths,
            split={
                "test_ids": test.sample_ids,
                "test_ids_sha256": _ids_digest(test.sample_ids),
                "train_ids": train.sample_ids,
                "diffusion_train_ids": diffusion_ids,
            },
            class_counts=counts,
            wall_clock_s=time.perf_counter() - t0,
            started_at=started,
            tool_version=__version__,
            summary={
                "overall_accuracy": metrics.overall_accuracy,
                "minority_accuracy": metrics.mean_accuracy(plan.minority_classes) if plan.minority_classes else None,
                "normalization": stats.to_dict(),
            },
        )
        manifest.write(out)
    return manifest, metrics


def run_all(
    plan: ExperimentPlan,
    out_root: str | Path,
    scenarios=("balanced", "imbalanced", "augmented"),
    dataset: CsiDataset | None = None,
    write_datasets: bool = True,
) -> dict[str, tuple[RunManifest, ClassifierMetrics]]:
    """Run several scenarios on one dataset; each gets ``out_root/<scenario>``."""
    out_root = Path(out_root)
    ds = dataset if dataset is not None else load_dataset(plan)
    results = {}
    for name in scenarios:
        log.info("scenario %s", name)
        results[name] = run_scenario(plan.with_scenario(name), out_root / name, ds, write_datasets=write_datasets)
    return results


def read_metrics(manifest_path: str | Path) -> ClassifierMetrics:
    manifest_path = Path(manifest_path)
    m = json.loads(manifest_path.read_text())
    return ClassifierMetrics.read_json(manifest_path.parent / m["paths"]["metrics"])
