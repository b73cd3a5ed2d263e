"""Experiment plans, run manifests and JSON config loading."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..diffusion import DiffusionConfig
from ..errors import ConfigError
from ..vit import ViTConfig

SCENARIOS = ("balanced", "imbalanced", "augmented")

SCHEMA_PATH = Path(__file__).with_name("config_schema.json")


@dataclass
class ExperimentPlan:
    """Everything needed to reproduce one scenario run.

    Either ``dataset_path`` points at a ``.csit`` file of real images or
    ``synth`` describes a synthetic dataset (``profile``,
    ``samples_per_class``). ``image_hw`` block-averages images before use.
    ``diffusion`` and ``classifier`` hold overrides for their configs.
    """

    num_classes: int = 21
    dataset_path: str | None = None
    synth: dict | None = None
    image_hw: tuple[int, int] | None = None
    train_fraction: float = 0.73
    minority_classes: tuple[int, ...] = (11, 13, 15, 17, 19)
    minority_keep_fraction: float = 0.20
    augmentation_target: int | None = None
    split_seed: int = 0
    train_seed: int = 0
    gen_seed: int = 0
    scenario: str = "balanced"
    diffusion: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    snapshot_steps: tuple[int, ...] = ()

    def __post_init__(self):
        self.minority_classes = tuple(int(c) for c in self.minority_classes)
        self.snapshot_steps = tuple(self.snapshot_steps)
        if self.image_hw is not None:
            self.image_hw = tuple(self.image_hw)
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if not 0 < self.minority_keep_fraction <= 1:
            raise ConfigError("minority_keep_fraction must lie in (0, 1]")
        bad = [c for c in self.minority_classes if not 0 <= c < self.num_classes]
        if bad:
            raise ConfigError(f"minority classes {bad} outside 0..{self.num_classes - 1}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}")
        if self.augmentation_target is not None and self.augmentation_target < 1:
            raise ConfigError("augmentation_target must be positive")

    def image_shape(self, data_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        if self.image_hw is None:
            return tuple(data_shape)
        return (data_shape[0], *self.image_hw)

    def diffusion_config(self, image_shape) -> DiffusionConfig:
        d = {"image_shape": tuple(image_shape), "num_classes": self.num_classes, "seed": self.train_seed}
        d.update(self.diffusion)
        return DiffusionConfig.from_dict(d)

    def classifier_config(self, image_shape) -> ViTConfig:
        d = {"input_shape": tuple(image_shape), "num_classes": self.num_classes, "seed": self.train_seed}
        d.update(self.classifier)
        return ViTConfig.from_dict(d)

    def with_scenario(self, scenario: str) -> "ExperimentPlan":
        return ExperimentPlan(**{**self.to_dict(), "scenario": scenario})

    def with_seed(self, seed: int) -> "ExperimentPlan":
        d = self.to_dict()
        d.update(split_seed=seed, train_seed=seed, gen_seed=seed)
        if d.get("synth"):
            synth = dict(d["synth"])
            synth["profile"] = {**synth.get("profile", {}), "seed": seed}
            d["synth"] = synth
        return ExperimentPlan(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("minority_classes", "snapshot_steps", "image_hw"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown plan keys {sorted(unknown)}")
        return cls(**d)


def load_plan(path: str | Path) -> ExperimentPlan:
    raw = json.loads(Path(path).read_text())
    validate_config(raw)
    return ExperimentPlan.from_dict(raw)


def validate_config(raw: dict) -> None:
    import jsonschema

    schema = json.loads(SCHEMA_PATH.read_text())
    try:
        jsonschema.validate(raw, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid at {list(exc.absolute_path)}: {exc.message}") from None


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    scenario: str
    plan: dict
    config_hashes: dict
    paths: dict  # artifact name -> path relative to the manifest directory
    split: dict
    class_counts: dict
    wall_clock_s: float
    started_at: str
    tool_version: str
    summary: dict = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        missing = [p for p in self.paths.values() if p is not None and not (out_dir / p).exists()]
        if missing:
            raise ConfigError(f"manifest references missing files {missing}")
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=1))
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def without_timestamps(self) -> dict:
        d = asdict(self)
        d.pop("wall_clock_s")
        d.pop("started_at")
        return d
