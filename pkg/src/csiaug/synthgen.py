"""Labelled synthetic CSI with planted hardware phase errors.

Each sample is a line-of-sight channel plus smooth multipath scattering, a
class-specific static scattering pattern, and one moving reflector whose
phase rotates at a class-specific Doppler rate with a random-walk wobble.
Per packet a random linear phase (slope, offset) is applied on top, shared
by all receive antennas. The clean pre-error phase is kept so sanitization
can be checked exactly.

Seeds: every (class) and (class, sample) pair gets its own generator seeded
by :func:`mix_seed`, a chain of splitmix64 finalizers, so samples can be
produced in any order or in parallel with identical results.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .csi_core import (
    DEFAULT_MASK,
    FFT_SIZE,
    NUM_FRAMES,
    PACKET_INTERVAL_S,
    CarrierMask,
    CsiFrame,
    CsiImage,
    block_mean,
    image_from_values,
    sanitize_phase,
    subcarrier_bins,
)
from .container import CsiDataset
from .errors import ConfigError

MASK64 = (1 << 64) - 1
_CLASS_TAG = 0xC1A55
_SAMPLE_TAG = 0x5A3B1E

TRUTH_ROLES = ("clean_phase_A", "clean_phase_B", "planted_slope", "planted_offset")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, *words: int) -> int:
    """Fold integer words into a 64-bit seed: h <- splitmix64(h ^ w) per word."""
    h = splitmix64(seed & MASK64)
    for w in words:
        h = splitmix64(h ^ (w & MASK64))
    return h


@dataclass
class SynthProfile:
    num_classes: int
    doppler_rate_hz: np.ndarray
    perturbation_amplitude: np.ndarray
    base_response_smoothness: float = 12.0
    noise_std: float = 0.01
    phase_error_model: tuple[tuple[float, float], tuple[float, float]] = (
        (-0.15, 0.15),
        (-np.pi, np.pi),
    )
    seed: int = 0
    # shape of the scattering field
    static_scale: float = 0.25
    sample_variation: float = 0.12
    doppler_jitter: float = 0.05
    random_walk_std: float = 0.05
    antenna_count: int = 4
    antenna_pair: tuple[int, int] = (0, 3)
    n_frames: int = NUM_FRAMES
    packet_interval: float = PACKET_INTERVAL_S
    mask: CarrierMask = field(default_factory=lambda: DEFAULT_MASK)

    def __post_init__(self):
        self.doppler_rate_hz = np.broadcast_to(
            np.asarray(self.doppler_rate_hz, dtype=np.float64), (self.num_classes,)
        ).copy()
        self.perturbation_amplitude = np.broadcast_to(
            np.asarray(self.perturbation_amplitude, dtype=np.float64), (self.num_classes,)
        ).copy()
        (s_lo, s_hi), (o_lo, o_hi) = self.phase_error_model
        scalars = [self.base_response_smoothness, self.noise_std, s_lo, s_hi, o_lo, o_hi,
                   self.static_scale, self.sample_variation, self.doppler_jitter,
                   self.random_walk_std]
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")
        if not (np.all(np.isfinite(scalars)) and np.all(np.isfinite(self.doppler_rate_hz))
                and np.all(np.isfinite(self.perturbation_amplitude))):
            raise ConfigError("profile ranges must be finite")
        if self.noise_std < 0 or s_lo > s_hi or o_lo > o_hi:
            raise ConfigError("noise_std must be >= 0 and ranges ordered")
        if self.base_response_smoothness <= 0:
            raise ConfigError("base_response_smoothness must be positive")
        if max(self.antenna_pair) >= self.antenna_count:
            raise ConfigError("antenna pair exceeds antenna_count")

    @classmethod
    def default(cls, num_classes: int = 6, seed: int = 0, **kw) -> "SynthProfile":
        """Classes spread over 1-4 Hz Doppler with rising reflector strength."""
        kw.setdefault("doppler_rate_hz", np.linspace(1.0, 4.0, num_classes))
        kw.setdefault("perturbation_amplitude", np.linspace(0.2, 0.35, num_classes))
        return cls(num_classes=num_classes, seed=seed, **kw)

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "doppler_rate_hz": self.doppler_rate_hz.tolist(),
            "perturbation_amplitude": self.perturbation_amplitude.tolist(),
            "base_response_smoothness": self.base_response_smoothness,
            "noise_std": self.noise_std,
            "phase_error_model": [list(self.phase_error_model[0]), list(self.phase_error_model[1])],
            "seed": self.seed,
            "static_scale": self.static_scale,
            "sample_variation": self.sample_variation,
            "doppler_jitter": self.doppler_jitter,
            "random_walk_std": self.random_walk_std,
            "antenna_count": self.antenna_count,
            "antenna_pair": list(self.antenna_pair),
            "n_frames": self.n_frames,
            "packet_interval": self.packet_interval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthProfile":
        d = dict(d)
        if "phase_error_model" in d:
            s, o = d["phase_error_model"]
            d["phase_error_model"] = (tuple(s), tuple(o))
        if "antenna_pair" in d:
            d["antenna_pair"] = tuple(d["antenna_pair"])
        if "mask" in d:
            d["mask"] = CarrierMask(np.array(d["mask"], dtype=bool))
        return cls(**d)


@dataclass
class GroundTruth:
    """Per-sample oracle data, aligned with the generated images.

    ``clean_phase`` is the sanitized phase of the pre-error channel
    (N, 2, K, T); ``slopes``/``offsets`` are the planted per-frame errors (N, T).
    """

    clean_phase: np.ndarray
    slopes: np.ndarray
    offsets: np.ndarray
    clean_values: list[np.ndarray] = field(default_factory=list)

    def as_channels(self) -> np.ndarray:
        """Stack into the 4 truth channels (clean A, clean B, slope, offset)."""
        N, _, K, T = self.clean_phase.shape
        out = np.empty((N, 4, K, T), dtype=np.float64)
        out[:, :2] = self.clean_phase
        out[:, 2] = self.slopes[:, None, :]
        out[:, 3] = self.offsets[:, None, :]
        return out


def _smooth_field(rng: np.random.Generator, shape: tuple, length: float) -> np.ndarray:
    """Complex Gaussian process over the last axis with unit RMS."""
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z = gaussian_filter1d(z.real, length, axis=-1, mode="wrap") + 1j * gaussian_filter1d(
        z.imag, length, axis=-1, mode="wrap"
    )
    return z / np.sqrt(np.mean(np.abs(z) ** 2, axis=-1, keepdims=True))


def _class_params(profile: SynthProfile, label: int):
    rng = np.random.default_rng(mix_seed(profile.seed, _CLASS_TAG, label))
    A = profile.antenna_count
    static = profile.static_scale * _smooth_field(rng, (A, FFT_SIZE), profile.base_response_smoothness)
    body = _smooth_field(rng, (FFT_SIZE,), profile.base_response_smoothness)
    return static, body


def channel_response(profile: SynthProfile, label: int, index: int):
    """Clean and corrupted complex CSI of one sample.

    Returns ``(clean, corrupted, slopes, offsets)`` where the value arrays
    have shape (T, antenna_count, 256) over all FFT bins.
    """
    if not 0 <= label < profile.num_classes:
        raise ConfigError(f"label {label} outside 0..{profile.num_classes - 1}")
    static, body = _class_params(profile, label)
    rng = np.random.default_rng(mix_seed(profile.seed, _SAMPLE_TAG, label, index))
    A, T = profile.antenna_count, profile.n_frames
    k = subcarrier_bins()
    t = np.arange(T) * profile.packet_interval

    los_delay = rng.uniform(0.0, 3.0)
    los = np.exp(-2j * np.pi * k * los_delay / FFT_SIZE) * np.exp(1j * rng.uniform(-np.pi, np.pi, (A, 1)))
    variation = profile.sample_variation * _smooth_field(rng, (A, FFT_SIZE), profile.base_response_smoothness)
    base = los + static + variation  # (A, K)

    freq = profile.doppler_rate_hz[label] * (1.0 + profile.doppler_jitter * rng.standard_normal())
    amp = profile.perturbation_amplitude[label] * (1.0 + 0.1 * rng.standard_normal())
    walk = np.cumsum(profile.random_walk_std * rng.standard_normal(T))
    motion = np.exp(1j * (2 * np.pi * freq * t + rng.uniform(-np.pi, np.pi) + walk))  # (T,)
    steer = np.exp(1j * np.pi * np.arange(A) * np.sin(rng.uniform(-np.pi / 2, np.pi / 2)))  # (A,)
    moving = amp * motion[:, None, None] * steer[None, :, None] * body[None, None, :]

    clean = base[None] + moving
    if profile.noise_std > 0:
        clean = clean + profile.noise_std / np.sqrt(2) * (
            rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
        )

    (s_lo, s_hi), (o_lo, o_hi) = profile.phase_error_model
    slopes = rng.uniform(s_lo, s_hi, T)
    offsets = rng.uniform(o_lo, o_hi, T)
    error = np.exp(1j * (slopes[:, None] * k[None, :] + offsets[:, None]))  # (T, K)
    corrupted = clean * error[:, None, :]
    return clean, corrupted, slopes, offsets


def synth_frames(profile: SynthProfile, label: int, index: int) -> list[CsiFrame]:
    """The corrupted sample as a packet sequence covering every FFT bin."""
    _, corrupted, _, _ = channel_response(profile, label, index)
    k = subcarrier_bins()
    return [
        CsiFrame(i * profile.packet_interval, k, corrupted[i]) for i in range(profile.n_frames)
    ]


def synth_sample(profile: SynthProfile, label: int, index: int, keep_clean: bool = False):
    """One ``(CsiImage, truth)`` pair; truth is a dict of per-sample oracle arrays."""
    clean, corrupted, slopes, offsets = channel_response(profile, label, index)
    mask = profile.mask
    usable_k = mask.indices()
    cols = usable_k + FFT_SIZE // 2
    pair = list(profile.antenna_pair)
    image = image_from_values(corrupted[:, pair][:, :, cols], usable_k, mask, label)

    clean_pair = clean[:, pair][:, :, cols]
    residual, _ = sanitize_phase(np.angle(clean_pair), usable_k)  # (T, 2, n)
    clean_phase = np.zeros((2, mask.size, profile.n_frames))
    rows = np.flatnonzero(mask.usable)
    for a in range(2):
        clean_phase[a][rows] = residual[:, a, :].T
    truth = {"clean_phase": clean_phase, "slopes": slopes, "offsets": offsets}
    if keep_clean:
        truth["clean_values"] = clean_pair
    return image, truth


def iter_samples(profile: SynthProfile, samples_per_class: int) -> Iterator[tuple[int, int]]:
    """(label, index) pairs in class-major order."""
    for c in range(profile.num_classes):
        for i in range(samples_per_class):
            yield c, i


def synth_dataset(profile: SynthProfile, samples_per_class: int, keep_clean: bool = False):
    """Generate ``samples_per_class`` images per class plus their ground truth."""
    if samples_per_class < 1:
        raise ConfigError("samples_per_class must be >= 1")
    images, phases, slopes, offsets, cleans = [], [], [], [], []
    for c, i in iter_samples(profile, samples_per_class):
        image, truth = synth_sample(profile, c, i, keep_clean)
        images.append(image)
        phases.append(truth["clean_phase"])
        slopes.append(truth["slopes"])
        offsets.append(truth["offsets"])
        if keep_clean:
            cleans.append(truth["clean_values"])
    gt = GroundTruth(np.stack(phases), np.stack(slopes), np.stack(offsets), cleans)
    return images, gt


def synth_image_dataset(
    profile: SynthProfile, samples_per_class: int, out_hw: tuple[int, int] | None = None
) -> CsiDataset:
    """Images only, optionally block-averaged to ``out_hw`` as they are generated."""
    if samples_per_class < 1:
        raise ConfigError("samples_per_class must be >= 1")
    data, labels, ids = [], [], []
    for c, i in iter_samples(profile, samples_per_class):
        image, _ = synth_sample(profile, c, i)
        x = image.channels
        if out_hw is not None:
            x = block_mean(x, x.shape[1] // out_hw[0], x.shape[2] // out_hw[1]).astype(np.float32)
        data.append(x)
        labels.append(c)
        ids.append(f"syn-c{c:02d}-i{i:05d}")
    return CsiDataset(
        np.stack(data),
        np.array(labels),
        profile.num_classes,
        ["synthetic"] * len(labels),
        ids,
        carrier_mask=profile.mask if out_hw is None else None,
        extra={"profile": profile.to_dict()},
    )


def truth_dataset(images: list[CsiImage], truth: GroundTruth, num_classes: int) -> CsiDataset:
    """Ground truth packed as a parallel dataset with :data:`TRUTH_ROLES` channels."""
    return CsiDataset(
        truth.as_channels().astype(np.float32),
        np.array([im.label for im in images]),
        num_classes,
        ["synthetic"] * len(images),
        channel_roles=TRUTH_ROLES,
        carrier_mask=images[0].carrier_mask,
    )
