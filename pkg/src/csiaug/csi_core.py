"""CSI domain types, phase sanitization and 4-channel image construction.

Phase sanitization is the usual two-step procedure: unwrap along the
subcarrier axis, then strip the linear-in-subcarrier error left by packet
detection delay, sampling/carrier frequency offsets and the random initial
phase. Those offsets cannot be told apart inside a single packet, so the
fit removes their combined slope and intercept.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateFitError,
    DegenerateStatsError,
    InvalidInputError,
    OrderingError,
    ShapeError,
)

TWO_PI = 2.0 * np.pi
FFT_SIZE = 256
NUM_FRAMES = 256
PACKET_INTERVAL_S = 0.01
AMPLITUDE_FLOOR = 1e-12
AMPLITUDE_FLOOR_DB = -240.0

CHANNEL_ROLES = ("amp_antenna_A_dB", "phase_antenna_A", "amp_antenna_B_dB", "phase_antenna_B")

# 802.11ac VHT80: occupied bins -122..-2 and 2..122, minus the 8 pilot tones.
VHT80_PILOTS = (-103, -75, -39, -11, 11, 39, 75, 103)


def subcarrier_bins(fft_size: int = FFT_SIZE) -> np.ndarray:
    """Signed FFT bin index of every image row, in increasing order."""
    return np.arange(-(fft_size // 2), fft_size - fft_size // 2)


@dataclass(frozen=True)
class CarrierMask:
    """Boolean row mask over the 256 FFT bins; ``True`` marks a data carrier."""

    usable: np.ndarray

    def __post_init__(self):
        usable = np.asarray(self.usable, dtype=bool)
        if usable.ndim != 1:
            raise ShapeError("carrier mask must be one-dimensional")
        usable.setflags(write=False)
        object.__setattr__(self, "usable", usable)

    @classmethod
    def vht80(cls) -> "CarrierMask":
        k = subcarrier_bins()
        occupied = (np.abs(k) >= 2) & (np.abs(k) <= 122)
        pilots = np.isin(k, VHT80_PILOTS)
        return cls(occupied & ~pilots)

    @classmethod
    def all_usable(cls, size: int = FFT_SIZE) -> "CarrierMask":
        return cls(np.ones(size, dtype=bool))

    @property
    def size(self) -> int:
        return self.usable.size

    @property
    def count(self) -> int:
        return int(self.usable.sum())

    def indices(self) -> np.ndarray:
        """Signed subcarrier indices of the usable rows."""
        return subcarrier_bins(self.size)[self.usable]

    def __eq__(self, other):
        return isinstance(other, CarrierMask) and np.array_equal(self.usable, other.usable)

    def __hash__(self):
        return hash(self.usable.tobytes())


DEFAULT_MASK = CarrierMask.vht80()


@dataclass(frozen=True)
class CsiFrame:
    timestamp: float
    subcarrier_indices: np.ndarray
    values: np.ndarray  # complex, (antenna_count, n)

    def __post_init__(self):
        idx = np.asarray(self.subcarrier_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.ndim == 1:
            vals = vals[None, :]
        if idx.ndim != 1 or vals.ndim != 2 or vals.shape[1] != idx.size:
            raise ShapeError(
                f"values {vals.shape} do not match {idx.size} subcarrier indices"
            )
        if idx.size > FFT_SIZE:
            raise ShapeError(f"at most {FFT_SIZE} subcarriers per frame, got {idx.size}")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise OrderingError("subcarrier indices must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("CSI values must be finite")
        if not np.isfinite(self.timestamp):
            raise InvalidInputError("timestamp must be finite")
        object.__setattr__(self, "subcarrier_indices", idx)
        object.__setattr__(self, "values", vals)

    @property
    def antenna_count(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PhaseFit:
    """Linear phase error ``slope_a * k + intercept_b``.

    Fields are floats for a single frame or arrays when fitted over a batch.
    """

    slope_a: float | np.ndarray
    intercept_b: float | np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.slope_a)) and np.all(np.isfinite(self.intercept_b))):
            raise InvalidInputError("phase fit coefficients must be finite")


@dataclass
class CsiImage:
    channels: np.ndarray  # float32 (4, K, T)
    label: int
    carrier_mask: CarrierMask = field(default_factory=lambda: DEFAULT_MASK)
    channel_roles: tuple[str, ...] = CHANNEL_ROLES

    def __post_init__(self):
        if self.channels.ndim != 3:
            raise ShapeError(f"expected (C, K, T) channels, got {self.channels.shape}")
        if self.channels.shape[1] != self.carrier_mask.size:
            raise ShapeError("carrier mask length must equal the number of image rows")


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{what} must be finite")


def unwrap_phase(raw, axis: int = -1) -> np.ndarray:
    """Remove 2*pi jumps along ``axis``.

    Every element is shifted by an integer multiple of 2*pi so that its
    difference to the (already unwrapped) predecessor lies in (-pi, pi].
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim == 0 or x.shape[axis] < 2:
        raise InvalidInputError("need at least two phase samples to unwrap")
    _check_finite(x, "phase")
    d = np.diff(x, axis=axis)
    turns = np.ceil((d - np.pi) / TWO_PI)
    shift = np.cumsum(turns, axis=axis)
    pad = [(0, 0)] * x.ndim
    pad[axis] = (1, 0)
    shift = np.pad(shift, pad)
    return x - TWO_PI * shift


def _validate_fit_inputs(phase, indices) -> tuple[np.ndarray, np.ndarray]:
    phi = np.asarray(phase, dtype=np.float64)
    k = np.asarray(indices, dtype=np.float64)
    if k.ndim != 1 or phi.shape[-1:] != k.shape:
        raise ShapeError(f"phase {phi.shape} and indices {k.shape} do not match")
    if k.size < 2:
        raise InvalidInputError("need at least two points to fit")
    _check_finite(phi, "phase")
    _check_finite(k, "subcarrier indices")
    return phi, k


def fit_linear_phase(unwrapped, indices) -> PhaseFit:
    """Endpoint slope and mean-matching intercept of the unwrapped phase.

    ``unwrapped`` may carry leading batch axes; the fit runs over the last.
    """
    phi, k = _validate_fit_inputs(unwrapped, indices)
    if k[-1] == k[0]:
        raise DegenerateFitError("first and last subcarrier index coincide")
    if np.unique(k).size != k.size:
        raise DegenerateFitError("subcarrier indices must be distinct")
    a = (phi[..., -1] - phi[..., 0]) / (k[-1] - k[0])
    b = phi.mean(axis=-1) - a * k.mean()
    if phi.ndim == 1:
        return PhaseFit(float(a), float(b))
    return PhaseFit(a, b)


def correct_phase(unwrapped, indices, fit: PhaseFit) -> np.ndarray:
    phi, k = _validate_fit_inputs(unwrapped, indices)
    a = np.asarray(fit.slope_a, dtype=np.float64)[..., None]
    b = np.asarray(fit.intercept_b, dtype=np.float64)[..., None]
    return phi - (a * k + b)


def sanitize_phase(raw, indices) -> tuple[np.ndarray, PhaseFit]:
    """unwrap -> fit -> correct over the last axis. Returns (corrected, fit)."""
    unwrapped = unwrap_phase(raw, axis=-1)
    fit = fit_linear_phase(unwrapped, indices)
    return correct_phase(unwrapped, indices, fit), fit


def amplitude_db(values: np.ndarray) -> np.ndarray:
    mag = np.abs(values)
    out = np.full(mag.shape, AMPLITUDE_FLOOR_DB)
    ok = mag >= AMPLITUDE_FLOOR
    out[ok] = 20.0 * np.log10(mag[ok])
    return out


def build_csi_image(
    frames: Sequence[CsiFrame],
    antenna_pair: tuple[int, int] = (0, 3),
    mask: CarrierMask = DEFAULT_MASK,
    label: int = 0,
    n_frames: int = NUM_FRAMES,
) -> CsiImage:
    """Stack ``n_frames`` packets into a (4, K, T) amplitude/phase image.

    Rows follow increasing subcarrier index, columns follow timestamps.
    Channels are amplitude in dB and sanitized phase for antenna A, then the
    same for antenna B. Rows outside ``mask`` are zero.
    """
    if len(frames) != n_frames:
        raise ShapeError(f"expected {n_frames} frames, got {len(frames)}")
    stamps = np.array([f.timestamp for f in frames])
    if np.any(np.diff(stamps) <= 0):
        raise OrderingError("frame timestamps must be strictly increasing")
    ref = frames[0].subcarrier_indices
    for f in frames[1:]:
        if not np.array_equal(f.subcarrier_indices, ref):
            raise ShapeError("all frames must report the same subcarrier set")
    n_ant = min(f.antenna_count for f in frames)
    for a in antenna_pair:
        if not 0 <= a < n_ant:
            raise InvalidInputError(f"antenna index {a} not in 0..{n_ant - 1}")

    k_rows = subcarrier_bins(mask.size)
    usable_k = k_rows[mask.usable]
    pos = np.searchsorted(ref, usable_k)
    pos = np.clip(pos, 0, ref.size - 1)
    if not np.array_equal(ref[pos], usable_k):
        raise InvalidInputError("frames do not cover every usable carrier of the mask")

    # (T, antennas, n_usable)
    values = np.stack([f.values[list(antenna_pair)][:, pos] for f in frames])
    return image_from_values(values, usable_k, mask, label)


def image_from_values(
    values: np.ndarray, usable_k: np.ndarray, mask: CarrierMask, label: int
) -> CsiImage:
    """Vectorized core of :func:`build_csi_image`.

    ``values`` is complex with shape (T, 2, n_usable) ordered like
    ``mask.indices()``.
    """
    T = values.shape[0]
    amp = amplitude_db(values)
    phase, _ = sanitize_phase(np.angle(values), usable_k)
    channels = np.zeros((4, mask.size, T), dtype=np.float64)
    rows = np.flatnonzero(mask.usable)
    for ant in range(2):
        channels[2 * ant][rows] = amp[:, ant, :].T
        channels[2 * ant + 1][rows] = phase[:, ant, :].T
    return CsiImage(channels.astype(np.float32), int(label), mask)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel min/max used for the affine map to [-1, 1]."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=np.float64).ravel()
        hi = np.asarray(self.maximum, dtype=np.float64).ravel()
        if lo.shape != hi.shape:
            raise ShapeError("min and max must have one entry per channel")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DegenerateStatsError("normalization stats must be finite")
        if np.any(hi <= lo):
            raise DegenerateStatsError("channel max must exceed min")
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @classmethod
    def from_array(cls, data: np.ndarray, mask: CarrierMask | None = None) -> "ChannelStats":
        """Stats over a (N, C, K, T) or (C, K, T) array, ignoring masked rows."""
        x = np.asarray(data)
        if x.ndim == 3:
            x = x[None]
        if mask is not None:
            x = x[:, :, mask.usable, :]
        return cls(x.min(axis=(0, 2, 3)), x.max(axis=(0, 2, 3)))

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelStats":
        return cls(np.array(d["min"]), np.array(d["max"]))


def _row_mask(mask: CarrierMask | None, K: int) -> np.ndarray:
    if mask is None:
        return np.ones(K, dtype=bool)
    if mask.size != K:
        raise ShapeError("carrier mask length must equal the number of image rows")
    return mask.usable


def normalize_array(
    data: np.ndarray, stats: ChannelStats, mask: CarrierMask | None = None, clip: bool = True
) -> np.ndarray:
    """Map each channel of (..., C, K, T) data affinely to [-1, 1].

    Masked rows stay exactly zero. Values outside the stats range are
    clipped unless ``clip`` is False.
    """
    data = np.asarray(data)
    out_dtype = data.dtype if data.dtype in (np.float32, np.float64) else np.float32
    x = data.astype(np.float64)
    C, K = x.shape[-3], x.shape[-2]
    if stats.minimum.size != C:
        raise ShapeError(f"stats cover {stats.minimum.size} channels, data has {C}")
    lo = stats.minimum[:, None, None]
    hi = stats.maximum[:, None, None]
    y = 2.0 * (x - lo) / (hi - lo) - 1.0
    if clip:
        y = np.clip(y, -1.0, 1.0)
    rows = _row_mask(mask, K)
    y[..., ~rows, :] = 0.0
    return y.astype(out_dtype)


def denormalize_array(
    data: np.ndarray, stats: ChannelStats, mask: CarrierMask | None = None
) -> np.ndarray:
    y = np.asarray(data, dtype=np.float64)
    lo = stats.minimum[:, None, None]
    hi = stats.maximum[:, None, None]
    x = (y + 1.0) * 0.5 * (hi - lo) + lo
    x[..., ~_row_mask(mask, y.shape[-2]), :] = 0.0
    return x


def normalize(image: CsiImage, stats: ChannelStats) -> CsiImage:
    return CsiImage(
        normalize_array(image.channels, stats, image.carrier_mask),
        image.label,
        image.carrier_mask,
        image.channel_roles,
    )


def denormalize(image: CsiImage, stats: ChannelStats) -> CsiImage:
    return CsiImage(
        denormalize_array(image.channels, stats, image.carrier_mask).astype(image.channels.dtype),
        image.label,
        image.carrier_mask,
        image.channel_roles,
    )


def block_mean(data: np.ndarray, factor_k: int, factor_t: int | None = None) -> np.ndarray:
    """Average non-overlapping ``factor_k x factor_t`` blocks over the last two axes."""
    factor_t = factor_k if factor_t is None else factor_t
    x = np.asarray(data)
    K, T = x.shape[-2:]
    if K % factor_k or T % factor_t:
        raise ShapeError(f"({K}, {T}) is not divisible by ({factor_k}, {factor_t})")
    y = x.reshape(*x.shape[:-2], K // factor_k, factor_k, T // factor_t, factor_t)
    return y.mean(axis=(-3, -1))
