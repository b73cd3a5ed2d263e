"""``.csit`` dataset container, its JSON sidecar, and CSI frame readers.

Binary layout (little-endian)::

    magic "CSIT" | u8 version=1 | u8 dtype (0=float32) | u16 reserved=0
    u32 n_samples | u32 C | u32 K | u32 T | u32 num_classes
    n_samples x [u16 label | C*K*T float32, C-major, K-major, T-minor]

The sidecar ``<name>.json`` next to ``<name>.csit`` holds everything that is
not a tensor: channel roles, carrier mask, normalization stats, and per-sample
provenance and ids.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Protocol, Sequence

import numpy as np

from .csi_core import CHANNEL_ROLES, CarrierMask, ChannelStats, CsiFrame, CsiImage
from .errors import ContainerError, ShapeError

MAGIC = b"CSIT"
VERSION = 1
DTYPE_FLOAT32 = 0
HEADER = struct.Struct("<4sBBHIIIII")
PROVENANCES = ("real", "synthetic", "generated")


@dataclass
class CsiDataset:
    """A labelled stack of CSI images with per-sample bookkeeping."""

    data: np.ndarray  # float32 (N, C, K, T)
    labels: np.ndarray  # int64 (N,)
    num_classes: int
    provenance: list[str] = field(default_factory=list)
    sample_ids: list[str] = field(default_factory=list)
    channel_roles: tuple[str, ...] = CHANNEL_ROLES
    carrier_mask: CarrierMask | None = None
    stats: ChannelStats | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.data.ndim != 4:
            raise ShapeError(f"expected (N, C, K, T) data, got {self.data.shape}")
        n = self.data.shape[0]
        if self.labels.size != n:
            raise ShapeError("one label per sample required")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContainerError("labels must lie in 0..num_classes-1")
        if not self.provenance:
            self.provenance = ["real"] * n
        if not self.sample_ids:
            self.sample_ids = [f"s{i:06d}" for i in range(n)]
        if len(self.provenance) != n or len(self.sample_ids) != n:
            raise ShapeError("provenance and sample_ids need one entry per sample")
        bad = set(self.provenance) - set(PROVENANCES)
        if bad:
            raise ContainerError(f"unknown provenance {sorted(bad)}")
        self.provenance = list(self.provenance)
        self.sample_ids = list(self.sample_ids)
        self.channel_roles = tuple(self.channel_roles)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape[1:])

    def subset(self, index: Sequence[int] | np.ndarray) -> "CsiDataset":
        index = np.asarray(index, dtype=np.int64)
        return CsiDataset(
            self.data[index],
            self.labels[index],
            self.num_classes,
            [self.provenance[i] for i in index],
            [self.sample_ids[i] for i in index],
            self.channel_roles,
            self.carrier_mask,
            self.stats,
            dict(self.extra),
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def images(self) -> list[CsiImage]:
        mask = self.carrier_mask or CarrierMask.all_usable(self.data.shape[2])
        return [CsiImage(x, int(y), mask, self.channel_roles) for x, y in zip(self.data, self.labels)]

    @classmethod
    def from_images(cls, images: Sequence[CsiImage], num_classes: int, **kw) -> "CsiDataset":
        if not images:
            raise ShapeError("cannot build a dataset from zero images")
        return cls(
            np.stack([im.channels for im in images]),
            np.array([im.label for im in images]),
            num_classes,
            channel_roles=images[0].channel_roles,
            carrier_mask=images[0].carrier_mask,
            **kw,
        )


def concat(a: CsiDataset, b: CsiDataset) -> CsiDataset:
    if a.image_shape != b.image_shape or a.num_classes != b.num_classes:
        raise ShapeError("datasets differ in image shape or class count")
    return CsiDataset(
        np.concatenate([a.data, b.data]),
        np.concatenate([a.labels, b.labels]),
        a.num_classes,
        a.provenance + b.provenance,
        a.sample_ids + b.sample_ids,
        a.channel_roles,
        a.carrier_mask,
        a.stats,
        dict(a.extra),
    )


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_csit(path: str | Path, ds: CsiDataset) -> Path:
    path = Path(path)
    n, C, K, T = ds.data.shape
    if ds.num_classes > 0xFFFF:
        raise ContainerError("labels must fit in u16")
    path.parent.mkdir(parents=True, exist_ok=True)
    record = np.dtype([("label", "<u2"), ("values", "<f4", (C * K * T,))])
    records = np.empty(n, dtype=record)
    records["label"] = ds.labels
    records["values"] = ds.data.reshape(n, -1)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, 0, n, C, K, T, ds.num_classes))
        fh.write(records.tobytes())

    manifest = {
        "format": "csit",
        "version": VERSION,
        "n_samples": n,
        "shape": [C, K, T],
        "num_classes": ds.num_classes,
        "channel_roles": list(ds.channel_roles),
        "carrier_mask": None if ds.carrier_mask is None else ds.carrier_mask.usable.astype(int).tolist(),
        "normalization": None if ds.stats is None else ds.stats.to_dict(),
        "provenance": ds.provenance,
        "provenance_counts": {p: ds.provenance.count(p) for p in PROVENANCES if p in ds.provenance},
        "sample_ids": ds.sample_ids,
        "extra": ds.extra,
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path


def read_csit(path: str | Path) -> CsiDataset:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise ContainerError(f"{path}: truncated header")
    magic, version, dtype, reserved, n, C, K, T, num_classes = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerError(f"{path}: bad magic {magic!r}")
    if version != VERSION or dtype != DTYPE_FLOAT32 or reserved != 0:
        raise ContainerError(f"{path}: unsupported version/dtype ({version}, {dtype})")
    record = np.dtype([("label", "<u2"), ("values", "<f4", (C * K * T,))])
    if len(raw) != HEADER.size + n * record.itemsize:
        raise ContainerError(f"{path}: payload size does not match header")
    records = np.frombuffer(raw, dtype=record, count=n, offset=HEADER.size)
    data = records["values"].reshape(n, C, K, T).astype(np.float32)
    labels = records["label"].astype(np.int64)

    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    mask = meta.get("carrier_mask")
    norm = meta.get("normalization")
    return CsiDataset(
        data,
        labels,
        num_classes,
        meta.get("provenance", []),
        meta.get("sample_ids", []),
        tuple(meta.get("channel_roles", CHANNEL_ROLES)),
        None if mask is None else CarrierMask(np.array(mask, dtype=bool)),
        None if norm is None else ChannelStats.from_dict(norm),
        meta.get("extra", {}),
    )


class FrameReader(Protocol):
    """Anything that turns a capture file into time-ordered CSI frames."""

    def read(self, path: str | Path) -> Iterator[CsiFrame]: ...


class CsvFrameReader:
    """Reference reader for the long-format CSV intermediate.

    One row per (packet, antenna, subcarrier) with header
    ``timestamp,antenna,subcarrier,real,imag``. Rows of one packet share a
    timestamp; packets may appear in any order and are yielded sorted.
    """

    columns = ("timestamp", "antenna", "subcarrier", "real", "imag")

    def read(self, path: str | Path) -> Iterator[CsiFrame]:
        packets: dict[float, dict[tuple[int, int], complex]] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(self.columns) - set(reader.fieldnames or ())
            if missing:
                raise ContainerError(f"{path}: missing CSV columns {sorted(missing)}")
            for row in reader:
                ts = float(row["timestamp"])
                key = (int(row["antenna"]), int(row["subcarrier"]))
                packets.setdefault(ts, {})[key] = complex(float(row["real"]), float(row["imag"]))
        for ts in sorted(packets):
            cells = packets[ts]
            ants = sorted({a for a, _ in cells})
            subs = sorted({k for _, k in cells})
            values = np.zeros((len(ants), len(subs)), dtype=np.complex128)
            for i, a in enumerate(ants):
                for j, k in enumerate(subs):
                    try:
                        values[i, j] = cells[(a, k)]
                    except KeyError:
                        raise ContainerError(
                            f"{path}: packet at t={ts} lacks antenna {a} subcarrier {k}"
                        ) from None
            yield CsiFrame(ts, np.array(subs), values)


def write_frames_csv(path: str | Path, frames: Sequence[CsiFrame]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CsvFrameReader.columns)
        for f in frames:
            for a in range(f.antenna_count):
                for k, v in zip(f.subcarrier_indices, f.values[a]):
                    w.writerow([repr(float(f.timestamp)), a, int(k), repr(float(v.real)), repr(float(v.imag))])
    return path


class NpzFrameReader:
    """Binary intermediate: ``timestamps (P,)``, ``subcarriers (n,)``, ``csi (P, A, n)`` complex."""

    def read(self, path: str | Path) -> Iterator[CsiFrame]:
        with np.load(path) as z:
            ts, subs, csi = z["timestamps"], z["subcarriers"], z["csi"]
        order = np.argsort(ts, kind="stable")
        for i in order:
            yield CsiFrame(float(ts[i]), subs, csi[i])


READERS: dict[str, type] = {".csv": CsvFrameReader, ".npz": NpzFrameReader}


def reader_for(path: str | Path) -> FrameReader:
    try:
        return READERS[Path(path).suffix.lower()]()
    except KeyError:
        raise ContainerError(f"no frame reader registered for {Path(path).suffix!r}") from None
