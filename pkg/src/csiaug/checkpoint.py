"""Self-describing weight checkpoints shared by the diffusion and ViT trainers.

A checkpoint is an uncompressed ``.npz`` archive. Tensors are stored as
little-endian float32 under ``model/<name>``, ``ema/<name>`` (weight
average, optional) and ``optim/<param>/<slot>``;
``rng`` holds the torch generator state bytes and ``meta`` a UTF-8 JSON
document with the kind, config echo, step count and optimizer hyperparameters.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .errors import ContainerError


def _to_le32(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().to(torch.float32).numpy().astype("<f4")


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    *,
    kind: str,
    config: dict,
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
    generator: torch.Generator | None = None,
    extra: dict | None = None,
    ema: torch.nn.Module | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in model.state_dict().items():
        arrays[f"model/{name}"] = _to_le32(tensor)
    if ema is not None:
        for name, tensor in ema.state_dict().items():
            arrays[f"ema/{name}"] = _to_le32(tensor)

    meta = {"kind": kind, "config": config, "step": int(step), "extra": extra or {}}
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        groups = []
        for group in optimizer.param_groups:
            groups.append({k: v for k, v in group.items() if k != "params"})
            for p in group["params"]:
                for slot, value in optimizer.state.get(p, {}).items():
                    arrays[f"optim/{names[id(p)]}/{slot}"] = _to_le32(torch.as_tensor(value))
        meta["optimizer"] = {"type": type(optimizer).__name__, "param_groups": groups}
    if generator is not None:
        arrays["rng"] = generator.get_state().numpy()
    arrays["meta"] = np.frombuffer(json.dumps(meta, default=_json_default).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def _json_default(o):
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, (tuple, np.ndarray)):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def read_checkpoint(path: str | Path) -> dict:
    """Raw contents: ``meta`` dict, ``model``/``ema``/``optim`` tensor dicts, ``rng`` state or None."""
    with np.load(path) as z:
        if "meta" not in z.files:
            raise ContainerError(f"{path}: not a csiaug checkpoint")
        meta = json.loads(bytes(z["meta"]).decode())
        model = {k[6:]: torch.from_numpy(z[k].astype(np.float32)) for k in z.files if k.startswith("model/")}
        ema = {k[4:]: torch.from_numpy(z[k].astype(np.float32)) for k in z.files if k.startswith("ema/")}
        optim = {k[6:]: torch.from_numpy(z[k].astype(np.float32)) for k in z.files if k.startswith("optim/")}
        rng = torch.from_numpy(z["rng"].copy()) if "rng" in z.files else None
    return {"meta": meta, "model": model, "ema": ema, "optim": optim, "rng": rng}


def restore(
    ckpt: dict,
    model: torch.nn.Module,
    optimizer: torch.optim.Optimizer | None = None,
    generator: torch.Generator | None = None,
    weights: str = "model",
) -> int:
    """Load weights (and optionally optimizer/rng state) in place; returns the step.

    ``weights="ema"`` loads the stored weight average instead of the raw weights.
    """
    state = model.state_dict()
    for name, value in ckpt[weights].items():
        state[name] = value.to(state[name].dtype)
    model.load_state_dict(state)
    if optimizer is not None and ckpt["optim"]:
        params = dict(model.named_parameters())
        for key, value in ckpt["optim"].items():
            pname, slot = key.rsplit("/", 1)
            p = params[pname]
            target = optimizer.state[p]
            if slot == "step":
                target[slot] = value.reshape(())
            else:
                target[slot] = value.to(p.dtype).to(p.device)
    if generator is not None and ckpt["rng"] is not None:
        generator.set_state(ckpt["rng"])
    return int(ckpt["meta"]["step"])
