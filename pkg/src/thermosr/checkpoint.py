"""Checkpoint serialization.

Layout: an 8-byte magic, a little-endian uint64 header length, a canonical
JSON header (sorted keys, no extraneous whitespace), then the concatenated
raw little-endian tensor payloads in header order. Canonical encoding makes
save -> load -> save byte-identical, which the resume tests rely on.

The header records step/epoch counters, the resolved configuration text and
its SHA-256, the experiment seed (crops and data order are derived from
counters, so no generator state is needed beyond it), and one entry per
tensor: name, shape, dtype, kind (param, adam_m, adam_v) and payload offset.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, InvalidInputError

CKPT_MAGIC = b"PCKPT001"

_DTYPES = {
    "float32": (torch.float32, "<f4"),
    "float64": (torch.float64, "<f8"),
}


@dataclass
class Checkpoint:
    step: int
    epoch: int
    config_text: str
    seed: int
    params: dict[str, torch.Tensor] = field(default_factory=dict)
    adam_m: dict[str, torch.Tensor] = field(default_factory=dict)
    adam_v: dict[str, torch.Tensor] = field(default_factory=dict)
    adam_steps: dict[str, int] = field(default_factory=dict)

    @property
    def config_sha256(self) -> str:
        return hashlib.sha256(self.config_text.encode()).hexdigest()


def _dtype_name(t: torch.Tensor) -> str:
    for name, (dt, _) in _DTYPES.items():
        if t.dtype == dt:
            return name
    raise InvalidInputError(f"unsupported tensor dtype {t.dtype}")


def _tensor_bytes(t: torch.Tensor) -> bytes:
    arr = t.detach().cpu().numpy()
    return np.ascontiguousarray(arr).astype(_DTYPES[_dtype_name(t)][1]).tobytes()


def checkpoint_from(model: torch.nn.Module, optimizer: torch.optim.Optimizer,
                    *, step: int, epoch: int, config_text: str, seed: int) -> Checkpoint:
    """Snapshot model parameters and Adam moments under parameter names."""
    ckpt = Checkpoint(step=step, epoch=epoch, config_text=config_text, seed=seed)
    named = dict(model.named_parameters())
    for name, p in named.items():
        ckpt.params[name] = p.detach().clone()
    state = optimizer.state
    for name, p in named.items():
        if p in state and "exp_avg" in state[p]:
            ckpt.adam_m[name] = state[p]["exp_avg"].detach().clone()
            ckpt.adam_v[name] = state[p]["exp_avg_sq"].detach().clone()
            ckpt.adam_steps[name] = int(state[p]["step"])
    return ckpt


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for kind, table in (("param", ckpt.params), ("adam_m", ckpt.adam_m),
                        ("adam_v", ckpt.adam_v)):
        for name in sorted(table):
            t = table[name]
            blob = _tensor_bytes(t)
            entries.append({
                "name": name,
                "kind": kind,
                "shape": list(t.shape),
                "dtype": _dtype_name(t),
                "offset": offset,
                "nbytes": len(blob),
            })
            blobs.append(blob)
            offset += len(blob)
    header = {
        "step": ckpt.step,
        "epoch": ckpt.epoch,
        "seed": ckpt.seed,
        "config_sha256": ckpt.config_sha256,
        "config_text": ckpt.config_text,
        "adam_steps": {k: ckpt.adam_steps[k] for k in sorted(ckpt.adam_steps)},
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise InvalidInputError(f"{path}: not a checkpoint file (bad magic)")
    (head_len,) = struct.unpack("<Q", data[8:16])
    head_end = 16 + head_len
    if len(data) < head_end:
        raise InvalidInputError(f"{path}: truncated header")
    header = json.loads(data[16:head_end])
    ckpt = Checkpoint(
        step=header["step"],
        epoch=header["epoch"],
        config_text=header["config_text"],
        seed=header["seed"],
        adam_steps={k: int(v) for k, v in header["adam_steps"].items()},
    )
    if header["config_sha256"] != ckpt.config_sha256:
        raise InvalidInputError(f"{path}: config text does not match its stored hash")
    tables = {"param": ckpt.params, "adam_m": ckpt.adam_m, "adam_v": ckpt.adam_v}
    for entry in header["tensors"]:
        start = head_end + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(data):
            raise InvalidInputError(f"{path}: truncated payload at {entry['name']}")
        torch_dtype, np_dtype = _DTYPES[entry["dtype"]]
        arr = np.frombuffer(data[start:end], dtype=np_dtype).reshape(entry["shape"])
        tables[entry["kind"]][entry["name"]] = torch.from_numpy(arr.copy())
    return ckpt


def apply_checkpoint(ckpt: Checkpoint, model: torch.nn.Module,
                     optimizer: torch.optim.Optimizer | None = None,
                     *, expected_config_text: str | None = None) -> None:
    """Restore parameters (and Adam moments) in place.

    Refuses to restore into a run whose resolved configuration differs from
    the one stored in the checkpoint.
    """
    if expected_config_text is not None:
        want = hashlib.sha256(expected_config_text.encode()).hexdigest()
        if want != ckpt.config_sha256:
            raise ConfigurationError(
                "checkpoint was written under a different configuration "
                f"(stored {ckpt.config_sha256[:12]}, current {want[:12]})"
            )
    named = dict(model.named_parameters())
    missing = sorted(set(named) ^ set(ckpt.params))
    if missing:
        raise InvalidInputError(f"parameter names do not match checkpoint: {missing[:4]}")
    with torch.no_grad():
        for name, p in named.items():
            src = ckpt.params[name]
            if tuple(src.shape) != tuple(p.shape):
                raise InvalidInputError(
                    f"{name}: checkpoint shape {tuple(src.shape)} != model {tuple(p.shape)}"
                )
            p.copy_(src.to(p.dtype))
    if optimizer is None or not ckpt.adam_m:
        return
    for name, p in named.items():
        if name in ckpt.adam_m:
            optimizer.state[p] = {
                "step": torch.tensor(float(ckpt.adam_steps[name])),
                "exp_avg": ckpt.adam_m[name].to(p.dtype).clone(),
                "exp_avg_sq": ckpt.adam_v[name].to(p.dtype).clone(),
            }
