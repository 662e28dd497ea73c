"""Versioned binary checkpoints with deterministic serialization.

Layout: 4-byte magic, uint32 format version, uint64 header length, a
JSON header (kind, config echo, step, tensor manifest, extra metadata),
then raw little-endian tensor payloads in manifest order. Because the
byte layout is a pure function of the content, save -> load -> save
reproduces a file exactly, which the tests rely on.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

MAGIC = b"FRC1"
FORMAT_VERSION = 1

_DTYPES = {"<f4", "<f8", "<i8", "<i4", "<u1"}


@dataclass
class Checkpoint:
    """In-memory image of a checkpoint file."""

    kind: str
    config: dict
    step: int
    tensors: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix.`` with the prefix stripped."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self.tensors.items() if k.startswith(prefix + ".")}


def _to_numpy(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    arr = np.asarray(value)
    canon = arr.dtype.newbyteorder("<").str
    if canon not in _DTYPES:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    arr = arr.astype(canon)
    # ascontiguousarray would promote 0-dim scalars (e.g. Adam's step) to 1-dim
    return np.ascontiguousarray(arr) if arr.ndim else arr


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Serialize atomically: write to a temp file, fsync, then rename."""
    path = Path(path)
    arrays = {name: _to_numpy(t) for name, t in ckpt.tensors.items()}
    manifest = [
        {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)} for name, arr in arrays.items()
    ]
    header = json.dumps(
        {"kind": ckpt.kind, "config": ckpt.config, "step": ckpt.step, "extra": ckpt.extra, "tensors": manifest},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for name in arrays:
                fh.write(arrays[name].tobytes(order="C"))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version} in {path}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = fh.read(count * dtype.itemsize)
            if len(data) != count * dtype.itemsize:
                raise ValueError(f"truncated checkpoint: {path}")
            tensors[entry["name"]] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"trailing bytes in checkpoint: {path}")
    return Checkpoint(kind=header["kind"], config=header["config"], step=header["step"], tensors=tensors, extra=header["extra"])


def state_dict_tensors(module: torch.nn.Module, prefix: str) -> dict[str, np.ndarray]:
    """Flatten a module state dict into prefixed numpy tensors."""
    return {f"{prefix}.{name}": _to_numpy(t) for name, t in module.state_dict().items()}


def load_state_dict_tensors(module: torch.nn.Module, tensors: dict[str, np.ndarray]) -> None:
    state = {name: torch.from_numpy(np.ascontiguousarray(arr)) for name, arr in tensors.items()}
    reference = module.state_dict()
    if set(state) != set(reference):
        missing = sorted(set(reference) - set(state))
        extra = sorted(set(state) - set(reference))
        raise ValueError(f"state dict mismatch: missing {missing}, unexpected {extra}")
    for name, t in state.items():
        state[name] = t.to(reference[name].dtype).reshape(reference[name].shape)
    module.load_state_dict(state)


def optimizer_tensors(opt: torch.optim.Optimizer, prefix: str) -> tuple[dict[str, np.ndarray], dict]:
    """Flatten optimizer slots into tensors plus a JSON-safe param-group echo."""
    sd = opt.state_dict()
    tensors: dict[str, np.ndarray] = {}
    slot_names: dict[str, list[str]] = {}
    for pid, slots in sd["state"].items():
        names = []
        for slot, value in slots.items():
            tensors[f"{prefix}.{pid}.{slot}"] = _to_numpy(value)
            names.append(slot)
        slot_names[str(pid)] = names
    groups = [{k: v for k, v in g.items()} for g in sd["param_groups"]]
    return tensors, {"slots": slot_names, "param_groups": groups}


def load_optimizer_tensors(opt: torch.optim.Optimizer, tensors: dict[str, np.ndarray], meta: dict) -> None:
    state: dict[int, dict] = {}
    for pid_str, names in meta["slots"].items():
        pid = int(pid_str)
        state[pid] = {}
        for slot in names:
            arr = tensors[f"{pid}.{slot}"]
            state[pid][slot] = torch.from_numpy(np.array(arr, copy=True))
    opt.load_state_dict({"state": state, "param_groups": meta["param_groups"]})
