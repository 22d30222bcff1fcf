"""Parameter registry, Adam, EMA target updates, and tensor serialization.

A ParamSet is an ordered name -> Tensor mapping plus per-tensor Adam slots.
Optimizer steps mutate `.data` in place between graph builds; nothing here
records onto the autodiff graph.

Checkpoints are single-file containers: a fixed header, one JSON manifest
mapping each tensor name to shape/dtype/byte offset, then the raw
little-endian IEEE-754 payloads concatenated in manifest order.
"""

from __future__ import annotations

import json
import struct
import numpy as np

from .tensor import Tensor

CHECKPOINT_MAGIC = b"PCKP"
CHECKPOINT_VERSION = 1


class ParamSet:
    """Ordered named parameters with Adam moment slots."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._slots: dict[str, dict] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._tensors[name] = tensor
        self._slots[name] = {
            "m": np.zeros_like(tensor.data),
            "v": np.zeros_like(tensor.data),
            "t": 0,
        }
        return tensor

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def slot(self, name: str) -> dict:
        return self._slots[name]

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def subset(self, prefix: str) -> "ParamSet":
        """View sharing the tensors whose names start with `prefix` (slots included)."""
        out = ParamSet()
        for name, t in self._tensors.items():
            if name.startswith(prefix):
                out._tensors[name] = t
                out._slots[name] = self._slots[name]
        return out

    def copy_data(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def global_grad_norm(self) -> float:
        total = 0.0
        for t in self._tensors.values():
            if t.grad is not None:
                total += float(np.sum(np.asarray(t.grad, dtype=np.float64) ** 2))
        return float(np.sqrt(total))


def adam_step(
    params: ParamSet,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    clip_norm: float = 100.0,
) -> float:
    """One bias-corrected Adam step over every tensor in `params`.

    Gradients are first scaled so their global L2 norm does not exceed
    `clip_norm`, then consumed and cleared. Returns the pre-clip norm.
    A registered tensor without a gradient is an error: the caller built a
    loss that silently missed part of the model.
    """
    missing = [name for name, t in params.items() if t.grad is None]
    if missing:
        raise ValueError(f"adam_step: missing gradients for {missing}")
    norm = params.global_grad_norm()
    scale = 1.0 if norm <= clip_norm else clip_norm / norm
    for name, t in params.items():
        g = t.grad * scale if scale != 1.0 else t.grad
        slot = params.slot(name)
        slot["t"] += 1
        t_step = slot["t"]
        slot["m"] = beta1 * slot["m"] + (1.0 - beta1) * g
        slot["v"] = beta2 * slot["v"] + (1.0 - beta2) * (g * g)
        m_hat = slot["m"] / (1.0 - beta1**t_step)
        v_hat = slot["v"] / (1.0 - beta2**t_step)
        t.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(t.data.dtype, copy=False)
        t.grad = None
    return norm


def ema_update(target: ParamSet, online: ParamSet, eta: float) -> None:
    """target <- (1 - eta) * target + eta * online, elementwise, gradient-free."""
    if target.names() != online.names():
        raise ValueError(
            f"ema_update: name mismatch {sorted(set(target.names()) ^ set(online.names()))}"
        )
    for name, src in online.items():
        dst = target[name]
        if dst.data.shape != src.data.shape:
            raise ValueError(f"ema_update: shape mismatch for {name!r}")
        dst.data *= 1.0 - eta
        dst.data += eta * src.data


# ---------------------------------------------------------------------------
# container serialization


def save_tensors(path, named: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays into the manifest+payload container format."""
    entries = []
    payloads = []
    offset = 0
    for name, arr in named.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.float64:
            dtype = "<f8"
        elif arr.dtype == np.float32:
            dtype = "<f4"
        else:
            raise ValueError(f"save_tensors: unsupported dtype {arr.dtype} for {name!r}")
        raw = arr.astype(dtype).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    manifest = json.dumps(
        {"version": CHECKPOINT_VERSION, "meta": meta or {}, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        for raw in payloads:
            f.write(raw)


class CheckpointError(Exception):
    pass


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container written by save_tensors; strict about framing and sizes."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint container (bad magic)")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: version {version} != supported {CHECKPOINT_VERSION}")
    man_len = struct.unpack("<I", blob[8:12])[0]
    if len(blob) < 12 + man_len:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[12 : 12 + man_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt manifest: {e}") from e
    payload = blob[12 + man_len :]
    named = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        dtype = np.dtype(entry["dtype"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + n * dtype.itemsize
        if end > len(payload):
            raise CheckpointError(f"{path}: payload truncated, tensor {entry['name']!r} missing")
        named[entry["name"]] = np.frombuffer(payload[start:end], dtype=dtype).reshape(shape).copy()
    return named, manifest.get("meta", {})


def paramset_state(params: ParamSet, prefix: str = "") -> tuple[dict[str, np.ndarray], dict]:
    """Flatten tensors + Adam slots for serialization; returns (arrays, step counters)."""
    arrays: dict[str, np.ndarray] = {}
    steps: dict[str, int] = {}
    for name, t in params.items():
        slot = params.slot(name)
        arrays[prefix + name] = t.data
        arrays[prefix + name + "#m"] = slot["m"]
        arrays[prefix + name + "#v"] = slot["v"]
        steps[prefix + name] = slot["t"]
    return arrays, steps


def restore_paramset(params: ParamSet, arrays: dict[str, np.ndarray], steps: dict, prefix: str = "") -> None:
    """Load values+slots back into an already-constructed ParamSet, strictly."""
    for name, t in params.items():
        for key in (prefix + name, prefix + name + "#m", prefix + name + "#v"):
            if key not in arrays:
                raise CheckpointError(f"checkpoint missing tensor {key!r}")
        data = arrays[prefix + name]
        if tuple(data.shape) != tuple(t.data.shape):
            raise CheckpointError(
                f"checkpoint tensor {prefix + name!r} has shape {data.shape}, expected {t.data.shape}"
            )
        t.data = data.astype(t.data.dtype, copy=True)
        slot = params.slot(name)
        slot["m"] = arrays[prefix + name + "#m"].astype(t.data.dtype, copy=True)
        slot["v"] = arrays[prefix + name + "#v"].astype(t.data.dtype, copy=True)
        slot["t"] = int(steps[prefix + name])
