"""Binary checkpoint files: a format-version integer followed by a map from
parameter path to shape list + little-endian float64 payload."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save(path: str | Path, params: dict[str, Tensor]) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            data = params[name].data
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load(path: str | Path, params: dict[str, Tensor]) -> None:
    """Load values in place into the model's parameter tensors.

    Names and shapes must match the model definition exactly.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise CheckpointError(f"truncated checkpoint file: {path}")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (version,) = take("<Q")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    (count,) = take("<I")
    seen: set[str] = set()
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = take("<I")
        shape = tuple(take("<" + "Q" * ndim)) if ndim else ()
        n_vals = int(np.prod(shape)) if shape else 1
        payload = np.frombuffer(blob, dtype="<f8", count=n_vals, offset=off)
        off += n_vals * 8
        if name not in params:
            raise CheckpointError(f"checkpoint parameter '{name}' not in model definition")
        target = params[name]
        if tuple(target.data.shape) != shape:
            raise CheckpointError(
                f"shape mismatch for '{name}': checkpoint {shape}, model {target.data.shape}")
        target.data = payload.astype(np.float64).reshape(shape)
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)}")
