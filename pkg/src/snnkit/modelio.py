"""Binary container for layer parameters.

Layout (little-endian): magic "SNNP", u32 version, u32 layer count, then per
layer a u32 ndim, u32 dims, float32 threshold, float32 leak, and the raw
float32 weight bytes in row-major order. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import IngestionError
from .neuron import LayerParams

MAGIC = b"SNNP"
VERSION = 1


def save_params(path, params: list):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for p in params:
            w = np.ascontiguousarray(p.weights, dtype=np.float32)
            fh.write(struct.pack("<I", w.ndim))
            fh.write(struct.pack(f"<{w.ndim}I", *w.shape))
            fh.write(struct.pack("<ff", np.float32(p.threshold), np.float32(p.leak)))
            fh.write(w.tobytes())


def _read_exact(fh, count, path, what):
    data = fh.read(count)
    if len(data) != count:
        raise IngestionError(
            f"{path}: truncated model file while reading {what} at byte offset {fh.tell() - len(data)}"
        )
    return data


def load_params(path) -> list:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, path, "magic")
        if magic != MAGIC:
            raise IngestionError(f"{path}: bad model magic {magic!r} at byte offset 0")
        version, count = struct.unpack("<II", _read_exact(fh, 8, path, "header"))
        if version != VERSION:
            raise IngestionError(f"{path}: unsupported model version {version}")
        params = []
        for _ in range(count):
            ndim = struct.unpack("<I", _read_exact(fh, 4, path, "ndim"))[0]
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, path, "shape"))
            threshold, leak = struct.unpack("<ff", _read_exact(fh, 8, path, "scalars"))
            n = int(np.prod(shape)) if ndim else 1
            raw = _read_exact(fh, 4 * n, path, "weights")
            weights = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            params.append(LayerParams(weights=weights, threshold=float(threshold), leak=float(leak)))
        extra = fh.read(1)
        if extra:
            raise IngestionError(f"{path}: trailing bytes at byte offset {fh.tell() - 1}")
    return params
