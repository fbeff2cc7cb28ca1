"""Versioned binary weight container.

Layout (little-endian)::

    magic      8 bytes  b"EFFLIF\\x00\\x01"
    version    u32
    spec hash  32 bytes (sha256 of the network config text)
    count      u32
    per tensor: ndim u32, dims u32 * ndim, fp32 data
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigError, DataError
from .network import NetworkSpec
from .tensor import DTYPE

MAGIC = b"EFFLIF\x00\x01"
VERSION = 1


def save_checkpoint(path, weights, spec: NetworkSpec) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(spec.spec_hash())
        fh.write(struct.pack("<I", len(weights)))
        for w in weights:
            w = np.asarray(w)
            fh.write(struct.pack("<I", w.ndim))
            fh.write(struct.pack(f"<{w.ndim}I", *w.shape))
            fh.write(w.astype("<f4").tobytes())


def load_checkpoint(path, spec: NetworkSpec | None = None) -> list[np.ndarray]:
    """Read weights; if ``spec`` is given its hash and shapes must match."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if not blob.startswith(MAGIC):
        raise DataError(f"{path} is not a checkpoint")
    off = len(MAGIC)
    try:
        (version,) = struct.unpack_from("<I", blob, off)
        off += 4
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        digest = blob[off:off + 32]
        off += 32
        (count,) = struct.unpack_from("<I", blob, off)
        off += 4
        weights = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            n = int(np.prod(shape))
            data = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
            off += 4 * n
            weights.append(data.reshape(shape).astype(DTYPE))
    except (struct.error, ValueError) as exc:
        raise DataError(f"truncated checkpoint {path}: {exc}") from None
    if off != len(blob):
        raise DataError(f"trailing bytes in checkpoint {path}")
    if spec is not None:
        if digest != spec.spec_hash():
            raise ConfigError("checkpoint was written for a different network spec")
        if [w.shape for w in weights] != spec.weight_shapes():
            raise ConfigError("checkpoint weight shapes do not match the network spec")
    return weights
