"""Dense and bit-packed tensors plus the few linear ops the network needs.

Dense tensors are plain ``numpy`` arrays in :data:`DTYPE`. A leading batch
axis is allowed everywhere; the per-sample layout is channels-first, so a
channel group is a contiguous slab of the array.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DivisibilityError

DTYPE = np.float64


def as_dense(x) -> np.ndarray:
    if isinstance(x, BitTensor):
        return x.unpack()
    return np.asarray(x, dtype=DTYPE)


class BitTensor:
    """Binary tensor stored 8 values per byte."""

    __slots__ = ("shape", "bits")

    def __init__(self, shape, bits: np.ndarray):
        shape = tuple(int(d) for d in shape)
        if any(d < 1 for d in shape):
            raise DimensionError(f"all dimensions must be >= 1, got {shape}")
        size = int(np.prod(shape, dtype=np.int64))
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        if bits.size != (size + 7) // 8:
            raise DimensionError(f"{bits.size} packed bytes cannot hold shape {shape}")
        self.shape = shape
        self.bits = bits

    @classmethod
    def pack(cls, values) -> "BitTensor":
        a = np.asarray(values)
        if a.ndim == 0:
            a = a.reshape(1)
        flat = a.ravel()
        if not np.all((flat == 0) | (flat == 1)):
            raise ValueError("BitTensor only stores values in {0, 1}")
        return cls(a.shape, np.packbits(flat.astype(np.uint8)))

    @classmethod
    def zeros(cls, shape) -> "BitTensor":
        size = int(np.prod(shape, dtype=np.int64))
        return cls(shape, np.zeros((size + 7) // 8, dtype=np.uint8))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def nbytes(self) -> int:
        return self.bits.nbytes

    def unpack(self, dtype=DTYPE) -> np.ndarray:
        flat = np.unpackbits(self.bits, count=self.size)
        return flat.reshape(self.shape).astype(dtype)

    def count(self) -> int:
        return int(np.unpackbits(self.bits, count=self.size).sum())

    def __eq__(self, other):
        if not isinstance(other, BitTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"BitTensor(shape={self.shape}, ones={self.count()})"


def matvec(weights, inputs) -> np.ndarray:
    """``out[..., i] = sum_j W[i, j] * in[..., j]`` with an optional batch axis."""
    W = np.asarray(weights, dtype=DTYPE)
    x = as_dense(inputs)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"cannot apply weights {W.shape} to input {x.shape}")
    return x @ W.T


def _windows(x: np.ndarray, kernel: int, padding: int) -> np.ndarray:
    # (..., Cin, L) -> (..., L', Cin, K) view of sliding windows
    if padding:
        pad = [(0, 0)] * (x.ndim - 1) + [(padding, padding)]
        x = np.pad(x, pad)
    if kernel > x.shape[-1]:
        raise DimensionError(
            f"kernel {kernel} larger than padded input length {x.shape[-1]}")
    win = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=-1)
    return np.moveaxis(win, -3, -2)


def conv1d(weights, inputs, padding: int = 0) -> np.ndarray:
    """Cross-correlation of ``(Cout, Cin, K)`` weights over ``(..., Cin, L)``."""
    W = np.asarray(weights, dtype=DTYPE)
    x = as_dense(inputs)
    if W.ndim != 3 or x.ndim < 2 or x.shape[-2] != W.shape[1]:
        raise DimensionError(f"cannot convolve weights {W.shape} with input {x.shape}")
    cout, cin, k = W.shape
    win = _windows(x, k, padding)
    cols = win.reshape(win.shape[:-2] + (cin * k,))
    out = cols @ W.reshape(cout, cin * k).T
    return np.swapaxes(out, -1, -2)


def conv1d_grad_weights(dout: np.ndarray, inputs, kernel: int, padding: int) -> np.ndarray:
    """Weight gradient of :func:`conv1d`, summed over any batch axes."""
    x = as_dense(inputs)
    win = _windows(x, kernel, padding)
    cin = x.shape[-2]
    cols = win.reshape(-1, win.shape[-3], cin * kernel)
    d = np.swapaxes(dout, -1, -2).reshape(-1, dout.shape[-1], dout.shape[-2])
    gw = np.einsum("blo,blk->ok", d, cols)
    return gw.reshape(dout.shape[-2], cin, kernel)


def conv1d_grad_input(dout: np.ndarray, weights, in_len: int, padding: int) -> np.ndarray:
    """Input gradient of :func:`conv1d` (transposed convolution)."""
    W = np.asarray(weights, dtype=DTYPE)
    cout, cin, k = W.shape
    lp = in_len + 2 * padding
    lout = dout.shape[-1]
    dx = np.zeros(dout.shape[:-2] + (cin, lp), dtype=DTYPE)
    for j in range(k):
        # dx[..., c, i + j] += sum_o W[o, c, j] * dout[..., o, i]
        dx[..., :, j:j + lout] += np.einsum("oc,...ol->...cl", W[:, :, j], dout)
    if padding:
        dx = dx[..., padding:lp - padding]
    return dx


def channel_split(x, n_groups: int, axis: int = 0) -> list[np.ndarray]:
    """Split along the channel axis into ``n_groups`` contiguous slabs."""
    x = as_dense(x)
    c = x.shape[axis]
    if n_groups < 1 or c % n_groups:
        raise DivisibilityError(f"{c} channels not divisible into {n_groups} groups")
    return np.split(x, n_groups, axis=axis)


def channel_concat(parts, axis: int = 0) -> np.ndarray:
    return np.concatenate([as_dense(p) for p in parts], axis=axis)
