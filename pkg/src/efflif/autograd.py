"""Forward pass with a spike tape, and backpropagation through time.

The backward sweep walks slots in exact reverse processing order (timesteps,
then blocks, member layers and channel groups, all reversed). For every slot
the membrane gradient collects three contributions: the spike path to the
next layer, the carry path into the next consumer of the same buffer, and
that consumer's reset of this slot's spikes. With one buffer per layer these
are the usual spatial and temporal BPTT terms; for shared buffers the "next
consumer" is the next layer, the next channel group, or the block's first
slot at ``t + 1``.

Membranes for the sweep come from a *source*: :class:`CachedMembranes` reads
per-slot snapshots stored during forward; the reverse-recompute source in
:mod:`efflif.memsave` rebuilds them from the final state instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, StateError, UnsupportedModeError
from .lif import ArcTan, Reset, Surrogate
from .network import LayerSpec, NetworkSpec
from .sharing import Kind, SharingBlock
from .tensor import (DTYPE, BitTensor, channel_split, conv1d, conv1d_grad_input,
                     conv1d_grad_weights)

MODES = ("cached", "recompute")


# -- layers -----------------------------------------------------------------

def layer_forward(layer: LayerSpec, W: np.ndarray, inp: np.ndarray) -> np.ndarray:
    if layer.kind == "dense":
        flat = inp.reshape(inp.shape[0], -1)
        return flat @ W.T
    if layer.kind == "conv1d":
        return conv1d(W, inp, layer.padding)
    raise ConfigError("conv2d layers are accounting-only and cannot be executed")


def layer_backward(layer: LayerSpec, W: np.ndarray, inp: np.ndarray, dout: np.ndarray,
                   need_input: bool = True):
    """Returns ``(dW, d_input)``; ``d_input`` is None unless requested."""
    if layer.kind == "dense":
        flat = inp.reshape(inp.shape[0], -1)
        dW = dout.T @ flat
        dinp = (dout @ W).reshape(inp.shape) if need_input else None
        return dW, dinp
    if layer.kind == "conv1d":
        dW = conv1d_grad_weights(dout, inp, layer.kernel, layer.padding)
        dinp = conv1d_grad_input(dout, W, inp.shape[-1], layer.padding) if need_input else None
        return dW, dinp
    raise ConfigError("conv2d layers are accounting-only and cannot be executed")


def readout_forward(layer: LayerSpec, W, inp) -> np.ndarray:
    y = layer_forward(layer, W, inp)
    return y.mean(axis=-1) if y.ndim > 2 else y


def readout_backward(layer: LayerSpec, W, inp, dlogits):
    if layer.kind == "conv1d":
        n = layer.output_shape(inp.shape[1:])[-1]
        dy = np.repeat(dlogits[:, :, None] / n, n, axis=2)
    else:
        dy = dlogits
    return layer_backward(layer, W, inp, dy)


def encode(spec: NetworkSpec, x: np.ndarray, t: int) -> np.ndarray:
    """Direct coding repeats the analog input; sequence coding feeds column ``t``."""
    if spec.encoding == "sequence":
        return np.ascontiguousarray(x[..., t])
    return x


# -- tape -------------------------------------------------------------------

@dataclass
class MemCounters:
    """Membrane values per sample, as counted by the runtime."""

    state_floats: int = 0  # live shared buffers during forward
    snapshots: int = 0  # per-slot membrane arrays cached for backward
    snapshot_floats: int = 0
    backward_peak_floats: int = 0
    temporary_floats: int = 0  # largest transient reverse-step result
    reverse_steps: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Tape:
    spec: NetworkSpec
    mode: str
    relaxed: bool
    x: np.ndarray
    blocks: list[SharingBlock]
    spikes: dict = field(default_factory=dict)  # (t, layer) -> BitTensor | ndarray
    membranes: dict = field(default_factory=dict)  # (t, layer, group) -> ndarray
    final: dict = field(default_factory=dict)  # (block, buffer) -> (u, o)
    logits: np.ndarray | None = None
    counters: MemCounters = field(default_factory=MemCounters)

    @property
    def batch(self) -> int:
        return self.x.shape[0]

    def spike(self, t: int, layer: int) -> np.ndarray:
        try:
            s = self.spikes[(t, layer)]
        except KeyError:
            raise StateError(f"spike tape has no entry for t={t}, layer={layer}") from None
        return s.unpack() if isinstance(s, BitTensor) else s

    def spike_group(self, t: int, block: SharingBlock, pos: int, g: int) -> np.ndarray:
        o = self.spike(t, block.layer_ids[pos])
        if block.groups == 1:
            return o
        return channel_split(o, block.groups, axis=1)[g]

    def layer_input(self, t: int, layer: int) -> np.ndarray:
        if layer == 0:
            return encode(self.spec, self.x, t)
        return self.spike(t, layer - 1)

    def spike_counts(self) -> np.ndarray:
        """Total spikes per hidden layer over batch and timesteps."""
        counts = np.zeros(self.spec.n_hidden)
        for (t, l), s in self.spikes.items():
            counts[l] += s.count() if isinstance(s, BitTensor) else float(np.sum(s))
        return counts


def forward(weights, spec: NetworkSpec, x, mode: str = "cached", relaxed: bool = False,
            surrogate: Surrogate | None = None):
    """Run ``spec.timesteps`` steps; returns ``(logits, tape)``.

    ``relaxed`` replaces every spike by ``surrogate.forward_relax(u - theta)``,
    giving the smooth network whose exact gradient the backward pass computes.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown backward mode {mode!r}")
    if mode == "recompute" and spec.lif.reset is Reset.HARD:
        raise UnsupportedModeError(
            "reverse recomputation needs soft reset; hard reset discards the residual membrane")
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[1:] != spec.input_shape:
        raise DimensionError(f"input batch {x.shape} does not match input shape {spec.input_shape}")
    if len(weights) != len(spec.layers) or any(
            tuple(w.shape) != s for w, s in zip(weights, spec.weight_shapes())):
        raise ConfigError("weights do not match the network spec")
    surrogate = surrogate or ArcTan()
    theta = spec.lif.threshold
    spike_fn = (lambda u: surrogate.forward_relax(u - theta)) if relaxed else None

    blocks = spec.build_blocks()
    tape = Tape(spec, mode, relaxed, x, blocks)
    readout = spec.layers[-1]
    logits = np.zeros((x.shape[0], spec.n_classes), dtype=DTYPE)
    c = tape.counters
    c.state_floats = sum(b.state_size for b in blocks)

    for t in range(spec.timesteps):
        inp = encode(spec, x, t)
        for block in blocks:
            ids = block.layer_ids

            def weighted(pos, prev, ids=ids):
                return layer_forward(spec.layers[ids[pos]], weights[ids[pos]], prev)

            def snapshot(pos, g, u, o, t=t, ids=ids):
                tape.membranes[(t, ids[pos], g)] = u
                c.snapshots += 1
                c.snapshot_floats += u[0].size

            outs = block.step(weighted, inp, spike_fn, snapshot if mode == "cached" else None)
            for pos, o in enumerate(outs):
                tape.spikes[(t, ids[pos])] = o if relaxed else BitTensor.pack(o)
            inp = outs[-1]
        logits += readout_forward(readout, weights[-1], inp)

    if mode == "recompute":
        for bi, block in enumerate(blocks):
            for k, buf in enumerate(block.buffers):
                tape.final[(bi, k)] = buf.u
    tape.logits = logits
    return logits, tape


# -- loss -------------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. ``logits``."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    loss = -float(logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# -- backward ---------------------------------------------------------------

class CachedMembranes:
    needs_inputs = False

    def __init__(self, tape: Tape):
        if tape.mode != "cached":
            raise StateError("tape was recorded without membrane snapshots")
        self.tape = tape
        tape.counters.backward_peak_floats = tape.counters.snapshot_floats

    def get(self, t, bi, pos, g):
        key = (t, self.tape.blocks[bi].layer_ids[pos], g)
        try:
            return self.tape.membranes[key]
        except KeyError:
            raise StateError(f"no cached membrane for t={key[0]}, layer={key[1]}, group={g}") from None

    def release(self, t, bi, pos, g, x_group):
        pass


def sweep(weights, tape: Tape, dlogits: np.ndarray, source, detach_reset: bool = False,
          surrogate: Surrogate | None = None) -> list[np.ndarray]:
    spec = tape.spec
    p = spec.lif
    lam, theta = p.decay, p.threshold
    soft = p.reset is Reset.SOFT
    surrogate = surrogate or ArcTan()
    dlogits = np.asarray(dlogits, dtype=DTYPE)
    grads = [np.zeros_like(w, dtype=DTYPE) for w in weights]
    du_next: dict[tuple[int, int], np.ndarray] = {}
    readout = spec.layers[-1]

    for t in reversed(range(spec.timesteps)):
        h = tape.layer_input(t, len(spec.layers) - 1)
        gW, d_out = readout_backward(readout, weights[-1], h, dlogits)
        grads[-1] += gW
        for bi in reversed(range(len(tape.blocks))):
            block = tape.blocks[bi]
            n = block.groups
            for pos in reversed(range(block.m)):
                l = block.layer_ids[pos]
                inp = tape.layer_input(t, l)
                o_full = tape.spike(t, l)
                x_parts = None
                if source.needs_inputs:
                    x_full = layer_forward(spec.layers[l], weights[l], inp)
                    x_parts = channel_split(x_full, n, axis=1) if n > 1 else [x_full]
                o_parts = channel_split(o_full, n, axis=1) if n > 1 else [o_full]
                do_parts = channel_split(d_out, n, axis=1) if n > 1 else [d_out]
                dx_parts = [None] * n
                k = block.buffer_of[pos]
                for g in reversed(range(n)):
                    u = source.get(t, bi, pos, g)
                    sg = surrogate.derivative(u - theta)
                    do = do_parts[g]
                    dn = du_next.get((bi, k))
                    if dn is None:
                        du = do * sg
                    elif soft:
                        reset = 0.0 if detach_reset else -lam * theta * dn
                        du = (do + reset) * sg + lam * dn
                    else:
                        reset = 0.0 if detach_reset else -lam * u * dn
                        du = (do + reset) * sg + lam * (1.0 - o_parts[g]) * dn
                    du_next[(bi, k)] = du
                    dx_parts[g] = du
                    source.release(t, bi, pos, g, None if x_parts is None else x_parts[g])
                dx = np.concatenate(dx_parts, axis=1) if n > 1 else dx_parts[0]
                gW, d_out = layer_backward(spec.layers[l], weights[l], inp, dx, need_input=l > 0)
                grads[l] += gW
    return grads


def _require_kinds(tape: Tape, kinds) -> None:
    found = {b.scheme.kind for b in tape.blocks}
    if not found <= set(kinds):
        raise ConfigError(f"tape uses {sorted(k.value for k in found)} sharing")


def backward_cached(weights, tape: Tape, dlogits, detach_reset: bool = False,
                    surrogate: Surrogate | None = None) -> list[np.ndarray]:
    """Gradients from cached per-slot membranes; works for every scheme."""
    return sweep(weights, tape, dlogits, CachedMembranes(tape), detach_reset, surrogate)


def backward_baseline(weights, tape, dlogits, **kw):
    _require_kinds(tape, (Kind.BASELINE,))
    return backward_cached(weights, tape, dlogits, **kw)


def backward_crosslayer(weights, tape, dlogits, **kw):
    _require_kinds(tape, (Kind.BASELINE, Kind.LAYER))
    return backward_cached(weights, tape, dlogits, **kw)


def backward_crosschannel(weights, tape, dlogits, **kw):
    _require_kinds(tape, (Kind.BASELINE, Kind.CHANNEL, Kind.LAYER_CHANNEL))
    return backward_cached(weights, tape, dlogits, **kw)


def backward(weights, tape: Tape, dlogits, detach_reset: bool = False,
             surrogate: Surrogate | None = None) -> list[np.ndarray]:
    """Dispatch on the tape's mode."""
    if tape.mode == "recompute":
        from .memsave import backward_recompute
        return backward_recompute(weights, tape, dlogits, detach_reset, surrogate)
    return backward_cached(weights, tape, dlogits, detach_reset, surrogate)


def loss_and_grad(weights, spec: NetworkSpec, x, labels, mode: str = "cached",
                  relaxed: bool = False, detach_reset: bool = False,
                  surrogate: Surrogate | None = None):
    """Returns ``(loss, grads, tape)``."""
    logits, tape = forward(weights, spec, x, mode, relaxed, surrogate)
    loss, dlogits = cross_entropy(logits, labels)
    grads = backward(weights, tape, dlogits, detach_reset, surrogate)
    return loss, grads, tape
