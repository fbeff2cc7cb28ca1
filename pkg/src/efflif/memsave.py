"""Backward pass that rebuilds membranes by inverting the soft-reset update.

Forward in ``recompute`` mode keeps only the spike tape (bit-packed) and each
buffer's final raw membrane. Walking backward, the membrane of a slot's
predecessor is recovered from the slot's own membrane, its weighted input
(recomputed from the tape) and the predecessor's spikes::

    u_prev = (u - x) / decay + threshold * o_prev

so exactly one set of live buffers is ever resident.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tape, sweep
from .errors import DimensionError, NumericError, StateError, UnsupportedModeError
from .lif import LifParams, Reset, Surrogate
from .tensor import as_dense


def reverse_layer(u_next, x_next, o_prev, p: LifParams = LifParams()) -> np.ndarray:
    """Membrane of the previous consumer of a shared buffer."""
    if p.reset is not Reset.SOFT:
        raise UnsupportedModeError("hard reset cannot be inverted")
    if p.decay == 0:
        raise NumericError("decay of zero is not invertible")
    u_next, x_next, o_prev = as_dense(u_next), as_dense(x_next), as_dense(o_prev)
    if not u_next.shape == x_next.shape == o_prev.shape:
        raise DimensionError(
            f"shapes differ: membrane {u_next.shape}, input {x_next.shape}, spikes {o_prev.shape}")
    return (u_next - x_next) / p.decay + p.threshold * o_prev


def reverse_group(u_next_group, x_next_group, o_prev_group, p: LifParams = LifParams()):
    return reverse_layer(u_next_group, x_next_group, o_prev_group, p)


class ReverseContext:
    """Live membrane buffers stepped backward through the forward schedule."""

    needs_inputs = True

    def __init__(self, tape: Tape):
        if tape.mode != "recompute":
            raise StateError("tape was not recorded in recompute mode")
        if tape.spec.lif.reset is not Reset.SOFT:
            raise UnsupportedModeError("reverse recomputation needs soft reset")
        expected = {(bi, k) for bi, b in enumerate(tape.blocks) for k in range(len(b.buffers))}
        if set(tape.final) != expected:
            raise StateError("tape is missing final membrane snapshots")
        self.tape = tape
        self.live = {key: u.copy() for key, u in tape.final.items()}
        c = tape.counters
        c.backward_peak_floats = sum(u[0].size for u in self.live.values())
        c.temporary_floats = 0
        c.reverse_steps = 0

    def get(self, t, bi, pos, g):
        return self.live[(bi, self.tape.blocks[bi].buffer_of[pos])]

    def release(self, t, bi, pos, g, x_group):
        block = self.tape.blocks[bi]
        k = block.buffer_of[pos]
        pred = block.buffers[k].predecessor(t, (pos, g))
        if pred is None:
            return
        tp, pp, gp = pred
        o_prev = self.tape.spike_group(tp, block, pp, gp)
        u_prev = reverse_group(self.live[(bi, k)], x_group, o_prev, self.tape.spec.lif)
        c = self.tape.counters
        c.temporary_floats = max(c.temporary_floats, u_prev[0].size)
        c.reverse_steps += 1
        self.live[(bi, k)] = u_prev


def backward_recompute(weights, tape: Tape, dlogits, detach_reset: bool = False,
                       surrogate: Surrogate | None = None) -> list[np.ndarray]:
    return sweep(weights, tape, dlogits, ReverseContext(tape), detach_reset, surrogate)


def measure_membrane_memory(spec, seed: int = 0) -> dict:
    """Run one instrumented sample through forward and both backward modes.

    Returns membrane value counts per sample as seen by the runtime.
    """
    from .autograd import backward_cached, cross_entropy, forward
    from .network import init_weights

    rng = np.random.default_rng(seed)
    weights = init_weights(spec, rng)
    x = rng.normal(size=(1,) + spec.input_shape)
    labels = np.zeros(1, dtype=np.int64)
    logits, tape = forward(weights, spec, x, "cached")
    backward_cached(weights, tape, cross_entropy(logits, labels)[1])
    out = {
        "forward_floats": tape.counters.state_floats,
        "cached_snapshots": tape.counters.snapshots,
        "cached_backward_floats": tape.counters.backward_peak_floats,
    }
    if spec.lif.reset is Reset.SOFT:
        logits, tape = forward(weights, spec, x, "recompute")
        backward_recompute(weights, tape, cross_entropy(logits, labels)[1])
        out["recompute_buffers"] = len(tape.final)
        out["recompute_backward_floats"] = tape.counters.backward_peak_floats
        out["recompute_temporary_floats"] = tape.counters.temporary_floats
    return out
