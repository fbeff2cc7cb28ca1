"""Analytic memory accounting for LIF state, weights and spikes.

Membranes and weights count 32 bits per value, spikes one bit per neuron per
timestep. All byte counts are per sample; ``MB`` is 10**6 bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, NumericError, UnsupportedModeError
from .lif import Reset
from .network import NetworkSpec
from .sharing import Kind, SharingScheme

MEMBRANE_BYTES = 4
WEIGHT_BYTES = 4
MB = 1e6
MODES = ("auto", "forward", "backward_cached", "backward_recompute")


@dataclass
class BlockMemory:
    layers: tuple[int, ...]
    scheme: str
    buffer_floats: int
    unshared_floats: int

    @property
    def reduction(self) -> float:
        return self.unshared_floats / self.buffer_floats


@dataclass
class MemReport:
    scheme: str
    timesteps: int
    backward: str  # "cached" or "recompute"
    lif_forward: int
    lif_backward: int
    weights: int
    spikes_forward: float
    spikes_backward: float
    blocks: list[BlockMemory] = field(default_factory=list)

    def mb(self, name: str) -> float:
        return getattr(self, name) / MB

    def records(self) -> dict:
        return {
            "scheme": self.scheme,
            "timesteps": self.timesteps,
            "backward": self.backward,
            "lif_forward_bytes": self.lif_forward,
            "lif_backward_bytes": self.lif_backward,
            "weights_bytes": self.weights,
            "spikes_forward_bytes": self.spikes_forward,
            "spikes_backward_bytes": self.spikes_backward,
            "lif_forward_mb": round(self.mb("lif_forward"), 6),
            "lif_backward_mb": round(self.mb("lif_backward"), 6),
        }


def _scheme_label(spec: NetworkSpec) -> str:
    labels = {b.scheme.label() for b in spec.partition() if b.scheme.kind is not Kind.BASELINE}
    return "+".join(sorted(labels)) if labels else "Baseline"


def lif_bytes(spec: NetworkSpec, timesteps: int | None = None, mode: str = "auto") -> MemReport:
    """Memory report for ``spec`` unrolled over ``timesteps``.

    ``auto`` picks the backward the network would train with: cached
    snapshots when nothing is shared (or reset is hard), reverse recomputation
    otherwise. ``forward`` is an alias of ``auto``.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown memory mode {mode!r}")
    T = spec.timesteps if timesteps is None else int(timesteps)
    if T < 1:
        raise ConfigError("timesteps must be >= 1")
    blocks = spec.build_blocks()
    neurons = spec.neurons()
    state = sum(b.state_size for b in blocks)
    cached = T * sum(neurons)
    shared = any(b.scheme.kind is not Kind.BASELINE for b in blocks)
    if mode in ("auto", "forward"):
        backward = "recompute" if shared and spec.lif.reset is Reset.SOFT else "cached"
    else:
        backward = mode.split("_")[1]
    if backward == "recompute" and spec.lif.reset is not Reset.SOFT:
        raise UnsupportedModeError("reverse recomputation needs soft reset")
    per_block = [
        BlockMemory(tuple(b.layer_ids), b.scheme.label(), b.state_size,
                    sum(neurons[l] for l in b.layer_ids))
        for b in blocks
    ]
    spike_bytes = sum(neurons) / 8
    return MemReport(
        scheme=_scheme_label(spec),
        timesteps=T,
        backward=backward,
        lif_forward=state * MEMBRANE_BYTES,
        lif_backward=(state if backward == "recompute" else cached) * MEMBRANE_BYTES,
        weights=spec.n_params() * WEIGHT_BYTES,
        spikes_forward=spike_bytes,
        spikes_backward=spike_bytes * T,
        blocks=per_block,
    )


def efficiency_ratios(base: MemReport, eff: MemReport) -> dict:
    if eff.lif_forward == 0 or eff.lif_backward == 0:
        raise NumericError("efficient report has zero LIF memory")
    return {"fwd_ratio": base.lif_forward / eff.lif_forward,
            "bwd_ratio": base.lif_backward / eff.lif_backward}


def scheme_table(spec: NetworkSpec, schemes: list[SharingScheme],
                 timesteps: int | None = None) -> list[MemReport]:
    """One report per scheme applied to ``spec``'s block structure."""
    return [lif_bytes(spec.with_scheme(s), timesteps) for s in schemes]
