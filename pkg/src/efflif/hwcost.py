"""Counting model for membrane DRAM traffic and LIF hardware units.

This is arithmetic over the layer schedule (all layers for one timestep, then
the next timestep), not a cycle-accurate simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, DivisibilityError
from .memmodel import MEMBRANE_BYTES
from .network import NetworkSpec
from .sharing import SharingScheme


@dataclass(frozen=True)
class HwConfig:
    n_pe: int = 128
    lif_share_ratio: int = 1
    batch: int = 1

    def __post_init__(self):
        if self.n_pe < 1 or self.lif_share_ratio < 1 or self.batch < 1:
            raise ConfigError(f"invalid hardware config {self}")


def lif_unit_count(hw: HwConfig) -> int:
    if hw.n_pe % hw.lif_share_ratio:
        raise DivisibilityError(f"{hw.n_pe} PEs cannot share LIF units {hw.lif_share_ratio}-way")
    return hw.n_pe // hw.lif_share_ratio


def spike_gen_cycles(hw: HwConfig) -> int:
    """Cycles to emit one timestep's spikes for all PEs."""
    return hw.lif_share_ratio


def _spec(spec: NetworkSpec, scheme: SharingScheme | None) -> NetworkSpec:
    return spec if scheme is None else spec.with_scheme(scheme)


def dram_membrane_writes(spec: NetworkSpec, timesteps: int | None = None,
                         scheme: SharingScheme | None = None, batch: int = 1) -> int:
    """Membrane write-backs: one per buffer per timestep per sample."""
    spec = _spec(spec, scheme)
    T = spec.timesteps if timesteps is None else timesteps
    buffers = sum(len(b.buffers) for b in spec.build_blocks())
    return buffers * T * batch


@dataclass
class DramTraffic:
    membrane: int
    weights: int
    spikes: float

    @property
    def total(self) -> float:
        return self.membrane + self.weights + self.spikes


def dram_traffic(spec: NetworkSpec, timesteps: int | None = None,
                 scheme: SharingScheme | None = None, batch: int = 1,
                 weight_bytes: int | None = None) -> DramTraffic:
    """Bytes moved for one mini-batch inference.

    Each buffer write-back is read again at the next timestep; weights are
    fetched once per timestep for the whole mini-batch (``weight_bytes``
    defaults to the 32-bit parameter footprint). Spikes move one bit per
    neuron per timestep.
    """
    spec = _spec(spec, scheme)
    T = spec.timesteps if timesteps is None else timesteps
    blocks = spec.build_blocks()
    per_step = sum(buf.size for b in blocks for buf in b.buffers) * MEMBRANE_BYTES
    membrane = 2 * per_step * T * batch
    if weight_bytes is None:
        weight_bytes = spec.n_params() * 4
    spikes = sum(spec.neurons()) / 8 * T * batch
    return DramTraffic(membrane, weight_bytes * T, spikes)


def dram_reduction(spec: NetworkSpec, scheme: SharingScheme, batch: int,
                   timesteps: int | None = None, weight_bytes: int | None = None) -> float:
    """Fractional drop in total DRAM traffic of ``scheme`` against the baseline."""
    base = dram_traffic(spec, timesteps, SharingScheme(), batch, weight_bytes).total
    eff = dram_traffic(spec, timesteps, scheme, batch, weight_bytes).total
    return 1.0 - eff / base
