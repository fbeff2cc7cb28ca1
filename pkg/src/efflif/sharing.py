"""Membrane-sharing schemes as state machines over shared buffers.

A block of ``m`` consecutive layers owns one or more membrane buffers. Each
buffer is consumed by an ordered list of *slots* ``(member, group)`` every
timestep; whichever slot used the buffer last hands its raw membrane and
spikes to the next slot (the same buffer's first slot at ``t + 1`` after the
last one). Baseline is the special case of one single-slot buffer per layer.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, DivisibilityError
from .lif import LifParams, apply_reset, fire
from .tensor import DTYPE, as_dense, channel_concat, channel_split


class Kind(str, enum.Enum):
    BASELINE = "baseline"
    LAYER = "layer"
    CHANNEL = "channel"
    LAYER_CHANNEL = "layer-channel"


_ALIASES = {
    "baseline": Kind.BASELINE, "base": Kind.BASELINE, "none": Kind.BASELINE,
    "layer": Kind.LAYER, "l": Kind.LAYER, "crosslayer": Kind.LAYER,
    "channel": Kind.CHANNEL, "c": Kind.CHANNEL, "crosschannel": Kind.CHANNEL,
    "layer-channel": Kind.LAYER_CHANNEL, "l+c": Kind.LAYER_CHANNEL,
    "crosslayerchannel": Kind.LAYER_CHANNEL,
}


@dataclass(frozen=True)
class SharingScheme:
    kind: Kind = Kind.BASELINE
    n_groups: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.n_groups < 1:
            raise ConfigError(f"n_groups must be >= 1, got {self.n_groups}")
        if not self.channel and self.n_groups != 1:
            raise ConfigError(f"{self.kind.value} sharing takes no channel groups")

    @property
    def layer(self) -> bool:
        return self.kind in (Kind.LAYER, Kind.LAYER_CHANNEL)

    @property
    def channel(self) -> bool:
        return self.kind in (Kind.CHANNEL, Kind.LAYER_CHANNEL)

    @classmethod
    def parse(cls, text: str, n_groups: int | None = None) -> "SharingScheme":
        """Accepts ``layer``, ``channel``, ``C#4``, ``L+C#2``, ``baseline`` ..."""
        s = text.strip().lower().replace("_", "-")
        m = re.fullmatch(r"(.+?)#(\d+)", s)
        if m:
            s, n_groups = m.group(1), int(m.group(2))
        try:
            kind = _ALIASES[s]
        except KeyError:
            raise ConfigError(f"unknown sharing scheme {text!r}") from None
        if kind in (Kind.CHANNEL, Kind.LAYER_CHANNEL):
            return cls(kind, 2 if n_groups is None else n_groups)
        return cls(kind)

    def label(self) -> str:
        return {
            Kind.BASELINE: "Baseline",
            Kind.LAYER: "L",
            Kind.CHANNEL: f"C#{self.n_groups}",
            Kind.LAYER_CHANNEL: f"L+C#{self.n_groups}",
        }[self.kind]


BASELINE = SharingScheme()


@dataclass
class MembraneBuffer:
    shape: tuple[int, ...]  # per sample
    slots: list[tuple[int, int]]  # (member position, group), consumption order
    u: np.ndarray | None = None
    o: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def predecessor(self, t: int, slot: tuple[int, int]):
        """The ``(t, member, group)`` whose carry feeds ``slot`` at ``t``, if any."""
        i = self.slots.index(slot)
        if i > 0:
            return (t,) + self.slots[i - 1]
        if t > 0:
            return (t - 1,) + self.slots[-1]
        return None


def _layout(n_members: int, scheme: SharingScheme, shape) -> list[MembraneBuffer]:
    groups = scheme.n_groups
    gshape = (shape[0] // groups,) + tuple(shape[1:])
    if scheme.kind is Kind.LAYER:
        return [MembraneBuffer(tuple(shape), [(p, 0) for p in range(n_members)])]
    if scheme.kind is Kind.CHANNEL:
        return [MembraneBuffer(gshape, [(p, g) for g in range(groups)])
                for p in range(n_members)]
    return [MembraneBuffer(gshape, [(p, g) for p in range(n_members) for g in range(groups)])]


SpikeFn = Callable[[np.ndarray], np.ndarray]
Observer = Callable[[int, int, np.ndarray, np.ndarray], None]


class SharingBlock:
    """Runtime state for ``m`` consecutive layers under one sharing scheme.

    ``shapes`` are the members' per-sample output shapes (channels first).
    Baseline blocks may mix shapes; every other scheme needs them identical.
    """

    def __init__(self, shapes: Sequence[tuple[int, ...]], scheme: SharingScheme = BASELINE,
                 params: LifParams = LifParams(), layer_ids: Sequence[int] | None = None):
        shapes = [tuple(int(d) for d in s) for s in shapes]
        if not shapes:
            raise ConfigError("a sharing block needs at least one layer")
        if scheme.layer and any(s != shapes[0] for s in shapes):
            raise ConfigError(f"cross-layer sharing needs identical activation shapes, got {shapes}")
        if scheme.channel:
            for s in shapes:
                if s[0] % scheme.n_groups:
                    raise DivisibilityError(
                        f"{s[0]} channels not divisible into {scheme.n_groups} groups")
        self.shapes = shapes
        self.scheme = scheme
        self.params = params
        self.layer_ids = list(layer_ids) if layer_ids is not None else list(range(len(shapes)))
        if scheme.kind is Kind.BASELINE:
            self.buffers = [MembraneBuffer(s, [(p, 0)]) for p, s in enumerate(shapes)]
        else:
            self.buffers = _layout(len(shapes), scheme, shapes[0])
        self.buffer_of = {}
        for b, buf in enumerate(self.buffers):
            for pos, _ in buf.slots:
                self.buffer_of[pos] = b

    @property
    def m(self) -> int:
        return len(self.shapes)

    @property
    def groups(self) -> int:
        return self.scheme.n_groups

    @property
    def state_size(self) -> int:
        """Membrane values held per sample, summed over this block's buffers."""
        return sum(b.size for b in self.buffers)

    def reset(self, batch: int | None = None) -> None:
        self._init_state(() if batch is None else (batch,))

    def clear(self) -> None:
        """Drop the state; it is re-created at the next step with the input's batch shape."""
        for buf in self.buffers:
            buf.u = buf.o = None

    def _init_state(self, lead) -> None:
        lead = tuple(lead)
        for buf in self.buffers:
            buf.u = np.zeros(lead + buf.shape, dtype=DTYPE)
            buf.o = np.zeros(lead + buf.shape, dtype=DTYPE)

    def _channel_axis(self, x: np.ndarray, pos: int) -> int:
        return x.ndim - len(self.shapes[pos])

    def step(self, weighted_input, first_input=None, spike_fn: SpikeFn | None = None,
             observer: Observer | None = None) -> list[np.ndarray]:
        """Advance every member layer by one timestep.

        ``weighted_input`` is either a sequence with one input per member or a
        callable ``(member, previous_spikes) -> input``; the first member's
        ``previous_spikes`` is ``first_input``.
        """
        p = self.params
        if spike_fn is None:
            def spike_fn(u):
                return fire(u, p.threshold)
        outputs = []
        prev = first_input
        for pos in range(self.m):
            if callable(weighted_input):
                x = as_dense(weighted_input(pos, prev))
            else:
                x = as_dense(weighted_input[pos])
            if x.shape[x.ndim - len(self.shapes[pos]):] != self.shapes[pos]:
                raise DimensionError(
                    f"layer {self.layer_ids[pos]} input {x.shape} does not match {self.shapes[pos]}")
            axis = self._channel_axis(x, pos)
            if self.buffers[0].u is None:
                self._init_state(x.shape[:axis])
            parts = channel_split(x, self.groups, axis=axis) if self.groups > 1 else [x]
            spikes = []
            buf = self.buffers[self.buffer_of[pos]]
            for g, xg in enumerate(parts):
                if buf.u.shape != xg.shape:
                    raise DimensionError(f"buffer {buf.u.shape} vs input group {xg.shape}")
                u = p.decay * apply_reset(buf.u, buf.o, p) + xg
                o = spike_fn(u)
                buf.u, buf.o = u, o
                if observer is not None:
                    observer(pos, g, u, o)
                spikes.append(o)
            prev = channel_concat(spikes, axis=axis) if len(spikes) > 1 else spikes[0]
            outputs.append(prev)
        return outputs


def _run(block: SharingBlock, weighted_input, kinds, first_input=None):
    if block.scheme.kind not in kinds:
        raise ConfigError(f"block uses {block.scheme.kind.value} sharing")
    return block.step(weighted_input, first_input)


def forward_block_crosslayer(block: SharingBlock, weighted_input, first_input=None):
    """One timestep of a cross-layer block: members share a single full buffer."""
    return _run(block, weighted_input, (Kind.LAYER,), first_input)


def forward_layer_crosschannel(block: SharingBlock, x) -> np.ndarray:
    """One timestep of a single channel-shared layer; groups run in order 1..N."""
    if block.m != 1:
        raise ConfigError("forward_layer_crosschannel expects a single-layer block")
    return _run(block, [x], (Kind.CHANNEL,))[0]


def forward_block_crosslayerchannel(block: SharingBlock, weighted_input, first_input=None):
    return _run(block, weighted_input, (Kind.LAYER_CHANNEL,), first_input)
