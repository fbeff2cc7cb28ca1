"""Declarative network description and its text config format.

A network is a stack of layers whose last layer is a non-spiking readout;
every other layer is a LIF layer. Hidden layers are partitioned into sharing
blocks; layers outside any declared block form single-layer baseline blocks.

Config files are INI-style::

    [network]
    schema_version = 1
    input_shape = 2, 4
    timesteps = 4
    encoding = sequence

    [lif]
    decay = 0.5
    threshold = 1.0
    reset = soft

    [layer 0]
    kind = dense
    out = 16

    [block 0]
    layers = 0, 1
    scheme = layer-channel
    groups = 2
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .lif import LifParams, Reset
from .sharing import BASELINE, Kind, SharingBlock, SharingScheme

SCHEMA_VERSION = 1
LAYER_KINDS = ("dense", "conv1d", "conv2d")
ENCODINGS = ("direct", "sequence")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out: int
    kernel: int = 1
    padding: int = 0
    stride: int = 1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.out < 1 or self.kernel < 1 or self.padding < 0 or self.stride < 1:
            raise ConfigError(f"invalid layer dimensions {self}")
        if self.kind != "conv2d" and self.stride != 1:
            raise ConfigError("only conv2d layers take a stride")

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.out,)
        if self.kind == "conv1d":
            if len(in_shape) != 2:
                raise ConfigError(f"conv1d needs a (channels, length) input, got {in_shape}")
            n = in_shape[1] + 2 * self.padding - self.kernel + 1
            if n < 1:
                raise ConfigError(f"conv1d kernel {self.kernel} too large for {in_shape}")
            return (self.out, n)
        if len(in_shape) != 3:
            raise ConfigError(f"conv2d needs a (channels, h, w) input, got {in_shape}")
        hw = [(d + 2 * self.padding - self.kernel) // self.stride + 1 for d in in_shape[1:]]
        if min(hw) < 1:
            raise ConfigError(f"conv2d kernel {self.kernel} too large for {in_shape}")
        return (self.out, *hw)

    def weight_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.out, int(np.prod(in_shape)))
        if self.kind == "conv1d":
            return (self.out, in_shape[0], self.kernel)
        return (self.out, in_shape[0], self.kernel, self.kernel)

    def describe(self) -> str:
        if self.kind == "dense":
            return f"dense {self.out}"
        extra = f" stride {self.stride}" if self.stride != 1 else ""
        return f"{self.kind} {self.out} k{self.kernel} p{self.padding}{extra}"


@dataclass(frozen=True)
class BlockSpec:
    layers: tuple[int, ...]
    scheme: SharingScheme = BASELINE


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    blocks: tuple[BlockSpec, ...] = ()
    lif: LifParams = LifParams()
    timesteps: int = 5
    encoding: str = "direct"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        self.validate()

    # -- structure -------------------------------------------------------

    @property
    def n_hidden(self) -> int:
        return len(self.layers) - 1

    @property
    def step_input_shape(self) -> tuple[int, ...]:
        """Shape fed to the first layer at each timestep."""
        if self.encoding == "sequence":
            return self.input_shape[:-1]
        return self.input_shape

    def in_shapes(self) -> list[tuple[int, ...]]:
        shapes, cur = [], self.step_input_shape
        for layer in self.layers:
            shapes.append(cur)
            cur = layer.output_shape(cur)
        return shapes

    def out_shapes(self) -> list[tuple[int, ...]]:
        return [layer.output_shape(s) for layer, s in zip(self.layers, self.in_shapes())]

    def weight_shapes(self) -> list[tuple[int, ...]]:
        return [layer.weight_shape(s) for layer, s in zip(self.layers, self.in_shapes())]

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out

    def neurons(self) -> list[int]:
        return [int(np.prod(s)) for s in self.out_shapes()[:-1]]

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.weight_shapes())

    def partition(self) -> list[BlockSpec]:
        """Every hidden layer assigned to exactly one block, in layer order."""
        declared = {b.layers[0]: b for b in self.blocks}
        out, i = [], 0
        while i < self.n_hidden:
            if i in declared:
                out.append(declared[i])
                i += len(declared[i].layers)
            else:
                out.append(BlockSpec((i,), BASELINE))
                i += 1
        return out

    def build_blocks(self) -> list[SharingBlock]:
        shapes = self.out_shapes()
        return [SharingBlock([shapes[l] for l in b.layers], b.scheme, self.lif, b.layers)
                for b in self.partition()]

    def validate(self) -> None:
        if len(self.layers) < 2:
            raise ConfigError("a network needs at least one LIF layer and a readout")
        if self.timesteps < 1:
            raise ConfigError(f"timesteps must be >= 1, got {self.timesteps}")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"unknown encoding {self.encoding!r}")
        if any(d < 1 for d in self.input_shape) or not self.input_shape:
            raise ConfigError(f"invalid input shape {self.input_shape}")
        if self.encoding == "sequence" and self.input_shape[-1] != self.timesteps:
            raise ConfigError("sequence encoding needs input length == timesteps "
                              f"({self.input_shape[-1]} != {self.timesteps})")
        shapes = self.out_shapes()
        seen = set()
        for b in self.blocks:
            ids = list(b.layers)
            if not ids or ids != list(range(ids[0], ids[0] + len(ids))):
                raise ConfigError(f"block layers must be contiguous, got {ids}")
            if ids[-1] >= self.n_hidden or ids[0] < 0:
                raise ConfigError(f"block {ids} refers to non-LIF layers")
            if seen & set(ids):
                raise ConfigError(f"layer(s) {sorted(seen & set(ids))} in more than one block")
            seen |= set(ids)
            # raises on incompatible shapes / group counts
            SharingBlock([shapes[l] for l in ids], b.scheme, self.lif, ids)

    # -- derived specs ---------------------------------------------------

    def auto_blocks(self) -> list[tuple[int, ...]]:
        """Maximal runs of consecutive hidden layers with identical output shape."""
        shapes = self.out_shapes()[:-1]
        runs, start = [], 0
        for i in range(1, len(shapes) + 1):
            if i == len(shapes) or shapes[i] != shapes[start]:
                runs.append(tuple(range(start, i)))
                start = i
        return runs

    def with_scheme(self, scheme: SharingScheme) -> "NetworkSpec":
        """Same network with every block (or every auto-block) under ``scheme``."""
        groups = [b.layers for b in self.blocks] or self.auto_blocks()
        if scheme.kind is Kind.BASELINE:
            return replace(self, blocks=())
        return replace(self, blocks=tuple(BlockSpec(g, scheme) for g in groups))

    def with_reset(self, reset: Reset) -> "NetworkSpec":
        return replace(self, lif=replace(self.lif, reset=Reset(reset)))

    # -- serialisation ---------------------------------------------------

    def to_config(self) -> str:
        cp = configparser.ConfigParser()
        cp["network"] = {
            "schema_version": str(SCHEMA_VERSION),
            "input_shape": ", ".join(map(str, self.input_shape)),
            "timesteps": str(self.timesteps),
            "encoding": self.encoding,
        }
        if self.name:
            cp["network"]["name"] = self.name
        cp["lif"] = {"decay": repr(self.lif.decay), "threshold": repr(self.lif.threshold),
                     "reset": self.lif.reset.value}
        for i, layer in enumerate(self.layers):
            sec = {"kind": layer.kind, "out": str(layer.out)}
            if layer.kind != "dense":
                sec.update(kernel=str(layer.kernel), padding=str(layer.padding))
            if layer.stride != 1:
                sec["stride"] = str(layer.stride)
            cp[f"layer {i}"] = sec
        for i, b in enumerate(self.blocks):
            cp[f"block {i}"] = {"layers": ", ".join(map(str, b.layers)),
                                "scheme": b.scheme.kind.value,
                                "groups": str(b.scheme.n_groups)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def spec_hash(self) -> bytes:
        return hashlib.sha256(self.to_config().encode()).digest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_config())

    @classmethod
    def from_config(cls, text: str) -> "NetworkSpec":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed spec file: {exc}") from None
        try:
            net = cp["network"]
            version = net.getint("schema_version", fallback=None)
            if version != SCHEMA_VERSION:
                raise ConfigError(f"unsupported schema_version {version} (want {SCHEMA_VERSION})")
            input_shape = _ints(net["input_shape"])
            timesteps = net.getint("timesteps", fallback=5)
            encoding = net.get("encoding", fallback="direct")
            lif = LifParams()
            if cp.has_section("lif"):
                s = cp["lif"]
                lif = LifParams(s.getfloat("decay", 0.5), s.getfloat("threshold", 1.0),
                                Reset(s.get("reset", "soft").strip().lower()))
            layers = []
            for idx in _numbered(cp, "layer"):
                s = cp[f"layer {idx}"]
                layers.append(LayerSpec(s["kind"].strip(), s.getint("out"),
                                        s.getint("kernel", 1), s.getint("padding", 0),
                                        s.getint("stride", 1)))
            blocks = []
            for idx in _numbered(cp, "block"):
                s = cp[f"block {idx}"]
                scheme = SharingScheme.parse(s["scheme"], s.getint("groups", None))
                blocks.append(BlockSpec(tuple(_ints(s["layers"])), scheme))
            return cls(tuple(input_shape), tuple(layers), tuple(blocks), lif, timesteps,
                       encoding.strip(), net.get("name", fallback=""))
        except ConfigError:
            raise
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed spec file: {exc}") from None

    @classmethod
    def load(cls, path) -> "NetworkSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_config(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read spec {path}: {exc}") from None


def _ints(text: str) -> list[int]:
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    return [int(p) for p in parts]


def _numbered(cp, prefix: str) -> list[int]:
    found = []
    for sec in cp.sections():
        head, _, num = sec.partition(" ")
        if head == prefix:
            if not num.strip().isdigit():
                raise ConfigError(f"bad section name [{sec}]")
            found.append(int(num))
    found.sort()
    if found != list(range(len(found))):
        raise ConfigError(f"{prefix} sections must be numbered 0..n-1, got {found}")
    return found


def init_weights(spec: NetworkSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Fan-in scaled uniform init, bound ``sqrt(6 / fan_in)``."""
    weights = []
    for shape in spec.weight_shapes():
        fan_in = int(np.prod(shape[1:]))
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=shape))
    return weights


# -- presets ----------------------------------------------------------------

def dense_net(n_in: int, hidden: list[int], n_classes: int, scheme: SharingScheme = BASELINE,
              timesteps: int = 5, lif: LifParams = LifParams(), encoding: str = "direct",
              seq_len: int | None = None) -> NetworkSpec:
    layers = tuple(LayerSpec("dense", h) for h in hidden) + (LayerSpec("dense", n_classes),)
    input_shape = (n_in,) if encoding == "direct" else (n_in, seq_len or timesteps)
    spec = NetworkSpec(input_shape, layers, (), lif, timesteps, encoding)
    return spec.with_scheme(scheme)


def toy4(scheme: SharingScheme = BASELINE, timesteps: int = 5) -> NetworkSpec:
    """One block of four 1000-neuron dense layers."""
    spec = dense_net(1000, [1000] * 4, 10, timesteps=timesteps)
    return replace(spec, blocks=(BlockSpec((0, 1, 2, 3), scheme),), name="toy4")


def har_conv1d(in_channels: int = 9, seq_len: int = 128, n_classes: int = 6,
               scheme: SharingScheme = BASELINE, timesteps: int = 5, width: int = 128,
               kernel: int = 3) -> NetworkSpec:
    """Six 1D-conv layers: conv(in, w) - 4 x conv(w, w) - conv(w, classes)."""
    pad = kernel // 2
    layers = tuple(LayerSpec("conv1d", width, kernel, pad) for _ in range(5))
    layers += (LayerSpec("conv1d", n_classes, kernel, pad),)
    spec = NetworkSpec((in_channels, seq_len), layers, (), LifParams(), timesteps, name="har-conv1d")
    if scheme.kind is Kind.BASELINE:
        return spec
    return replace(spec, blocks=(BlockSpec(tuple(range(5)), scheme),))


def resnet19_cifar(scheme: SharingScheme = BASELINE, timesteps: int = 5,
                   base: int = 64, n_classes: int = 10) -> NetworkSpec:
    """Shape-level ResNet19 for memory accounting (conv2d layers are not executable).

    Stem conv plus three stages of (3, 3, 2) two-conv residual blocks at
    ``base``, ``2 base`` and ``4 base`` channels, then a 256-unit dense layer.
    Sharing blocks are the residual blocks, with the stem joining the first;
    the dense layer is a block of its own.
    """
    L = [LayerSpec("conv2d", base, 3, 1)]
    groups = [[0]]
    for stage, (n_blocks, ch) in enumerate(((3, base), (3, 2 * base), (2, 4 * base))):
        for j in range(n_blocks):
            stride = 2 if (stage > 0 and j == 0) else 1
            first = len(L)
            L.append(LayerSpec("conv2d", ch, 3, 1, stride))
            L.append(LayerSpec("conv2d", ch, 3, 1))
            if stage == 0 and j == 0:
                groups[0] += [first, first + 1]
            else:
                groups.append([first, first + 1])
    groups.append([len(L)])
    L.append(LayerSpec("dense", 256))
    L.append(LayerSpec("dense", n_classes))
    spec = NetworkSpec((3, 32, 32), tuple(L), (), LifParams(), timesteps, name="resnet19-cifar")
    if scheme.kind is Kind.BASELINE:
        return spec
    blocks = tuple(BlockSpec(tuple(g), scheme) for g in groups)
    return replace(spec, blocks=blocks)


PRESETS = {"toy4": toy4, "har-conv1d": har_conv1d, "resnet19-cifar": resnet19_cifar}
