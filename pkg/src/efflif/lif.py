"""Single-step leaky integrate-and-fire dynamics and the arctan surrogate."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError
from .tensor import DTYPE, BitTensor, as_dense


class Reset(str, enum.Enum):
    SOFT = "soft"
    HARD = "hard"


@dataclass(frozen=True)
class LifParams:
    decay: float = 0.5
    threshold: float = 1.0
    reset: Reset = Reset.SOFT

    def __post_init__(self):
        object.__setattr__(self, "reset", Reset(self.reset))
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError(f"decay must be in (0, 1], got {self.decay}")
        if not self.threshold > 0.0:
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")


def _check(u, x):
    if u.shape != x.shape:
        raise DimensionError(f"membrane shape {u.shape} != input shape {x.shape}")
    if not (np.isfinite(u).all() and np.isfinite(x).all()):
        raise NumericError("non-finite membrane or input")


def fire(u: np.ndarray, threshold: float) -> np.ndarray:
    # strict: a membrane exactly at threshold stays silent
    return (u > threshold).astype(DTYPE)


def apply_reset(u: np.ndarray, o: np.ndarray, p: LifParams) -> np.ndarray:
    if p.reset is Reset.SOFT:
        return u - p.threshold * o
    return u * (1.0 - o)


def lif_step(u_prev, x, p: LifParams = LifParams()):
    """Per-layer LIF update; ``u_prev`` is the post-reset membrane.

    Returns ``(u_next, spikes)`` where ``u_next`` has already been reset.
    """
    u_prev, x = as_dense(u_prev), as_dense(x)
    _check(u_prev, x)
    u_raw = p.decay * u_prev + x
    o = fire(u_raw, p.threshold)
    return apply_reset(u_raw, o, p), BitTensor.pack(o)


def shared_step(u_carry, o_carry, x, p: LifParams = LifParams()):
    """Shared-neuron update: reset and decay the incoming carry, then integrate.

    ``u_carry``/``o_carry`` are the raw membrane and spikes of whichever
    layer, group or timestep last used the buffer. The returned membrane is
    pre-reset; its reset happens when the next consumer reads it.
    """
    u_carry, x = as_dense(u_carry), as_dense(x)
    o_carry = as_dense(o_carry)
    _check(u_carry, x)
    u = p.decay * apply_reset(u_carry, o_carry, p) + x
    o = fire(u, p.threshold)
    return u, BitTensor.pack(o)


class Surrogate:
    """Smooth stand-in for the Heaviside step, used for gradients only."""

    name = "base"

    def forward_relax(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.derivative(x)


class ArcTan(Surrogate):
    """``f(x) = atan(pi x) / pi + 1/2``."""

    name = "arctan"

    def forward_relax(self, x):
        return np.arctan(math.pi * np.asarray(x, dtype=DTYPE)) / math.pi + 0.5

    def derivative(self, x):
        x = np.asarray(x, dtype=DTYPE)
        with np.errstate(over="ignore"):  # saturates to 0
            return 1.0 / (1.0 + (math.pi * x) ** 2)


SURROGATES = {"arctan": ArcTan}


def surrogate_derivative(u_minus_theta) -> np.ndarray:
    return ArcTan().derivative(u_minus_theta)
