"""Finite-difference verification of the analytic BPTT gradients.

The reference is the surrogate-relaxed network (every spike replaced by the
smooth surrogate), differentiated by central differences. It shares no code
with the backward sweep beyond the forward pass itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import cross_entropy, forward, loss_and_grad
from .lif import LifParams
from .network import NetworkSpec, dense_net, init_weights
from .sharing import SharingScheme

STEP = 1e-3
TOLERANCE = 1e-4
FLOOR = 1e-7


@dataclass
class Case:
    spec: NetworkSpec
    weights: list
    x: np.ndarray
    labels: np.ndarray


def random_case(scheme: SharingScheme, rng: np.random.Generator, layers: int | None = None,
                neurons: int | None = None, timesteps: int | None = None, batch: int = 3,
                lif: LifParams = LifParams()) -> Case:
    """Small dense network: up to 3 LIF layers of up to 8 neurons, ``T <= 4``."""
    n = scheme.n_groups
    layers = layers or int(rng.integers(1, 4))
    if neurons is None:
        choices = [k for k in range(n, 9, n)]
        neurons = int(rng.choice(choices))
    timesteps = timesteps or int(rng.integers(1, 5))
    n_in = int(rng.integers(2, 6))
    n_classes = int(rng.integers(2, 4))
    spec = dense_net(n_in, [neurons] * layers, n_classes, scheme, timesteps, lif)
    weights = init_weights(spec, rng)
    x = rng.normal(0.0, 1.0, size=(batch, n_in))
    labels = rng.integers(0, n_classes, size=batch)
    return Case(spec, weights, x, labels)


def relaxed_loss(weights, spec, x, labels) -> float:
    logits, _ = forward(weights, spec, x, relaxed=True)
    return cross_entropy(logits, labels)[0]


def finite_difference(weights, spec, x, labels, h: float = STEP) -> list[np.ndarray]:
    grads = []
    for w in weights:
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up = relaxed_loss(weights, spec, x, labels)
            w[idx] = old - h
            down = relaxed_loss(weights, spec, x, labels)
            w[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(a_list, b_list, floor: float = FLOOR) -> float:
    err = 0.0
    for a, b in zip(a_list, b_list):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        err = max(err, float(np.max(np.abs(a - b) / denom)))
    return err


@dataclass
class GradcheckReport:
    scheme: SharingScheme
    errors: list[float] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    def passed(self, tol: float = TOLERANCE) -> bool:
        return self.max_error < tol


def check_case(case: Case, mode: str = "cached", h: float = STEP) -> float:
    _, analytic, _ = loss_and_grad(case.weights, case.spec, case.x, case.labels,
                                   mode=mode, relaxed=True)
    numeric = finite_difference(case.weights, case.spec, case.x, case.labels, h)
    return max_relative_error(analytic, numeric)


def gradcheck(scheme: SharingScheme, seeds: int = 20, seed: int = 0, layers: int | None = None,
              neurons: int | None = None, timesteps: int | None = None,
              mode: str = "cached") -> GradcheckReport:
    report = GradcheckReport(scheme)
    for s in range(seeds):
        rng = np.random.default_rng([seed, s])
        case = random_case(scheme, rng, layers, neurons, timesteps)
        report.errors.append(check_case(case, mode))
    return report
