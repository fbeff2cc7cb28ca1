import numpy as np
import pytest

from efflif.autograd import (backward_baseline, backward_cached, backward_crosschannel,
                             backward_crosslayer, cross_entropy, forward, loss_and_grad)
from efflif.errors import ConfigError, DimensionError, StateError
from efflif.gradcheck import finite_difference, max_relative_error
from efflif.network import BlockSpec, LayerSpec, NetworkSpec, dense_net, init_weights
from efflif.sharing import Kind, SharingScheme

H = 1e-5  # small step: truncation error ~h^2 stays far below the 1e-4 tolerance


def scalar_net(hidden, scheme, T, seq=False):
    return dense_net(1, hidden, 2, scheme, timesteps=T)


def fd_check(spec, seed=0, batch=2):
    rng = np.random.default_rng(seed)
    w = init_weights(spec, rng)
    x = rng.normal(0.5, 1.0, size=(batch,) + spec.input_shape)
    y = rng.integers(0, spec.n_classes, size=batch)
    _, g, _ = loss_and_grad(w, spec, x, y, relaxed=True)
    return max_relative_error(g, finite_difference(w, spec, x, y, H))


def test_one_neuron_two_steps():
    assert fd_check(scalar_net([1], SharingScheme(), 2)) < 1e-4


def test_shared_two_layer_scalar():
    assert fd_check(scalar_net([1, 1], SharingScheme(Kind.LAYER), 2)) < 1e-4


def test_two_group_one_layer():
    assert fd_check(scalar_net([2], SharingScheme(Kind.CHANNEL, 2), 2)) < 1e-4


def test_conv1d_network_gradients():
    layers = (LayerSpec("conv1d", 4, 3, 1), LayerSpec("conv1d", 4, 3, 1), LayerSpec("conv1d", 2, 3, 1))
    spec = NetworkSpec((2, 5), layers, (BlockSpec((0, 1), SharingScheme(Kind.LAYER_CHANNEL, 2)),),
                       timesteps=2)
    assert fd_check(spec) < 1e-4


def test_single_step_chain_rule():
    # T=1, one hidden layer: dL/dW0 = (W1^T dlogits * sg(u)) x^T
    spec = dense_net(3, [4], 2, timesteps=1)
    rng = np.random.default_rng(1)
    w = init_weights(spec, rng)
    x = rng.normal(size=(1, 3))
    y = np.array([1])
    _, g, tape = loss_and_grad(w, spec, x, y)
    u = x @ w[0].T
    o = (u > 1.0).astype(float)
    _, dlogits = cross_entropy(o @ w[1].T, y)
    du = (dlogits @ w[1]) / (1 + (np.pi * (u - 1.0)) ** 2)
    np.testing.assert_allclose(g[0], du.T @ x, rtol=1e-12)
    np.testing.assert_allclose(g[1], dlogits.T @ o, rtol=1e-12)


def test_zero_loss_gradient():
    spec = dense_net(3, [4, 4], 2, SharingScheme(Kind.LAYER), timesteps=3)
    w = init_weights(spec, np.random.default_rng(0))
    _, tape = forward(w, spec, np.ones((2, 3)))
    g = backward_cached(w, tape, np.zeros((2, 2)))
    assert all(not gi.any() for gi in g)


def test_reset_path_contributes_when_spiking():
    spec = dense_net(3, [4], 2, SharingScheme(Kind.CHANNEL, 2), timesteps=3)
    rng = np.random.default_rng(5)
    w = init_weights(spec, rng)
    x = rng.normal(2.0, 1.0, size=(2, 3))
    _, tape = forward(w, spec, x)
    assert tape.spike_counts().sum() > 0
    a = backward_cached(w, tape, np.ones((2, 2)))
    b = backward_cached(w, tape, np.ones((2, 2)), detach_reset=True)
    assert not np.array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_kind_checked_backward():
    spec = dense_net(3, [4, 4], 2, SharingScheme(Kind.LAYER), timesteps=2)
    w = init_weights(spec, np.random.default_rng(0))
    _, tape = forward(w, spec, np.ones((1, 3)))
    with pytest.raises(ConfigError):
        backward_baseline(w, tape, np.ones((1, 2)))
    with pytest.raises(ConfigError):
        backward_crosschannel(w, tape, np.ones((1, 2)))
    backward_crosslayer(w, tape, np.ones((1, 2)))


def test_missing_tape_entry():
    spec = dense_net(3, [4], 2, timesteps=2)
    w = init_weights(spec, np.random.default_rng(0))
    _, tape = forward(w, spec, np.ones((1, 3)))
    del tape.spikes[(1, 0)]
    with pytest.raises(StateError):
        backward_cached(w, tape, np.ones((1, 2)))


def test_input_validation():
    spec = dense_net(3, [4], 2, timesteps=2)
    w = init_weights(spec, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        forward(w, spec, np.ones((1, 4)))
    with pytest.raises(ConfigError):
        forward(w[:1], spec, np.ones((1, 3)))
    with pytest.raises(ConfigError):
        forward(w, spec, np.ones((1, 3)), mode="lazy")


def test_sequence_encoding_feeds_columns():
    spec = dense_net(2, [4], 2, timesteps=3, encoding="sequence")
    w = init_weights(spec, np.random.default_rng(0))
    x = np.zeros((1, 2, 3))
    x[0, :, 2] = 50.0  # only the last column drives the layer
    _, tape = forward(w, spec, x)
    assert tape.spike(0, 0).sum() == 0 and tape.spike(1, 0).sum() == 0
    assert tape.spike(2, 0).sum() > 0
