import math

import numpy as np
import pytest

from motifpool.autodiff import Value
from motifpool.autoencoder import ReconModel, edge_accuracy, recon_loss, threshold, train_recon
from motifpool.gradcheck import KinkError, check_gradients
from motifpool.graph import Graph, make_grid, make_ring
from motifpool.model import Channel, ModelConfig


def small_model(g, channel=Channel.SELECTION, seed=0, hidden=4):
    return ReconModel(ModelConfig(channel=channel, hidden_dim=hidden), g.n, g.feature_dim, seed=seed)


def test_zero_decoder_gives_half(rng):
    g = make_ring(6)
    model = small_model(g)
    last = model.mlp_edge.layers[-1]
    last.weight.data[...] = 0
    last.bias.data[...] = 0
    a_hat, _, _ = model.reconstruct(g)
    off = ~np.eye(6, dtype=bool)
    assert np.all(a_hat.data[off] == 0.5)
    assert np.all(np.diag(a_hat.data) == 0)


@pytest.mark.parametrize("channel", [Channel.SELECTION, Channel.CLUSTERING, Channel.COMBINED])
def test_output_contract(channel):
    g = make_grid(2, 3)
    model = small_model(g, channel, seed=3)
    a_hat, x_hat, _ = model.reconstruct(g)
    a = a_hat.data
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    off = ~np.eye(6, dtype=bool)
    assert np.all((a[off] > 0) & (a[off] < 1))
    assert x_hat.shape == g.features.shape
    t = threshold(a)
    assert np.array_equal(t, t.T) and np.all(np.diag(t) == 0) and set(np.unique(t)) <= {0, 1}
    Graph.from_edges(6, list(zip(*np.nonzero(np.triu(t)))))  # valid simple graph


def test_decoder_shapes_do_not_depend_on_channel():
    g = make_ring(5)
    shapes = {c: [p.shape for p in small_model(g, c).mlp_edge.parameters() + small_model(g, c).mlp_attr.parameters()]
              for c in (Channel.SELECTION, Channel.CLUSTERING)}
    embed = {c: small_model(g, c).encoder.out_dim for c in shapes}
    assert embed[Channel.SELECTION] == embed[Channel.CLUSTERING]
    assert shapes[Channel.SELECTION] == shapes[Channel.CLUSTERING]
    e = embed[Channel.SELECTION]
    assert shapes[Channel.SELECTION][::2] == [(e, 2 * e), (2 * e, 4 * e), (4 * e, 25),
                                              (e, 2 * e), (2 * e, 4 * e), (4 * e, 5 * g.feature_dim)]


def test_loss_examples():
    g = make_ring(4)
    half = Value(np.full((4, 4), 0.5) * (1 - np.eye(4)))
    loss = recon_loss(half, Value(g.features), g)
    assert math.isclose(loss.item(), math.log(2), rel_tol=1e-12)
    a_near = Value(np.clip(g.adjacency().astype(float), 1e-15, 1 - 1e-15))
    assert recon_loss(a_near, Value(g.features), g).item() < 1e-12
    assert recon_loss(a_near, Value(g.features + 1.0), g).item() > 0.99


def test_edge_accuracy():
    g = make_ring(4)
    assert edge_accuracy(g.adjacency() * 0.9, g) == 1.0
    # the 4 ordered non-edge pairs of 12 are right
    assert edge_accuracy(np.zeros((4, 4)), g) == 4 / 12


@pytest.mark.parametrize("channel", [Channel.SELECTION, Channel.CLUSTERING])
def test_gradients_on_ring(channel):
    g = make_ring(4)
    for attempt in range(10):
        model = small_model(g, channel, seed=attempt, hidden=2)

        def loss():
            a_hat, x_hat, aux = model.reconstruct(g)
            return recon_loss(a_hat, x_hat, g, aux)

        try:
            errors = check_gradients(loss, model.parameters())
            break
        except KinkError:
            continue
    assert max(errors.values()) < 1e-4, errors


def test_node_count_mismatch():
    model = small_model(make_ring(5))
    with pytest.raises(ValueError, match="5-node"):
        model.reconstruct(make_ring(6))


def test_short_training_improves(rng):
    g = make_ring(6)
    report = train_recon(small_model(g, hidden=8), g, steps=200, lr=1e-2)
    assert report.steps == 200
    assert report.attr_mse < report.initial_attr_mse
    assert 0 <= report.edge_accuracy <= 1
