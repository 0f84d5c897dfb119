import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motifpool.autodiff import Value
from motifpool.graph import Graph, make_ring
from motifpool.layers import propagation_matrix
from motifpool.model import Channel, ClusteringStack, ModelConfig, SelectionStack
from motifpool.motifs import MotifKind, motif_adjacency, motif_matrix, normalize_motif
from motifpool.pooling import (ClusterPool, SelectionPool, cluster_assign, cluster_coarsen, mincut_losses,
                               motif_attention, pooled_size, select_topk, topk_indices)
from motifpool.verify import conservation_check, random_simplex, two_triangles

from conftest import er_graph


# --- selection ----------------------------------------------------------------

def test_zero_attention_weights_give_zero_scores(rng):
    pool = SelectionPool(3, 0.5, rng)
    pool.theta_att.data[...] = 0
    s = motif_attention(pool, normalize_motif(np.zeros((4, 4))), Value(rng.normal(size=(4, 3))))
    assert np.array_equal(s.data, np.zeros((4, 1)))


def test_single_node_score():
    pool = SelectionPool(1, 1.0, np.random.default_rng(0))
    pool.theta_att.data[...] = 1.0
    s = motif_attention(pool, np.array([[1.0]]), Value([[2.0]]))
    assert math.isclose(s.item(), math.tanh(2.0), rel_tol=1e-15)
    assert round(s.item(), 4) == 0.9640


def test_ring_nodes_score_identically(rng):
    g = make_ring(4)
    pool = SelectionPool(3, 0.5, rng)
    x = np.tile(rng.normal(size=(1, 3)), (4, 1))
    m = normalize_motif(motif_adjacency(g, MotifKind.TWO_STAR).dense())
    s = motif_attention(pool, m, Value(x)).data
    assert np.ptp(s) < 1e-12


def test_attention_shape_check(rng):
    pool = SelectionPool(2, 0.5, rng)
    with pytest.raises(ValueError, match="does not match"):
        motif_attention(pool, np.eye(3), Value(np.ones((2, 2))))


def test_topk_examples():
    res = select_topk(Value([[0.9], [0.1], [0.5]]), Value(np.eye(3)), np.zeros((3, 3)), 0.5)
    assert res.selected.tolist() == [0, 2]
    res = select_topk(Value(np.full((3, 1), 0.3)), Value(np.eye(3)), np.zeros((3, 3)), 2 / 3)
    assert res.selected.tolist() == [0, 1]


def test_topk_scales_features_by_scores():
    scores = Value([[0.9], [0.1], [0.5]])
    x = Value([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    res = select_topk(scores, x, np.zeros((3, 3)), 0.5)
    assert np.allclose(res.x_out.data, [[0.9, 1.8], [2.5, 3.0]], rtol=1e-15)


def test_full_ratio_is_symmetric_reordering(rng):
    g = er_graph(rng, 6, 0.5)
    a = g.adjacency()
    scores = rng.normal(size=(6, 1))
    res = select_topk(Value(scores), Value(np.eye(6)), a, 1.0)
    idx = res.selected
    assert sorted(idx.tolist()) == list(range(6))
    assert np.all(np.diff(scores[idx, 0]) <= 0)
    p = np.eye(6)[idx]
    assert np.array_equal(res.adj_out, p @ a @ p.T)


@pytest.mark.parametrize("n,alpha,k", [(1, 0.5, 1), (3, 0.5, 2), (4, 0.5, 2), (10, 0.3, 3), (5, 0.01, 1), (7, 1.0, 7)])
def test_pooled_size(n, alpha, k):
    assert pooled_size(n, alpha) == k


def test_selection_pool_rejects_bad_ratio(rng):
    with pytest.raises(ValueError):
        SelectionPool(2, 0.0, rng)


def test_topk_is_stable():
    assert topk_indices(np.array([1.0, 2.0, 2.0, 1.0]), 3).tolist() == [1, 2, 0]


def test_tree_falls_back_to_self_loop_scores(rng):
    # no triangles: the normalized motif matrix is the identity
    g = Graph.from_edges(4, [(0, 1), (1, 2), (1, 3)])
    m_norm = normalize_motif(motif_adjacency(g, MotifKind.TRIANGLE).dense())
    assert np.array_equal(m_norm, np.eye(4))
    pool = SelectionPool(2, 0.5, rng)
    x = Value(rng.normal(size=(4, 2)))
    assert np.allclose(motif_attention(pool, m_norm, x).data, np.tanh(x.data @ pool.theta_att.data), atol=1e-15)


# --- clustering ---------------------------------------------------------------

def test_zero_w2_gives_uniform_rows(rng):
    pool = ClusterPool(3, 5, 4, rng)
    pool.w2.data[...] = 0
    s = cluster_assign(pool, Value(rng.normal(size=(6, 3)))).data
    assert np.allclose(s, 0.25, rtol=0, atol=1e-15)


def test_identical_rows_identical_assignment(rng):
    pool = ClusterPool(3, 5, 2, rng)
    x = np.vstack([rng.normal(size=(1, 3))] * 2 + [rng.normal(size=(1, 3))])
    s = cluster_assign(pool, Value(x)).data
    assert np.array_equal(s[0], s[1])


def test_assignment_rows_sum_to_one(rng):
    pool = ClusterPool(3, 4, 2, rng)
    s = cluster_assign(pool, Value(rng.normal(size=(6, 3)))).data
    assert np.abs(s.sum(axis=1) - 1).max() < 1e-9


def test_perfect_partition_losses():
    m, s = two_triangles()
    l_c, l_o = mincut_losses(Value(s), m)
    assert abs(l_c.item() + 1) <= 1e-12
    assert abs(l_o.item()) <= 1e-12


def test_uniform_assignment_games_cut_but_not_ortho(rng):
    m = er_graph(rng, 4, 1.0).adjacency().astype(float)
    l_c, l_o = mincut_losses(Value(np.full((4, 2), 0.5)), m)
    assert abs(l_c.item() + 1) < 1e-12
    # S'S = J, so l_o = ||J/2 - I/sqrt2||_F = sqrt(2 - sqrt2)
    assert abs(l_o.item() - math.sqrt(2 - math.sqrt(2))) < 1e-12


def test_empty_motif_matrix_cut_loss_is_zero(rng):
    l_c, _ = mincut_losses(Value(random_simplex(rng, 5, 2)), np.zeros((5, 5)))
    assert l_c.item() == 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 15), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_loss_bounds(n, k, seed):
    rng = np.random.default_rng(seed)
    w = np.triu(rng.random((n, n)) * (rng.random((n, n)) < 0.5), 1)
    l_c, l_o = mincut_losses(Value(random_simplex(rng, n, k)), w + w.T)
    assert -1 - 1e-12 <= l_c.item() <= 1e-12
    assert -1e-12 <= l_o.item() <= 2 + 1e-12


def test_identity_coarsening(rng):
    g = er_graph(rng, 5, 0.6, d=2)
    m = motif_adjacency(g, MotifKind.TRIANGLE).dense().astype(float)
    res = cluster_coarsen(Value(np.eye(5)), m, Value(g.features))
    assert np.array_equal(res.adj_out, m)
    assert np.array_equal(res.x_out.data, g.features)


def test_two_triangles_coarsen_to_diagonal():
    m, s = two_triangles()
    res = cluster_coarsen(Value(s), m, Value(np.ones((6, 1))))
    assert np.array_equal(res.adj_out, np.diag([6.0, 6.0]))


def test_conservation_of_total_weight():
    assert conservation_check(100) <= 1e-12


def test_permutation_assignment_conjugates(rng):
    m = motif_adjacency(er_graph(rng, 6, 0.5), MotifKind.TWO_STAR).dense().astype(float)
    p = np.eye(6)[rng.permutation(6)]
    res = cluster_coarsen(Value(p), m, Value(np.ones((6, 1))))
    assert np.array_equal(res.adj_out, p.T @ m @ p)


# --- edge motif reduces to the plain-adjacency baselines -------------------------

def test_edge_motif_selection_scores_equal_adjacency_attention(rng):
    g = er_graph(rng, 7, 0.4, d=3)
    cfg = ModelConfig(channel=Channel.SELECTION, motif=MotifKind.EDGE, hidden_dim=4, blocks=1)
    stack = SelectionStack(3, cfg, rng)
    _, _, trace = stack(g, Value(g.features))
    a = g.adjacency()
    h = np.maximum(propagation_matrix(a) @ g.features @ stack.gcns[0].theta.data, 0)
    ref = np.tanh(propagation_matrix(a) @ h @ stack.pools[0].theta_att.data)
    idx = trace[0].selected
    assert np.abs(trace[0].x_out.data - h[idx] * ref[idx]).max() < 1e-12


def test_edge_motif_cluster_losses_equal_adjacency_mincut(rng):
    g = er_graph(rng, 7, 0.5, d=3)
    s = Value(random_simplex(rng, 7, 3))
    a = g.adjacency().astype(float)
    l_c, l_o = mincut_losses(s, motif_matrix(a, MotifKind.EDGE).astype(float))
    d = np.diag(a.sum(axis=1))
    ref_c = -np.trace(s.data.T @ a @ s.data) / np.trace(s.data.T @ d @ s.data)
    sts = s.data.T @ s.data
    ref_o = np.linalg.norm(sts / np.linalg.norm(sts) - np.eye(3) / np.sqrt(3))
    assert abs(l_c.item() - ref_c) < 1e-12
    assert abs(l_o.item() - ref_o) < 1e-12


def test_clustering_stack_aux_is_sum_of_block_losses(rng):
    g = er_graph(rng, 8, 0.5, d=3)
    cfg = ModelConfig(channel=Channel.CLUSTERING, hidden_dim=4, blocks=2)
    stack = ClusteringStack(3, cfg, (3, 2), rng)
    _, aux, trace = stack(g, Value(g.features))
    assert [r.assignment.shape for r in trace] == [(8, 3), (3, 2)]
    assert abs(aux.item() - sum(r.aux_loss.item() for r in trace)) < 1e-12
