import numpy as np
import pytest

import edgefault.autodiff as ad
from edgefault.autodiff import Tensor
from edgefault.errors import ValidationError
from edgefault.graph_encoder import (
    GraphEncoderParams,
    aggregate,
    attention_logits,
    attention_weights,
    build_migration_graph,
    encode,
)

from .gradcheck import check_gradients


def params_for(n_features, d_hidden, d_model, seed=0):
    return GraphEncoderParams.init(n_features, d_hidden, d_model, np.random.default_rng(seed))


# --- graph construction ------------------------------------------------------


def test_counts_and_neighbors():
    g = build_migration_graph([(1, 2), (1, 2), (3, 1)], 4)
    assert g.n_distinct_edges == 2
    assert g.count(1, 2) == 2
    assert g.count(3, 1) == 1
    assert g.neighbors[1] == (2, 3)


def test_empty_decision():
    g = build_migration_graph([], 4)
    assert g.n_distinct_edges == 0
    assert all(nb == () for nb in g.neighbors)


def test_all_migrations_on_one_edge():
    g = build_migration_graph([(0, 3)] * 5, 4)
    assert g.n_distinct_edges == 1
    assert g.pair_counts == (5,)


def test_self_migrations_dropped():
    g = build_migration_graph([(2, 2), (0, 1)], 3)
    assert g.directed_edges == ((0, 1),)


def test_out_of_range_index_rejected():
    with pytest.raises(ValidationError):
        build_migration_graph([(0, 7)], 4)


def test_bidirectional_counts_summed_per_pair():
    g = build_migration_graph([(0, 1), (1, 0), (1, 0)], 2)
    assert g.pairs == ((0, 1),)
    assert g.pair_counts == (3,)
    assert g.count(0, 1) == 1 and g.count(1, 0) == 2


# --- attention ---------------------------------------------------------------


def test_zero_attention_vector_gives_zero_logits(rng):
    p = params_for(5, 4, 6)
    p.attn_vector.data[:] = 0.0
    g = build_migration_graph([(0, 1), (2, 1)], 3)
    logits = attention_logits(Tensor(rng.normal(size=(3, 5))), g, p)
    assert np.all(logits.data == 0.0)


def test_logits_match_straight_line_evaluation(rng):
    n, dh = 5, 4
    p = params_for(n, dh, 6, seed=3)
    x = rng.normal(size=(4, n))
    g = build_migration_graph([(0, 1), (1, 0), (2, 3), (2, 3), (3, 1)], 4)
    logits = attention_logits(Tensor(x), g, p)

    for k, (a, b) in enumerate(g.pairs):
        f = g.pair_counts[k]
        vec = x[a] + x[b] + (f * p.count_embed_w.data[0] + p.count_embed_b.data[0])
        pre = vec @ p.edge_hidden.data
        hid = np.where(pre > 0, pre, 0.01 * pre)
        expected = hid @ p.attn_vector.data
        assert abs(logits.data[k, 0] - expected[0]) < 1e-12


def test_two_equal_logit_neighbors_split_half():
    p = params_for(3, 4, 5, seed=1)
    g = build_migration_graph([(0, 1), (0, 2)], 3)
    x = np.zeros((3, 3))
    logits = attention_logits(Tensor(x), g, p)  # identical pair features -> equal logits
    w = attention_weights(logits, g)
    edges = g.attention_edges()
    host0 = [w.data[i, 0] for i, e in enumerate(edges) if e[0] == 0]
    assert np.allclose(host0, [0.5, 0.5])


def test_single_neighbor_weight_is_one(rng):
    p = params_for(3, 4, 5)
    g = build_migration_graph([(0, 1)], 2)
    w = attention_weights(attention_logits(Tensor(rng.normal(size=(2, 3))), g, p), g)
    assert np.allclose(w.data, 1.0)


def test_softmax_of_known_logits():
    p = params_for(3, 4, 5)
    g = build_migration_graph([(0, 1), (0, 2), (0, 3)], 4)
    logits = Tensor(np.array([[1.0], [2.0], [3.0]]))
    w = attention_weights(logits, g)
    edges = g.attention_edges()
    host0 = np.array([w.data[i, 0] for i, e in enumerate(edges) if e[0] == 0])
    expected = np.exp([1.0, 2.0, 3.0])
    expected /= expected.sum()
    assert np.allclose(host0, expected)
    assert abs(host0.sum() - 1.0) < 1e-9


def test_neighbor_weights_sum_to_one_random_graphs():
    rng = np.random.default_rng(42)
    p = params_for(4, 4, 6, seed=9)
    for _ in range(50):
        m = int(rng.integers(2, 8))
        n_mig = int(rng.integers(0, 12))
        decision = [(int(rng.integers(m)), int(rng.integers(m))) for _ in range(n_mig)]
        g = build_migration_graph(decision, m)
        x = rng.normal(size=(m, 4))
        w = attention_weights(attention_logits(Tensor(x), g, p), g)
        sums = np.zeros(m)
        for i, e in enumerate(g.attention_edges()):
            sums[e[0]] += w.data[i, 0]
        for host in range(m):
            if g.neighbors[host]:
                assert abs(sums[host] - 1.0) < 1e-9


# --- aggregation -------------------------------------------------------------


def test_single_neighbor_aggregation_is_mapped_neighbor(rng):
    p = params_for(3, 4, 5, seed=2)
    g = build_migration_graph([(0, 1)], 2)
    x = rng.normal(size=(2, 3))
    out = encode(Tensor(x), g, p)
    assert np.allclose(out.data[0], x[1] @ p.value_map.data, atol=1e-12)
    assert np.allclose(out.data[1], x[0] @ p.value_map.data, atol=1e-12)


def test_empty_schedule_self_fallback(rng):
    p = params_for(3, 4, 5, seed=2)
    g = build_migration_graph([], 3)
    x = rng.normal(size=(3, 3))
    out = encode(Tensor(x), g, p)
    assert np.allclose(out.data, x @ p.value_map.data, atol=1e-12)


def test_aggregation_matches_brute_force(rng):
    p = params_for(4, 4, 6, seed=5)
    g = build_migration_graph([(0, 1), (1, 2), (2, 0), (3, 0)], 4)
    x = rng.normal(size=(4, 4))
    logits = attention_logits(Tensor(x), g, p)
    w = attention_weights(logits, g)
    out = aggregate(Tensor(x), w, g, p)

    # brute force: walk the edge list and sum contributions per host
    edges = g.attention_edges()
    expected = np.zeros((4, 6))
    for i, (host, nb, _) in enumerate(edges):
        expected[host] += w.data[i, 0] * (x[nb] @ p.value_map.data)
    for host in range(4):
        if not g.neighbors[host]:
            expected[host] = x[host] @ p.value_map.data
    assert np.allclose(out.data, expected, atol=1e-12)


def test_permutation_equivariance(rng):
    p = params_for(4, 4, 6, seed=6)
    decision = [(0, 1), (1, 2), (2, 0), (3, 2), (3, 2)]
    x = rng.normal(size=(5, 4))
    base = encode(Tensor(x), build_migration_graph(decision, 5), p).data

    perm = np.array([3, 0, 4, 1, 2])  # new index of each old host
    x_p = np.empty_like(x)
    x_p[perm] = x
    decision_p = [(perm[a], perm[b]) for a, b in decision]
    out_p = encode(Tensor(x_p), build_migration_graph(decision_p, 5), p).data
    assert np.allclose(out_p[perm], base, atol=1e-12)


def test_encoder_gradcheck(rng):
    p = params_for(4, 3, 5, seed=7)
    x = Tensor(rng.normal(size=(4, 4)))
    g = build_migration_graph([(0, 1), (1, 2), (2, 0), (2, 0)], 4)

    def loss():
        return ad.l2_norm_sq(encode(x, g, p))

    params = [t for _, t in p.named()] + [x]
    assert check_gradients(loss, params) < 1e-4
