"""Encode task-migration effects across hosts with edge-featured attention.

A scheduling decision (the list of task migrations for one interval) induces
an undirected neighbourhood structure over hosts plus a per-edge migration
count. Each host attends over its neighbours; the attention logit of a pair
mixes both hosts' features with an embedding of how many tasks moved between
them, and the aggregated output re-maps neighbour features into the model
width. Hosts that took part in no migration fall back to their own mapped
features so healthy hosts keep a presence downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError


@dataclass(frozen=True)
class MigrationGraph:
    """Distinct migration edges and the neighbourhood structure they induce.

    ``directed_edges`` keeps the raw (source, target) multiplicity counts;
    ``pairs`` collapses them to unordered host pairs with summed counts,
    which is what the (symmetric) attention logit consumes. Self-migrations
    are dropped at construction.
    """

    n_hosts: int
    directed_edges: tuple[tuple[int, int], ...]
    directed_counts: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]
    pair_counts: tuple[int, ...]
    neighbors: tuple[tuple[int, ...], ...]

    @property
    def n_distinct_edges(self) -> int:
        return len(self.directed_edges)

    def count(self, src: int, dst: int) -> int:
        try:
            return self.directed_counts[self.directed_edges.index((src, dst))]
        except ValueError:
            return 0

    def attention_edges(self):
        """Ordered (host, neighbour, pair_index) triples, sorted by host then
        neighbour. One triple per direction of every pair."""
        pair_index = {p: k for k, p in enumerate(self.pairs)}
        out = []
        for host in range(self.n_hosts):
            for nb in self.neighbors[host]:
                key = (host, nb) if host < nb else (nb, host)
                out.append((host, nb, pair_index[key]))
        return out


def build_migration_graph(migrations, n_hosts: int) -> MigrationGraph:
    """Count migrations per distinct directed edge and derive neighbour sets.

    ``migrations`` is an iterable of (source, target) host indices. Self
    pairs are ignored; out-of-range indices are rejected.
    """
    counts: dict[tuple[int, int], int] = {}
    for src, dst in migrations:
        src, dst = int(src), int(dst)
        if not (0 <= src < n_hosts and 0 <= dst < n_hosts):
            raise ValidationError(f"migration ({src},{dst}) outside 0..{n_hosts - 1}")
        if src == dst:
            continue
        counts[(src, dst)] = counts.get((src, dst), 0) + 1

    directed = tuple(sorted(counts))
    pair_counts: dict[tuple[int, int], int] = {}
    nbrs: list[set[int]] = [set() for _ in range(n_hosts)]
    for (src, dst), c in counts.items():
        key = (src, dst) if src < dst else (dst, src)
        pair_counts[key] = pair_counts.get(key, 0) + c
        nbrs[src].add(dst)
        nbrs[dst].add(src)

    pairs = tuple(sorted(pair_counts))
    return MigrationGraph(
        n_hosts=n_hosts,
        directed_edges=directed,
        directed_counts=tuple(counts[e] for e in directed),
        pairs=pairs,
        pair_counts=tuple(pair_counts[p] for p in pairs),
        neighbors=tuple(tuple(sorted(s)) for s in nbrs),
    )


class GraphEncoderParams:
    """Trainable maps of the encoder.

    count_embed_w/b: scalar migration count -> feature-width vector
    edge_hidden:     feature width -> attention hidden width
    attn_vector:     attention hidden width -> logit
    value_map:       feature width -> model width
    """

    def __init__(self, count_embed_w, count_embed_b, edge_hidden, attn_vector, value_map):
        self.count_embed_w = count_embed_w
        self.count_embed_b = count_embed_b
        self.edge_hidden = edge_hidden
        self.attn_vector = attn_vector
        self.value_map = value_map

    @classmethod
    def init(cls, n_features: int, d_hidden: int, d_model: int, rng) -> "GraphEncoderParams":
        def mat(r, c, std):
            return Tensor(rng.normal(0.0, std, size=(r, c)))

        return cls(
            count_embed_w=mat(1, n_features, 0.1),
            count_embed_b=Tensor(np.zeros((1, n_features))),
            edge_hidden=mat(n_features, d_hidden, 1.0 / np.sqrt(n_features)),
            attn_vector=mat(d_hidden, 1, 1.0 / np.sqrt(d_hidden)),
            value_map=mat(n_features, d_model, 1.0 / np.sqrt(n_features)),
        )

    def named(self, prefix="encoder"):
        return [
            (f"{prefix}.count_embed_w", self.count_embed_w),
            (f"{prefix}.count_embed_b", self.count_embed_b),
            (f"{prefix}.edge_hidden", self.edge_hidden),
            (f"{prefix}.attn_vector", self.attn_vector),
            (f"{prefix}.value_map", self.value_map),
        ]


def attention_logits(x: Tensor, graph: MigrationGraph, params: GraphEncoderParams) -> Tensor:
    """One logit per unordered neighbour pair (aligned with ``graph.pairs``).

    For pair {m, m'} with summed migration count F: the count is embedded to
    feature width, added to X_m + X_m', passed through the hidden map with a
    LeakyReLU, and reduced by the attention vector.
    """
    if not graph.pairs:
        return Tensor(np.zeros((0, 1)))
    a_idx = [p[0] for p in graph.pairs]
    b_idx = [p[1] for p in graph.pairs]
    counts = Tensor(np.array(graph.pair_counts, dtype=np.float64).reshape(-1, 1))
    count_vec = ad.add(ad.matmul(counts, params.count_embed_w), params.count_embed_b)
    pair_sum = ad.add(ad.add(ad.rows(x, a_idx), ad.rows(x, b_idx)), count_vec)
    hidden = ad.leaky_relu(ad.matmul(pair_sum, params.edge_hidden))
    return ad.matmul(hidden, params.attn_vector)


def attention_weights(logits: Tensor, graph: MigrationGraph) -> Tensor:
    """Per-host softmax over neighbour logits.

    Returns one weight per ordered (host, neighbour) edge, aligned with
    ``graph.attention_edges()``; each host's weights sum to 1.
    """
    edges = graph.attention_edges()
    if not edges:
        return Tensor(np.zeros((0, 1)))
    host_idx = np.array([e[0] for e in edges], dtype=np.int64)
    pair_idx = [e[2] for e in edges]
    ordered = ad.rows(logits, pair_idx)
    return ad.segment_softmax(ordered, host_idx, graph.n_hosts)


def aggregate(x: Tensor, weights: Tensor, graph: MigrationGraph,
              params: GraphEncoderParams) -> Tensor:
    """Weighted sum of mapped neighbour features per host.

    Hosts without neighbours receive their own mapped features instead of a
    zero row.
    """
    mapped = ad.matmul(x, params.value_map)
    edges = graph.attention_edges()
    lonely = np.array([[0.0 if graph.neighbors[m] else 1.0] for m in range(graph.n_hosts)])
    if not edges:
        return mapped
    host_idx = np.array([e[0] for e in edges], dtype=np.int64)
    nbr_idx = [e[1] for e in edges]
    contrib = ad.elementwise_mul(weights, ad.rows(mapped, nbr_idx))
    summed = ad.segment_sum(contrib, host_idx, graph.n_hosts)
    if lonely.any():
        return ad.add(summed, ad.elementwise_mul(Tensor(lonely), mapped))
    return summed


def encode(x: Tensor, graph: MigrationGraph, params: GraphEncoderParams) -> Tensor:
    """Full pass: logits -> per-host softmax -> neighbour aggregation."""
    logits = attention_logits(x, graph, params)
    weights = attention_weights(logits, graph)
    return aggregate(x, weights, graph, params)
