"""Fault-adaptive mixture of experts with a mutable expert population.

Routing is similarity-driven: each expert owns a representation vector, and
an input activates the experts whose sigmoid-mapped cosine score clears that
expert's (trainable, sigmoid-mapped) threshold. A three-branch selection rule
bounds the active set to [1, g_max] per input:

* more candidates than g_max  -> keep the g_max highest-scoring,
* no candidate at all         -> fall back to the single highest-scoring,
* otherwise                   -> keep exactly the candidates.

The layer also keeps the bookkeeping that drives online expert lifecycle:
per-expert activation counters and a store of inputs that activated nothing
(the fallback inputs), from which replacement experts are seeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import PolicyError, ValidationError

_NORM_FLOOR = 1e-24  # squared-norm clamp; only ever binds for all-zero rows


class Expert:
    """One expert: a representation vector, an activation threshold and a
    two-layer network (feature width -> 2x width -> model width)."""

    def __init__(self, expert_id: int, repr_vec: Tensor, threshold_raw: Tensor,
                 w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor):
        self.id = expert_id
        self.repr_vec = repr_vec
        self.threshold_raw = threshold_raw
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @classmethod
    def init(cls, expert_id: int, n_features: int, d_model: int, rng,
             weight_scale: float | None = None, threshold_raw: float = 0.0,
             repr_vec: np.ndarray | None = None) -> "Expert":
        hidden = 2 * n_features
        s1 = weight_scale if weight_scale is not None else 1.0 / np.sqrt(n_features)
        s2 = weight_scale if weight_scale is not None else 1.0 / np.sqrt(hidden)
        if repr_vec is None:
            repr_vec = rng.normal(size=(1, n_features))
        return cls(
            expert_id,
            repr_vec=Tensor(np.asarray(repr_vec, dtype=np.float64).reshape(1, n_features)),
            threshold_raw=Tensor([[threshold_raw]]),
            w1=Tensor(rng.normal(0.0, s1, size=(n_features, hidden))),
            b1=Tensor(np.zeros((1, hidden))),
            w2=Tensor(rng.normal(0.0, s2, size=(hidden, d_model))),
            b2=Tensor(np.zeros((1, d_model))),
        )

    def forward(self, x: Tensor) -> Tensor:
        h = ad.leaky_relu(ad.add(ad.matmul(x, self.w1), self.b1))
        return ad.add(ad.matmul(h, self.w2), self.b2)

    def named(self, prefix: str):
        p = f"{prefix}.e{self.id}"
        return [
            (f"{p}.repr_vec", self.repr_vec),
            (f"{p}.threshold_raw", self.threshold_raw),
            (f"{p}.w1", self.w1),
            (f"{p}.b1", self.b1),
            (f"{p}.w2", self.w2),
            (f"{p}.b2", self.b2),
        ]


def similarity(x, expert: Expert) -> Tensor:
    """Cosine similarity between one input row and an expert's representation.

    An all-zero input has no direction; it scores 0 against every expert,
    which forces the single-best fallback in the selection rule.
    """
    x = ad.as_tensor(x)
    if not np.any(x.data):
        return Tensor([[0.0]])
    dot = ad.matmul(x, ad.transpose(expert.repr_vec))
    inv_nx = ad.power(ad.clamp_min(ad.l2_norm_sq(x), _NORM_FLOOR), -0.5)
    inv_nw = ad.power(ad.l2_norm_sq(expert.repr_vec), -0.5)
    return ad.elementwise_mul(ad.elementwise_mul(dot, inv_nx), inv_nw)


def select_active(omega: np.ndarray, s_hat: np.ndarray, g_max: int) -> list[int]:
    """The bounded selection rule. Ties are broken toward lower expert index
    (stable sort on the negated scores)."""
    n_on = int(omega.sum())
    if n_on > g_max:
        order = np.argsort(-s_hat, kind="stable")
        return sorted(order[:g_max].tolist())
    if n_on == 0:
        return [int(s_hat.argmax())]
    return np.flatnonzero(omega).tolist()


@dataclass
class GateDecision:
    scores: np.ndarray      # raw cosine per expert
    probs: np.ndarray       # sigmoid(scores)
    thresholds: np.ndarray  # sigmoid(raw thresholds)
    omega: np.ndarray       # 0/1 threshold states
    active: list[int]       # selected expert positions

    @property
    def fallback(self) -> bool:
        return int(self.omega.sum()) == 0


@dataclass
class RoutingTrace:
    """Per-interval routing record: tape-tracked score matrix plus the
    value-level decisions for every host row."""

    score_matrix: Tensor                 # M x G, on tape
    decisions: list[GateDecision] = field(default_factory=list)
    expert_ids: list[int] = field(default_factory=list)


@dataclass
class UnroutedInput:
    """An input that activated no expert, kept to seed a future expert."""

    features: np.ndarray
    decision: object
    label: int


class MoeLayer:
    def __init__(self, experts: list[Expert], g_max: int, next_id: int | None = None):
        if not experts:
            raise ValidationError("a mixture needs at least one expert")
        if g_max < 1:
            raise ValidationError("g_max must be >= 1")
        self.experts = list(experts)
        self.g_max = g_max
        self.next_id = max(e.id for e in experts) + 1 if next_id is None else next_id
        self.activation_counts = np.zeros(len(experts), dtype=np.int64)
        self.unrouted: list[UnroutedInput] = []
        self.recording = True
        self.mutation_pending = False

    @classmethod
    def init(cls, n_experts: int, n_features: int, d_model: int, g_max: int, rng) -> "MoeLayer":
        experts = [Expert.init(i, n_features, d_model, rng) for i in range(n_experts)]
        return cls(experts, g_max)

    # --- routing -------------------------------------------------------------

    def _cosine_matrix(self, x: Tensor) -> Tensor:
        """All host-expert cosines as an M x G tape tensor. Zero feature rows
        are masked to exact 0 (value and gradient)."""
        reps = ad.concat_rows([e.repr_vec for e in self.experts])
        inv_xn = ad.power(ad.clamp_min(ad.row_sum(ad.elementwise_mul(x, x)), _NORM_FLOOR), -0.5)
        inv_wn = ad.power(ad.row_sum(ad.elementwise_mul(reps, reps)), -0.5)
        xn = ad.elementwise_mul(x, inv_xn)
        wn = ad.elementwise_mul(reps, inv_wn)
        scores = ad.matmul(xn, ad.transpose(wn))
        zero_rows = ~np.any(x.data, axis=1)
        if zero_rows.any():
            mask = np.where(zero_rows, 0.0, 1.0).reshape(-1, 1)
            scores = ad.elementwise_mul(scores, Tensor(mask))
        return scores

    def _threshold_probs(self) -> np.ndarray:
        raw = np.array([e.threshold_raw.data[0, 0] for e in self.experts])
        return 1.0 / (1.0 + np.exp(-raw))

    def gate(self, x_row: np.ndarray) -> GateDecision:
        """Route one input row (values only, no tape)."""
        x_row = np.asarray(x_row, dtype=np.float64).ravel()
        n_experts = len(self.experts)
        reps = np.empty((n_experts, x_row.size))
        raw = np.empty(n_experts)
        for i, e in enumerate(self.experts):
            reps[i] = e.repr_vec.data[0]
            raw[i] = e.threshold_raw.data[0, 0]
        xn = math.sqrt(float(x_row @ x_row))
        if xn == 0.0:
            scores = np.zeros(n_experts)
        else:
            wn = np.sqrt(np.einsum("ij,ij->i", reps, reps))
            scores = reps @ x_row / (wn * xn)
        merged = np.concatenate([scores, raw])
        merged = 1.0 / (1.0 + np.exp(-merged))
        probs, thresholds = merged[:n_experts], merged[n_experts:]
        omega = (probs > thresholds).astype(np.int64)
        return GateDecision(scores, probs, thresholds, omega,
                            select_active(omega, probs, self.g_max))

    def forward(self, x: Tensor) -> tuple[Tensor, RoutingTrace]:
        """Route every row of x and mix the selected experts' outputs,
        each weighted by its raw cosine score, averaged over the active set."""
        score_matrix = self._cosine_matrix(x)
        thresholds = self._threshold_probs()
        m = x.rows
        trace = RoutingTrace(score_matrix, expert_ids=[e.id for e in self.experts])
        coeff = np.zeros((m, len(self.experts)))
        for row in range(m):
            scores = score_matrix.data[row]
            probs = 1.0 / (1.0 + np.exp(-scores))
            omega = (probs - thresholds > 0.0).astype(np.int64)
            active = select_active(omega, probs, self.g_max)
            trace.decisions.append(GateDecision(scores.copy(), probs, thresholds.copy(),
                                                omega, active))
            coeff[row, active] = 1.0 / len(active)

        weighted = ad.elementwise_mul(score_matrix, Tensor(coeff))
        out = None
        for g in sorted({g for d in trace.decisions for g in d.active}):
            term = ad.elementwise_mul(ad.cols(weighted, [g]), self.experts[g].forward(x))
            out = term if out is None else ad.add(out, term)
        return out, trace

    # --- lifecycle bookkeeping -------------------------------------------------

    def record_routing(self, trace: RoutingTrace, features: np.ndarray,
                       decision, labels: np.ndarray):
        """Accumulate activation counters and stash fallback inputs.

        No-op unless recording is enabled. Counters follow the threshold
        states (not the post-selection set): an input that cleared no
        threshold is stored even though the fallback still ran one expert.
        """
        if not self.recording:
            return
        for row, d in enumerate(trace.decisions):
            self.activation_counts += d.omega
            if d.fallback:
                self.unrouted.append(UnroutedInput(np.array(features[row]),
                                                   decision, int(labels[row])))

    def reset_routing_records(self):
        self.activation_counts = np.zeros(len(self.experts), dtype=np.int64)
        self.unrouted = []

    def remove_expert(self, expert_id: int) -> Expert:
        idx = next((i for i, e in enumerate(self.experts) if e.id == expert_id), None)
        if idx is None:
            raise ValidationError(f"no expert with id {expert_id}")
        if len(self.experts) == 1:
            raise PolicyError("refusing to remove the last expert")
        removed = self.experts.pop(idx)
        self.activation_counts = np.delete(self.activation_counts, idx)
        return removed

    def add_expert(self, seed_inputs: list[UnroutedInput], rng,
                   threshold_raw: float = -10.0) -> Expert:
        """Append an expert aimed at the inputs nothing else wanted.

        Its representation is the normalized mean of the seed feature
        vectors, and the near-zero threshold guarantees those inputs clear
        it immediately. Network weights start small (scale 0.01).
        """
        if not seed_inputs:
            raise ValidationError("add_expert needs at least one seed input")
        n = len(seed_inputs[0].features)
        mean_vec = np.mean([r.features for r in seed_inputs], axis=0)
        norm = np.linalg.norm(mean_vec)
        rep = mean_vec / norm if norm > 0 else np.full(n, 1.0 / np.sqrt(n))
        d_model = self.experts[0].w2.cols
        expert = Expert.init(self.next_id, n, d_model, rng, weight_scale=0.01,
                             threshold_raw=threshold_raw, repr_vec=rep)
        self.next_id += 1
        self.experts.append(expert)
        self.activation_counts = np.append(self.activation_counts, 0)
        return expert

    def named(self, prefix: str = "moe"):
        out = []
        for e in self.experts:
            out.extend(e.named(prefix))
        return out
