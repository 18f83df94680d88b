"""Fusing the two model paths and turning the result into predictions.

Cross multi-head attention takes queries from the expert-mixture output and
keys/values from the graph encoding, so each host's learned fault features
search the migration structure for the context that matters to them. Two
small heads sit on top: a softmax pair for fault detection and a sigmoid
vector compared against trainable per-class prototype vectors for fault-type
classification (nearest prototype by Euclidean distance wins).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError


class CrossAttentionParams:
    def __init__(self, heads: list[tuple[Tensor, Tensor, Tensor]], w_out: Tensor):
        self.heads = heads
        self.w_out = w_out

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    @classmethod
    def init(cls, d_model: int, n_heads: int, rng) -> "CrossAttentionParams":
        if d_model % n_heads != 0:
            raise ShapeError(f"head count {n_heads} must divide model width {d_model}")
        d_k = d_model // n_heads
        std = 1.0 / np.sqrt(d_model)

        def mat(r, c):
            return Tensor(rng.normal(0.0, std, size=(r, c)))

        heads = [(mat(d_model, d_k), mat(d_model, d_k), mat(d_model, d_k))
                 for _ in range(n_heads)]
        return cls(heads, mat(n_heads * d_k, d_model))

    def named(self, prefix="cross_attn"):
        out = []
        for a, (wq, wk, wv) in enumerate(self.heads):
            out += [(f"{prefix}.h{a}.wq", wq), (f"{prefix}.h{a}.wk", wk),
                    (f"{prefix}.h{a}.wv", wv)]
        out.append((f"{prefix}.w_out", self.w_out))
        return out


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    d_k = k.cols
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(d_k))
    return ad.matmul(ad.row_softmax(scores), v)


def cross_attention(queries: Tensor, keys_values: Tensor,
                    params: CrossAttentionParams) -> Tensor:
    """MultiHead(queries, keys_values, keys_values): per-head scaled
    dot-product attention, heads concatenated and mapped back to model width."""
    if queries.cols != keys_values.cols:
        raise ShapeError("query and key/value widths differ")
    heads = [
        scaled_dot_attention(ad.matmul(queries, wq), ad.matmul(keys_values, wk),
                             ad.matmul(keys_values, wv))
        for wq, wk, wv in params.heads
    ]
    return ad.matmul(ad.concat_cols(heads), params.w_out)


class HeadParams:
    """The two output maps: model width -> 2 detection logits, and model
    width -> classification feature width."""

    def __init__(self, detect_w, detect_b, classify_w, classify_b):
        self.detect_w = detect_w
        self.detect_b = detect_b
        self.classify_w = classify_w
        self.classify_b = classify_b

    @classmethod
    def init(cls, d_model: int, n_classes_out: int, rng) -> "HeadParams":
        std = 1.0 / np.sqrt(d_model)
        return cls(
            detect_w=Tensor(rng.normal(0.0, std, size=(d_model, 2))),
            detect_b=Tensor(np.zeros((1, 2))),
            classify_w=Tensor(rng.normal(0.0, std, size=(d_model, n_classes_out))),
            classify_b=Tensor(np.zeros((1, n_classes_out))),
        )

    def named(self, prefix="heads"):
        return [
            (f"{prefix}.detect_w", self.detect_w),
            (f"{prefix}.detect_b", self.detect_b),
            (f"{prefix}.classify_w", self.classify_w),
            (f"{prefix}.classify_b", self.classify_b),
        ]


def detect(o: Tensor, heads: HeadParams) -> Tensor:
    """Per-host probability pair (no fault, fault)."""
    return ad.row_softmax(ad.add(ad.matmul(o, heads.detect_w), heads.detect_b))


def classify(o: Tensor, heads: HeadParams) -> Tensor:
    """Per-host classification feature vector, entries in (0, 1)."""
    return ad.sigmoid(ad.add(ad.matmul(o, heads.classify_w), heads.classify_b))


def predict_faults(detection: np.ndarray) -> np.ndarray:
    """Fault iff the fault column strictly exceeds the no-fault column."""
    return detection[:, 1] > detection[:, 0]


class PrototypeBank:
    """One trainable prototype vector per fault class (row 0 = no fault)."""

    def __init__(self, p: Tensor):
        self.p = p

    @classmethod
    def init(cls, n_classes: int, width: int, rng) -> "PrototypeBank":
        return cls(Tensor(rng.uniform(0.0, 1.0, size=(n_classes, width))))

    @property
    def n_classes(self) -> int:
        return self.p.rows

    def named(self, prefix="prototypes"):
        return [(f"{prefix}.p", self.p)]


def rank_fault_types(c_row: np.ndarray, bank: PrototypeBank,
                     classes: list[int] | None = None) -> list[int]:
    """Fault classes ordered by ascending Euclidean distance from ``c_row``.

    By default only actual fault classes (1..Z-1) are ranked, matching the
    classification protocol; pass ``classes`` explicitly to rank others.
    Distance ties resolve toward the lower class index.
    """
    c_row = np.asarray(c_row, dtype=np.float64).ravel()
    if classes is None:
        classes = list(range(1, bank.n_classes))
    d2 = {z: float(np.sum((c_row - bank.p.data[z]) ** 2)) for z in classes}
    return sorted(classes, key=lambda z: (d2[z], z))
