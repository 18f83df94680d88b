"""The full dual-path model: raw features are routed through the expert
mixture while the migration graph is encoded in parallel; cross attention
fuses the two, and the detection/classification heads read the fused state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .config import ModelConfig
from .errors import ValidationError
from .fusion import (
    CrossAttentionParams,
    HeadParams,
    PrototypeBank,
    classify,
    cross_attention,
    detect,
    predict_faults,
    rank_fault_types,
)
from .graph_encoder import GraphEncoderParams, build_migration_graph, encode
from .moe import MoeLayer, RoutingTrace


class FeatureScaler:
    """Per-feature affine standardization fitted on the training split.

    The dataset keeps raw physical units; this keeps mixed-scale features
    (utilizations in [0,1] next to KB/s throughputs) from dominating the
    shared linear maps. Stored in the checkpoint so inference is identical.
    """

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(1, -1)
        self.scale = np.asarray(scale, dtype=np.float64).reshape(1, -1)

    @classmethod
    def identity(cls, n_features: int) -> "FeatureScaler":
        return cls(np.zeros(n_features), np.ones(n_features))

    @classmethod
    def fit(cls, stacked: np.ndarray) -> "FeatureScaler":
        mean = stacked.mean(axis=0)
        scale = np.maximum(stacked.std(axis=0), 1e-6)
        return cls(mean, scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean[0].tolist(), "scale": self.scale[0].tolist()}

    @classmethod
    def from_dict(cls, d) -> "FeatureScaler":
        return cls(np.array(d["mean"]), np.array(d["scale"]))


@dataclass
class ForwardPass:
    detection: Tensor        # M x 2 probability pairs
    classification: Tensor   # M x feature-width, in (0,1)
    fused: Tensor            # M x d_model cross-attention output
    encoded: Tensor          # M x d_model graph encoding
    queries: Tensor          # M x d_model expert-mixture output
    trace: RoutingTrace


class FaultModel:
    def __init__(self, config: ModelConfig, scaler: FeatureScaler,
                 encoder: GraphEncoderParams, moe: MoeLayer,
                 cross: CrossAttentionParams, heads: HeadParams,
                 prototypes: PrototypeBank):
        self.config = config
        self.scaler = scaler
        self.encoder = encoder
        self.moe = moe
        self.cross = cross
        self.heads = heads
        self.prototypes = prototypes

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "FaultModel":
        rng = np.random.default_rng(seed)
        return cls(
            config,
            FeatureScaler.identity(config.n_features),
            GraphEncoderParams.init(config.n_features, config.attn_hidden,
                                    config.d_model, rng),
            MoeLayer.init(config.n_experts, config.n_features, config.d_model,
                          config.g_max, rng),
            CrossAttentionParams.init(config.d_model, config.n_heads, rng),
            HeadParams.init(config.d_model, config.class_feature_width, rng),
            PrototypeBank.init(config.n_classes, config.class_feature_width, rng),
        )

    def forward(self, features: np.ndarray, migrations) -> ForwardPass:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.config.n_features:
            raise ValidationError(
                f"expected M x {self.config.n_features} features, got {features.shape}")
        x = Tensor(self.scaler.transform(features))
        graph = build_migration_graph(migrations, features.shape[0])
        encoded = encode(x, graph, self.encoder)
        queries, trace = self.moe.forward(x)
        fused = cross_attention(queries, encoded, self.cross)
        return ForwardPass(
            detection=detect(fused, self.heads),
            classification=classify(fused, self.heads),
            fused=fused,
            encoded=encoded,
            queries=queries,
            trace=trace,
        )

    def predict(self, fp: ForwardPass):
        """Value-level predictions: per-host fault flags and the prototype
        ranking of fault classes for every host."""
        flags = predict_faults(fp.detection.data)
        ranked = [rank_fault_types(fp.classification.data[m], self.prototypes)
                  for m in range(fp.detection.rows)]
        return flags, ranked

    # --- parameter registry ---------------------------------------------------

    def named_parameters(self):
        return (self.encoder.named() + self.moe.named() + self.cross.named()
                + self.heads.named() + self.prototypes.named())

    def moe_parameters(self):
        return self.moe.named()

    def frozen_parameters(self):
        """Everything the online tuner must not touch."""
        return (self.encoder.named() + self.cross.named() + self.heads.named()
                + self.prototypes.named())

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None


def parameter_checksum(named_params) -> str:
    """SHA-256 over parameter names and exact float bytes, order-independent."""
    digest = hashlib.sha256()
    for name, p in sorted(named_params, key=lambda item: item[0]):
        digest.update(name.encode())
        digest.update(p.data.tobytes())
    return digest.hexdigest()
