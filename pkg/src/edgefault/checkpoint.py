"""Versioned, human-diffable checkpoint format.

A checkpoint is one JSON document: hyperparameters, the feature scaler, the
expert roster (ids in order, so a variable expert population round-trips),
every parameter matrix as shape + flat row-major floats, the training stage
and the seeds involved. JSON float encoding is shortest-repr, so floats
round-trip exactly and a save -> load -> forward is bit-identical to the
original model.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .autodiff import Tensor
from .config import ModelConfig
from .errors import DataError
from .fusion import CrossAttentionParams, HeadParams, PrototypeBank
from .graph_encoder import GraphEncoderParams
from .model import FaultModel, FeatureScaler
from .moe import Expert, MoeLayer

CHECKPOINT_SCHEMA = 1


def _pack_params(named) -> dict:
    return {name: {"shape": list(p.shape), "data": p.data.ravel().tolist()}
            for name, p in named}


def _unpack(entry, name) -> Tensor:
    try:
        shape = tuple(entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"checkpoint parameter {name} is malformed: {exc}") from exc
    return Tensor(data)


def save_checkpoint(path, model: FaultModel, stage: str, seeds: dict | None = None):
    doc = {
        "schema_version": CHECKPOINT_SCHEMA,
        "hyper": dataclasses.asdict(model.config),
        "scaler": model.scaler.to_dict(),
        "experts": [{"id": e.id, "threshold_raw": e.threshold_raw.item()}
                    for e in model.moe.experts],
        "next_expert_id": model.moe.next_id,
        "params": _pack_params(model.named_parameters()),
        "stage": stage,
        "seeds": seeds or {},
        "optimizer": None,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Returns (model, stage, seeds)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc}") from exc

    if doc.get("schema_version") != CHECKPOINT_SCHEMA:
        raise DataError(f"checkpoint schema {doc.get('schema_version')} "
                        f"!= supported {CHECKPOINT_SCHEMA}")
    try:
        config = ModelConfig(**doc["hyper"])
        params = doc["params"]
        scaler = FeatureScaler.from_dict(doc["scaler"])
        expert_meta = doc["experts"]
        next_id = int(doc["next_expert_id"])
        stage = doc["stage"]
        seeds = doc.get("seeds", {})
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint {path} is missing fields: {exc}") from exc

    def grab(name):
        if name not in params:
            raise DataError(f"checkpoint {path} lacks parameter {name}")
        return _unpack(params[name], name)

    encoder = GraphEncoderParams(
        count_embed_w=grab("encoder.count_embed_w"),
        count_embed_b=grab("encoder.count_embed_b"),
        edge_hidden=grab("encoder.edge_hidden"),
        attn_vector=grab("encoder.attn_vector"),
        value_map=grab("encoder.value_map"),
    )
    experts = []
    for meta in expert_meta:
        eid = int(meta["id"])
        prefix = f"moe.e{eid}"
        experts.append(Expert(
            eid,
            repr_vec=grab(f"{prefix}.repr_vec"),
            threshold_raw=grab(f"{prefix}.threshold_raw"),
            w1=grab(f"{prefix}.w1"),
            b1=grab(f"{prefix}.b1"),
            w2=grab(f"{prefix}.w2"),
            b2=grab(f"{prefix}.b2"),
        ))
    moe = MoeLayer(experts, config.g_max, next_id=next_id)
    heads_list = []
    for a in range(config.n_heads):
        heads_list.append((grab(f"cross_attn.h{a}.wq"), grab(f"cross_attn.h{a}.wk"),
                           grab(f"cross_attn.h{a}.wv")))
    cross = CrossAttentionParams(heads_list, grab("cross_attn.w_out"))
    heads = HeadParams(
        detect_w=grab("heads.detect_w"),
        detect_b=grab("heads.detect_b"),
        classify_w=grab("heads.classify_w"),
        classify_b=grab("heads.classify_b"),
    )
    prototypes = PrototypeBank(grab("prototypes.p"))
    model = FaultModel(config, scaler, encoder, moe, cross, heads, prototypes)
    return model, stage, seeds
