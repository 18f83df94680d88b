"""Labeled-interval dataset: in-memory records and the line-delimited file
format.

The file is UTF-8 JSON lines: a header object carrying the schema version
and dimensions, then one object per interval::

    {"schema_version": 1, "n_hosts": 16, "n_features": 7, "seed": 42, ...}
    {"t": 0, "X": [[...], ...], "S": [[src, dst], ...], "y": [0, ...]}

Floats round-trip exactly (shortest-repr JSON encoding), so save -> load is
lossless and same-seed runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

SCHEMA_VERSION = 1


@dataclass
class IntervalRecord:
    t: int
    features: np.ndarray                  # M x N
    migrations: list[tuple[int, int]]
    labels: np.ndarray                    # M ints


@dataclass
class DatasetMeta:
    n_hosts: int
    n_features: int
    seed: int
    interval_seconds: float
    schema_version: int = SCHEMA_VERSION


@dataclass
class Dataset:
    meta: DatasetMeta
    records: list[IntervalRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def class_counts(self, n_classes: int = 4) -> np.ndarray:
        counts = np.zeros(n_classes, dtype=np.int64)
        for rec in self.records:
            counts += np.bincount(rec.labels, minlength=n_classes)[:n_classes]
        return counts

    def host_rows(self) -> int:
        return sum(rec.features.shape[0] for rec in self.records)

    def split(self, train_fraction: float, val_fraction: float):
        """Contiguous train/val/test blocks, in time order (no shuffling, so
        the causal labeler's history never straddles a split boundary)."""
        n = len(self.records)
        n_train = int(round(n * train_fraction))
        n_val = int(round(n * val_fraction))
        return (
            Dataset(self.meta, self.records[:n_train]),
            Dataset(self.meta, self.records[n_train : n_train + n_val]),
            Dataset(self.meta, self.records[n_train + n_val :]),
        )

    def save(self, path):
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                header = {
                    "schema_version": self.meta.schema_version,
                    "n_hosts": self.meta.n_hosts,
                    "n_features": self.meta.n_features,
                    "seed": self.meta.seed,
                    "interval_seconds": self.meta.interval_seconds,
                }
                fh.write(json.dumps(header, separators=(",", ":")) + "\n")
                for rec in self.records:
                    line = {
                        "t": rec.t,
                        "X": rec.features.tolist(),
                        "S": [list(edge) for edge in rec.migrations],
                        "y": rec.labels.tolist(),
                    }
                    fh.write(json.dumps(line, separators=(",", ":")) + "\n")
        except OSError as exc:
            raise DataError(f"cannot write dataset {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Dataset":
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise DataError(f"cannot read dataset {path}: {exc}") from exc
        if not lines:
            raise DataError(f"dataset {path} is empty")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise DataError(f"dataset {path}: bad header: {exc}") from exc
        if header.get("schema_version") != SCHEMA_VERSION:
            raise DataError(
                f"dataset {path}: schema_version {header.get('schema_version')} "
                f"!= supported {SCHEMA_VERSION}")
        meta = DatasetMeta(
            n_hosts=int(header["n_hosts"]),
            n_features=int(header["n_features"]),
            seed=int(header["seed"]),
            interval_seconds=float(header.get("interval_seconds", 300.0)),
        )
        records = []
        for i, line in enumerate(lines[1:], start=2):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"dataset {path}: bad record on line {i}: {exc}") from exc
            features = np.asarray(obj["X"], dtype=np.float64)
            labels = np.asarray(obj["y"], dtype=np.int64)
            if features.shape != (meta.n_hosts, meta.n_features) or labels.shape != (meta.n_hosts,):
                raise DataError(f"dataset {path}: shape mismatch on line {i}")
            records.append(IntervalRecord(
                t=int(obj["t"]),
                features=features,
                migrations=[(int(a), int(b)) for a, b in obj["S"]],
                labels=labels,
            ))
        return cls(meta, records)


def build_dataset(features: np.ndarray, decisions, labels: np.ndarray,
                  seed: int, interval_seconds: float) -> Dataset:
    n_intervals, n_hosts, n_features = features.shape
    meta = DatasetMeta(n_hosts, n_features, seed, interval_seconds)
    records = [
        IntervalRecord(t, features[t], list(decisions[t]), labels[t])
        for t in range(n_intervals)
    ]
    return Dataset(meta, records)


def distribution_report(dataset: Dataset) -> dict:
    counts = dataset.class_counts()
    total = int(counts.sum())
    names = ["no_fault", "cpu_fault", "ram_fault", "disk_fault"]
    return {
        "host_rows": total,
        "counts": {name: int(c) for name, c in zip(names, counts)},
        "shares": {name: (int(c) / total if total else 0.0)
                   for name, c in zip(names, counts)},
    }
