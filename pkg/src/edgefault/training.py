"""Offline training: per-interval steps with the combined loss, the stepped
AdamW schedule, and the two-stage prototype update scheme.

Prototypes start from random vectors, so the classification loss alone moves
them slowly. Stage one ("ema") therefore snaps the correct class prototype
toward every correctly classified faulty host's feature vector with an
exponential moving average after each optimizer step. Once validation
classification accuracy starts fluctuating (rolling std over a window beyond
a threshold) or half the epoch budget has passed, stage two ("gradient_only")
switches the EMA off for good and prototypes train only through the loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamW, Tape
from .config import TrainConfig
from .errors import NumericError, ValidationError
from .fusion import PrototypeBank, rank_fault_types
from .losses import LossBreakdown, compute_losses
from .metrics import DetectionCounts, MetricsReport, RankedPrediction, full_report
from .model import FaultModel, FeatureScaler

STAGE_EMA = "ema"
STAGE_GRADIENT = "gradient_only"


def prototype_fast_update(class_features: np.ndarray, labels: np.ndarray,
                          bank: PrototypeBank, eta: float) -> int:
    """EMA-update the true-class prototype row for every faulty host whose
    current top-ranked class is already correct; returns how many rows moved.

    P[y] <- (1 - eta) * P[y] + eta * features, applied in host order.
    """
    moved = 0
    for m, y in enumerate(labels):
        y = int(y)
        if y <= 0:
            continue
        if rank_fault_types(class_features[m], bank)[0] == y:
            bank.p.data[y] = (1.0 - eta) * bank.p.data[y] + eta * class_features[m]
            moved += 1
    return moved


def stage_switch_due(history: list[float], epochs_done: int, total_epochs: int,
                     window: int, std_threshold: float, switch_fraction: float) -> bool:
    """True once validation accuracy fluctuates beyond the threshold over the
    rolling window, or unconditionally at the switch fraction of the budget."""
    if epochs_done >= math.ceil(total_epochs * switch_fraction):
        return True
    if len(history) >= window and float(np.std(history[-window:])) > std_threshold:
        return True
    return False


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss_detection: float
    loss_classification: float
    loss_selection: float
    loss_total: float
    val_detection_accuracy: float
    val_classification_accuracy: float
    stage: str

    LOG_FIELDS = ("epoch", "lr", "loss_detection", "loss_classification",
                  "loss_selection", "loss_total", "val_detection_accuracy",
                  "val_classification_accuracy", "stage")

    def log_row(self):
        return [getattr(self, f) for f in self.LOG_FIELDS]


class OfflineTrainer:
    def __init__(self, model: FaultModel, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.optimizer = AdamW(
            [p for _, p in model.named_parameters()],
            base_lr=cfg.base_lr,
            beta1=cfg.adam_beta1,
            beta2=cfg.adam_beta2,
            eps=cfg.adam_eps,
            weight_decay=cfg.weight_decay,
            decay_factor=cfg.lr_decay_factor,
            decay_every=cfg.lr_decay_every,
        )
        self.stage = STAGE_EMA
        self.val_history: list[float] = []
        self.epoch_log: list[EpochStats] = []

    def _step(self, record) -> LossBreakdown:
        model = self.model
        with Tape() as tape:
            fp = model.forward(record.features, record.migrations)
            total, breakdown = compute_losses(
                fp.detection, fp.classification, fp.trace.score_matrix,
                record.labels, model.prototypes, self.cfg.loss)
        tape.backward(total)
        self.optimizer.step()
        model.zero_grad()
        if self.stage == STAGE_EMA:
            prototype_fast_update(fp.classification.data, record.labels,
                                  model.prototypes, self.cfg.proto_update_weight)
        return breakdown

    def train_epoch(self, records, epoch: int, rng) -> tuple[float, float, float, float]:
        if not records:
            raise ValidationError("cannot train on an empty shard")
        self.optimizer.set_epoch(epoch)
        order = rng.permutation(len(records))
        sums = np.zeros(4)
        for i in order:
            record = records[int(i)]
            try:
                b = self._step(record)
            except NumericError as exc:
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, interval {record.t}: {exc}"
                ) from exc
            sums += (b.detection, b.classification, b.selection, b.total)
        return tuple(sums / len(records))

    def run(self, train_records, val_records) -> list[EpochStats]:
        rng = np.random.default_rng(self.cfg.seed)
        for epoch in range(self.cfg.epochs):
            ld, lc, ls, lf = self.train_epoch(train_records, epoch, rng)
            det_acc, cls_acc = quick_accuracy(self.model, val_records)
            self.val_history.append(cls_acc)
            stats = EpochStats(epoch, self.optimizer.lr, ld, lc, ls, lf,
                               det_acc, cls_acc, self.stage)
            self.epoch_log.append(stats)
            if self.stage == STAGE_EMA and stage_switch_due(
                    self.val_history, epoch + 1, self.cfg.epochs,
                    self.cfg.stage_window, self.cfg.stage_std_threshold,
                    self.cfg.stage_switch_fraction):
                self.stage = STAGE_GRADIENT
        return self.epoch_log


def fit_scaler(model: FaultModel, records):
    stacked = np.vstack([r.features for r in records])
    model.scaler = FeatureScaler.fit(stacked)


def quick_accuracy(model: FaultModel, records) -> tuple[float, float]:
    """(detection accuracy, top-1 classification accuracy over faulty hosts).
    Classification accuracy is 1.0 when the shard has no faulty host."""
    if not records:
        raise ValidationError("empty evaluation shard")
    correct = 0
    total = 0
    cls_hits = 0
    cls_total = 0
    for rec in records:
        fp = model.forward(rec.features, rec.migrations)
        flags, ranked = model.predict(fp)
        actual = rec.labels > 0
        correct += int(np.sum(flags == actual))
        total += len(actual)
        for m in np.flatnonzero(actual):
            cls_total += 1
            if ranked[m][0] == rec.labels[m]:
                cls_hits += 1
    return correct / total, (cls_hits / cls_total) if cls_total else 1.0


def evaluate_model(model: FaultModel, records, hr_k: int = 1) -> MetricsReport:
    """Full metric report over a shard: detection counts over every
    (interval, host) pair, ranking metrics over the truly faulty hosts."""
    if not records:
        raise ValidationError("empty evaluation shard")
    counts = DetectionCounts()
    preds: list[RankedPrediction] = []
    for rec in records:
        fp = model.forward(rec.features, rec.migrations)
        flags, ranked = model.predict(fp)
        actual = rec.labels > 0
        counts = counts.merge(DetectionCounts.from_pairs(flags, actual))
        for m in np.flatnonzero(actual):
            preds.append(RankedPrediction(ranked[m], int(rec.labels[m])))
    return full_report(counts, preds, hr_k=hr_k)


def collect_embeddings(model: FaultModel, records):
    """(t, host, label, feature-vector) rows for every truly faulty host;
    feeds external embedding analysis."""
    rows = []
    for rec in records:
        fp = model.forward(rec.features, rec.migrations)
        for m in np.flatnonzero(rec.labels > 0):
            rows.append((rec.t, int(m), int(rec.labels[m]),
                         fp.classification.data[m].copy()))
    return rows
