"""Performance-aware online tuning on a streaming interval sequence.

Each stream step pairs the previous interval's features and scheduling
decision with the current interval's labels, fine-tunes only the expert
mixture (every other component is frozen), and records routing while doing
so. At every configured step boundary the expert population mutates: experts
whose activation counter stayed at zero are removed (never below one
survivor), one new expert is added if any inputs activated nothing, and the
routing records restart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamW, Tape
from .config import TuneConfig
from .errors import ValidationError
from .losses import compute_losses
from .model import FaultModel
from .moe import Expert

STREAM_FIELDS = ("step", "expert_count", "added", "removed",
                 "window_detection_accuracy", "window_classification_accuracy")


@dataclass
class TuneStepLog:
    step: int
    expert_count: int
    added: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    window_detection_accuracy: float | None = None
    window_classification_accuracy: float | None = None

    def log_row(self):
        return [self.step, self.expert_count,
                ";".join(map(str, self.added)), ";".join(map(str, self.removed)),
                self.window_detection_accuracy, self.window_classification_accuracy]


class OnlineTuner:
    def __init__(self, model: FaultModel, cfg: TuneConfig, loss_weights=None):
        from .losses import LossWeights

        self.model = model
        self.cfg = cfg
        self.loss_weights = loss_weights or LossWeights()
        self.optimizer = AdamW(
            [p for _, p in model.moe_parameters()],
            base_lr=cfg.lr,
            weight_decay=cfg.weight_decay,
            decay_factor=1.0,   # flat rate while tuning
            decay_every=1,
        )
        self.rng = np.random.default_rng(cfg.seed)
        self.step_count = 0
        self.log: list[TuneStepLog] = []
        self._window: list[tuple[int, int, int, int]] = []  # det ok, det n, cls ok, cls n
        model.moe.recording = True
        model.moe.mutation_pending = False
        model.moe.reset_routing_records()

    def tune_step(self, features: np.ndarray, migrations, labels: np.ndarray) -> TuneStepLog:
        """One stream step: forward, loss, update the mixture only, record
        routing, and mutate the population if this step is a boundary."""
        model = self.model
        labels = np.asarray(labels, dtype=np.int64)
        if features.shape[0] != len(labels):
            raise ValidationError("label count does not match host count")

        with Tape() as tape:
            fp = model.forward(features, migrations)
            total, _ = compute_losses(fp.detection, fp.classification,
                                      fp.trace.score_matrix, labels,
                                      model.prototypes, self.loss_weights)
        tape.backward(total)
        self.optimizer.step()   # holds mixture parameters only
        model.zero_grad()       # frozen modules' gradients are dropped unused

        model.moe.record_routing(fp.trace, features, migrations, labels)
        self._track_window(fp, labels)

        self.step_count += 1
        entry = TuneStepLog(self.step_count, len(model.moe.experts))
        if self.step_count % self.cfg.epoch_threshold == 0:
            model.moe.mutation_pending = True
            added, removed = self.lifecycle_boundary()
            entry.added = [e.id for e in added]
            entry.removed = [e.id for e in removed]
            entry.expert_count = len(model.moe.experts)
        det, cls = self.window_accuracy()
        entry.window_detection_accuracy = det
        entry.window_classification_accuracy = cls
        self.log.append(entry)
        return entry

    def lifecycle_boundary(self) -> tuple[list[Expert], list[Expert]]:
        """Apply the population rules, then clear the records and the flag.

        Removal: every expert with a zero activation counter, oldest position
        first, stopping while at least one expert remains. Addition: one
        expert seeded from the stored unrouted inputs, if there are any.
        """
        moe = self.model.moe
        if not moe.mutation_pending:
            return [], []
        removed = []
        for expert_id in [e.id for i, e in enumerate(moe.experts)
                          if moe.activation_counts[i] == 0]:
            if len(moe.experts) == 1:
                break
            expert = moe.remove_expert(expert_id)
            for _, p in expert.named("moe"):
                self.optimizer.drop_param(p)
            removed.append(expert)

        added = []
        if moe.unrouted:
            expert = moe.add_expert(moe.unrouted, self.rng)
            for _, p in expert.named("moe"):
                self.optimizer.add_param(p)
            added.append(expert)

        moe.reset_routing_records()
        moe.mutation_pending = False
        return added, removed

    def run(self, stream_records) -> list[TuneStepLog]:
        """Tune over a recorded stream: step t uses interval t-1's features
        and decision with interval t's labels."""
        for prev, cur in zip(stream_records, stream_records[1:]):
            self.tune_step(prev.features, prev.migrations, cur.labels)
        return self.log

    # --- sliding-window accuracies for the log --------------------------------

    def _track_window(self, fp, labels):
        flags, ranked = self.model.predict(fp)
        actual = labels > 0
        det_ok = int(np.sum(flags == actual))
        cls_idx = np.flatnonzero(actual)
        cls_ok = sum(1 for m in cls_idx if ranked[m][0] == labels[m])
        self._window.append((det_ok, len(labels), cls_ok, len(cls_idx)))
        if len(self._window) > self.cfg.metrics_window:
            self._window.pop(0)

    def window_accuracy(self) -> tuple[float | None, float | None]:
        det_n = sum(w[1] for w in self._window)
        cls_n = sum(w[3] for w in self._window)
        det = sum(w[0] for w in self._window) / det_n if det_n else None
        cls = sum(w[2] for w in self._window) / cls_n if cls_n else None
        return det, cls


def export_routing_records(path, records):
    """Line-delimited routing audit: one JSON object per (interval, host)
    with scores, threshold states and the selected experts."""
    import json

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for interval, host, decision, expert_ids in records:
            fh.write(json.dumps({
                "interval": interval,
                "host": host,
                "scores": [float(s) for s in decision.probs],
                "active_mask": decision.omega.tolist(),
                "selected": [expert_ids[g] for g in decision.active],
            }, separators=(",", ":")) + "\n")
