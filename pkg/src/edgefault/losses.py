"""The three training objectives and their weighted combination.

Detection is a per-host negative log-likelihood over the (no fault, fault)
probability pair. Classification is a prototype-distance loss over faulty
hosts only: pull the feature vector toward its own class prototype, push it
away from the others. The push term has two modes:

* ``hinge`` (default): wrong-class distances are penalized only inside a
  margin, the standard triplet-style repulsion.
* ``literal``: wrong-class squared distances are *added* verbatim. This
  contradicts the stated intent (adding a positive distance rewards moving
  closer) but is kept as a switch for fidelity experiments.

The selection loss regularizes raw similarity scores toward zero so no
expert's representation dominates the routing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ValidationError
from .fusion import PrototypeBank

LOG_FLOOR = 1e-12


@dataclass
class LossWeights:
    detection: float = 0.35
    classification: float = 0.5
    selection: float = 0.15
    selection_reg: float = 0.01   # inner weight of the selection loss
    margin: float = 1.0
    mode: str = "hinge"           # or "literal"

    def __post_init__(self):
        if self.mode not in ("hinge", "literal"):
            raise ValidationError(f"unknown classification loss mode {self.mode!r}")


def detection_loss(detection: Tensor, labels: np.ndarray) -> Tensor:
    """Summed negative log-likelihood of the correct detection column."""
    labels = np.asarray(labels)
    onehot = np.zeros(detection.shape)
    onehot[np.arange(len(labels)), (labels > 0).astype(int)] = 1.0
    picked = ad.elementwise_mul(ad.log(detection, floor=LOG_FLOOR), Tensor(onehot))
    return ad.scale(ad.sum_all(picked), -1.0)


def classification_loss(classification: Tensor, labels: np.ndarray,
                        bank: PrototypeBank, mode: str = "hinge",
                        margin: float = 1.0) -> Tensor:
    """Prototype-distance loss over hosts with a fault label.

    Both modes share the attraction term (squared distance to the true-class
    prototype); they differ in how wrong-class prototypes enter, see the
    module docstring.
    """
    labels = np.asarray(labels)
    faulty = labels > 0
    if not faulty.any():
        return Tensor([[0.0]])

    m = classification.rows
    z = bank.n_classes
    # squared distances of every host row to every prototype row
    c_sq = ad.row_sum(ad.elementwise_mul(classification, classification))
    p_sq = ad.transpose(ad.row_sum(ad.elementwise_mul(bank.p, bank.p)))
    cross = ad.scale(ad.matmul(classification, ad.transpose(bank.p)), -2.0)
    d2 = ad.add(ad.add(cross, c_sq), p_sq)

    pos_mask = np.zeros((m, z))
    pos_mask[faulty, labels[faulty]] = 1.0
    neg_mask = np.zeros((m, z))
    neg_mask[faulty] = 1.0
    neg_mask[pos_mask.astype(bool)] = 0.0

    pull = ad.sum_all(ad.elementwise_mul(d2, Tensor(pos_mask)))
    if mode == "literal":
        push = ad.sum_all(ad.elementwise_mul(d2, Tensor(neg_mask)))
    elif mode == "hinge":
        slack = ad.leaky_relu(ad.sub(Tensor([[margin]]), d2), slope=0.0)
        push = ad.sum_all(ad.elementwise_mul(slack, Tensor(neg_mask)))
    else:
        raise ValidationError(f"unknown classification loss mode {mode!r}")
    return ad.add(pull, push)


def selection_loss(score_matrix: Tensor, reg_weight: float) -> Tensor:
    """Mean over hosts of the summed squared similarity scores, scaled by the
    regularization weight. The mean keeps the weight scale-free in the host
    count."""
    per_host = ad.row_sum(ad.elementwise_mul(score_matrix, score_matrix))
    return ad.scale(ad.mean(per_host), reg_weight)


def final_loss(l_detect: Tensor, l_classify: Tensor, l_select: Tensor,
               weights: LossWeights) -> Tensor:
    return ad.add(
        ad.add(ad.scale(l_detect, weights.detection),
               ad.scale(l_classify, weights.classification)),
        ad.scale(l_select, weights.selection),
    )


@dataclass
class LossBreakdown:
    detection: float
    classification: float
    selection: float
    total: float


def compute_losses(detection: Tensor, classification: Tensor, score_matrix: Tensor,
                   labels: np.ndarray, bank: PrototypeBank,
                   weights: LossWeights) -> tuple[Tensor, LossBreakdown]:
    ld = detection_loss(detection, labels)
    lc = classification_loss(classification, labels, bank,
                             mode=weights.mode, margin=weights.margin)
    ls = selection_loss(score_matrix, weights.selection_reg)
    lf = final_loss(ld, lc, ls, weights)
    return lf, LossBreakdown(ld.item(), lc.item(), ls.item(), lf.item())
