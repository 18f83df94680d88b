import numpy as np
import pytest

from edgefault.autodiff import Tensor
from edgefault.config import ModelConfig, TrainConfig
from edgefault.errors import ValidationError
from edgefault.fusion import PrototypeBank
from edgefault.model import FaultModel, parameter_checksum
from edgefault.sim import SimConfig, HostSpec, build_dataset, label_features, run_simulation
from edgefault.training import (
    STAGE_EMA,
    STAGE_GRADIENT,
    OfflineTrainer,
    evaluate_model,
    fit_scaler,
    prototype_fast_update,
    quick_accuracy,
    stage_switch_due,
)


def tiny_model(seed=0, n_experts=3):
    cfg = ModelConfig(n_features=7, d_model=16, attn_hidden=8, n_heads=2,
                      n_experts=n_experts, g_max=2)
    return FaultModel.init(cfg, seed=seed)


def tiny_dataset(n_intervals=30, seed=13):
    cfg = SimConfig(hosts=[HostSpec() for _ in range(4)], seed=seed,
                    arrival_mean=2.0, warmup_intervals=5)
    res = run_simulation(cfg, n_intervals)
    labels = label_features(res.features, cfg.util_threshold,
                            cfg.throughput_percentile, cfg.warmup_intervals,
                            cfg.persistence)
    return build_dataset(res.features, res.decisions, labels, seed, 300.0)


# --- prototype EMA -------------------------------------------------------------


def test_prototype_ema_formula():
    bank = PrototypeBank(Tensor(np.zeros((4, 3))))
    bank.p.data[2] = [0.0, 0.0, 0.0]
    # make class 2 the nearest prototype for the vector being applied
    bank.p.data[1] = [9.0, 9.0, 9.0]
    bank.p.data[3] = [-9.0, -9.0, -9.0]
    feats = np.array([[1.0, 1.0, 1.0]])
    moved = prototype_fast_update(feats, np.array([2]), bank, eta=0.9)
    assert moved == 1
    assert np.allclose(bank.p.data[2], [0.9, 0.9, 0.9])


def test_prototype_ema_eta_zero_is_identity():
    bank = PrototypeBank(Tensor(np.array([[0.0], [0.5], [4.0], [9.0]])))
    before = bank.p.data.copy()
    prototype_fast_update(np.array([[0.6]]), np.array([1]), bank, eta=0.0)
    assert np.array_equal(bank.p.data, before)


def test_prototype_ema_skips_misclassified():
    bank = PrototypeBank(Tensor(np.array([[0.0], [5.0], [0.1], [9.0]])))
    before = bank.p.data.copy()
    # class 1's prototype (5.0) is far from 0.2; class 2's (0.1) is nearest,
    # so the host is misclassified and nothing moves
    moved = prototype_fast_update(np.array([[0.2]]), np.array([1]), bank, eta=0.9)
    assert moved == 0
    assert np.array_equal(bank.p.data, before)


def test_prototype_ema_ignores_healthy_hosts():
    bank = PrototypeBank(Tensor(np.zeros((4, 2))))
    before = bank.p.data.copy()
    prototype_fast_update(np.array([[0.9, 0.9]]), np.array([0]), bank, eta=0.9)
    assert np.array_equal(bank.p.data, before)


# --- stage switching -------------------------------------------------------------


def test_stage_stays_on_flat_history():
    assert not stage_switch_due([0.9] * 6, epochs_done=6, total_epochs=100,
                                window=5, std_threshold=0.02, switch_fraction=0.5)


def test_stage_switches_on_fluctuation():
    assert stage_switch_due([0.5, 0.9, 0.5, 0.9, 0.5], epochs_done=5,
                            total_epochs=100, window=5, std_threshold=0.02,
                            switch_fraction=0.5)


def test_stage_switches_at_half_budget():
    assert stage_switch_due([0.9] * 50, epochs_done=50, total_epochs=100,
                            window=5, std_threshold=0.02, switch_fraction=0.5)


def test_stage_short_history_does_not_switch():
    assert not stage_switch_due([0.5, 0.9], epochs_done=2, total_epochs=100,
                                window=5, std_threshold=0.02, switch_fraction=0.5)


# --- trainer -----------------------------------------------------------------------


def test_lr_follows_decade_schedule():
    model = tiny_model()
    trainer = OfflineTrainer(model, TrainConfig(epochs=1))
    assert trainer.optimizer.lr_for_epoch(0) == pytest.approx(1e-3)
    assert trainer.optimizer.lr_for_epoch(10) == pytest.approx(1e-4)
    assert trainer.optimizer.lr_for_epoch(20) == pytest.approx(1e-5)


def test_empty_shard_rejected():
    trainer = OfflineTrainer(tiny_model(), TrainConfig(epochs=1))
    with pytest.raises(ValidationError):
        trainer.train_epoch([], 0, np.random.default_rng(0))


def test_loss_decreases_on_repeated_identical_epochs():
    ds = tiny_dataset(12)
    model = tiny_model(seed=1)
    fit_scaler(model, ds.records)
    cfg = TrainConfig(epochs=1, seed=0, base_lr=1e-3)
    trainer = OfflineTrainer(model, cfg)
    shard = ds.records[:2]
    first = trainer.train_epoch(shard, 0, np.random.default_rng(0))[3]
    for _ in range(3):
        last = trainer.train_epoch(shard, 0, np.random.default_rng(0))[3]
    assert last < first


def test_training_is_deterministic():
    def run():
        ds = tiny_dataset(16)
        model = tiny_model(seed=2)
        fit_scaler(model, ds.records)
        trainer = OfflineTrainer(model, TrainConfig(epochs=2, seed=3))
        trainer.run(ds.records[:12], ds.records[12:])
        return parameter_checksum(model.named_parameters())

    assert run() == run()


def test_stage_recorded_and_one_way():
    ds = tiny_dataset(16)
    model = tiny_model(seed=4)
    fit_scaler(model, ds.records)
    trainer = OfflineTrainer(model, TrainConfig(epochs=4, seed=1))
    log = trainer.run(ds.records[:12], ds.records[12:])
    stages = [s.stage for s in log]
    # once in gradient_only it never reverts
    if STAGE_GRADIENT in stages:
        flip = stages.index(STAGE_GRADIENT)
        assert all(s == STAGE_GRADIENT for s in stages[flip:])
    assert stages[0] == STAGE_EMA


def test_prototypes_frozen_under_ema_disable():
    """After the stage switch, prototype rows move only via optimizer steps."""
    ds = tiny_dataset(16)
    model = tiny_model(seed=5)
    fit_scaler(model, ds.records)
    cfg = TrainConfig(epochs=2, seed=1, stage_switch_fraction=0.0)  # switch at once
    trainer = OfflineTrainer(model, cfg)
    trainer.stage = STAGE_GRADIENT
    # zero classification weight: no gradient path into prototypes at all
    cfg.loss.classification = 0.0
    before = model.prototypes.p.data.copy()
    trainer.train_epoch(ds.records[:8], 0, np.random.default_rng(0))
    delta = np.abs(model.prototypes.p.data - before).max()
    # weight decay still shrinks them through the optimizer; no EMA jumps
    assert delta < 1e-2


def test_evaluate_perfect_and_degenerate():
    ds = tiny_dataset(20)
    model = tiny_model(seed=6)
    fit_scaler(model, ds.records)
    report = evaluate_model(model, ds.records)
    assert 0.0 <= report.accuracy <= 1.0
    with pytest.raises(ValidationError):
        evaluate_model(model, [])


def test_quick_accuracy_consistent_with_evaluate():
    ds = tiny_dataset(20)
    model = tiny_model(seed=7)
    fit_scaler(model, ds.records)
    det_acc, _ = quick_accuracy(model, ds.records)
    report = evaluate_model(model, ds.records)
    assert det_acc == pytest.approx(report.accuracy)
