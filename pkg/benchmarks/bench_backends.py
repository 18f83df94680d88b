#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times each kernel on model-realistic shapes, then an end-to-end training
step with each backend forced via EDGEFAULT_BACKEND (run in subprocesses so
the import-time backend selection is honest).

Usage: python benchmarks/bench_backends.py [--repeat 2000]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def time_fn(fn, *args, repeat):
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def bench_kernels(repeat):
    from edgefault.backend import numpy_ops

    try:
        from edgefault.backend import _fastops
    except ImportError:
        print("compiled backend not built; run: python setup.py build_ext --inplace")
        return

    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(16, 64)))
    g = np.ascontiguousarray(rng.normal(size=(16, 64)))
    col = np.ascontiguousarray(rng.normal(size=(40, 1)))
    seg = rng.integers(0, 16, size=40).astype(np.int64)
    vals = np.ascontiguousarray(rng.normal(size=(40, 64)))
    p = np.ascontiguousarray(rng.normal(size=(64, 64)))
    pg = np.ascontiguousarray(rng.normal(size=(64, 64)))
    m = np.zeros((64, 64))
    v = np.zeros((64, 64))

    cases = [
        ("sigmoid_fwd 16x64", lambda impl: impl.sigmoid_fwd(x)),
        ("leaky_relu_fwd 16x64", lambda impl: impl.leaky_relu_fwd(x, 0.01)),
        ("row_softmax_fwd 16x64", lambda impl: impl.row_softmax_fwd(x)),
        ("row_softmax_bwd 16x64", lambda impl: impl.row_softmax_bwd(g, numpy_ops.row_softmax_fwd(x))),
        ("segment_softmax_fwd 40", lambda impl: impl.segment_softmax_fwd(col, seg, 16)),
        ("segment_sum_fwd 40x64", lambda impl: impl.segment_sum_fwd(vals, seg, 16)),
        ("adamw_update 64x64", lambda impl: impl.adamw_update(p, pg, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.01, 3)),
    ]
    print(f"{'kernel':28s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in cases:
        t_np = time_fn(lambda: fn(numpy_ops), repeat=repeat)
        t_cy = time_fn(lambda: fn(_fastops), repeat=repeat)
        print(f"{name:28s} {t_np * 1e6:9.2f}u {t_cy * 1e6:9.2f}u {t_np / t_cy:7.2f}x")


TRAIN_SNIPPET = r"""
import time
import numpy as np
from edgefault.backend import ACTIVE_BACKEND
from edgefault.sim import SimConfig, HostSpec, run_simulation, label_features, build_dataset
from edgefault.config import ModelConfig, TrainConfig
from edgefault.model import FaultModel
from edgefault.training import OfflineTrainer, fit_scaler

cfg = SimConfig(seed=3)
res = run_simulation(cfg, 120)
labels = label_features(res.features, cfg.util_threshold, cfg.throughput_percentile, 20, 1)
ds = build_dataset(res.features, res.decisions, labels, 3, 300.0)
model = FaultModel.init(ModelConfig(), seed=0)
fit_scaler(model, ds.records)
trainer = OfflineTrainer(model, TrainConfig(epochs=1, seed=0))
trainer._step(ds.records[0])  # warm up
start = time.perf_counter()
for rec in ds.records[1:]:
    trainer._step(rec)
per = (time.perf_counter() - start) / (len(ds.records) - 1)
print(f"backend={ACTIVE_BACKEND}: {per * 1000:.2f} ms/training step")
"""


def bench_training_step():
    for backend in ("numpy", "compiled"):
        env = dict(os.environ, EDGEFAULT_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env,
                              capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"backend={backend}: failed\n{proc.stderr.strip()}")
        else:
            print(proc.stdout.strip())


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()
    print("== kernel microbenchmarks ==")
    bench_kernels(args.repeat)
    print("\n== end-to-end training step ==")
    bench_training_step()
