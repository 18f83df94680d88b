"""Threshold/percentile fault labeling over host feature histories.

Per host and interval, in precedence order (first match wins):

1. CPU fault:  CPU utilization stayed above the threshold for the whole
   persistence window.
2. RAM fault:  RAM utilization stayed above the threshold (abnormal
   allocation), or RAM read/write throughput exceeds the historical
   percentile (leak-style churn).
3. Disk fault: same pair of rules on the disk columns.

Percentile baselines are causal: only intervals strictly before the current
one count, per host and per channel, so labels are a pure function of the
feature history and relabeling a stored run reproduces them exactly. The
first ``warmup`` intervals are labeled no-fault while baselines accumulate.
"""

from __future__ import annotations

import math
from bisect import insort

import numpy as np

from .workload import COL_CPU, COL_DISK, COL_DISK_RD, COL_DISK_WR, COL_RAM, COL_RAM_RD, COL_RAM_WR

NO_FAULT, CPU_FAULT, RAM_FAULT, DISK_FAULT = 0, 1, 2, 3

_TPUT_COLS = (COL_RAM_RD, COL_RAM_WR, COL_DISK_RD, COL_DISK_WR)


def percentile_sorted(sorted_vals, pct: float) -> float:
    """Linear-interpolated percentile of an ascending sequence (numpy's
    default definition). Empty history -> +inf so the rule cannot fire."""
    n = len(sorted_vals)
    if n == 0:
        return math.inf
    if n == 1:
        return float(sorted_vals[0])
    q = (n - 1) * pct / 100.0
    lo = int(math.floor(q))
    if lo + 1 >= n:
        return float(sorted_vals[-1])
    frac = q - lo
    return float(sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo]))


def label_features(features: np.ndarray, util_threshold: float = 0.95,
                   percentile: float = 90.0, warmup: int = 100,
                   persistence: int = 1) -> np.ndarray:
    """Label a T x M x 7 feature history; returns T x M class ids."""
    n_intervals, n_hosts, _ = features.shape
    labels = np.zeros((n_intervals, n_hosts), dtype=np.int64)

    history = [[[] for _ in _TPUT_COLS] for _ in range(n_hosts)]
    # consecutive intervals (including current) each utilization column has
    # spent above the threshold
    above = np.zeros((n_hosts, 3), dtype=np.int64)
    util_cols = (COL_CPU, COL_RAM, COL_DISK)

    for t in range(n_intervals):
        frame = features[t]
        for host in range(n_hosts):
            for k, col in enumerate(util_cols):
                above[host, k] = above[host, k] + 1 if frame[host, col] > util_threshold else 0

            if t >= warmup:
                cpu_hit = above[host, 0] >= persistence
                ram_hit = above[host, 1] >= persistence
                disk_hit = above[host, 2] >= persistence
                hist = history[host]
                ram_rd_hit = frame[host, COL_RAM_RD] > percentile_sorted(hist[0], percentile)
                ram_wr_hit = frame[host, COL_RAM_WR] > percentile_sorted(hist[1], percentile)
                disk_rd_hit = frame[host, COL_DISK_RD] > percentile_sorted(hist[2], percentile)
                disk_wr_hit = frame[host, COL_DISK_WR] > percentile_sorted(hist[3], percentile)

                if cpu_hit:
                    labels[t, host] = CPU_FAULT
                elif ram_hit or ram_rd_hit or ram_wr_hit:
                    labels[t, host] = RAM_FAULT
                elif disk_hit or disk_rd_hit or disk_wr_hit:
                    labels[t, host] = DISK_FAULT

            for k, col in enumerate(_TPUT_COLS):
                insort(history[host][k], float(frame[host, col]))

    return labels
