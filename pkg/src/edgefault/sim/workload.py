"""Container-task generation: arrival counts, synthetic demand traces and the
optional CSV trace-pool ingestion.

A task's demand trace is a (duration x 7) array in the feature column order
(cpu MIPS, ram MB, ram read KB/s, ram write KB/s, disk MB, disk read KB/s,
disk write KB/s). Synthetic traces are baseline + linear trend + Gaussian
noise + occasional multiplicative spikes; ingested traces come from per-VM
CSV files and reuse the pool cyclically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .config import SimConfig

N_FEATURES = 7
COL_CPU, COL_RAM, COL_RAM_RD, COL_RAM_WR, COL_DISK, COL_DISK_RD, COL_DISK_WR = range(7)


@dataclass
class ContainerTask:
    task_id: int
    arrival: int
    trace: np.ndarray          # duration x 7 demand rows
    deadline: int              # absolute interval index
    host: int | None = None    # None while queued
    age: int = 0               # trace rows already consumed
    started: int | None = None
    waited: int = 0

    @property
    def duration(self) -> int:
        return len(self.trace)

    def demand(self) -> np.ndarray:
        return self.trace[self.age]


def generate_arrivals(n_intervals: int, mean: float, std: float, rng) -> np.ndarray:
    """Arrival count per interval: round(Normal(mean, std)) clipped at 0."""
    if std == 0.0:
        return np.full(n_intervals, max(0, round(mean)), dtype=np.int64)
    raw = np.round(rng.normal(mean, std, size=n_intervals))
    return np.maximum(raw, 0).astype(np.int64)


def _series(base, duration, cfg: SimConfig, rng, spike_mask=None):
    trend = base * cfg.trend_fraction * np.linspace(0.0, rng.uniform(-1.0, 1.0), duration)
    noise = rng.normal(0.0, cfg.noise_fraction * base, size=duration)
    vals = base + trend + noise
    if spike_mask is not None:
        vals[spike_mask] *= cfg.spike_multiplier
    return np.maximum(vals, 0.0)


def synthetic_trace(duration: int, cfg: SimConfig, rng) -> np.ndarray:
    """One task's demand trace. IO bursts hit the read and write channels of
    a device together (one shared spike mask per device), the way a real IO
    burst does; allocations drift without spiking."""
    cpu_spikes = rng.random(duration) < cfg.spike_rate
    ram_spikes = rng.random(duration) < cfg.spike_rate
    disk_spikes = rng.random(duration) < cfg.spike_rate
    trace = np.empty((duration, N_FEATURES))
    trace[:, COL_CPU] = _series(rng.uniform(*cfg.cpu_base_range), duration, cfg, rng, cpu_spikes)
    trace[:, COL_RAM] = _series(rng.uniform(*cfg.ram_base_range), duration, cfg, rng)
    trace[:, COL_RAM_RD] = _series(rng.uniform(*cfg.ram_tput_base_range), duration, cfg, rng, ram_spikes)
    trace[:, COL_RAM_WR] = _series(rng.uniform(*cfg.ram_tput_base_range), duration, cfg, rng, ram_spikes)
    trace[:, COL_DISK] = _series(rng.uniform(*cfg.disk_base_range), duration, cfg, rng)
    trace[:, COL_DISK_RD] = _series(rng.uniform(*cfg.disk_tput_base_range), duration, cfg, rng, disk_spikes)
    trace[:, COL_DISK_WR] = _series(rng.uniform(*cfg.disk_tput_base_range), duration, cfg, rng, disk_spikes)
    return trace


class TaskFactory:
    """Makes tasks either from synthetic traces or from an ingested pool."""

    def __init__(self, cfg: SimConfig, pool: list[np.ndarray] | None = None):
        self.cfg = cfg
        self.pool = pool or []
        self._pool_cursor = 0

    def make_task(self, task_id: int, arrival: int, rng) -> ContainerTask:
        duration = int(rng.integers(self.cfg.duration_range[0],
                                    self.cfg.duration_range[1] + 1))
        if self.pool:
            src = self.pool[self._pool_cursor % len(self.pool)]
            self._pool_cursor += 1
            if len(src) >= duration:
                start = int(rng.integers(0, len(src) - duration + 1))
                trace = src[start : start + duration].copy()
            else:
                reps = int(np.ceil(duration / len(src)))
                trace = np.tile(src, (reps, 1))[:duration].copy()
        else:
            trace = synthetic_trace(duration, self.cfg, rng)
        deadline = arrival + duration - 1 + self.cfg.deadline_slack
        return ContainerTask(task_id, arrival, trace, deadline)


def ingest_trace_csv(paths, disk_mb_default: float = 2000.0,
                     cpu_filter: tuple | None = (500.0, 3000.0)) -> list[np.ndarray]:
    """Load per-VM CSV traces into a demand pool.

    Expected columns, in order: timestamp, cpu MIPS, ram MB, ram read KB/s,
    ram write KB/s, disk read KB/s, disk write KB/s. The delimiter (comma or
    semicolon) is auto-detected and a non-numeric header row is skipped.
    ``cpu_filter`` keeps only traces whose CPU usage at the 10th row lies in
    the given range; pass None to keep everything.
    """
    pool = []
    for path in paths:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = [ln.strip() for ln in fh if ln.strip()]
        except OSError as exc:
            raise DataError(f"cannot read trace {path}: {exc}") from exc
        if not lines:
            raise DataError(f"trace {path} is empty")
        delim = ";" if lines[0].count(";") >= lines[0].count(",") else ","
        rows = []
        for i, line in enumerate(lines):
            parts = [p.strip() for p in line.split(delim)]
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                if i == 0:
                    continue  # header
                raise DataError(f"trace {path}: non-numeric row {i + 1}")
            if len(vals) != 7:
                raise DataError(f"trace {path}: expected 7 columns, got {len(vals)}")
            rows.append(vals[1:])  # drop timestamp
        if not rows:
            raise DataError(f"trace {path}: no data rows")
        arr = np.asarray(rows)
        if cpu_filter is not None:
            probe = arr[min(9, len(arr) - 1), 0]
            if not (cpu_filter[0] <= probe <= cpu_filter[1]):
                continue
        trace = np.empty((len(arr), N_FEATURES))
        trace[:, COL_CPU] = arr[:, 0]
        trace[:, COL_RAM] = arr[:, 1]
        trace[:, COL_RAM_RD] = arr[:, 2]
        trace[:, COL_RAM_WR] = arr[:, 3]
        trace[:, COL_DISK] = disk_mb_default
        trace[:, COL_DISK_RD] = arr[:, 4]
        trace[:, COL_DISK_WR] = arr[:, 5]
        pool.append(np.maximum(trace, 0.0))
    return pool
