"""The interval-driven cluster simulation.

Each interval: active stress surges are added to host load, queued and newly
arrived tasks are placed, overloaded hosts shed tasks (that is where
migration edges come from), per-host features are summed and capped, QoS
counters advance, and finished tasks leave. The placement policy is a plain
least-loaded heuristic standing in for a real scheduler: new tasks go to the
least-loaded feasible host, and hosts whose projected CPU or RAM utilization
exceeds the migration threshold shed their heaviest tasks first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import STRESS_KINDS, SimConfig, StressEvent
from .workload import (
    COL_CPU,
    COL_DISK,
    COL_DISK_RD,
    COL_DISK_WR,
    COL_RAM,
    COL_RAM_RD,
    COL_RAM_WR,
    N_FEATURES,
    ContainerTask,
    TaskFactory,
    generate_arrivals,
)


@dataclass
class QosTotals:
    cpu_util_sum: float = 0.0
    ram_util_sum: float = 0.0
    host_intervals: int = 0
    energy_wh: float = 0.0
    sla_violations: int = 0
    wait_intervals: int = 0
    completed: int = 0
    response_sum: int = 0
    migrations: int = 0

    def summary(self) -> dict:
        n = max(self.host_intervals, 1)
        return {
            "cpu_utilization_mean": self.cpu_util_sum / n,
            "ram_utilization_mean": self.ram_util_sum / n,
            "energy_wh": self.energy_wh,
            "sla_violations": self.sla_violations,
            "wait_intervals": self.wait_intervals,
            "tasks_completed": self.completed,
            "response_intervals_mean":
                self.response_sum / self.completed if self.completed else None,
            "migrations": self.migrations,
        }


@dataclass
class SimResult:
    features: np.ndarray                  # T x M x 7
    decisions: list[list[tuple[int, int]]]
    qos: QosTotals
    stress_events: list[StressEvent] = field(default_factory=list)


def generate_stress_schedule(cfg: SimConfig, n_intervals: int, rng) -> list[StressEvent]:
    """Renewal process per (host, kind): exponential gaps sized so the
    long-run fraction of stressed intervals matches the configured duty."""
    events = []
    dur_lo, dur_hi = cfg.stress_duration_range
    mean_duration = (dur_lo + dur_hi) / 2.0
    for host in range(len(cfg.hosts)):
        for kind in STRESS_KINDS:
            duty = cfg.stress_duty.get(kind, 0.0)
            if duty <= 0.0:
                continue
            mean_gap = mean_duration * (1.0 - duty) / duty
            t = rng.exponential(mean_gap)
            while t < n_intervals:
                duration = int(rng.integers(dur_lo, dur_hi + 1))
                magnitude = _stress_magnitude(kind, cfg, rng)
                events.append(StressEvent(host, kind, int(t), duration, magnitude))
                t += duration + rng.exponential(mean_gap)
    return events


def _stress_magnitude(kind: str, cfg: SimConfig, rng) -> float:
    if kind in ("cpu", "ram_alloc", "disk_alloc"):
        return float(rng.uniform(*cfg.stress_util_range))
    if kind == "ram_tput":
        return float(rng.uniform(*cfg.stress_ram_tput_range))
    return float(rng.uniform(*cfg.stress_disk_tput_range))


def stress_demand(event: StressEvent, cfg: SimConfig) -> np.ndarray:
    """The 7-column demand a stress event adds to its host."""
    spec = cfg.hosts[event.host]
    d = np.zeros(N_FEATURES)
    if event.kind == "cpu":
        d[COL_CPU] = event.magnitude * spec.cpu_mips
    elif event.kind == "ram_alloc":
        d[COL_RAM] = event.magnitude * spec.ram_mb
    elif event.kind == "ram_tput":
        d[COL_RAM_RD] = event.magnitude
        d[COL_RAM_WR] = event.magnitude
    elif event.kind == "disk_alloc":
        d[COL_DISK] = event.magnitude * spec.disk_mb
    else:  # disk_tput
        d[COL_DISK_RD] = event.magnitude
        d[COL_DISK_WR] = event.magnitude
    return d


class ClusterSimulation:
    def __init__(self, cfg: SimConfig, factory: TaskFactory | None = None):
        self.cfg = cfg
        self.factory = factory or TaskFactory(cfg)
        self.capacity = np.array([[h.cpu_mips, h.ram_mb, h.disk_mb] for h in cfg.hosts])
        self.resident: list[list[ContainerTask]] = [[] for _ in cfg.hosts]
        self.queue: list[ContainerTask] = []
        self.qos = QosTotals()
        self._next_task_id = 0

    # --- per-host load bookkeeping (cpu, ram) used by the scheduler ---------

    def _host_load(self, stress: np.ndarray) -> np.ndarray:
        load = stress[:, [COL_CPU, COL_RAM]].copy()
        for host, tasks in enumerate(self.resident):
            for task in tasks:
                d = task.demand()
                load[host, 0] += d[COL_CPU]
                load[host, 1] += d[COL_RAM]
        return load

    def _feasible_host(self, load: np.ndarray, demand: np.ndarray,
                       exclude: int | None = None) -> int | None:
        """Least-loaded host (by projected CPU util, then RAM util, then
        index) that stays within capacity after taking the demand."""
        best = None
        best_key = None
        for host in range(len(self.cfg.hosts)):
            if host == exclude:
                continue
            cpu_u = (load[host, 0] + demand[COL_CPU]) / self.capacity[host, 0]
            ram_u = (load[host, 1] + demand[COL_RAM]) / self.capacity[host, 1]
            if cpu_u > 1.0 or ram_u > 1.0:
                continue
            key = (cpu_u, ram_u, host)
            if best_key is None or key < best_key:
                best, best_key = host, key
        return best

    def _place_pending(self, t: int, arrivals: int, load: np.ndarray, rng):
        for _ in range(arrivals):
            task = self.factory.make_task(self._next_task_id, t, rng)
            self._next_task_id += 1
            self.queue.append(task)
        still_waiting = []
        for task in self.queue:
            host = self._feasible_host(load, task.demand())
            if host is None:
                task.waited += 1
                self.qos.wait_intervals += 1
                still_waiting.append(task)
                continue
            task.host = host
            task.started = t
            self.resident[host].append(task)
            d = task.demand()
            load[host, 0] += d[COL_CPU]
            load[host, 1] += d[COL_RAM]
        self.queue = still_waiting

    def _shed_overload(self, load: np.ndarray) -> list[tuple[int, int]]:
        migrations = []
        thr = self.cfg.migration_threshold
        for host in range(len(self.cfg.hosts)):
            def overloaded():
                return (load[host, 0] / self.capacity[host, 0] > thr
                        or load[host, 1] / self.capacity[host, 1] > thr)

            if not overloaded():
                continue
            # heaviest CPU consumers first; stable tie-break on task id
            movable = sorted(self.resident[host],
                             key=lambda task: (-task.demand()[COL_CPU], task.task_id))
            for task in movable:
                if not overloaded():
                    break
                d = task.demand()
                target = self._feasible_host(load, d, exclude=host)
                if target is None:
                    continue
                self.resident[host].remove(task)
                self.resident[target].append(task)
                task.host = target
                load[host, 0] -= d[COL_CPU]
                load[host, 1] -= d[COL_RAM]
                load[target, 0] += d[COL_CPU]
                load[target, 1] += d[COL_RAM]
                migrations.append((host, target))
        return migrations

    def _interval_features(self, stress: np.ndarray) -> np.ndarray:
        feats = stress.copy()
        for host, tasks in enumerate(self.resident):
            for task in tasks:
                feats[host] += task.demand()
        # utilization columns become fractions of capacity, capped at 1
        feats[:, COL_CPU] = np.minimum(feats[:, COL_CPU] / self.capacity[:, 0], 1.0)
        feats[:, COL_RAM] = np.minimum(feats[:, COL_RAM] / self.capacity[:, 1], 1.0)
        feats[:, COL_DISK] = np.minimum(feats[:, COL_DISK] / self.capacity[:, 2], 1.0)
        return feats

    def _advance_tasks(self, t: int):
        for host, tasks in enumerate(self.resident):
            remaining = []
            for task in tasks:
                task.age += 1
                if task.age >= task.duration:
                    self.qos.completed += 1
                    self.qos.response_sum += t - task.arrival + 1
                    if t > task.deadline:
                        self.qos.sla_violations += 1
                else:
                    remaining.append(task)
            self.resident[host] = remaining

    def _check_conservation(self):
        placed = sum(len(tasks) for tasks in self.resident)
        hosts_seen = {task.task_id for tasks in self.resident for task in tasks}
        queued = {task.task_id for task in self.queue}
        assert len(hosts_seen) == placed, "task resident on two hosts"
        assert not (hosts_seen & queued), "task both resident and queued"

    def run(self, n_intervals: int, rng) -> SimResult:
        cfg = self.cfg
        m = len(cfg.hosts)
        arrivals = generate_arrivals(n_intervals, cfg.arrival_mean, cfg.arrival_std, rng)
        events = list(cfg.stress_events) or generate_stress_schedule(cfg, n_intervals, rng)
        by_start = sorted(events, key=lambda e: (e.start, e.host, e.kind))

        features = np.zeros((n_intervals, m, N_FEATURES))
        decisions: list[list[tuple[int, int]]] = []
        active: list[StressEvent] = []
        cursor = 0
        seconds = cfg.interval_seconds

        for t in range(n_intervals):
            while cursor < len(by_start) and by_start[cursor].start <= t:
                active.append(by_start[cursor])
                cursor += 1
            active = [e for e in active if e.active_at(t)]
            stress = np.zeros((m, N_FEATURES))
            for e in active:
                stress[e.host] += stress_demand(e, cfg)

            load = self._host_load(stress)
            self._place_pending(t, int(arrivals[t]), load, rng)
            migrations = self._shed_overload(load)
            self.qos.migrations += len(migrations)

            feats = self._interval_features(stress)
            features[t] = feats
            decisions.append(migrations)

            util = feats[:, COL_CPU]
            self.qos.cpu_util_sum += float(feats[:, COL_CPU].sum())
            self.qos.ram_util_sum += float(feats[:, COL_RAM].sum())
            self.qos.host_intervals += m
            idle = np.array([h.idle_watts for h in cfg.hosts])
            peak = np.array([h.max_watts for h in cfg.hosts])
            self.qos.energy_wh += float(((idle + (peak - idle) * util) * seconds / 3600.0).sum())

            self._advance_tasks(t)
            self._check_conservation()

        return SimResult(features, decisions, self.qos, events)


def run_simulation(cfg: SimConfig, n_intervals: int,
                   factory: TaskFactory | None = None) -> SimResult:
    rng = np.random.default_rng(cfg.seed)
    return ClusterSimulation(cfg, factory).run(n_intervals, rng)
