"""Simulator configuration: cluster hardware, workload shape, stress
injection and labeling thresholds. Everything here is overridable from the
``sim`` section of a JSON config file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from ..errors import ConfigError

STRESS_KINDS = ("cpu", "ram_alloc", "ram_tput", "disk_alloc", "disk_tput")


@dataclass
class HostSpec:
    cpu_mips: float = 8000.0
    ram_mb: float = 4096.0
    disk_mb: float = 102400.0
    idle_watts: float = 100.0
    max_watts: float = 200.0

    def __post_init__(self):
        if min(self.cpu_mips, self.ram_mb, self.disk_mb) <= 0:
            raise ConfigError("host capacities must be positive")
        if self.max_watts < self.idle_watts:
            raise ConfigError("max power below idle power")


def default_cluster() -> list[HostSpec]:
    """16 heterogeneous hosts: half with 4 GB of RAM, half with 8 GB."""
    small = [HostSpec(ram_mb=4096.0) for _ in range(8)]
    large = [HostSpec(ram_mb=8192.0) for _ in range(8)]
    return small + large


@dataclass
class StressEvent:
    """One injected load surge: extra synthetic demand of one kind on one
    host for a window of intervals. Labels stay honest because the surge
    flows through the normal feature accounting."""

    host: int
    kind: str
    start: int
    duration: int
    magnitude: float

    def __post_init__(self):
        if self.kind not in STRESS_KINDS:
            raise ConfigError(f"unknown stress kind {self.kind!r}")

    def active_at(self, t: int) -> bool:
        return self.start <= t < self.start + self.duration


@dataclass
class SimConfig:
    hosts: list[HostSpec] = field(default_factory=default_cluster)
    interval_seconds: float = 300.0
    seed: int = 42

    # workload: per-interval arrivals ~ round(Normal(mean, std)), clipped at 0
    arrival_mean: float = 5.0
    arrival_std: float = 1.5
    duration_range: tuple = (5, 30)     # task lifetime in intervals
    deadline_slack: int = 5             # extra intervals before an SLA breach

    # synthetic per-task demand traces (base + trend + noise + spikes)
    cpu_base_range: tuple = (200.0, 1200.0)      # MIPS
    ram_base_range: tuple = (100.0, 800.0)       # MB
    ram_tput_base_range: tuple = (50.0, 400.0)   # KB/s per channel
    disk_base_range: tuple = (500.0, 4000.0)     # MB
    disk_tput_base_range: tuple = (20.0, 200.0)  # KB/s per channel
    trend_fraction: float = 0.2
    noise_fraction: float = 0.1
    spike_rate: float = 0.05
    spike_multiplier: float = 3.0

    # scheduler
    migration_threshold: float = 0.9

    # stress injection; duty = long-run fraction of host-intervals under that
    # stress kind. An explicit stress_events list overrides the generator.
    stress_duty: dict = field(default_factory=lambda: {
        "cpu": 0.050,
        "ram_alloc": 0.040,
        "ram_tput": 0.085,
        "disk_alloc": 0.015,
        "disk_tput": 0.075,
    })
    stress_duration_range: tuple = (3, 8)
    stress_util_range: tuple = (0.97, 1.25)        # fraction of capacity
    stress_ram_tput_range: tuple = (6000.0, 12000.0)   # KB/s added
    stress_disk_tput_range: tuple = (3000.0, 8000.0)   # KB/s added
    stress_events: list = field(default_factory=list)

    # labeling
    util_threshold: float = 0.95
    throughput_percentile: float = 90.0
    warmup_intervals: int = 100
    persistence: int = 1

    def __post_init__(self):
        if not self.hosts:
            raise ConfigError("at least one host required")
        unknown = set(self.stress_duty) - set(STRESS_KINDS)
        if unknown:
            raise ConfigError(f"unknown stress kinds in duty map: {sorted(unknown)}")
        if not (0.0 < self.util_threshold <= 1.0):
            raise ConfigError("util_threshold must be in (0, 1]")
        if self.persistence < 1:
            raise ConfigError("persistence window must be >= 1")


def sim_config(data: dict | None = None, n_hosts: int | None = None,
               seed: int | None = None) -> SimConfig:
    """Build a SimConfig from the ``sim`` section of a parsed config file,
    with optional host-count/seed overrides from the command line."""
    section = dict((data or {}).get("sim", {}))
    if "hosts" in section:
        section["hosts"] = [_host_from_dict(h) for h in section["hosts"]]
    if "stress_events" in section:
        section["stress_events"] = [_event_from_dict(e) for e in section["stress_events"]]
    for key in ("duration_range", "cpu_base_range", "ram_base_range",
                "ram_tput_base_range", "disk_base_range", "disk_tput_base_range",
                "stress_duration_range", "stress_util_range",
                "stress_ram_tput_range", "stress_disk_tput_range"):
        if key in section:
            section[key] = tuple(section[key])
    names = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"unknown sim keys: {sorted(unknown)}")
    cfg = SimConfig(**section)
    if n_hosts is not None and n_hosts != len(cfg.hosts):
        if "hosts" in section:
            raise ConfigError("--hosts conflicts with an explicit host list")
        # extend the default pattern: alternate halves of 4 GB / 8 GB hosts
        half = (n_hosts + 1) // 2
        cfg.hosts = [HostSpec(ram_mb=4096.0) for _ in range(half)] + \
                    [HostSpec(ram_mb=8192.0) for _ in range(n_hosts - half)]
    if seed is not None:
        cfg.seed = seed
    return cfg


def _host_from_dict(d: dict) -> HostSpec:
    names = {f.name for f in dataclasses.fields(HostSpec)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown host keys: {sorted(unknown)}")
    return HostSpec(**d)


def _event_from_dict(d: dict) -> StressEvent:
    names = {f.name for f in dataclasses.fields(StressEvent)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown stress event keys: {sorted(unknown)}")
    return StressEvent(**d)
