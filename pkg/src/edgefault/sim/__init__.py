"""Deterministic edge-cluster simulator: workload, scheduling, stress
injection, labeling and dataset export."""

from .cluster import ClusterSimulation, SimResult, run_simulation
from .config import HostSpec, SimConfig, StressEvent, default_cluster, sim_config
from .dataset import Dataset, IntervalRecord, build_dataset, distribution_report
from .labeling import CPU_FAULT, DISK_FAULT, NO_FAULT, RAM_FAULT, label_features
from .workload import ContainerTask, TaskFactory, generate_arrivals, ingest_trace_csv

__all__ = [
    "ClusterSimulation", "SimResult", "run_simulation",
    "HostSpec", "SimConfig", "StressEvent", "default_cluster", "sim_config",
    "Dataset", "IntervalRecord", "build_dataset", "distribution_report",
    "CPU_FAULT", "DISK_FAULT", "NO_FAULT", "RAM_FAULT", "label_features",
    "ContainerTask", "TaskFactory", "generate_arrivals", "ingest_trace_csv",
]
