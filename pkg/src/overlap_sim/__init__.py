"""Simulator and design-space explorer for multi-GPU compute/communication overlap.

The package models data-dependent GEMM + collective scenarios on an 8-GPU
style machine: it expands each scenario into step-level execution plans
(serial baseline, shard-granularity overlap, and four fine-grain overlap
schedules), prices every task with calibratable decomposition (DIL) and
contention (CIL) loss multipliers, simulates makespans with a deterministic
discrete-event engine, and implements a static schedule-selection heuristic
with exhaustive-simulation validation.
"""

from overlap_sim.core import (
    Axis,
    Collective,
    CommAgent,
    GemmShape,
    MachineConfig,
    Parallelism,
    Scenario,
    ShardedGemm,
    gemm_flops,
    gemm_mt,
    gemm_otb,
    parse_scenarios,
    shard_gemm,
)
from overlap_sim.topology import Topology, TopologyKind
from overlap_sim.lossmodel import LossModel, default_calibration, load_calibration
from overlap_sim.planner import ExecutionPlan, ScheduleKind, build_plan, validate_plan
from overlap_sim.engine import SimResult, simulate, speedup
from overlap_sim.heuristic import select_schedule, validate_heuristic

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "Collective",
    "CommAgent",
    "GemmShape",
    "MachineConfig",
    "Parallelism",
    "Scenario",
    "ShardedGemm",
    "gemm_flops",
    "gemm_mt",
    "gemm_otb",
    "parse_scenarios",
    "shard_gemm",
    "Topology",
    "TopologyKind",
    "LossModel",
    "default_calibration",
    "load_calibration",
    "ExecutionPlan",
    "ScheduleKind",
    "build_plan",
    "validate_plan",
    "SimResult",
    "simulate",
    "speedup",
    "select_schedule",
    "validate_heuristic",
    "__version__",
]
