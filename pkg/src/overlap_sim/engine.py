"""Deterministic discrete-event simulation of an execution plan.

Each task owns the resources its kind requires for its whole lifetime:
GEMMs the GPU's compute engine, gathers/scatters the GPU's local-copy
engine, transfers one DMA channel at the source plus the link (mesh) or the
source/destination NIC pair (switch). The communication agent setting does
not change occupancy, only which contention tables apply.

DIL is applied statically to task durations; CIL dynamically: a running
GEMM progresses at rate 1/gemm_cil while any transfer touches its GPU, and
a running transfer at rate 1/comm_cil while any GEMM or local copy is
active on either endpoint. Rates are re-evaluated at every task start/end,
with ties broken by (time, task id), so repeated runs are bit-identical.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from overlap_sim.core import MachineConfig, Scenario, gemm_mt
from overlap_sim.lossmodel import LossModel, comm_cil, comm_dil, gemm_cil, lookup, shard_scaled
from overlap_sim.planner import (
    ExecutionPlan,
    GatherSpec,
    GemmSpec,
    ScatterSpec,
    ScheduleKind,
    Task,
    TransferSpec,
)
from overlap_sim.topology import Topology, TopologyKind


class DeadlockError(RuntimeError):
    """Unsatisfiable dependencies left tasks waiting forever."""


@dataclass(frozen=True)
class TaskSpan:
    task_id: int
    gpu: int
    kind: str
    start: float
    end: float
    contended_time: float

    @property
    def contended_fraction(self) -> float:
        span = self.end - self.start
        return self.contended_time / span if span > 0 else 0.0


@dataclass(frozen=True)
class SimResult:
    scenario_name: str
    schedule: ScheduleKind
    makespan: float
    timeline: tuple[TaskSpan, ...]
    busy_time: dict[str, float]
    max_work_rel_error: float
    speedup_vs_serial: float | None = None


def _kind_name(task: Task) -> str:
    kind = task.kind
    if isinstance(kind, TransferSpec):
        return f"transfer[{kind.src}->{kind.dst}]"
    if isinstance(kind, GatherSpec):
        return "gather"
    if isinstance(kind, ScatterSpec):
        return "scatter"
    return "gemm"


def base_duration(
    task: Task,
    machine: MachineConfig,
    topo: Topology,
    model: LossModel,
    scenario: Scenario,
    ideal: bool = False,
) -> float:
    """Uncontended duration of one task, with DIL applied statically."""
    kind = task.kind
    if isinstance(kind, GemmSpec):
        seconds = kind.flops / machine.effective_flops
        if not ideal:
            if kind.dil is not None:
                table_key, x = kind.dil
                seconds *= lookup(model.gemm_dil_tables[table_key], x)
            seconds += machine.launch_overhead
        return seconds
    if isinstance(kind, TransferSpec):
        if topo.kind is TopologyKind.MESH:
            seconds = kind.bytes / topo.link_bw
        else:
            seconds = kind.bytes / topo.nic_bw
        if kind.fine and not ideal:
            seconds *= comm_dil(model, kind.bytes)
        return seconds + topo.latency
    # Gather/Scatter: one read plus one write through local memory.
    return 2.0 * kind.bytes / machine.effective_copy_bw


def _resources_for(task: Task, topo: Topology) -> tuple:
    kind = task.kind
    if isinstance(kind, GemmSpec):
        return (("gemm", task.gpu),)
    if isinstance(kind, (GatherSpec, ScatterSpec)):
        return (("copy", task.gpu),)
    if topo.kind is TopologyKind.MESH:
        return (("dma", kind.src), ("link", kind.src, kind.dst))
    return (("dma", kind.src), ("nic_out", kind.src), ("nic_in", kind.dst))


def simulate(
    plan: ExecutionPlan,
    machine: MachineConfig,
    topo: Topology,
    model: LossModel,
    seed: int = 0,
) -> SimResult:
    """Run the plan to completion and return the makespan and timeline."""
    scenario = plan.scenario
    ideal = plan.schedule is ScheduleKind.IDEAL
    shard_mode = plan.schedule is ScheduleKind.SHARD_OVERLAP_P2P
    agent = machine.comm_agent
    scenario_mt = gemm_mt(scenario.gemm)

    gemm_rate_mult = gemm_cil(model, scenario_mt, agent)
    xfer_rate_mult = comm_cil(model, scenario_mt, agent)
    if shard_mode:
        gemm_rate_mult = shard_scaled(model, gemm_rate_mult, "gemm")
        xfer_rate_mult = shard_scaled(model, xfer_rate_mult, "comm")

    durations: dict[int, float] = {}
    rng = random.Random(f"{seed}:{scenario.name}:{plan.schedule.value}") if machine.noise > 0 else None
    for task in plan.tasks:
        seconds = base_duration(task, machine, topo, model, scenario, ideal=ideal)
        if rng is not None:
            seconds *= 1.0 + rng.uniform(0.0, machine.noise)
        durations[task.id] = seconds

    capacity: dict[tuple, int] = {}
    for gpu in range(scenario.n_gpus):
        capacity[("gemm", gpu)] = 1
        capacity[("copy", gpu)] = 1
        capacity[("dma", gpu)] = machine.n_dma_engines
        if topo.kind is TopologyKind.SWITCH:
            capacity[("nic_out", gpu)] = 1
            capacity[("nic_in", gpu)] = 1
    if topo.kind is TopologyKind.MESH:
        for src in range(scenario.n_gpus):
            for dst in range(scenario.n_gpus):
                if src != dst:
                    capacity[("link", src, dst)] = 1

    tasks = plan.tasks
    n_tasks = len(tasks)
    unmet_deps = [len(t.deps) for t in tasks]
    dependents: dict[int, list[int]] = {}
    for t in tasks:
        for dep in t.deps:
            dependents.setdefault(dep, []).append(t.id)
    resources_of = [_resources_for(t, topo) for t in tasks]

    ready: list[int] = sorted(t.id for t in tasks if not t.deps)
    running: dict[int, float] = {}  # id -> remaining uncontended seconds
    rates: dict[int, float] = {}
    start_time: dict[int, float] = {}
    contended: dict[int, float] = {}
    integrated: dict[int, float] = {}
    busy_time: dict[str, float] = {}
    spans: list[TaskSpan] = []
    done = 0
    now = 0.0

    def try_admit() -> bool:
        admitted = False
        still_ready = []
        for tid in ready:
            res = resources_of[tid]
            if all(capacity[r] >= 1 for r in res):
                for r in res:
                    capacity[r] -= 1
                running[tid] = durations[tid]
                start_time[tid] = now
                contended[tid] = 0.0
                integrated[tid] = 0.0
                admitted = True
            else:
                still_ready.append(tid)
        ready[:] = still_ready
        return admitted

    def compute_rates() -> None:
        if ideal:
            for tid in running:
                rates[tid] = 1.0
            return
        gemm_gpus = set()
        copy_gpus = set()
        xfer_endpoints = set()
        for tid in running:
            kind = tasks[tid].kind
            if isinstance(kind, GemmSpec):
                gemm_gpus.add(tasks[tid].gpu)
            elif isinstance(kind, (GatherSpec, ScatterSpec)):
                copy_gpus.add(tasks[tid].gpu)
            else:
                xfer_endpoints.add(kind.src)
                xfer_endpoints.add(kind.dst)
        rates.clear()
        for tid in running:
            kind = tasks[tid].kind
            if isinstance(kind, GemmSpec):
                gated = tasks[tid].gpu in xfer_endpoints
                rates[tid] = 1.0 / gemm_rate_mult if gated else 1.0
            elif isinstance(kind, TransferSpec):
                gated = (
                    kind.src in gemm_gpus or kind.dst in gemm_gpus
                    or kind.src in copy_gpus or kind.dst in copy_gpus
                )
                rates[tid] = 1.0 / xfer_rate_mult if gated else 1.0
            else:
                rates[tid] = 1.0

    while done < n_tasks:
        try_admit()
        if not running:
            stuck = [t.id for t in tasks if unmet_deps[t.id] > 0][:5]
            raise DeadlockError(
                f"{n_tasks - done} task(s) can never start; "
                f"blocked ids {ready[:5]}, unmet-dependency ids {stuck}"
            )
        compute_rates()
        ordered = sorted(running)
        finish_dt = None
        dts = {}
        for tid in ordered:
            dt = running[tid] / rates[tid] if running[tid] > 0 else 0.0
            dts[tid] = dt
            if finish_dt is None or dt < finish_dt:
                finish_dt = dt
        now += finish_dt
        # Complete every task sharing the exact finish instant in one batch
        # (id order) so simultaneously freed resources are re-granted fairly;
        # near-ties separated by rounding drain in zero-length follow-ups.
        batch = [tid for tid in ordered if dts[tid] == finish_dt]
        for tid in ordered:
            worked = finish_dt * rates[tid]
            integrated[tid] += worked
            if finish_dt > 0 and rates[tid] < 1.0:
                contended[tid] += finish_dt
            if dts[tid] == finish_dt:
                running[tid] = 0.0
            else:
                running[tid] = max(0.0, running[tid] - worked)
        for tid in batch:
            del running[tid]
            for r in resources_of[tid]:
                capacity[r] += 1
                key = ":".join(map(str, r))
                busy_time[key] = busy_time.get(key, 0.0) + (now - start_time[tid])
            spans.append(
                TaskSpan(
                    task_id=tid,
                    gpu=tasks[tid].gpu,
                    kind=_kind_name(tasks[tid]),
                    start=start_time[tid],
                    end=now,
                    contended_time=contended[tid],
                )
            )
            done += 1
            for child in dependents.get(tid, ()):
                unmet_deps[child] -= 1
                if unmet_deps[child] == 0:
                    ready.append(child)
        ready.sort()

    max_rel_err = 0.0
    for task in plan.tasks:
        base = durations[task.id]
        if base > 0:
            max_rel_err = max(max_rel_err, abs(integrated[task.id] - base) / base)

    spans.sort(key=lambda s: s.task_id)
    return SimResult(
        scenario_name=scenario.name,
        schedule=plan.schedule,
        makespan=now,
        timeline=tuple(spans),
        busy_time=busy_time,
        max_work_rel_error=max_rel_err,
    )


def speedup(result: SimResult, serial_result: SimResult) -> float:
    """Serial makespan divided by this schedule's makespan."""
    if result.scenario_name != serial_result.scenario_name:
        raise ValueError(
            f"speedup compares results for different scenarios: "
            f"{result.scenario_name!r} vs {serial_result.scenario_name!r}"
        )
    return serial_result.makespan / result.makespan


def export_trace_csv(result: SimResult) -> str:
    """Timeline trace: task_id,gpu,kind,start_s,end_s,contended_fraction."""
    lines = ["task_id,gpu,kind,start_s,end_s,contended_fraction"]
    for span in result.timeline:
        lines.append(
            f"{span.task_id},{span.gpu},{span.kind},{span.start:.9e},{span.end:.9e},"
            f"{span.contended_fraction:.6f}"
        )
    return "\n".join(lines) + "\n"
