"""Static schedule selection and its validation against exhaustive simulation.

The selector needs only shape metrics and one machine constant. Column
sharding wins whenever M <= K; otherwise the OTB x MT product (which equals
the flop count exactly) is compared against the machine's flop budget over
a reference time to pick among the three row-sharded schedules.
"""

from __future__ import annotations

from dataclasses import dataclass

from overlap_sim.core import MachineConfig, Scenario, gemm_flops
from overlap_sim.engine import simulate, speedup
from overlap_sim.lossmodel import LossModel
from overlap_sim.planner import (
    FINE_GRAIN_KINDS,
    ScheduleKind,
    build_plan,
    supported_kinds,
)
from overlap_sim.topology import Topology


def select_schedule(scenario: Scenario, machine: MachineConfig, t_ref: float = 1.0) -> ScheduleKind:
    """Pick a fine-grain schedule from static shape and machine parameters.

    M <= K selects the column-sharded schedule. Otherwise the combined
    OTB x MT metric (numerically equal to 2*M*N*K) is bucketed against the
    machine's flop budget over t_ref seconds: below one budget the uniform
    schedule, above five budgets the unfused one, the fused hetero schedule
    in between.
    """
    g = scenario.gemm
    if g.m <= g.k:
        return ScheduleKind.UNIFORM_FUSED_2D
    combined = float(gemm_flops(g))  # == gemm_otb * gemm_mt, exactly
    budget = machine.peak_flops * t_ref
    if combined < budget:
        return ScheduleKind.UNIFORM_FUSED_1D
    if combined > 5.0 * budget:
        return ScheduleKind.HETERO_UNFUSED_1D
    return ScheduleKind.HETERO_FUSED_1D


@dataclass(frozen=True)
class ScenarioVerdict:
    scenario: str
    chosen: ScheduleKind
    best: ScheduleKind
    agree: bool
    regret: float | None
    speedup_chosen: float | None
    speedup_best: float
    speedups: dict[ScheduleKind, float]


@dataclass(frozen=True)
class HeuristicReport:
    verdicts: tuple[ScenarioVerdict, ...]

    @property
    def accuracy(self) -> float:
        if not self.verdicts:
            return 0.0
        return sum(1 for v in self.verdicts if v.agree) / len(self.verdicts)

    @property
    def mean_regret_on_mismatches(self) -> float:
        regrets = [v.regret for v in self.verdicts if not v.agree and v.regret is not None]
        return sum(regrets) / len(regrets) if regrets else 0.0


def validate_heuristic(
    scenarios: list[Scenario],
    machine: MachineConfig,
    topo: Topology,
    model: LossModel,
    t_ref: float = 1.0,
    seed: int = 0,
) -> HeuristicReport:
    """Simulate every supported fine-grain schedule per scenario and compare
    the argmax (ties to the earlier enum member) with the static choice."""
    if not scenarios:
        raise ValueError("validate_heuristic needs at least one scenario")
    verdicts = []
    for scenario in scenarios:
        serial_result = simulate(build_plan(scenario, ScheduleKind.SERIAL, topo), machine, topo, model, seed)
        speedups: dict[ScheduleKind, float] = {}
        for kind in supported_kinds(scenario):
            result = simulate(build_plan(scenario, kind, topo), machine, topo, model, seed)
            speedups[kind] = speedup(result, serial_result)
        # max() keeps the first of equals; FINE_GRAIN_KINDS is in enum order.
        best = max(FINE_GRAIN_KINDS, key=lambda k: speedups.get(k, float("-inf")))
        chosen = select_schedule(scenario, machine, t_ref)
        agree = chosen == best
        s_chosen = speedups.get(chosen)
        regret = None
        if not agree and s_chosen is not None:
            regret = 1.0 - s_chosen / speedups[best]
        elif agree:
            regret = 0.0
        verdicts.append(
            ScenarioVerdict(
                scenario=scenario.name,
                chosen=chosen,
                best=best,
                agree=agree,
                regret=regret,
                speedup_chosen=s_chosen,
                speedup_best=speedups[best],
                speedups=speedups,
            )
        )
    return HeuristicReport(verdicts=tuple(verdicts))


def export_report_csv(report: HeuristicReport) -> str:
    lines = ["scenario,chosen,best,agree,regret,speedup_chosen,speedup_best"]
    for v in report.verdicts:
        regret = f"{v.regret:.6f}" if v.regret is not None else ""
        s_chosen = f"{v.speedup_chosen:.6f}" if v.speedup_chosen is not None else ""
        lines.append(
            f"{v.scenario},{v.chosen.value},{v.best.value},{int(v.agree)},{regret},"
            f"{s_chosen},{v.speedup_best:.6f}"
        )
    return "\n".join(lines) + "\n"
