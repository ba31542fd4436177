import pytest

from overlap_sim.core import (
    Collective,
    GemmShape,
    MachineConfig,
    Parallelism,
    Scenario,
    gemm_flops,
    gemm_mt,
    gemm_otb,
)
from overlap_sim.heuristic import export_report_csv, select_schedule, validate_heuristic
from overlap_sim.lossmodel import default_calibration
from overlap_sim.planner import ScheduleKind
from overlap_sim.topology import Topology, TopologyKind

MACHINE = MachineConfig(peak_flops=1.3e15)


def scen(name, m, n, k, gpus=8):
    return Scenario(
        name=name,
        parallelism=Parallelism.SP_TP,
        model="t",
        gemm=GemmShape(m, n, k, 2),
        collective=Collective.ALL_GATHER,
        n_gpus=gpus,
    )


def test_m_le_k_selects_2d():
    assert select_schedule(scen("g1", 16384, 16384, 131072), MACHINE) is ScheduleKind.UNIFORM_FUSED_2D
    # Tie M == K resolves to the column-sharded schedule.
    assert select_schedule(scen("sq", 8192, 64, 8192), MACHINE) is ScheduleKind.UNIFORM_FUSED_2D


def test_low_combined_selects_uniform():
    s = scen("g2", 131072, 16384, 16384)
    assert float(gemm_flops(s.gemm)) < 1.3e15
    assert select_schedule(s, MACHINE) is ScheduleKind.UNIFORM_FUSED_1D


def test_mid_combined_selects_hetero_fused():
    s = scen("g13", 1607680, 57344, 8192)
    combined = float(gemm_flops(s.gemm))
    assert 1.3e15 < combined < 5 * 1.3e15
    assert select_schedule(s, MACHINE) is ScheduleKind.HETERO_FUSED_1D


def test_high_combined_selects_hetero_unfused():
    s = scen("big", 2097152, 131072, 16384)
    assert float(gemm_flops(s.gemm)) > 5 * 1.3e15
    assert select_schedule(s, MACHINE) is ScheduleKind.HETERO_UNFUSED_1D


def test_combined_metric_is_flop_count():
    for s in (scen("a", 128, 64, 64), scen("b", 131072, 16384, 16384)):
        assert gemm_otb(s.gemm) * gemm_mt(s.gemm) == pytest.approx(gemm_flops(s.gemm), rel=1e-12)


def test_branch_scale_invariance():
    base = scen("base", 131072, 16384, 16384)
    scaled = scen("scaled", 131072 * 4, 16384, 16384 * 4)
    # Scaling M and K together cannot flip the 1D-vs-2D branch.
    assert (base.gemm.m > base.gemm.k) == (scaled.gemm.m > scaled.gemm.k)
    for s in (base, scaled):
        kind = select_schedule(s, MACHINE)
        assert kind is not ScheduleKind.UNIFORM_FUSED_2D


def test_select_is_total_over_corpus():
    from importlib import resources
    from overlap_sim.core import parse_scenarios

    scens = parse_scenarios(
        resources.files("overlap_sim.data").joinpath("scenarios_corpus.csv").read_text()
    )
    for s in scens:
        assert select_schedule(s, MACHINE) in (
            ScheduleKind.UNIFORM_FUSED_1D,
            ScheduleKind.HETERO_FUSED_1D,
            ScheduleKind.HETERO_UNFUSED_1D,
            ScheduleKind.UNIFORM_FUSED_2D,
        )


def test_t_ref_moves_tranche_boundaries():
    s = scen("g13", 1607680, 57344, 8192)
    assert select_schedule(s, MACHINE, t_ref=1.0) is ScheduleKind.HETERO_FUSED_1D
    assert select_schedule(s, MACHINE, t_ref=10.0) is ScheduleKind.UNIFORM_FUSED_1D
    assert select_schedule(s, MACHINE, t_ref=0.01) is ScheduleKind.HETERO_UNFUSED_1D


def test_validate_heuristic_single_agreeing_scenario():
    topo = Topology(kind=TopologyKind.MESH, n_gpus=8, link_bw=64e9)
    model = default_calibration()
    report = validate_heuristic([scen("g1", 16384, 16384, 131072)], MACHINE, topo, model)
    (verdict,) = report.verdicts
    assert verdict.agree and verdict.regret == 0.0
    assert report.accuracy == 1.0
    assert report.mean_regret_on_mismatches == 0.0


def test_validate_heuristic_requires_scenarios():
    topo = Topology(kind=TopologyKind.MESH, n_gpus=8, link_bw=64e9)
    with pytest.raises(ValueError):
        validate_heuristic([], MACHINE, topo, default_calibration())


def test_validate_heuristic_skips_unsupported_2d():
    # K not divisible by n_gpus: the 2D schedule is skipped, others still run.
    topo = Topology(kind=TopologyKind.MESH, n_gpus=2, link_bw=64e9)
    s = Scenario(
        name="no2d",
        parallelism=Parallelism.SP_TP,
        model="t",
        gemm=GemmShape(m=256, n=64, k=3, elt_bytes=2),
        collective=Collective.ALL_GATHER,
        n_gpus=2,
    )
    machine = MachineConfig(peak_flops=1.3e15)
    report = validate_heuristic([s], machine, topo, default_calibration())
    (verdict,) = report.verdicts
    assert ScheduleKind.UNIFORM_FUSED_2D not in verdict.speedups
    assert verdict.best is not ScheduleKind.UNIFORM_FUSED_2D


def test_report_csv_schema():
    topo = Topology(kind=TopologyKind.MESH, n_gpus=8, link_bw=64e9)
    report = validate_heuristic([scen("g1", 16384, 16384, 131072)], MACHINE, topo, default_calibration())
    text = export_report_csv(report)
    lines = text.strip().splitlines()
    assert lines[0] == "scenario,chosen,best,agree,regret,speedup_chosen,speedup_best"
    assert lines[1].startswith("g1,")
