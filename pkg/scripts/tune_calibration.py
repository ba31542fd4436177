#!/usr/bin/env python3
"""Calibration dashboard: measures every acceptance-relevant quantity under
the current default calibration so table knots can be adjusted by hand or
by the local search in `--search` mode. Development tool; not shipped as
part of the package API."""

from __future__ import annotations

import argparse
import math
import sys
from importlib import resources

from overlap_sim.core import gemm_mt, parse_scenarios
from overlap_sim.engine import simulate, speedup
from overlap_sim.heuristic import select_schedule, validate_heuristic
from overlap_sim.lossmodel import default_calibration, lookup
from overlap_sim.machines import default_machine
from overlap_sim.planner import FINE_GRAIN_KINDS, ScheduleKind, build_plan
from overlap_sim.cli import synthetic_grid


def geomean(vals):
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--grid", action="store_true", help="also evaluate the synthetic grid")
    args = parser.parse_args()

    scens = parse_scenarios(
        resources.files("overlap_sim.data").joinpath("scenarios_corpus.csv").read_text()
    )
    spec = default_machine()
    model = default_calibration()

    # --- criterion 6: anchors ---
    chunks = [s.gemm.m * s.gemm.k * s.gemm.elt_bytes // (s.n_gpus**2) for s in scens]
    mts = [gemm_mt(s.gemm) for s in scens]
    from overlap_sim.core import CommAgent

    g_cd = geomean([lookup(model.comm_dil_table, c) for c in chunks])
    g_gc = geomean([lookup(model.gemm_cil_tables[CommAgent.DMA], t) for t in mts])
    g_cc = geomean([lookup(model.comm_cil_tables[CommAgent.DMA], t) for t in mts])
    g_gs = geomean(
        [max(1.0, lookup(model.gemm_cil_tables[CommAgent.DMA], t) * model.shard_overlap_cil_scale_gemm) for t in mts]
    )
    g_cs = geomean(
        [max(1.0, lookup(model.comm_cil_tables[CommAgent.DMA], t) * model.shard_overlap_cil_scale_comm) for t in mts]
    )
    print("== anchors (criterion 6) ==")
    for name, val, target in (
        ("comm_dil", g_cd, 1.10),
        ("gemm_cil dma", g_gc, 1.11),
        ("comm_cil dma", g_cc, 1.12),
        ("gemm_cil shard", g_gs, 1.07),
        ("comm_cil shard", g_cs, 1.03),
    ):
        ok = abs(val - target) <= 0.02
        print(f"  {name:16s} {val:.4f} target {target:.2f} -> {'OK' if ok else 'FAIL'}")

    # --- criteria 5 and 7 over the bundled corpus ---
    print("\n== corpus speedups (criteria 5, 7) ==")
    header = f"{'scen':5s} {'ideal':>7s} " + " ".join(f"{k.value[8:] or k.value:>10s}"[:11] for k in FINE_GRAIN_KINDS)
    print(header + "  best/chosen")
    mismatches = []
    band_fail = []
    fractions = []
    for s in scens:
        serial = simulate(build_plan(s, ScheduleKind.SERIAL, spec.topo), spec.machine, spec.topo, model)
        ideal = speedup(
            simulate(build_plan(s, ScheduleKind.IDEAL, spec.topo), spec.machine, spec.topo, model), serial
        )
        sp = {
            k: speedup(simulate(build_plan(s, k, spec.topo), spec.machine, spec.topo, model), serial)
            for k in FINE_GRAIN_KINDS
        }
        best = max(FINE_GRAIN_KINDS, key=lambda k: sp[k])
        chosen = select_schedule(s, spec.machine, spec.t_ref)
        ok = best == chosen
        if not ok:
            mismatches.append((s.name, chosen.value, best.value, 1 - sp[chosen] / sp[best]))
        if not (1.0 <= sp[best] <= 1.7) or sp[best] > ideal:
            band_fail.append((s.name, sp[best], ideal))
        best_1d = max(sp[k] for k in FINE_GRAIN_KINDS if k is not ScheduleKind.UNIFORM_FUSED_2D)
        fractions.append((best_1d - 1.0) / (ideal - 1.0))
        marks = " ".join(f"{sp[k]:11.5f}" for k in FINE_GRAIN_KINDS)
        print(f"{s.name:5s} {ideal:7.4f} {marks}  {best.value[:14]}/{chosen.value[:14]} {'OK' if ok else 'MISS'}")
    print(f"\n  band failures (crit 5): {band_fail}")
    print(f"  corpus mean fraction-of-ideal (best 1D): {sum(fractions)/len(fractions):.4f} (need 0.40..0.80)")
    print(f"  corpus accuracy: {(len(scens)-len(mismatches))}/{len(scens)}")
    for m in mismatches:
        print(f"    MISS {m[0]}: chose {m[1]}, best {m[2]}, regret {m[3]:.4f}")

    if args.grid:
        print("\n== synthetic grid (criterion 7) ==")
        report = validate_heuristic(synthetic_grid(), spec.machine, spec.topo, model, spec.t_ref)
        print(f"  accuracy {report.accuracy:.3f}, mean regret {report.mean_regret_on_mismatches:.4f}")
        for v in report.verdicts:
            flag = "OK " if v.agree else "MISS"
            print(
                f"  {flag} {v.scenario}: chose {v.chosen.value:18s} best {v.best.value:18s} "
                f"spds { {k.value[:12]: round(x,4) for k,x in v.speedups.items()} }"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
