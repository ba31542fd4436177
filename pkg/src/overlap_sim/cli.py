"""Command-line explorer: simulate, sweep, heuristic, validate.

All outputs are plain CSV/JSON data (no plotting dependencies); identical
invocations with identical inputs and seed produce byte-identical files.
Exit codes: 0 success, 1 validation or threshold failure, 2 usage/parse
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from overlap_sim import __version__
from overlap_sim.core import Scenario, ScenarioParseError, gemm_flops, parse_scenarios
from overlap_sim.engine import export_trace_csv, simulate, speedup
from overlap_sim.heuristic import export_report_csv, validate_heuristic
from overlap_sim.lossmodel import CalibrationError, default_calibration, load_calibration
from overlap_sim.machines import MachineSpec, load_machine
from overlap_sim.planner import (
    ALL_KINDS,
    FINE_GRAIN_KINDS,
    PlanError,
    ScheduleKind,
    build_plan,
    export_plan_csv,
    validate_plan,
)
from overlap_sim.topology import all_gather_time

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_KIND_BY_TOKEN = {k.value: k for k in ALL_KINDS}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _load_inputs(args) -> tuple[list[Scenario], MachineSpec, object]:
    try:
        scenarios = parse_scenarios(Path(args.scenarios).read_text())
    except OSError as exc:
        raise CliError(f"cannot read scenarios file: {exc}") from exc
    except (ScenarioParseError, ValueError) as exc:
        raise CliError(f"{args.scenarios}: {exc}") from exc
    try:
        spec = load_machine(Path(args.machine).read_text())
    except OSError as exc:
        raise CliError(f"cannot read machine file: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"{args.machine}: {exc}") from exc
    if args.calibration:
        try:
            model = load_calibration(Path(args.calibration).read_text())
        except OSError as exc:
            raise CliError(f"cannot read calibration file: {exc}") from exc
        except CalibrationError as exc:
            raise CliError(f"{args.calibration}: {exc}") from exc
    else:
        model = default_calibration()
    return scenarios, spec, model


def _parse_schedules(raw: str | None) -> list[ScheduleKind]:
    if raw is None:
        return list(ALL_KINDS)
    kinds = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        if token not in _KIND_BY_TOKEN:
            raise CliError(f"unknown schedule {token!r}; valid: {sorted(_KIND_BY_TOKEN)}")
        kinds.append(_KIND_BY_TOKEN[token])
    if not kinds:
        raise CliError("no schedules selected")
    return kinds


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_rows(out: Path, stem: str, header: list[str], rows: list[list], fmt: str) -> Path:
    if fmt == "csv":
        path = out / f"{stem}.csv"
        lines = [",".join(header)]
        lines += [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
    else:
        path = out / f"{stem}.json"
        payload = [dict(zip(header, row)) for row in rows]
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_simulate(args) -> int:
    scenarios, spec, model = _load_inputs(args)
    kinds = _parse_schedules(args.schedules)
    out = _out_dir(args)
    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)

    rows = []
    failures = 0
    for scenario in scenarios:
        try:
            serial = simulate(
                build_plan(scenario, ScheduleKind.SERIAL, spec.topo), spec.machine, spec.topo, model, args.seed
            )
            ideal = simulate(
                build_plan(scenario, ScheduleKind.IDEAL, spec.topo), spec.machine, spec.topo, model, args.seed
            )
        except (PlanError, ValueError) as exc:
            print(f"error: scenario {scenario.name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        ideal_speedup = speedup(ideal, serial)
        for kind in kinds:
            try:
                result = simulate(
                    build_plan(scenario, kind, spec.topo), spec.machine, spec.topo, model, args.seed
                )
            except (PlanError, ValueError) as exc:
                print(f"error: scenario {scenario.name} / {kind.value}: {exc}", file=sys.stderr)
                failures += 1
                continue
            s = speedup(result, serial)
            result = dataclasses.replace(result, speedup_vs_serial=s)
            gain_fraction = (
                (s - 1.0) / (ideal_speedup - 1.0) if ideal_speedup > 1.0 else float("nan")
            )
            rows.append(
                [
                    scenario.name,
                    kind.value,
                    f"{result.makespan:.9e}",
                    f"{s:.6f}",
                    f"{ideal_speedup:.6f}",
                    f"{gain_fraction:.6f}",
                ]
            )
            trace_path = trace_dir / f"{scenario.name}_{kind.value}.csv"
            trace_path.write_text(export_trace_csv(result))
    rows.sort(key=lambda r: (r[0], r[1]))
    path = _emit_rows(
        out,
        "results",
        ["scenario", "schedule", "makespan_s", "speedup_vs_serial", "ideal_speedup", "fraction_of_ideal_gain"],
        rows,
        args.format,
    )
    by_schedule: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        by_schedule.setdefault(row[1], []).append((float(row[3]), float(row[5])))
    summary = []
    for schedule in sorted(by_schedule):
        pairs = by_schedule[schedule]
        geo = math.exp(sum(math.log(s) for s, _ in pairs) / len(pairs))
        fractions = [f for _, f in pairs if not math.isnan(f)]
        mean_fraction = sum(fractions) / len(fractions) if fractions else float("nan")
        summary.append([schedule, len(pairs), f"{geo:.6f}", f"{mean_fraction:.6f}"])
    _emit_rows(
        out,
        "summary",
        ["schedule", "n_scenarios", "geomean_speedup", "mean_fraction_of_ideal_gain"],
        summary,
        args.format,
    )
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_FAILURE if failures else EXIT_OK


def _swept_scenario(scenario: Scenario, axis: str, value: float):
    """Apply one sweep-axis value; returns (scenario, topology_override)."""
    if axis == "link_bw":
        return scenario, value
    n_sq = scenario.n_gpus * scenario.n_gpus
    if axis == "n":
        dim = max(1, int(round(value)))
    else:  # k, rounded to keep fine-grain divisibility
        dim = max(n_sq, int(round(value / n_sq)) * n_sq)
    gemm = dataclasses.replace(scenario.gemm, **{axis: dim})
    return dataclasses.replace(scenario, gemm=gemm), None


def cmd_sweep(args) -> int:
    scenarios, spec, model = _load_inputs(args)
    if args.axis not in ("link_bw", "n", "k"):
        raise CliError(f"unsupported sweep axis {args.axis!r}; supported: link_bw, n, k")
    if args.min <= 0 or args.max <= args.min or args.points < 2:
        raise CliError("sweep range must satisfy 0 < min < max and points >= 2")
    kinds = _parse_schedules(args.schedules) if args.schedules else [
        ScheduleKind.IDEAL,
        ScheduleKind.SHARD_OVERLAP_P2P,
        *FINE_GRAIN_KINDS,
    ]
    out = _out_dir(args)

    span = args.max / args.min
    values = [args.min * span ** (i / (args.points - 1)) for i in range(args.points)]
    rows = []
    for base in scenarios:
        for value in values:
            scenario, bw = _swept_scenario(base, args.axis, value)
            topo = (
                dataclasses.replace(spec.topo, link_bw=bw, nic_bw=None)
                if bw is not None
                else spec.topo
            )
            shard_bytes = (scenario.gemm.m // scenario.n_gpus) * scenario.gemm.k * scenario.gemm.elt_bytes
            t_gemm = gemm_flops(scenario.gemm) / spec.machine.effective_flops
            t_comm = all_gather_time(topo, shard_bytes)
            serial = simulate(
                build_plan(scenario, ScheduleKind.SERIAL, topo), spec.machine, topo, model, args.seed
            )
            for kind in kinds:
                try:
                    result = simulate(
                        build_plan(scenario, kind, topo), spec.machine, topo, model, args.seed
                    )
                except PlanError:
                    continue
                rows.append(
                    [
                        scenario.name,
                        kind.value,
                        f"{value:.6e}",
                        f"{t_gemm / t_comm:.6f}",
                        f"{speedup(result, serial):.6f}",
                    ]
                )
    rows.sort(key=lambda r: (r[0], r[1], float(r[3]), float(r[2])))
    path = _emit_rows(
        out,
        "sweep",
        ["scenario", "schedule", args.axis, "gemm_comm_ratio", "speedup_vs_serial"],
        rows,
        args.format,
    )
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def synthetic_grid(elt_bytes: int = 2, n_gpus: int = 8) -> list[Scenario]:
    """The documented 16-point synthetic heuristic grid.

    Log-spaced M in [2^13, 2^21] x K in [2^12, 2^18] (4 x 4, exponents
    rounded to integers), half precision, 8 GPUs. Each M value forms one
    family with a fixed N (40960 for the three smaller families, 81920 for
    the largest) so the families straddle distinct machine-balance regimes;
    every point satisfies the fine-grain divisibility requirements.
    """
    from overlap_sim.core import Collective, GemmShape, Parallelism

    families = [(2**13, 40960), (2**16, 40960), (2**18, 40960), (2**21, 81920)]
    ks = [2**12, 2**14, 2**16, 2**18]
    grid = []
    idx = 1
    for m, n_fixed in families:
        for k in ks:
            grid.append(
                Scenario(
                    name=f"s{idx:02d}",
                    parallelism=Parallelism.SP_TP,
                    model="synthetic",
                    gemm=GemmShape(m=m, n=n_fixed, k=k, elt_bytes=elt_bytes),
                    collective=Collective.ALL_GATHER,
                    n_gpus=n_gpus,
                )
            )
            idx += 1
    return grid


def cmd_heuristic(args) -> int:
    scenarios, spec, model = _load_inputs(args)
    if args.synthetic_grid:
        scenarios = synthetic_grid()
    out = _out_dir(args)
    report = validate_heuristic(scenarios, spec.machine, spec.topo, model, spec.t_ref, args.seed)
    (out / "heuristic_report.csv").write_text(export_report_csv(report))
    summary = {
        "accuracy": report.accuracy,
        "mean_regret_on_mismatches": report.mean_regret_on_mismatches,
        "n_scenarios": len(report.verdicts),
    }
    (out / "heuristic_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(
        f"heuristic accuracy {report.accuracy:.3f} over {len(report.verdicts)} scenarios, "
        f"mean regret on mismatches {report.mean_regret_on_mismatches:.3f}"
    )
    if args.min_accuracy is not None and report.accuracy < args.min_accuracy:
        print(f"accuracy below threshold {args.min_accuracy}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_validate(args) -> int:
    scenarios, spec, model = _load_inputs(args)
    del model
    out = _out_dir(args)
    rows = []
    violations_total = 0
    for scenario in scenarios:
        for kind in ALL_KINDS:
            try:
                plan = build_plan(scenario, kind, spec.topo)
            except PlanError as exc:
                rows.append([scenario.name, kind.value, "skipped", str(exc).replace(",", ";")])
                continue
            violations = validate_plan(plan, scenario)
            violations_total += len(violations)
            ingress = sum(
                t.kind.bytes
                for t in plan.tasks
                if t.gpu == 0 and getattr(t.kind, "dst", None) == 0
            )
            flops = sum(t.kind.flops for t in plan.tasks if t.gpu == 0 and hasattr(t.kind, "flops"))
            status = "ok" if not violations else "; ".join(violations).replace(",", ";")
            rows.append([scenario.name, kind.value, status, f"ingress={ingress} flops={flops}"])
            if args.export_plans:
                (out / f"plan_{scenario.name}_{kind.value}.csv").write_text(export_plan_csv(plan))
    path = _emit_rows(out, "validation", ["scenario", "schedule", "status", "totals"], rows, args.format)
    print(f"wrote {path}; {violations_total} violation(s)")
    return EXIT_FAILURE if violations_total else EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenarios", required=True, help="scenario CSV file")
    parser.add_argument("--machine", required=True, help="machine config JSON file")
    parser.add_argument("--calibration", help="calibration JSON file (merged over defaults)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overlap-sim",
        description="Simulate and explore multi-GPU compute/communication overlap schedules.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate scenarios across schedules")
    _add_common(p)
    p.add_argument("--schedules", help="comma-separated schedule list (default: all)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep a machine axis and report speedup vs ratio")
    _add_common(p)
    p.add_argument("--schedules", help="comma-separated schedule list")
    p.add_argument("--axis", default="link_bw")
    p.add_argument("--min", type=float, required=True)
    p.add_argument("--max", type=float, required=True)
    p.add_argument("--points", type=int, default=16)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heuristic", help="validate the schedule-selection heuristic")
    _add_common(p)
    p.add_argument("--min-accuracy", type=float, default=None)
    p.add_argument("--synthetic-grid", action="store_true", help="use the documented 16-point grid")
    p.set_defaults(func=cmd_heuristic)

    p = sub.add_parser("validate", help="validate plan conservation across schedules")
    _add_common(p)
    p.add_argument("--export-plans", action="store_true")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help.
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
