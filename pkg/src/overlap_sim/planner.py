"""Schedule planners: expand a scenario into a DAG of resource-bound tasks.

Seven schedules are supported. `serial` is the no-overlap baseline, `ideal`
is the loss-free pipelining bound, `shard_overlap_p2p` is ring-style
shard-granularity overlap, and the four fine-grain kinds decompose
communication one level deeper (chunk = shard / n_gpus) and differ in
compute uniformity, fusion, and communicated-buffer shape.

All fine-grain kinds share the same communication structure: n_gpus
all-to-all rounds in which every GPU sends fine chunk r of its local shard
to every peer. Round ordering is enforced by per-link serialization (task
ids ascend with rounds), not by artificial dependencies.

Every plan conserves per-GPU ingress bytes ((G-1)/G of the M x K input) and
per-GPU flop count (2*M*N*K) regardless of schedule; `validate_plan` checks
this along with coverage and acyclicity.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

from overlap_sim.core import GemmShape, Scenario, gemm_flops, gemm_otb
from overlap_sim.topology import Topology


class PlanError(ValueError):
    """Scenario cannot be expanded into the requested schedule."""


class ScheduleKind(enum.Enum):
    SERIAL = "serial"
    IDEAL = "ideal"
    SHARD_OVERLAP_P2P = "shard_overlap_p2p"
    UNIFORM_FUSED_1D = "uniform_fused_1d"
    HETERO_FUSED_1D = "hetero_fused_1d"
    HETERO_UNFUSED_1D = "hetero_unfused_1d"
    UNIFORM_FUSED_2D = "uniform_fused_2d"


FINE_GRAIN_KINDS = (
    ScheduleKind.UNIFORM_FUSED_1D,
    ScheduleKind.HETERO_FUSED_1D,
    ScheduleKind.HETERO_UNFUSED_1D,
    ScheduleKind.UNIFORM_FUSED_2D,
)

ALL_KINDS = (
    ScheduleKind.SERIAL,
    ScheduleKind.IDEAL,
    ScheduleKind.SHARD_OVERLAP_P2P,
) + FINE_GRAIN_KINDS


@dataclass(frozen=True)
class TransferSpec:
    src: int
    dst: int
    bytes: int
    fine: bool  # fine-grain chunk payloads pay communication DIL
    round_idx: int = 0


@dataclass(frozen=True)
class GatherSpec:
    bytes: int


@dataclass(frozen=True)
class ScatterSpec:
    bytes: int


@dataclass(frozen=True)
class GemmSpec:
    shape: GemmShape
    additive: bool = False
    # DIL lookup: (table key, x) resolved against the loss model at pricing time.
    dil: tuple[str, float] | None = None
    # Output coverage: row fragments (start, count) or a column block for 2D.
    rows: tuple[tuple[int, int], ...] = ()
    col_block: tuple[int, int] | None = None

    @property
    def flops(self) -> int:
        return gemm_flops(self.shape)


TaskSpec = TransferSpec | GatherSpec | ScatterSpec | GemmSpec


@dataclass(frozen=True)
class Task:
    id: int
    gpu: int
    kind: TaskSpec
    deps: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExecutionPlan:
    schedule: ScheduleKind
    scenario: Scenario
    tasks: tuple[Task, ...]
    chunk_rows: int | None = None
    chunk_cols: int | None = None

    @property
    def n_gpus(self) -> int:
        return self.scenario.n_gpus


class _Builder:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.tasks: list[Task] = []

    def add(self, gpu: int, kind: TaskSpec, deps=()) -> int:
        task = Task(id=len(self.tasks), gpu=gpu, kind=kind, deps=tuple(deps))
        self.tasks.append(task)
        return task.id


def _check_topo(scenario: Scenario, topo: Topology | None) -> None:
    if topo is not None and topo.n_gpus != scenario.n_gpus:
        raise PlanError(
            f"topology has {topo.n_gpus} GPUs but scenario {scenario.name!r} "
            f"expects {scenario.n_gpus}"
        )


def _require_divisible(scenario: Scenario, dim_name: str, value: int, degree: int) -> None:
    if value % degree != 0:
        raise PlanError(
            f"scenario {scenario.name!r}: {dim_name}={value} is not divisible by {degree}"
        )


def _shard_bytes(scenario: Scenario) -> int:
    g = scenario.gemm
    return (g.m // scenario.n_gpus) * g.k * g.elt_bytes


def _chunk_bytes(scenario: Scenario) -> int:
    g = scenario.gemm
    return g.m * g.k * g.elt_bytes // (scenario.n_gpus * scenario.n_gpus)


def _add_a2a_rounds(b: _Builder, chunk_bytes: int) -> list[list[list[int]]]:
    """Emit G rounds of all-to-all chunk transfers.

    Returns ingress[g][r] = ids of round-r transfers arriving at GPU g.
    Ids ascend with rounds so per-link exclusivity serializes rounds in order.
    """
    n = b.scenario.n_gpus
    ingress: list[list[list[int]]] = [[[] for _ in range(n)] for _ in range(n)]
    for r in range(n):
        for dst in range(n):
            for src in range(n):
                if src == dst:
                    continue
                tid = b.add(dst, TransferSpec(src=src, dst=dst, bytes=chunk_bytes, fine=True, round_idx=r))
                ingress[dst][r].append(tid)
    return ingress


def plan_serial(scenario: Scenario, topo: Topology | None = None) -> ExecutionPlan:
    """Baseline: a full all-gather, then one full-size GEMM per GPU.

    Full-size isolated operations, so neither DIL nor CIL applies.
    """
    _check_topo(scenario, topo)
    n = scenario.n_gpus
    _require_divisible(scenario, "M", scenario.gemm.m, n)
    shard = _shard_bytes(scenario)
    b = _Builder(scenario)
    for dst in range(n):
        ingress = [
            b.add(dst, TransferSpec(src=src, dst=dst, bytes=shard, fine=False))
            for src in range(n)
            if src != dst
        ]
        b.add(
            dst,
            GemmSpec(shape=scenario.gemm, rows=((0, scenario.gemm.m),)),
            deps=ingress,
        )
    return ExecutionPlan(schedule=ScheduleKind.SERIAL, scenario=scenario, tasks=tuple(b.tasks))


def plan_shard_overlap(scenario: Scenario, topo: Topology | None = None) -> ExecutionPlan:
    """Ring-style overlap: shard-sized P2P steps hiding shard-sized GEMMs.

    Step i on GPU g computes shard (g - i) mod G; the ring transfer feeding
    step i+1 overlaps the step-i GEMM. Shard payloads are full-sized, so
    communication DIL does not apply; shard-granularity CIL scaling does.
    """
    _check_topo(scenario, topo)
    n = scenario.n_gpus
    g_shape = scenario.gemm
    _require_divisible(scenario, "M", g_shape.m, n)
    shard = _shard_bytes(scenario)
    rows_per_shard = g_shape.m // n
    step_shape = GemmShape(m=rows_per_shard, n=g_shape.n, k=g_shape.k, elt_bytes=g_shape.elt_bytes)
    parent_otb = gemm_otb(g_shape)

    b = _Builder(scenario)
    gemm_ids = [[0] * n for _ in range(n)]  # [step][gpu]
    xfer_ids = [[0] * n for _ in range(n)]  # [step][gpu], steps 1..n-1 used

    def shard_rows(gpu: int, step: int) -> tuple[tuple[int, int], ...]:
        owner = (gpu - step) % n
        return ((owner * rows_per_shard, rows_per_shard),)

    for gpu in range(n):
        gemm_ids[0][gpu] = b.add(
            gpu,
            GemmSpec(shape=step_shape, dil=("row8", parent_otb), rows=shard_rows(gpu, 0)),
        )
    for step in range(1, n):
        for gpu in range(n):
            prev_gpu = (gpu - 1) % n
            deps = [xfer_ids[step - 1][prev_gpu]] if step >= 2 else []
            xfer_ids[step][gpu] = b.add(
                gpu,
                TransferSpec(src=prev_gpu, dst=gpu, bytes=shard, fine=False, round_idx=step - 1),
                deps=deps,
            )
        for gpu in range(n):
            gemm_ids[step][gpu] = b.add(
                gpu,
                GemmSpec(shape=step_shape, dil=("row8", parent_otb), rows=shard_rows(gpu, step)),
                deps=[gemm_ids[step - 1][gpu], xfer_ids[step][gpu]],
            )
    return ExecutionPlan(
        schedule=ScheduleKind.SHARD_OVERLAP_P2P, scenario=scenario, tasks=tuple(b.tasks)
    )


def _fine_grain_rows(scenario: Scenario) -> tuple[int, int]:
    n = scenario.n_gpus
    _require_divisible(scenario, "M", scenario.gemm.m, n * n)
    return scenario.gemm.m // n, scenario.gemm.m // (n * n)


def _uniform_1d_skeleton(scenario: Scenario, with_copies: bool, dil_on: bool) -> ExecutionPlan:
    """Shared structure of uniform_fused_1d (with copies+DIL) and ideal (bare)."""
    n = scenario.n_gpus
    g_shape = scenario.gemm
    rows_per_shard, rows_per_chunk = _fine_grain_rows(scenario)
    chunk = _chunk_bytes(scenario)
    step_shape = GemmShape(m=rows_per_shard, n=g_shape.n, k=g_shape.k, elt_bytes=g_shape.elt_bytes)
    gather_bytes = rows_per_shard * g_shape.k * g_shape.elt_bytes
    scatter_bytes = rows_per_shard * g_shape.n * g_shape.elt_bytes
    dil = ("row8", gemm_otb(g_shape)) if dil_on else None

    b = _Builder(scenario)
    ingress = _add_a2a_rounds(b, chunk)
    for step in range(n):
        rows = tuple((p * rows_per_shard + step * rows_per_chunk, rows_per_chunk) for p in range(n))
        for gpu in range(n):
            gemm_deps: list[int] = list(ingress[gpu][step])
            if with_copies:
                gather_id = b.add(gpu, GatherSpec(bytes=gather_bytes), deps=ingress[gpu][step])
                gemm_deps = [gather_id]
            gemm_id = b.add(gpu, GemmSpec(shape=step_shape, dil=dil, rows=rows), deps=gemm_deps)
            if with_copies:
                b.add(gpu, ScatterSpec(bytes=scatter_bytes), deps=[gemm_id])
    kind = ScheduleKind.UNIFORM_FUSED_1D if with_copies else ScheduleKind.IDEAL
    return ExecutionPlan(schedule=kind, scenario=scenario, tasks=tuple(b.tasks), chunk_rows=rows_per_chunk)


def plan_ideal(scenario: Scenario, topo: Topology | None = None) -> ExecutionPlan:
    """Loss-free pipelining bound: fine-grain rounds feeding per-round GEMMs.

    The engine prices ideal plans with every multiplier forced to 1 and no
    launch overhead or copies, so the makespan converges to
    max(T_comm, T_gemm) plus one pipeline-fill round.
    """
    _check_topo(scenario, topo)
    return _uniform_1d_skeleton(scenario, with_copies=False, dil_on=False)


def _plan_uniform_fused_1d(scenario: Scenario) -> ExecutionPlan:
    return _uniform_1d_skeleton(scenario, with_copies=True, dil_on=True)


def _plan_hetero_1d(scenario: Scenario, fused: bool) -> ExecutionPlan:
    n = scenario.n_gpus
    g_shape = scenario.gemm
    rows_per_shard, rows_per_chunk = _fine_grain_rows(scenario)
    chunk = _chunk_bytes(scenario)
    parent_otb = gemm_otb(g_shape)
    local_shape = GemmShape(m=rows_per_shard, n=g_shape.n, k=g_shape.k, elt_bytes=g_shape.elt_bytes)

    b = _Builder(scenario)
    for gpu in range(n):
        b.add(
            gpu,
            GemmSpec(
                shape=local_shape,
                dil=("row8", parent_otb),
                rows=((gpu * rows_per_shard, rows_per_shard),),
            ),
        )
    ingress = _add_a2a_rounds(b, chunk)

    if fused:
        fused_shape = GemmShape(
            m=(n - 1) * rows_per_chunk, n=g_shape.n, k=g_shape.k, elt_bytes=g_shape.elt_bytes
        )
        # The fused step shape is neither of the characterized sharding
        # granularities, so its DIL interpolates the shard-level table at the
        # shape's own intensity.
        fused_dil = ("row8", gemm_otb(fused_shape))
        for step in range(n):
            for gpu in range(n):
                rows = tuple(
                    (p * rows_per_shard + step * rows_per_chunk, rows_per_chunk)
                    for p in range(n)
                    if p != gpu
                )
                b.add(
                    gpu,
                    GemmSpec(shape=fused_shape, dil=fused_dil, rows=rows),
                    deps=ingress[gpu][step],
                )
        kind = ScheduleKind.HETERO_FUSED_1D
    else:
        chunk_shape = GemmShape(
            m=rows_per_chunk, n=g_shape.n, k=g_shape.k, elt_bytes=g_shape.elt_bytes
        )
        chunk_dil = ("row64", parent_otb)
        for step in range(n):
            for gpu in range(n):
                peers = [p for p in range(n) if p != gpu]
                for peer_idx, p in enumerate(peers):
                    rows = ((p * rows_per_shard + step * rows_per_chunk, rows_per_chunk),)
                    b.add(
                        gpu,
                        GemmSpec(shape=chunk_shape, dil=chunk_dil, rows=rows),
                        deps=[ingress[gpu][step][peer_idx]],
                    )
        kind = ScheduleKind.HETERO_UNFUSED_1D
    return ExecutionPlan(schedule=kind, scenario=scenario, tasks=tuple(b.tasks), chunk_rows=rows_per_chunk)


def _plan_uniform_fused_2d(scenario: Scenario) -> ExecutionPlan:
    n = scenario.n_gpus
    g_shape = scenario.gemm
    _require_divisible(scenario, "M", g_shape.m, n)
    _require_divisible(scenario, "K", g_shape.k, n)
    rows_per_shard = g_shape.m // n
    cols_per_block = g_shape.k // n
    chunk = rows_per_shard * cols_per_block * g_shape.elt_bytes
    gather_bytes = g_shape.m * cols_per_block * g_shape.elt_bytes
    step_shape = GemmShape(m=g_shape.m, n=g_shape.n, k=cols_per_block, elt_bytes=g_shape.elt_bytes)
    # Column sharding makes the step kernels additive; their read-modify-write
    # burden is what the column tables encode, so the lookup uses the additive
    # step shape's own intensity (which collapses when M >> K).
    step_dil = ("col8", gemm_otb(step_shape))

    b = _Builder(scenario)
    ingress = _add_a2a_rounds(b, chunk)
    prev_gemm: list[int | None] = [None] * n
    for step in range(n):
        for gpu in range(n):
            gather_id = b.add(gpu, GatherSpec(bytes=gather_bytes), deps=ingress[gpu][step])
            deps = [gather_id] if prev_gemm[gpu] is None else [gather_id, prev_gemm[gpu]]
            prev_gemm[gpu] = b.add(
                gpu,
                GemmSpec(
                    shape=step_shape,
                    additive=True,
                    dil=step_dil,
                    rows=((0, g_shape.m),),
                    col_block=(step * cols_per_block, cols_per_block),
                ),
                deps=deps,
            )
    return ExecutionPlan(
        schedule=ScheduleKind.UNIFORM_FUSED_2D,
        scenario=scenario,
        tasks=tuple(b.tasks),
        chunk_rows=rows_per_shard,
        chunk_cols=cols_per_block,
    )


def plan_fine_overlap(
    scenario: Scenario, topo: Topology | None = None, kind: ScheduleKind = ScheduleKind.UNIFORM_FUSED_1D
) -> ExecutionPlan:
    """Expand one of the four fine-grain overlap schedules."""
    _check_topo(scenario, topo)
    if kind is ScheduleKind.UNIFORM_FUSED_1D:
        return _plan_uniform_fused_1d(scenario)
    if kind is ScheduleKind.HETERO_FUSED_1D:
        return _plan_hetero_1d(scenario, fused=True)
    if kind is ScheduleKind.HETERO_UNFUSED_1D:
        return _plan_hetero_1d(scenario, fused=False)
    if kind is ScheduleKind.UNIFORM_FUSED_2D:
        return _plan_uniform_fused_2d(scenario)
    raise PlanError(f"{kind} is not a fine-grain overlap schedule")


def build_plan(scenario: Scenario, kind: ScheduleKind, topo: Topology | None = None) -> ExecutionPlan:
    """Dispatch to the planner for any schedule kind."""
    if kind is ScheduleKind.SERIAL:
        return plan_serial(scenario, topo)
    if kind is ScheduleKind.IDEAL:
        return plan_ideal(scenario, topo)
    if kind is ScheduleKind.SHARD_OVERLAP_P2P:
        return plan_shard_overlap(scenario, topo)
    return plan_fine_overlap(scenario, topo, kind)


def supported_kinds(scenario: Scenario) -> list[ScheduleKind]:
    """Fine-grain kinds whose divisibility requirements the scenario meets."""
    kinds = []
    for kind in FINE_GRAIN_KINDS:
        try:
            build_plan(scenario, kind)
        except PlanError:
            continue
        kinds.append(kind)
    return kinds


def _expected_ingress(scenario: Scenario) -> int:
    n = scenario.n_gpus
    g = scenario.gemm
    return (n - 1) * (g.m // n) * g.k * g.elt_bytes


def validate_plan(plan: ExecutionPlan, scenario: Scenario | None = None) -> list[str]:
    """Check conservation, coverage, and well-formedness; returns violations."""
    scenario = scenario or plan.scenario
    violations: list[str] = []
    n = scenario.n_gpus
    g = scenario.gemm

    ingress = [0] * n
    flops = [0] * n
    ids = set()
    for task in plan.tasks:
        ids.add(task.id)
        if isinstance(task.kind, TransferSpec):
            if task.kind.src == task.kind.dst:
                violations.append(f"task {task.id}: transfer src == dst == {task.kind.src}")
            if task.kind.bytes <= 0:
                violations.append(f"task {task.id}: transfer bytes must be positive")
            ingress[task.kind.dst] += task.kind.bytes
        elif isinstance(task.kind, GemmSpec):
            flops[task.gpu] += task.kind.flops
        elif task.kind.bytes <= 0:
            violations.append(f"task {task.id}: copy bytes must be positive")

    expected_ingress = _expected_ingress(scenario)
    for gpu in range(n):
        if ingress[gpu] != expected_ingress:
            violations.append(
                f"gpu {gpu}: ingress bytes {ingress[gpu]} != expected {expected_ingress}"
            )
    expected_flops = 2 * g.m * g.n * g.k
    for gpu in range(n):
        if flops[gpu] != expected_flops:
            violations.append(f"gpu {gpu}: gemm flops {flops[gpu]} != expected {expected_flops}")

    if plan.schedule is ScheduleKind.UNIFORM_FUSED_2D:
        for gpu in range(n):
            blocks = sorted(
                t.kind.col_block
                for t in plan.tasks
                if t.gpu == gpu and isinstance(t.kind, GemmSpec) and t.kind.col_block
            )
            covered = 0
            for start, count in blocks:
                if start != covered:
                    violations.append(f"gpu {gpu}: column coverage gap/overlap at {start}")
                    break
                covered = start + count
            else:
                if covered != g.k:
                    violations.append(f"gpu {gpu}: column coverage ends at {covered} != K={g.k}")
    else:
        for gpu in range(n):
            frags = sorted(
                frag
                for t in plan.tasks
                if t.gpu == gpu and isinstance(t.kind, GemmSpec)
                for frag in t.kind.rows
            )
            covered = 0
            for start, count in frags:
                if start != covered:
                    violations.append(f"gpu {gpu}: row coverage gap/overlap at {start}")
                    break
                covered = start + count
            else:
                if covered != g.m:
                    violations.append(f"gpu {gpu}: row coverage ends at {covered} != M={g.m}")

    # Dependency sanity and acyclicity (ids are topologically ordered by
    # construction, so a dep >= own id is a cycle or dangling reference).
    for task in plan.tasks:
        for dep in task.deps:
            if dep not in ids:
                violations.append(f"task {task.id}: unknown dep {dep}")
            elif dep >= task.id:
                violations.append(f"task {task.id}: dep {dep} is not topologically earlier")
    return violations


def export_plan_csv(plan: ExecutionPlan) -> str:
    """Render the task list as CSV: task_id,gpu,kind,bytes,flops,deps."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task_id", "gpu", "kind", "bytes", "flops", "deps"])
    for task in plan.tasks:
        kind = task.kind
        if isinstance(kind, TransferSpec):
            name, nbytes, flops = f"transfer[{kind.src}->{kind.dst}]", kind.bytes, 0
        elif isinstance(kind, GatherSpec):
            name, nbytes, flops = "gather", kind.bytes, 0
        elif isinstance(kind, ScatterSpec):
            name, nbytes, flops = "scatter", kind.bytes, 0
        else:
            name, nbytes, flops = "gemm", 0, kind.flops
        writer.writerow([task.id, task.gpu, name, nbytes, flops, " ".join(map(str, task.deps))])
    return buf.getvalue()
