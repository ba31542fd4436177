"""Domain types and static GEMM metrics.

Everything downstream (planners, loss models, the heuristic) keys off the
three static metrics defined here: flop count, memory traffic (MT), and
op-to-byte ratio (OTB). No tensor data is ever touched; shapes and byte
counts only.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace

_ALLOWED_ELT_BYTES = (1, 2, 4, 8)


class Axis(enum.Enum):
    """GEMM sharding axis: rows (M) or the reduction dimension (K)."""

    ROW_M = "row"
    COL_K = "col"


class Parallelism(enum.Enum):
    SP_TP = "SP+TP"
    EP = "EP"


class Collective(enum.Enum):
    ALL_GATHER = "all_gather"
    ALL_TO_ALL = "all_to_all"


class CommAgent(enum.Enum):
    """Who drives inter-GPU copies: DMA engines or compute cores."""

    DMA = "dma"
    CORE = "core"


class ScenarioParseError(ValueError):
    """Malformed scenario file content (carries a line number)."""


@dataclass(frozen=True)
class GemmShape:
    """An M x N x K matrix-multiply problem with a fixed element width."""

    m: int
    n: int
    k: int
    elt_bytes: int = 2

    def __post_init__(self):
        for field in ("m", "n", "k"):
            value = getattr(self, field)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"GemmShape.{field} must be a positive integer, got {value!r}")
        if self.elt_bytes not in _ALLOWED_ELT_BYTES:
            raise ValueError(
                f"GemmShape.elt_bytes must be one of {_ALLOWED_ELT_BYTES}, got {self.elt_bytes!r}"
            )


@dataclass(frozen=True)
class ShardedGemm:
    """A GEMM sharded along one axis; column sharding implies additive kernels."""

    shape: GemmShape
    axis: Axis
    degree: int
    additive: bool

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"ShardedGemm.degree must be >= 1, got {self.degree}")
        if self.additive != (self.axis is Axis.COL_K):
            raise ValueError("ShardedGemm.additive must hold exactly for COL_K sharding")


@dataclass(frozen=True)
class Scenario:
    """One named deployment scenario: a GEMM fed by a collective on n_gpus."""

    name: str
    parallelism: Parallelism
    model: str
    gemm: GemmShape
    collective: Collective
    n_gpus: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("Scenario.name must be non-empty")
        if self.n_gpus < 2:
            raise ValueError(f"Scenario.n_gpus must be >= 2, got {self.n_gpus}")
        chunks = self.n_gpus * self.n_gpus
        if self.gemm.m % chunks != 0 and self.gemm.k % chunks != 0:
            raise ValueError(
                f"Scenario {self.name!r}: neither M={self.gemm.m} nor K={self.gemm.k} "
                f"is divisible by n_gpus^2={chunks}; no fine-grain chunking axis exists"
            )


@dataclass(frozen=True)
class MachineConfig:
    """Per-GPU execution rates and overheads.

    gemm_efficiency scales peak_flops to a sustained GEMM rate;
    copy_efficiency scales mem_bw for local gather/scatter copies.
    """

    peak_flops: float
    mem_bw: float = 5.3e12
    gemm_efficiency: float = 0.65
    copy_efficiency: float = 1.0
    n_dma_engines: int = 8
    launch_overhead: float = 0.0
    comm_agent: CommAgent = CommAgent.DMA
    noise: float = 0.0

    def __post_init__(self):
        if self.peak_flops <= 0 or self.mem_bw <= 0:
            raise ValueError("MachineConfig rates must be strictly positive")
        for field in ("gemm_efficiency", "copy_efficiency"):
            value = getattr(self, field)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"MachineConfig.{field} must be in (0, 1], got {value}")
        if self.n_dma_engines < 1:
            raise ValueError("MachineConfig.n_dma_engines must be >= 1")
        if self.launch_overhead < 0:
            raise ValueError("MachineConfig.launch_overhead must be >= 0")
        if self.noise < 0:
            raise ValueError("MachineConfig.noise must be >= 0")

    @property
    def effective_flops(self) -> float:
        return self.peak_flops * self.gemm_efficiency

    @property
    def effective_copy_bw(self) -> float:
        return self.mem_bw * self.copy_efficiency


def gemm_flops(shape: GemmShape) -> int:
    """Multiply-accumulate op count: 2*M*N*K."""
    return 2 * shape.m * shape.n * shape.k


def gemm_mt(shape: GemmShape) -> int:
    """Static memory traffic in bytes: elt * (M*K + N*K + M*N)."""
    return shape.elt_bytes * (shape.m * shape.k + shape.n * shape.k + shape.m * shape.n)


def gemm_otb(shape: GemmShape) -> float:
    """Arithmetic intensity in ops per byte of static traffic."""
    return gemm_flops(shape) / gemm_mt(shape)


def shard_gemm(shape: GemmShape, axis: Axis, degree: int) -> ShardedGemm:
    """Divide one GEMM dimension by `degree`.

    Row sharding splits M; column sharding splits K and makes the resulting
    kernels additive (each contributes a partial sum into the same output).
    """
    if degree < 1:
        raise ValueError(f"shard degree must be >= 1, got {degree}")
    if axis is Axis.ROW_M:
        if shape.m % degree != 0:
            raise ValueError(f"M={shape.m} is not divisible by row-shard degree {degree}")
        sharded = replace(shape, m=shape.m // degree)
        return ShardedGemm(shape=sharded, axis=axis, degree=degree, additive=False)
    if shape.k % degree != 0:
        raise ValueError(f"K={shape.k} is not divisible by column-shard degree {degree}")
    sharded = replace(shape, k=shape.k // degree)
    return ShardedGemm(shape=sharded, axis=axis, degree=degree, additive=True)


SCENARIO_HEADER = ["name", "parallelism", "model", "M", "N", "K", "elt_bytes", "collective", "n_gpus"]

_PARALLELISM_BY_TOKEN = {p.value: p for p in Parallelism}
_COLLECTIVE_BY_TOKEN = {c.value: c for c in Collective}


def parse_scenarios(text: str) -> list[Scenario]:
    """Parse scenario CSV content (header + one row per scenario).

    Lines starting with '#' are comments. An empty elt_bytes field defaults
    to 2 (half precision). Parse failures raise ScenarioParseError with the
    offending line number; invariant violations raise ValueError naming the
    field.
    """
    lines = text.splitlines()
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parsed = next(csv.reader([raw]))
        rows.append((lineno, [cell.strip() for cell in parsed]))

    if not rows:
        raise ScenarioParseError("scenario file has no header row")

    header_lineno, header = rows[0]
    if header != SCENARIO_HEADER:
        raise ScenarioParseError(
            f"line {header_lineno}: expected header {','.join(SCENARIO_HEADER)!r}, "
            f"got {','.join(header)!r}"
        )

    scenarios = []
    for lineno, row in rows[1:]:
        if len(row) != len(SCENARIO_HEADER):
            raise ScenarioParseError(
                f"line {lineno}: expected {len(SCENARIO_HEADER)} fields, got {len(row)}"
            )
        name, parallelism, model, m, n, k, elt, collective, n_gpus = row
        if parallelism not in _PARALLELISM_BY_TOKEN:
            raise ScenarioParseError(
                f"line {lineno}: parallelism must be one of "
                f"{sorted(_PARALLELISM_BY_TOKEN)}, got {parallelism!r}"
            )
        if collective not in _COLLECTIVE_BY_TOKEN:
            raise ScenarioParseError(
                f"line {lineno}: collective must be one of "
                f"{sorted(_COLLECTIVE_BY_TOKEN)}, got {collective!r}"
            )
        try:
            dims = [int(m), int(n), int(k)]
            elt_bytes = int(elt) if elt else 2
            gpus = int(n_gpus)
        except ValueError as exc:
            raise ScenarioParseError(f"line {lineno}: non-integer numeric field ({exc})") from exc
        scenarios.append(
            Scenario(
                name=name,
                parallelism=_PARALLELISM_BY_TOKEN[parallelism],
                model=model,
                gemm=GemmShape(m=dims[0], n=dims[1], k=dims[2], elt_bytes=elt_bytes),
                collective=_COLLECTIVE_BY_TOKEN[collective],
                n_gpus=gpus,
            )
        )
    return scenarios


def serialize_scenarios(scenarios: list[Scenario]) -> str:
    """Inverse of parse_scenarios; round-trips all field values."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCENARIO_HEADER)
    for s in scenarios:
        writer.writerow(
            [
                s.name,
                s.parallelism.value,
                s.model,
                s.gemm.m,
                s.gemm.n,
                s.gemm.k,
                s.gemm.elt_bytes,
                s.collective.value,
                s.n_gpus,
            ]
        )
    return buf.getvalue()
