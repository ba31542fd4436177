"""Calibration-table loss model for decomposition (DIL) and contention (CIL) losses.

Losses are carried as piecewise-linear-in-log(x) interpolation tables so
that measured characterizations can replace them wholesale. The shipped
default tables are synthetic: shaped to the expected trends (GEMM DIL falls
as arithmetic intensity rises, comm DIL falls as transfers grow, CIL rises
with memory traffic, DMA-driven transfers contend less than core-driven
ones) and scaled so their geomeans over the bundled scenario corpus land on
representative anchors (comm DIL ~1.10, GEMM CIL ~1.11, comm CIL ~1.12,
with shard-granularity overlap rescaled to ~1.07 / ~1.03).

Table keys:
  gemm_dil.{row8,row64,col8,col64}  over x = OTB (ops/byte)
  comm_dil                          over x = transfer bytes
  gemm_cil.{dma,core}               over x = GEMM memory traffic bytes
  comm_cil.{dma,core}               over x = GEMM memory traffic bytes
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

from overlap_sim.core import Axis, CommAgent, GemmShape, gemm_otb

_DEGREE_SUFFIX = {8: "8", 64: "64"}
_AXIS_PREFIX = {Axis.ROW_M: "row", Axis.COL_K: "col"}

GEMM_DIL_KEYS = ("row8", "row64", "col8", "col64")


class CalibrationError(ValueError):
    """Invalid calibration content; message names the offending table."""


@dataclass(frozen=True)
class CalibrationTable:
    """Ordered (x, multiplier) knots; x strictly increasing, multipliers >= 1."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.points:
            raise CalibrationError("calibration table must have at least one point")
        last_x = None
        for x, mult in self.points:
            if x <= 0:
                raise CalibrationError(f"calibration x values must be positive, got {x}")
            if last_x is not None and x <= last_x:
                raise CalibrationError(f"calibration x values must be strictly increasing at x={x}")
            if mult < 1.0:
                raise CalibrationError(f"calibration multipliers must be >= 1.0, got {mult} at x={x}")
            last_x = x


def lookup(table: CalibrationTable, x: float) -> float:
    """Piecewise-linear interpolation in log(x), clamped to the end knots."""
    if x <= 0:
        raise ValueError(f"lookup x must be positive, got {x}")
    pts = table.points
    if x <= pts[0][0]:
        return pts[0][1]
    if x >= pts[-1][0]:
        return pts[-1][1]
    lx = math.log(x)
    for (x0, m0), (x1, m1) in zip(pts, pts[1:]):
        if x <= x1:
            t = (lx - math.log(x0)) / (math.log(x1) - math.log(x0))
            return m0 + t * (m1 - m0)
    return pts[-1][1]  # unreachable given the clamps


@dataclass(frozen=True)
class LossModel:
    gemm_dil_tables: dict[str, CalibrationTable]
    comm_dil_table: CalibrationTable
    gemm_cil_tables: dict[CommAgent, CalibrationTable]
    comm_cil_tables: dict[CommAgent, CalibrationTable]
    shard_overlap_cil_scale_gemm: float
    shard_overlap_cil_scale_comm: float


def gemm_dil(model: LossModel, parent: GemmShape, axis: Axis, degree: int) -> float:
    """Slowdown of a degree-way sharded kernel vs. proportional scaling.

    Looked up on the (axis, degree) table at the parent problem's OTB.
    """
    if degree not in _DEGREE_SUFFIX:
        raise ValueError(f"gemm_dil degree must be 8 or 64, got {degree}")
    key = _AXIS_PREFIX[axis] + _DEGREE_SUFFIX[degree]
    return lookup(model.gemm_dil_tables[key], gemm_otb(parent))


def comm_dil(model: LossModel, transfer_bytes: float) -> float:
    """Wire-efficiency loss of a fine-grain transfer relative to a full-size one."""
    return lookup(model.comm_dil_table, transfer_bytes)


def gemm_cil(model: LossModel, mt_bytes: float, agent: CommAgent) -> float:
    """GEMM slowdown while communication is in flight on the same GPU."""
    return lookup(model.gemm_cil_tables[agent], mt_bytes)


def comm_cil(model: LossModel, mt_bytes: float, agent: CommAgent) -> float:
    """Communication slowdown while compute/copies are active on an endpoint."""
    return lookup(model.comm_cil_tables[agent], mt_bytes)


def shard_scaled(model: LossModel, multiplier: float, which: str) -> float:
    """Rescale a CIL multiplier for shard-granularity overlap (floor 1.0)."""
    scale = (
        model.shard_overlap_cil_scale_gemm if which == "gemm" else model.shard_overlap_cil_scale_comm
    )
    return max(1.0, multiplier * scale)


def _parse_table(name: str, raw) -> CalibrationTable:
    if not isinstance(raw, list) or not raw:
        raise CalibrationError(f"table {name!r} must be a non-empty list of [x, multiplier] pairs")
    points = []
    for entry in raw:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise CalibrationError(f"table {name!r} entries must be [x, multiplier] pairs")
        points.append((float(entry[0]), float(entry[1])))
    try:
        return CalibrationTable(points=tuple(points))
    except CalibrationError as exc:
        raise CalibrationError(f"table {name!r}: {exc}") from exc


def _check_trend(name: str, table: CalibrationTable, direction: str) -> None:
    values = [m for _, m in table.points]
    for a, b in zip(values, values[1:]):
        if direction == "decreasing" and b > a:
            raise CalibrationError(f"table {name!r} must be non-increasing in x")
        if direction == "increasing" and b < a:
            raise CalibrationError(f"table {name!r} must be non-decreasing in x")


def _check_dominates(high_name: str, high: CalibrationTable, low_name: str, low: CalibrationTable) -> None:
    # Compared only at shared x knots; interpolated gaps are the caller's risk.
    low_by_x = dict(low.points)
    for x, mult in high.points:
        if x in low_by_x and mult < low_by_x[x]:
            raise CalibrationError(
                f"table {high_name!r} must dominate {low_name!r} at shared x={x} "
                f"({mult} < {low_by_x[x]})"
            )


def _validate(model: LossModel) -> LossModel:
    for key in GEMM_DIL_KEYS:
        _check_trend(f"gemm_dil.{key}", model.gemm_dil_tables[key], "decreasing")
    _check_trend("comm_dil", model.comm_dil_table, "decreasing")
    for agent in CommAgent:
        _check_trend(f"gemm_cil.{agent.value}", model.gemm_cil_tables[agent], "increasing")
        _check_trend(f"comm_cil.{agent.value}", model.comm_cil_tables[agent], "increasing")
    _check_dominates(
        "gemm_cil.core", model.gemm_cil_tables[CommAgent.CORE],
        "gemm_cil.dma", model.gemm_cil_tables[CommAgent.DMA],
    )
    _check_dominates(
        "comm_cil.core", model.comm_cil_tables[CommAgent.CORE],
        "comm_cil.dma", model.comm_cil_tables[CommAgent.DMA],
    )
    for axis in ("row", "col"):
        _check_dominates(
            f"gemm_dil.{axis}64", model.gemm_dil_tables[f"{axis}64"],
            f"gemm_dil.{axis}8", model.gemm_dil_tables[f"{axis}8"],
        )
    for name, scale in (
        ("gemm", model.shard_overlap_cil_scale_gemm),
        ("comm", model.shard_overlap_cil_scale_comm),
    ):
        if scale <= 0:
            raise CalibrationError(f"shard_overlap_cil_scale.{name} must be positive")
    return model


def _model_from_dict(doc: dict) -> LossModel:
    gemm_dil_tables = {
        key: _parse_table(f"gemm_dil.{key}", doc["gemm_dil"][key]) for key in GEMM_DIL_KEYS
    }
    scale = doc["shard_overlap_cil_scale"]
    return _validate(
        LossModel(
            gemm_dil_tables=gemm_dil_tables,
            comm_dil_table=_parse_table("comm_dil", doc["comm_dil"]),
            gemm_cil_tables={
                CommAgent.DMA: _parse_table("gemm_cil.dma", doc["gemm_cil"]["dma"]),
                CommAgent.CORE: _parse_table("gemm_cil.core", doc["gemm_cil"]["core"]),
            },
            comm_cil_tables={
                CommAgent.DMA: _parse_table("comm_cil.dma", doc["comm_cil"]["dma"]),
                CommAgent.CORE: _parse_table("comm_cil.core", doc["comm_cil"]["core"]),
            },
            shard_overlap_cil_scale_gemm=float(scale["gemm"]),
            shard_overlap_cil_scale_comm=float(scale["comm"]),
        )
    )


def _default_doc() -> dict:
    raw = resources.files("overlap_sim.data").joinpath("default_calibration.json").read_text()
    return json.loads(raw)


def _merge(base: dict, override: dict) -> dict:
    """Per-table merge: any table or scale present in override replaces the default."""
    merged = {
        "gemm_dil": dict(base["gemm_dil"]),
        "comm_dil": base["comm_dil"],
        "gemm_cil": dict(base["gemm_cil"]),
        "comm_cil": dict(base["comm_cil"]),
        "shard_overlap_cil_scale": dict(base["shard_overlap_cil_scale"]),
    }
    for section in ("gemm_dil", "gemm_cil", "comm_cil", "shard_overlap_cil_scale"):
        if section in override:
            if not isinstance(override[section], dict):
                raise CalibrationError(f"{section!r} must be a mapping of tables")
            merged[section].update(override[section])
    if "comm_dil" in override:
        merged["comm_dil"] = override["comm_dil"]
    return merged


def default_calibration() -> LossModel:
    """The built-in synthetic tables shipped with the package."""
    return _model_from_dict(_default_doc())


def load_calibration(text: str) -> LossModel:
    """Parse a JSON calibration document, merging partial content over defaults."""
    try:
        override = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"calibration file is not valid JSON: {exc}") from exc
    if not isinstance(override, dict):
        raise CalibrationError("calibration document must be a JSON object")
    unknown = set(override) - {"gemm_dil", "comm_dil", "gemm_cil", "comm_cil", "shard_overlap_cil_scale"}
    if unknown:
        raise CalibrationError(f"unknown calibration keys: {sorted(unknown)}")
    return _model_from_dict(_merge(_default_doc(), override))
