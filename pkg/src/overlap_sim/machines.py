"""Machine-file loading: one JSON document describes GPU rates, the
interconnect, and the heuristic reference time."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from overlap_sim.core import CommAgent, MachineConfig
from overlap_sim.topology import Topology, TopologyKind

_MACHINE_KEYS = {
    "topology", "n_gpus", "link_bw", "nic_bw", "peak_flops", "mem_bw",
    "gemm_efficiency", "copy_efficiency", "n_dma_engines", "launch_overhead",
    "comm_agent", "t_ref", "latency", "noise",
}


@dataclass(frozen=True)
class MachineSpec:
    """A machine config plus its interconnect and heuristic reference time."""

    machine: MachineConfig
    topo: Topology
    t_ref: float = 1.0


def machine_spec_from_dict(doc: dict) -> MachineSpec:
    unknown = set(doc) - _MACHINE_KEYS - {"_comment"}
    if unknown:
        raise ValueError(f"unknown machine config keys: {sorted(unknown)}")
    for key in ("topology", "n_gpus", "link_bw", "peak_flops"):
        if key not in doc:
            raise ValueError(f"machine config missing required key {key!r}")
    kind_token = str(doc["topology"]).lower()
    try:
        kind = TopologyKind(kind_token)
    except ValueError as exc:
        raise ValueError(f"topology must be 'mesh' or 'switch', got {kind_token!r}") from exc
    topo = Topology(
        kind=kind,
        n_gpus=int(doc["n_gpus"]),
        link_bw=float(doc["link_bw"]),
        nic_bw=float(doc["nic_bw"]) if doc.get("nic_bw") is not None else None,
        latency=float(doc.get("latency", 0.0)),
    )
    agent_token = str(doc.get("comm_agent", "dma")).lower()
    try:
        agent = CommAgent(agent_token)
    except ValueError as exc:
        raise ValueError(f"comm_agent must be 'dma' or 'core', got {agent_token!r}") from exc
    machine = MachineConfig(
        peak_flops=float(doc["peak_flops"]),
        mem_bw=float(doc.get("mem_bw", 5.3e12)),
        gemm_efficiency=float(doc.get("gemm_efficiency", 0.65)),
        copy_efficiency=float(doc.get("copy_efficiency", 1.0)),
        n_dma_engines=int(doc.get("n_dma_engines", 8)),
        launch_overhead=float(doc.get("launch_overhead", 0.0)),
        comm_agent=agent,
        noise=float(doc.get("noise", 0.0)),
    )
    t_ref = float(doc.get("t_ref", 1.0))
    if t_ref <= 0:
        raise ValueError("t_ref must be strictly positive")
    return MachineSpec(machine=machine, topo=topo, t_ref=t_ref)


def load_machine(text: str) -> MachineSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"machine file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError("machine file must contain a JSON object")
    return machine_spec_from_dict(doc)


def default_machine() -> MachineSpec:
    """The bundled 8-GPU full-mesh machine used by the acceptance experiments."""
    raw = resources.files("overlap_sim.data").joinpath("machine_mesh.json").read_text()
    return load_machine(raw)


def example_machine() -> MachineSpec:
    """The simplified machine used by the worked examples (effective 1 Pflop/s)."""
    raw = resources.files("overlap_sim.data").joinpath("machine_example.json").read_text()
    return load_machine(raw)
