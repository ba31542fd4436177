"""Interconnect model: direct-connect mesh vs. switch, bandwidth-only links.

Transfers are priced purely by bandwidth; an optional per-message latency
constant is carried in the config for sensitivity studies but defaults to 0
(the transfer sizes of interest are large enough that bandwidth dominates).
Bidirectional links are modeled as two independent uni-directional channels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class TopologyKind(enum.Enum):
    MESH = "mesh"
    SWITCH = "switch"


@dataclass(frozen=True)
class Topology:
    """GPU interconnect.

    MESH: every GPU pair has a dedicated uni-directional link of link_bw.
    SWITCH: each GPU has one NIC of aggregate bandwidth nic_bw with flexible
    per-peer allocation. nic_bw defaults to (n_gpus - 1) * link_bw so both
    kinds expose equal aggregate bandwidth and differ only in the pattern
    constraints.
    """

    kind: TopologyKind
    n_gpus: int
    link_bw: float = 64e9
    nic_bw: float | None = None
    latency: float = 0.0

    def __post_init__(self):
        if self.n_gpus < 2:
            raise ValueError(f"Topology.n_gpus must be >= 2, got {self.n_gpus}")
        if self.link_bw <= 0:
            raise ValueError("Topology.link_bw must be strictly positive")
        if self.nic_bw is None:
            object.__setattr__(self, "nic_bw", (self.n_gpus - 1) * self.link_bw)
        if self.nic_bw <= 0:
            raise ValueError("Topology.nic_bw must be strictly positive")
        if self.latency < 0:
            raise ValueError("Topology.latency must be >= 0")


def all_gather_time(topo: Topology, shard_bytes: float) -> float:
    """Wire time for every GPU to collect one shard from every peer.

    On a mesh each GPU receives the n-1 distinct shards concurrently on its
    n-1 ingress links; on a switch the NIC serializes them.
    """
    if shard_bytes < 0:
        raise ValueError("shard_bytes must be >= 0")
    if topo.kind is TopologyKind.MESH:
        return shard_bytes / topo.link_bw
    return (topo.n_gpus - 1) * shard_bytes / topo.nic_bw


def p2p_step_time(topo: Topology, bytes_: float) -> float:
    """Wire time for one ring step: one neighbor pair exchanging a payload.

    On a mesh exactly one of the n-1 egress links carries the payload, so a
    full ring pass costs (n-1) such steps. A switch can grant the pair its
    whole NIC budget.
    """
    if bytes_ < 0:
        raise ValueError("bytes must be >= 0")
    if topo.kind is TopologyKind.MESH:
        return bytes_ / topo.link_bw
    return bytes_ / topo.nic_bw


def a2a_round_time(topo: Topology, chunk_bytes: float) -> float:
    """Wire time for one all-to-all round: every GPU sends one chunk to every peer.

    On a mesh all per-pair chunks ride their dedicated links concurrently;
    on a switch each NIC pushes its n-1 chunks back to back.
    """
    if chunk_bytes < 0:
        raise ValueError("chunk_bytes must be >= 0")
    if topo.kind is TopologyKind.MESH:
        return chunk_bytes / topo.link_bw
    return (topo.n_gpus - 1) * chunk_bytes / topo.nic_bw
