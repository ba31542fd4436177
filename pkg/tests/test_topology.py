import pytest
from hypothesis import given, strategies as st

from overlap_sim.topology import (
    Topology,
    TopologyKind,
    a2a_round_time,
    all_gather_time,
    p2p_step_time,
)

MESH8 = Topology(kind=TopologyKind.MESH, n_gpus=8, link_bw=64e9)
SWITCH8 = Topology(kind=TopologyKind.SWITCH, n_gpus=8, link_bw=64e9, nic_bw=448e9)

G1_SHARD = 2048 * 131072 * 2  # 536,870,912 bytes
G1_CHUNK = 256 * 131072 * 2  # 67,108,864 bytes


def test_nic_bw_defaults_to_aggregate():
    topo = Topology(kind=TopologyKind.SWITCH, n_gpus=8, link_bw=64e9)
    assert topo.nic_bw == 7 * 64e9


def test_all_gather_zero():
    assert all_gather_time(MESH8, 0) == 0.0


def test_all_gather_mesh_g1():
    assert all_gather_time(MESH8, G1_SHARD) == pytest.approx(8.3886e-3, rel=1e-4)


def test_all_gather_switch_matches_mesh_at_equal_aggregate():
    assert all_gather_time(SWITCH8, G1_SHARD) == pytest.approx(all_gather_time(MESH8, G1_SHARD))


def test_p2p_step_mesh_and_ring_total():
    step = p2p_step_time(MESH8, G1_SHARD)
    assert step == pytest.approx(8.3886e-3, rel=1e-4)
    # One full ring pass is (n-1) steps: exactly 7x the parallel all-gather.
    assert 7 * step == 7 * all_gather_time(MESH8, G1_SHARD)


def test_p2p_step_switch():
    assert p2p_step_time(SWITCH8, G1_SHARD) == pytest.approx(536870912 / 448e9)


def test_a2a_round_mesh_g1():
    assert a2a_round_time(MESH8, G1_CHUNK) == pytest.approx(1.048576e-3)
    assert 8 * a2a_round_time(MESH8, G1_CHUNK) == all_gather_time(MESH8, G1_SHARD)


def test_a2a_round_switch():
    assert a2a_round_time(SWITCH8, G1_CHUNK) == pytest.approx(7 * 67108864 / 448e9)
    assert a2a_round_time(SWITCH8, 0) == 0.0


@given(
    bytes_=st.floats(min_value=1.0, max_value=1e12),
    bw=st.floats(min_value=1e6, max_value=1e13),
    n=st.integers(min_value=2, max_value=16),
)
def test_linear_scaling(bytes_, bw, n):
    topo = Topology(kind=TopologyKind.MESH, n_gpus=n, link_bw=bw)
    assert all_gather_time(topo, 2 * bytes_) == pytest.approx(2 * all_gather_time(topo, bytes_))
    double_bw = Topology(kind=TopologyKind.MESH, n_gpus=n, link_bw=2 * bw)
    assert all_gather_time(double_bw, bytes_) == pytest.approx(all_gather_time(topo, bytes_) / 2)


@given(
    shard=st.integers(min_value=64, max_value=1 << 32).filter(lambda v: v % 16 == 0),
    n=st.sampled_from([2, 4, 8, 16]),
)
def test_rounds_sum_to_all_gather_on_mesh(shard, n):
    topo = Topology(kind=TopologyKind.MESH, n_gpus=n, link_bw=64e9)
    chunk = shard / n
    assert n * a2a_round_time(topo, chunk) == pytest.approx(all_gather_time(topo, shard), rel=1e-12)


def test_negative_bytes_rejected():
    with pytest.raises(ValueError):
        all_gather_time(MESH8, -1)
    with pytest.raises(ValueError):
        p2p_step_time(MESH8, -1)
    with pytest.raises(ValueError):
        a2a_round_time(MESH8, -1)
