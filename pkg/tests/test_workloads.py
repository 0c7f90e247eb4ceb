import math
from collections import Counter

import pytest

from dragonroute.routing import RoutingMode
from dragonroute.workloads import (
    PLACEMENTS,
    Allocation,
    AllocationError,
    Alternation,
    RankMismatch,
    StaticRouting,
    TrafficPattern,
    attach_policy,
    grid_dims,
    make_allocation,
    pair_class,
    schedule,
    spread_class,
)


def plan(kind, n, size=64, iterations=1, **params):
    return schedule(TrafficPattern(kind, size, iterations, params), n)


def test_pingpong_alternates():
    p = plan("pingpong", 2)
    assert [(m.src, m.dst) for m in p.messages] == [(0, 1), (1, 0)]
    assert p.messages[1].deps == (p.messages[0].id,)
    with pytest.raises(RankMismatch):
        plan("pingpong", 3)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_alltoall_counts(n):
    p = plan("alltoall", n)
    assert len(p.messages) == n * (n - 1)
    assert Counter((m.src, m.dst) for m in p.messages) == Counter(
        (i, j) for i in range(n) for j in range(n) if i != j)


def test_halo3d_corner_grid():
    p = plan("halo3d", 8)
    assert len(p.messages) == 24
    assert all(c == 3 for c in Counter(m.src for m in p.messages).values())


def test_allreduce_recursive_doubling():
    p = plan("allreduce", 8, size=16)
    assert p.pattern.message_bytes == 64
    recv = Counter(m.dst for m in p.messages)
    assert set(recv.values()) == {int(math.log2(8))}
    with pytest.raises(RankMismatch):
        plan("allreduce", 6)


def test_broadcast_reaches_everyone_once():
    p = plan("broadcast", 7, root=2)
    assert sorted(m.dst for m in p.messages) == [0, 1, 3, 4, 5, 6]


def test_barrier_rounds():
    p = plan("barrier", 5)
    assert len(p.messages) == 5 * math.ceil(math.log2(5))


def test_sweep3d_wavefront_from_corner():
    p = plan("sweep3d", 6, kblocks=2)
    first = [m for m in p.messages if not m.deps]
    assert first and all(m.src == 0 for m in first)


@pytest.mark.parametrize("kind,n", [("pingpong", 2), ("alltoall", 4), ("allreduce", 4),
                                    ("barrier", 6), ("broadcast", 5), ("halo3d", 12),
                                    ("sweep3d", 9)])
def test_plans_are_acyclic_and_deterministic(kind, n):
    a = plan(kind, n, iterations=3)
    assert len(a.topological_order()) == len(a.messages)
    assert a == plan(kind, n, iterations=3)
    later = [m for m in a.messages if m.iteration == 2]
    assert all(m.deps for m in later)


def test_grid_dims_balanced():
    assert grid_dims(8, 3) == (2, 2, 2)
    assert grid_dims(12, 3) == (3, 2, 2)
    assert grid_dims(6, 2) == (3, 2)


def test_attach_policy_modes():
    p = plan("pingpong", 2, iterations=4)
    alt = attach_policy(p, Alternation((RoutingMode.ADAPTIVE_0, RoutingMode.ADAPTIVE_3)))
    by_it = {m.iteration: m.mode for m in alt.messages}
    assert [by_it[i] for i in range(4)] == [RoutingMode.ADAPTIVE_0, RoutingMode.ADAPTIVE_3] * 2
    static = attach_policy(p, StaticRouting(RoutingMode.MIN_HASH))
    assert {m.mode for m in static.messages} == {RoutingMode.MIN_HASH}
    pol = attach_policy(plan("alltoall", 4), {"trigger_threshold": 4096})
    assert pol.policy["alltoall"] is True
    assert attach_policy(p, {}).policy["alltoall"] is False


@pytest.mark.parametrize("placement", PLACEMENTS)
def test_allocations_have_requested_spread(topo, placement):
    for seed in range(5):
        a = make_allocation(topo, 2, placement, seed)
        assert len(set(a.nodes)) == 2
        if placement != "scattered":
            assert pair_class(*a.nodes) == placement
            assert spread_class(a.nodes) == placement


def test_allocation_excludes_and_is_deterministic(topo):
    a = make_allocation(topo, 4, "scattered", 3)
    b = make_allocation(topo, 4, "scattered", 3, exclude=a.nodes)
    assert a == make_allocation(topo, 4, "scattered", 3)
    assert not set(a.nodes) & set(b.nodes)
    with pytest.raises(AllocationError):
        make_allocation(topo, 3, "inter_node", 0)
    with pytest.raises(AllocationError):
        Allocation((a.nodes[0], a.nodes[0]), "scattered")
