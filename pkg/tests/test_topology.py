import itertools
import random
from collections import deque

import pytest

from dragonroute.topology import (
    NoIntermediateGroup,
    NodeId,
    PathClass,
    RouterId,
    TopologyConfig,
    TopologyError,
    build_topology,
)

from conftest import small_config


def bfs(topo, src, max_global=1):
    """Independent oracle: shortest hop counts using at most ``max_global`` global links."""
    dist = {(src, 0): 0}
    best = {src: 0}
    q = deque([(src, 0)])
    while q:
        u, g = q.popleft()
        for v in topo.neighbors[u]:
            ng = g + (topo.link_kind[(u, v)] == "global")
            if ng > max_global or (v, ng) in dist:
                continue
            dist[(v, ng)] = dist[(u, g)] + 1
            best.setdefault(v, dist[(v, ng)])
            q.append((v, ng))
    return best


def test_full_scale_machine_counts():
    t = build_topology(TopologyConfig(groups=2))
    assert t.num_routers == 192
    assert t.num_nodes == 768


def test_singleton_topology():
    t = build_topology(TopologyConfig(groups=1, chassis_per_group=1, blades_per_chassis=1,
                                      nodes_per_router=1, global_links_per_router=1))
    assert t.num_routers == 1 and t.num_links == 0
    with pytest.raises(TopologyError):
        t.require_inter_group()


def test_five_groups_all_pairs_linked():
    t = build_topology(TopologyConfig(groups=5, chassis_per_group=2, blades_per_chassis=4,
                                      nodes_per_router=2, global_links_per_router=1))
    assert t.num_routers == 40 and t.num_nodes == 80
    for a, b in itertools.permutations(range(5), 2):
        assert (a, b) in t.global_links
    reach = bfs(t, t.routers[0], max_global=99)
    assert len(reach) == 40


def test_rejects_too_few_global_links():
    cfg = TopologyConfig(groups=10, chassis_per_group=1, blades_per_chassis=2,
                         nodes_per_router=1, global_links_per_router=1)
    with pytest.raises(TopologyError):
        build_topology(cfg)


@pytest.mark.parametrize("field", ["groups", "chassis_per_group", "queue_capacity",
                                   "link_cycle_cost"])
def test_rejects_non_positive(field):
    kw = dict(groups=2)
    kw[field] = 0
    with pytest.raises(ValueError):
        TopologyConfig(**kw)


def test_local_wiring(topo):
    cfg = topo.config
    r = RouterId(1, 0, 2)
    chassis_mates = {RouterId(1, 0, b) for b in range(cfg.blades_per_chassis)} - {r}
    row = {RouterId(1, c, 2) for c in range(cfg.chassis_per_group)} - {r}
    local = {v for v in topo.neighbors[r] if topo.link_kind[(r, v)] != "global"}
    assert local == chassis_mates | row


def test_same_router_path_is_empty(topo):
    r = topo.routers[3]
    (p,) = topo.minimal_paths(r, r)
    assert p.hop_count == 0


def test_same_chassis_paths_have_one_hop(topo):
    paths = topo.minimal_paths(RouterId(0, 1, 0), RouterId(0, 1, 3))
    assert paths and all(p.hop_count == 1 for p in paths)


def test_minimal_paths_match_bfs_oracle(topo):
    # minimal routes use at most one global link, so the oracle is bounded the same way
    for src in topo.routers[::3]:
        dist = bfs(topo, src)
        for dst in topo.routers:
            paths = topo.minimal_paths(src, dst)
            assert {p.hop_count for p in paths} == {dist[dst]}
            for p in paths:
                assert topo.validate_path(p)
                limit = 2 if src.group == dst.group else 5
                assert p.hop_count <= limit


def test_minimal_paths_limit(topo):
    paths = topo.minimal_paths(RouterId(0, 0, 0), RouterId(2, 1, 3), limit=1)
    assert len(paths) == 1


def test_nonminimal_transits_one_intermediate(topo3):
    rng = random.Random(4)
    for _ in range(200):
        src, dst = rng.sample(topo3.routers, 2)
        if src.group == dst.group:
            continue
        p = topo3.sample_nonminimal_path(src, dst, rng)
        assert p.cls is PathClass.NONMINIMAL
        assert p.intermediate_group == 3 - src.group - dst.group
        assert topo3.validate_path(p)
        assert topo3.minimal_distance(src, dst) <= p.hop_count <= 10
        groups = [h.group for h in p.hops]
        assert p.intermediate_group in groups


def test_two_groups_have_no_intermediate():
    t = build_topology(small_config(groups=2))
    with pytest.raises(NoIntermediateGroup):
        t.sample_nonminimal_path(RouterId(0, 0, 0), RouterId(1, 0, 0), random.Random(0))


def test_build_is_deterministic():
    a = build_topology(small_config())
    b = build_topology(small_config())
    assert a.link_lanes == b.link_lanes


def test_node_indexing(topo):
    for i, n in enumerate(topo.nodes):
        assert topo.node_index(n) == i
    assert topo.nodes_of(RouterId(0, 0, 1)) == [NodeId(0, 0, 1, 0), NodeId(0, 0, 1, 1)]
