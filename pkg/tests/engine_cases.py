"""Randomized small-topology load cases shared by the engine and acceptance tests."""

import math

from hypothesis import strategies as st

from dragonroute.engine import Simulator
from dragonroute.packets import Message, flit_counts
from dragonroute.routing import RoutingMode
from dragonroute.topology import TopologyConfig, build_topology

_topologies = {}


def topology_for(key):
    if key not in _topologies:
        groups, chassis, blades, nodes, q, c, interval, lanes = key
        h = max(1, math.ceil((groups - 1) / (chassis * blades)))
        _topologies[key] = build_topology(TopologyConfig(
            groups=groups, chassis_per_group=chassis, blades_per_chassis=blades,
            nodes_per_router=nodes, global_links_per_router=h, queue_capacity=q,
            link_cycle_cost=c, router_flit_interval=interval,
            global_tiles_per_connection=lanes))
    return _topologies[key]


topology_keys = st.tuples(
    st.integers(1, 3), st.integers(1, 2), st.integers(1, 3), st.integers(1, 2),
    st.integers(1, 6), st.integers(1, 3), st.integers(1, 2), st.integers(1, 2),
)

message = st.tuples(
    st.integers(0, 10_000), st.integers(0, 10_000), st.integers(1, 700),
    st.sampled_from(["PUT", "GET"]), st.sampled_from([m.value for m in RoutingMode]),
    st.integers(0, 30),
)

load_cases = st.fixed_dictionaries({
    "topology": topology_keys,
    "messages": st.lists(message, min_size=1, max_size=8),
    "max_outstanding": st.sampled_from([1, 2, 3, 1024]),
    "seed": st.integers(0, 2**16),
})


def run_case(case):
    """Run one case with per-cycle invariant checks; return the finished simulator."""
    topo = topology_for(case["topology"])
    nodes = topo.nodes
    sim = Simulator(topo, seed=case["seed"], check_invariants=True,
                    max_outstanding=case["max_outstanding"], max_cycles=200_000)
    expected_flits = expected_packets = 0
    for i, (a, b, size, kind, mode, at) in enumerate(case["messages"]):
        src, dst = nodes[a % len(nodes)], nodes[b % len(nodes)]
        sim.inject(Message(src, dst, size, kind, mode, tag=i), at)
        if src != dst:
            f, p = flit_counts(size, kind)
            expected_flits += f
            expected_packets += p
    sim.run_until_idle()
    sim.verify()
    assert sim.all_acknowledged()
    assert sim.flits_on_links == 0 and sim.queued_total() == 0
    assert sum(n.req_flits for n in sim.nics) == expected_flits
    assert sum(n.req_packets for n in sim.nics) == expected_packets
    assert all(0 <= n.max_outstanding_seen <= min(case["max_outstanding"], 1024)
               for n in sim.nics)
    assert all(n.outstanding == 0 for n in sim.nics)
    for rec in sim.records.values():
        assert rec.delivered_cycle is not None and rec.delivered_cycle >= rec.rx_cycle
    return sim
