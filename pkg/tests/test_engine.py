import pytest
from hypothesis import HealthCheck, given, settings

from dragonroute.counters import ModelInputs, predict_tmsg_small
from dragonroute.engine import (
    LivelockGuard,
    NotYetDelivered,
    Simulator,
    SimulationError,
    UnknownTag,
    simulate,
)
from dragonroute.packets import Message
from dragonroute.routing import RoutingMode
from dragonroute.topology import NodeId, TopologyConfig, build_topology

from conftest import small_config
from engine_cases import load_cases, run_case


def one_hop_pair(topo):
    return NodeId(0, 0, 0, 0), NodeId(0, 0, 1, 0)


@pytest.mark.parametrize("c", [1, 4, 10])
def test_single_packet_hand_trace(c):
    topo = build_topology(small_config(link_cycle_cost=c))
    a, b = one_hop_pair(topo)
    sim = Simulator(topo, record_events=True)
    tag = sim.inject(Message(a, b, 64), 0)
    sim.run_until_idle()
    # first flit leaves at 1, tail at 5; one NIC->router cycle, one link, one ejection cycle
    assert sim.events[1].startswith("1,REQ_FLIT,nic")
    assert sim.measure_tmsg(tag) == 7 + c
    # response leaves one cycle after delivery and retraces the same three channels
    assert sim.nic_counters(a).req_packets_cum_latency == 9 + 2 * c


def test_small_message_model_on_multi_hop_path():
    topo = build_topology(small_config(link_cycle_cost=10))
    src, dst = topo.nodes[0], topo.nodes[-1]
    sim = Simulator(topo)
    tag = sim.inject(Message(src, dst, 64, mode=RoutingMode.MIN_HASH), 0)
    sim.run_until_idle()
    L = sim.nic_counters(src).req_packets_cum_latency
    assert predict_tmsg_small(ModelInputs(L, 0, 5, 1)) == pytest.approx(sim.measure_tmsg(tag),
                                                                        rel=0.10)


def test_loopback_costs_nothing(topo):
    sim = Simulator(topo)
    n = topo.nodes[5]
    tag = sim.inject(Message(n, n, 1000), 3)
    assert sim.run_until_idle() == 0
    assert sim.measure_tmsg(tag) == 0


def test_empty_run_returns_zero(topo):
    assert Simulator(topo).run_until_idle() == 0


def test_fifo_per_nic(topo):
    a, b = topo.nodes[0], topo.nodes[-1]
    sim = simulate(topo, [(Message(a, b, 640, tag="x"), 0), (Message(a, b, 64, tag="y"), 0)])
    assert sim.message("x").delivered_cycle < sim.message("y").delivered_cycle


def test_congestion_never_helps(topo):
    a, b, c = topo.nodes[0], topo.nodes[1], topo.nodes[-1]
    alone = simulate(topo, [(Message(a, c, 4096, tag="m"), 0)])
    shared = simulate(topo, [(Message(a, c, 4096, tag="m"), 0), (Message(b, c, 65536), 0)])
    assert shared.measure_tmsg("m") >= alone.measure_tmsg("m")


def test_outstanding_cap_waits_without_stalls():
    topo = build_topology(small_config(link_cycle_cost=30))
    a, b = topo.nodes[0], topo.nodes[-1]
    sim = Simulator(topo, max_outstanding=4, check_invariants=True)
    sim.inject(Message(a, b, 64 * 40, mode=RoutingMode.MIN_HASH), 0)
    sim.run_until_idle()
    nic = sim.nics[topo.node_index(a)]
    assert nic.max_outstanding_seen == 4
    assert nic.req_flits_stalled_cycles == 0


def test_large_message_respects_window(topo):
    a, b = topo.nodes[0], topo.nodes[-1]
    sim = Simulator(topo)
    sim.inject(Message(a, b, 70_000 * 64, mode=RoutingMode.MIN_HASH), 0)
    sim.run_until(3000)
    assert sim.nics[0].max_outstanding_seen <= 1024


def test_queue_bound_with_two_senders(topo):
    a, b, c = topo.nodes[0], topo.nodes[1], topo.nodes[-1]
    simulate(topo, [(Message(a, c, 8192), 0), (Message(b, c, 8192), 0)], check_invariants=True)


def test_determinism(topo):
    def run():
        msgs = [(Message(topo.nodes[i], topo.nodes[-1 - i], 2000, mode="ADAPTIVE_0"), i)
                for i in range(6)]
        sim = simulate(topo, msgs, seed=5, record_events=True)
        return sim.events, [n.counters for n in sim.nics]

    assert run() == run()


def test_errors(topo):
    sim = Simulator(topo, max_cycles=10)
    with pytest.raises(UnknownTag):
        sim.message("nope")
    tag = sim.inject(Message(topo.nodes[0], topo.nodes[-1], 64), 0)
    with pytest.raises(NotYetDelivered):
        sim.measure_tmsg(tag)
    with pytest.raises(SimulationError):
        sim.inject(Message(topo.nodes[0], topo.nodes[-1], 64, tag=tag), 0)
    with pytest.raises(LivelockGuard):
        sim.run_until_idle()


def test_cannot_inject_in_the_past(topo):
    sim = Simulator(topo)
    sim.inject(Message(topo.nodes[0], topo.nodes[-1], 64), 0)
    sim.run_until_idle()
    with pytest.raises(SimulationError):
        sim.inject(Message(topo.nodes[0], topo.nodes[-1], 64), 0)


def test_decisions_are_recorded(topo):
    sim = Simulator(topo, keep_decisions=True)
    tag = sim.inject(Message(topo.nodes[0], topo.nodes[-1], 640, mode="ADAPTIVE_0"), 0)
    sim.run_until_idle()
    rec = sim.message(tag)
    assert len(rec.decisions) == rec.routed_packets == rec.num_packets


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(load_cases)
def test_flow_control_invariants(case):
    run_case(case)
