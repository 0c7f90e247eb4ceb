"""Reproducible experiments behind the acceptance checks and the demo scripts.

Every function is deterministic for a given seed.  The default topology is a
small four-group machine (64 nodes) whose router tiles forward one flit every
two cycles, so a single minimal path cannot absorb a full NIC stream.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

from .counters import ModelInputs, predict_tmsg
from .engine import Simulator
from .harness import BackgroundSpec, ExperimentConfig, inject_cross_traffic, run_experiment
from .packets import Message, flit_counts
from .policy import (
    Arm,
    PolicyState,
    calibrate_scaling,
    record_observation,
    select_routing,
)
from .routing import RoutingMode
from .stats import pearson, qcd
from .topology import NodeId, Topology, TopologyConfig, build_topology
from .workloads import make_allocation

SCENARIO_TOPOLOGY = TopologyConfig(
    groups=4, chassis_per_group=2, blades_per_chassis=4, nodes_per_router=2,
    global_links_per_router=1, link_cycle_cost=4, router_flit_interval=2,
)
# tiles as fast as the NIC: the uncongested case the model describes
FIDELITY_TOPOLOGY = replace(SCENARIO_TOPOLOGY, router_flit_interval=1)
FIDELITY_SIZES = (128, 512, 2048, 8192, 32768, 131072, 524288, 1048576)
A0, A2, A3 = RoutingMode.ADAPTIVE_0, RoutingMode.ADAPTIVE_2, RoutingMode.ADAPTIVE_3


def _topo_dict(cfg: TopologyConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


# -- transmission-time model fidelity ----------------------------------------

@dataclass(frozen=True)
class FidelityPoint:
    size: int
    f: int
    p: int
    L: float
    s: float
    measured: int
    predicted: float

    @property
    def rel_error(self) -> float:
        return abs(self.predicted - self.measured) / self.measured


@dataclass(frozen=True)
class FidelityReport:
    points: tuple[FidelityPoint, ...]

    @property
    def correlation(self) -> float:
        return pearson([p.predicted for p in self.points], [p.measured for p in self.points])

    @property
    def max_rel_error(self) -> float:
        return max(p.rel_error for p in self.points)


def model_fidelity(sizes: Sequence[int] = FIDELITY_SIZES, topology: Topology | None = None,
                   mode: RoutingMode = RoutingMode.MIN_HASH, placement: str = "inter_group",
                   seed: int = 0) -> FidelityReport:
    """One isolated message per size; predict its time from its own counters."""
    topo = topology or build_topology(FIDELITY_TOPOLOGY)
    src, dst = make_allocation(topo, 2, placement, seed).nodes
    points = []
    for size in sizes:
        sim = Simulator(topo, seed=seed)
        before = sim.nic_counters(src)
        tag = sim.inject(Message(src, dst, size, mode=mode), 0)
        sim.run_until_idle()
        delta = sim.nic_counters(src) - before
        f, p = flit_counts(size)
        L = delta.req_packets_cum_latency / delta.req_packets
        s = delta.req_flits_stalled_cycles / delta.req_flits
        points.append(FidelityPoint(size, f, p, L, s, sim.measure_tmsg(tag),
                                    predict_tmsg(ModelInputs(L, s, f, p))))
    return FidelityReport(tuple(points))


# -- bias and path diversity --------------------------------------------------

@dataclass(frozen=True)
class BiasResult:
    mode: RoutingMode
    packets: int
    minimal: int

    @property
    def minimal_fraction(self) -> float:
        return self.minimal / self.packets


def bias_sweep(modes: Sequence[RoutingMode] = (A0, A2, A3), packets: int = 1000, gap: int = 10,
               load: float = 0.3, background_flows: int = 6, seed: int = 0,
               topology: Topology | None = None) -> dict[RoutingMode, BiasResult]:
    """Single-packet probes while neighbours load the probe's minimal global links.

    The background flows start in the probe's source group and end in its
    destination group, so every mode sees the same injected load.
    """
    topo = topology or build_topology(SCENARIO_TOPOLOGY)
    rng = random.Random(seed)
    g_src, g_dst = rng.sample(range(topo.config.groups), 2)
    src_pool = [n for n in topo.nodes if n.group == g_src]
    dst_pool = [n for n in topo.nodes if n.group == g_dst]
    rng.shuffle(src_pool)
    rng.shuffle(dst_pool)
    src, dst = src_pool[0], dst_pool[0]
    pairs = tuple(zip(src_pool[1:1 + background_flows], dst_pool[1:1 + background_flows]))
    horizon = packets * gap
    out = {}
    for mode in modes:
        mode = RoutingMode.parse(mode)
        sim = Simulator(topo, seed=seed)
        inject_cross_traffic(sim, BackgroundSpec(pairs=pairs, size=256, load=load, seed=seed),
                             active=lambda: sim.now < horizon)
        for i in range(packets):
            sim.inject(Message(src, dst, 64, mode=mode, tag=("probe", i)), i * gap)
        sim.run_until_idle()
        recs = [sim.message(("probe", i)) for i in range(packets)]
        out[mode] = BiasResult(mode, sum(r.routed_packets for r in recs),
                               sum(r.minimal_packets for r in recs))
    return out


# -- network noise ------------------------------------------------------------

def _bystander_pairs(topo: Topology, busy_groups: set[int]) -> list[list[list[int]]]:
    """Bidirectional flows between the two groups not used by the measured pair."""
    others = [g for g in range(topo.config.groups) if g not in busy_groups][:2]
    if len(others) < 2:
        raise ValueError("need at least two groups outside the measured allocation")
    a = [n for n in topo.nodes if n.group == others[0]]
    b = [n for n in topo.nodes if n.group == others[1]]
    fwd = [[list(x), list(y)] for x, y in zip(a, reversed(b))]
    back = [[list(y), list(x)] for x, y in zip(a, b)]
    return fwd + back


@dataclass(frozen=True)
class ModeSample:
    L: tuple[float, ...]
    s: tuple[float, ...]
    t: tuple[int, ...]
    minimal_fraction: float

    @property
    def qcd_L(self) -> float:
        return qcd(self.L)

    @property
    def median_L(self) -> float:
        return statistics.median(self.L)

    @property
    def mean_s(self) -> float:
        return statistics.fmean(self.s)


def _split_by_mode(records) -> dict[RoutingMode, ModeSample]:
    out = {}
    for mode in sorted({r.mode for r in records}):
        rows = [r for r in records if r.mode == mode]
        out[RoutingMode(mode)] = ModeSample(
            tuple(r.L_cycles for r in rows), tuple(r.s_per_flit for r in rows),
            tuple(r.t_msg_cycles for r in rows),
            statistics.fmean(r.minimal_fraction for r in rows))
    return out


@dataclass(frozen=True)
class NoiseReport:
    inter_group: dict[RoutingMode, ModeSample]
    intra_group: dict[RoutingMode, ModeSample]


def noise_variance(repetitions: int = 20, seed: int = 0, load: float = 0.1,
                   ping_bytes: int = 512, stream_bytes: int = 16384,
                   topology_config: TopologyConfig = SCENARIO_TOPOLOGY) -> NoiseReport:
    """Alternate Adaptive0 and Adaptive3 on successive iterations of one allocation.

    Inter-group ping-pong runs while unrelated jobs talk between the two
    remaining groups; the intra-group part streams larger messages between
    two blades of one chassis with no background at all.
    """
    topo = build_topology(topology_config)
    alloc = make_allocation(topo, 2, "inter_group", seed)
    base = {
        "topology": _topo_dict(topology_config),
        "routing": {"alternate": [A0.value, A3.value]},
        "seed": seed,
    }
    inter = ExperimentConfig.from_dict(base | {
        "allocation": {"size": 2, "placement_class": "inter_group", "seed": seed},
        "workload": {"kind": "pingpong", "size": ping_bytes, "iterations": 2 * repetitions,
                     "senders": [0], "think_time": 50},
        "background": {"pairs": _bystander_pairs(topo, {n.group for n in alloc.nodes}),
                       "size": 1024, "load": load, "seed": seed + 3, "burst": 2},
    })
    intra = ExperimentConfig.from_dict(base | {
        "allocation": {"size": 2, "placement_class": "inter_blade", "seed": seed},
        "workload": {"kind": "pingpong", "size": stream_bytes, "iterations": 2 * repetitions,
                     "senders": [0]},
    })
    return NoiseReport(_split_by_mode(run_experiment(inter, topo)),
                       _split_by_mode(run_experiment(intra, topo)))


@dataclass(frozen=True)
class VictimReport:
    baseline: ModeSample
    disturbed: ModeSample
    aggressor_minimal_fraction: float


def victim_noise(repetitions: int = 20, seed: int = 0, aggressors: int = 6,
                 message_bytes: int = 4096, victim_bytes: int = 2048,
                 topology: Topology | None = None) -> VictimReport:
    """A job in one group suffers from adaptive traffic it never asked for.

    Aggressor nodes stream between two other groups on Adaptive0.  Once the
    direct global links fill up, part of that stream detours through the
    victim's group and competes with the victim's own ping-pong.
    """
    topo = topology or build_topology(SCENARIO_TOPOLOGY)
    G = topo.config.groups
    if G < 3:
        raise ValueError("victim scenario needs at least three groups")
    g_src, g_dst, g_victim = 0, 1, 2
    victim = [n for n in topo.nodes if n.group == g_victim]
    # two routers that terminate global links, so detours cross the victim's path
    gw = sorted({u for (u, v), k in topo.link_kind.items() if k == "global" and u.group == g_victim})
    va = topo.nodes_of(gw[0])[0]
    vb = topo.nodes_of(gw[-1])[0] if gw[-1] != gw[0] else victim[-1]
    src = [n for n in topo.nodes if n.group == g_src][:aggressors]
    dst = [n for n in topo.nodes if n.group == g_dst][:aggressors]

    def run(disturb: bool):
        sim = Simulator(topo, seed=seed)
        agg_tags = []
        if disturb:
            for i, (a, b) in enumerate(zip(src, dst)):
                for k in range(4 * repetitions):
                    agg_tags.append(sim.inject(Message(a, b, message_bytes, mode=A0,
                                                       tag=("agg", i, k)), 0))
        tags = []

        def ping(k):
            def go(t):
                if k < repetitions:
                    tags.append(sim.inject(Message(va, vb, victim_bytes,
                                                   mode=RoutingMode.MIN_HASH, tag=("v", k)), t))
            return go

        def after(rec, t):
            if rec.tag[0] == "v":
                sim.call_at(t + 20, ping(rec.tag[1] + 1))

        sim.on_complete(after)
        sim.call_at(200, ping(0))
        sim.run_until_idle()
        recs = [sim.message(t) for t in tags]
        sample = ModeSample(tuple(r.cum_latency / r.packets_sent for r in recs),
                            tuple(r.stalled / r.req_flits for r in recs),
                            tuple(r.tmsg for r in recs), 1.0)
        agg = [sim.message(t) for t in agg_tags]
        routed = sum(r.routed_packets for r in agg)
        frac = sum(r.minimal_packets for r in agg) / routed if routed else 1.0
        return sample, frac

    baseline, _ = run(False)
    disturbed, frac = run(True)
    return VictimReport(baseline, disturbed, frac)


# -- allocation spread --------------------------------------------------------

SPREAD_ORDER = ("inter_node", "inter_blade", "inter_chassis", "inter_group")


@dataclass(frozen=True)
class SpreadResult:
    placement: str
    times: tuple[int, ...]

    @property
    def median(self) -> float:
        return statistics.median(self.times)

    @property
    def qcd(self) -> float:
        return qcd(self.times)


def allocation_spread(iterations: int = 20, seed: int = 0, load: float = 0.1,
                      message_bytes: int = 64, background_nodes: int = 32,
                      background_bytes: int = 4096, burst: int = 1,
                      topology_config: TopologyConfig = SCENARIO_TOPOLOGY) -> dict[str, SpreadResult]:
    """Ping-pong time per placement class under uniform random background traffic."""
    topo = build_topology(topology_config)
    out = {}
    for placement in SPREAD_ORDER:
        cfg = ExperimentConfig.from_dict({
            "topology": _topo_dict(topology_config),
            "allocation": {"size": 2, "placement_class": placement, "seed": seed},
            "workload": {"kind": "pingpong", "size": message_bytes, "iterations": iterations,
                         "senders": [0], "think_time": 50},
            "routing": {"static": A0.value},
            "background": {"nodes": background_nodes, "size": background_bytes, "load": load,
                           "seed": seed + 11, "burst": burst},
            "seed": seed,
        })
        recs = run_experiment(cfg, topo)
        out[placement] = SpreadResult(placement, tuple(r.t_msg_cycles for r in recs))
    return out


# -- policy against a regime-switching environment -----------------------------

@dataclass(frozen=True)
class Regime:
    """Per-arm latency and stall ratio the network shows while the regime lasts."""

    name: str
    L_default: float
    s_default: float
    L_high_bias: float
    s_high_bias: float
    message_bytes: int
    messages: int

    def counters(self, arm: Arm) -> tuple[float, float]:
        if arm is Arm.DEFAULT:
            return self.L_default, self.s_default
        return self.L_high_bias, self.s_high_bias

    def time(self, arm: Arm, jitter: float = 1.0) -> float:
        L, s = self.counters(arm)
        f, p = flit_counts(self.message_bytes)
        return predict_tmsg(ModelInputs(L * jitter, s * jitter, f, p))


# Regime A: a quiet job whose large transfers gain from path diversity.
# Regime B: medium transfers on a noisy machine where high bias halves latency.
DEFAULT_REGIMES = (
    Regime("path-diverse", 1000.0, 0.2, 1000.0, 1.0, 65536, 40),
    Regime("noisy", 3000.0, 0.3, 1500.0, 0.35, 8192, 40),
)


@dataclass(frozen=True)
class RegretReport:
    policy_time: float
    static_time: dict[Arm, float]
    best_per_regime_time: float
    default_arm_fraction: float
    choices: tuple[Arm, ...] = field(repr=False, default=())

    @property
    def regret(self) -> float:
        return self.policy_time / self.best_per_regime_time - 1.0


def policy_regret(regimes: Sequence[Regime] = DEFAULT_REGIMES, rounds: int = 2, seed: int = 0,
                  noise: float = 0.05, read_penalty: int = 0,
                  calibrate: bool = True) -> RegretReport:
    """Run the selection policy and both static arms through the same regime sequence.

    Each message costs the transmission-time model's prediction for the arm
    it used, with a shared multiplicative jitter; the policy only ever sees
    the counters of the arm it actually picked.
    """
    rng = random.Random(seed)
    schedule = [r for _ in range(rounds) for r in regimes for _ in range(r.messages)]
    jitter = [math.exp(rng.gauss(0.0, noise)) for _ in schedule]
    lam = sig = 1.0
    if calibrate:
        lam, sig = calibrate_scaling(
            (r.L_default, r.s_default, r.L_high_bias, r.s_high_bias) for r in regimes)
    state = PolicyState(lambda_ad=lam, sigma_ad=sig, read_penalty=read_penalty)
    policy_time = 0.0
    static = {Arm.DEFAULT: 0.0, Arm.HIGH_BIAS: 0.0}
    best = 0.0
    choices = []
    for regime, j in zip(schedule, jitter):
        evals = state.evaluations
        mode = select_routing(regime.message_bytes, state)
        arm = state.arm_of(mode)
        choices.append(arm)
        policy_time += regime.time(arm, j)
        if state.evaluations > evals:
            policy_time += state.read_penalty
        L, s = regime.counters(arm)
        record_observation(mode, L * j, s * j, state)
        per_arm = {a: regime.time(a, j) for a in static}
        for a in static:
            static[a] += per_arm[a]
    for regime in regimes:
        idx = [i for i, r in enumerate(schedule) if r is regime]
        best += min(sum(regime.time(a, jitter[i]) for i in idx) for a in static)
    return RegretReport(policy_time, static, best, state.default_arm_fraction, tuple(choices))


# -- scaling-factor calibration ---------------------------------------------------

def calibration_samples(sizes: Sequence[int] = (4096, 32768, 131072), seed: int = 0,
                        placement: str = "inter_group",
                        topology: Topology | None = None) -> list[tuple[float, float, float, float]]:
    """Measure (L, s) for both policy arms on an idle network at several sizes."""
    topo = topology or build_topology(SCENARIO_TOPOLOGY)
    src, dst = make_allocation(topo, 2, placement, seed).nodes
    out = []
    for size in sizes:
        row = []
        for mode in (A0, A3):
            sim = Simulator(topo, seed=seed)
            tag = sim.inject(Message(src, dst, size, mode=mode), 0)
            sim.run_until_idle()
            rec = sim.message(tag)
            row += [rec.cum_latency / rec.packets_sent, rec.stalled / rec.req_flits]
        out.append(tuple(row))
    return out
