"""Experiment runner: config parsing, trial execution, CSV output, summaries."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import random
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path as FsPath
from typing import Any, Iterable, Sequence

from .counters import NicCounters
from .engine import LivelockGuard, MessageRecord, Simulator
from .packets import Message, MessageKind, flit_counts
from .policy import Arm, PolicyState, record_observation, select_routing
from .routing import BiasProfile, RoutingMode
from .stats import describe
from .topology import NodeId, Topology, TopologyConfig, build_topology
from .workloads import (
    Allocation,
    Alternation,
    Plan,
    StaticRouting,
    TrafficPattern,
    attach_policy,
    make_allocation,
    schedule,
)

log = logging.getLogger(__name__)

CSV_VERSION = "#dragonroute-csv-v1"
CSV_COLUMNS = [
    "trial", "iteration", "sender", "mode", "t_msg_cycles", "L_cycles", "s_per_flit",
    "minimal_fraction", "req_flits", "req_flits_stalled", "req_packets", "req_cum_latency",
    "default_arm_fraction",
]
SUMMARY_COLUMNS = ["n", "q1", "median", "q3", "iqr", "qcd", "ci_low", "ci_high", "mean",
                   "normalized_median"]


class ConfigError(ValueError):
    pass


class EmptyRecords(ValueError):
    pass


# -- config -----------------------------------------------------------------

def _strict(section: str, data: dict, allowed: Iterable[str], required: Iterable[str] = ()):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    allowed = set(allowed)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"missing key(s) in {section!r}: {', '.join(missing)}")


@dataclass(frozen=True)
class AllocationSpec:
    size: int = 2
    placement_class: str = "inter_group"
    seed: int = 0


@dataclass(frozen=True)
class WorkloadSpec:
    pattern: TrafficPattern
    senders: tuple[int, ...] | None = None
    warmup: int = 0
    think_time: int = 0


@dataclass(frozen=True)
class RoutingSpec:
    static: RoutingMode | None = None
    alternate: tuple[RoutingMode, ...] | None = None
    policy: dict | None = None
    bias: BiasProfile = BiasProfile()

    def __post_init__(self):
        given = sum(x is not None for x in (self.static, self.alternate, self.policy))
        if given != 1:
            raise ConfigError("routing needs exactly one of 'static', 'alternate', 'policy'")

    def attach(self, plan: Plan) -> Plan:
        if self.static is not None:
            return attach_policy(plan, StaticRouting(self.static))
        if self.alternate is not None:
            return attach_policy(plan, Alternation(self.alternate))
        return attach_policy(plan, self.policy)


@dataclass(frozen=True)
class BackgroundSpec:
    pattern: str = "uniform"
    nodes: int = 0
    size: int = 4096
    load: float = 0.0
    mode: RoutingMode = RoutingMode.ADAPTIVE_0
    seed: int = 0
    placement: str = "scattered"
    pairs: tuple[tuple[NodeId, NodeId], ...] = ()
    burst: int = 1


@dataclass(frozen=True)
class EngineSpec:
    max_cycles: int = 50_000_000
    max_outstanding: int = 1024
    cycles_per_us: float = 1000.0


POLICY_KEYS = {"trigger_threshold", "lambda_ad", "sigma_ad", "staleness_limit", "hysteresis",
               "read_penalty"}


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig
    allocation: AllocationSpec
    workload: WorkloadSpec
    routing: RoutingSpec
    trials: int = 1
    seed: int = 0
    output: str | None = None
    background: BackgroundSpec | None = None
    engine: EngineSpec = EngineSpec()
    workers: int = 1
    sweep: dict | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        _strict("config", data,
                {"topology", "allocation", "workload", "routing", "trials", "seed", "output",
                 "background", "engine", "workers", "sweep"},
                {"topology", "allocation", "workload", "routing"})
        try:
            topo_d = data["topology"]
            _strict("topology", topo_d, {f.name for f in fields(TopologyConfig)}, ["groups"])
            topology = TopologyConfig(**topo_d)

            alloc_d = data["allocation"]
            _strict("allocation", alloc_d, {"size", "placement_class", "seed"})
            allocation = AllocationSpec(**alloc_d)

            wl = data["workload"]
            _strict("workload", wl, {"kind", "size", "iterations", "params", "senders", "warmup",
                                     "think_time"}, ["kind", "size"])
            pattern = TrafficPattern(wl["kind"], int(wl["size"]), int(wl.get("iterations", 1)),
                                     dict(wl.get("params", {})))
            senders = wl.get("senders")
            workload = WorkloadSpec(pattern, tuple(senders) if senders is not None else None,
                                    int(wl.get("warmup", 0)), int(wl.get("think_time", 0)))

            rt = data["routing"]
            _strict("routing", rt, {"static", "alternate", "policy", "bias"})
            bias = BiasProfile(**rt.get("bias", {})) if "bias" in rt else BiasProfile()
            policy = rt.get("policy")
            if policy is not None:
                _strict("policy", policy, POLICY_KEYS)
            routing = RoutingSpec(
                RoutingMode.parse(rt["static"]) if "static" in rt else None,
                tuple(RoutingMode.parse(m) for m in rt["alternate"]) if "alternate" in rt else None,
                dict(policy) if policy is not None else None,
                bias,
            )

            background = None
            if data.get("background") is not None:
                bg = data["background"]
                _strict("background", bg, {f.name for f in fields(BackgroundSpec)})
                bg = dict(bg)
                if "mode" in bg:
                    bg["mode"] = RoutingMode.parse(bg["mode"])
                if "pairs" in bg:
                    bg["pairs"] = tuple((NodeId(*a), NodeId(*b)) for a, b in bg["pairs"])
                background = BackgroundSpec(**bg)

            engine = EngineSpec()
            if "engine" in data:
                _strict("engine", data["engine"], {f.name for f in fields(EngineSpec)})
                engine = EngineSpec(**data["engine"])

            sweep = data.get("sweep")
            if sweep is not None:
                _strict("sweep", sweep, {"sizes", "modes"})

            return cls(topology, allocation, workload, routing,
                       trials=int(data.get("trials", 1)), seed=int(data.get("seed", 0)),
                       output=data.get("output"), background=background, engine=engine,
                       workers=int(data.get("workers", 1)), sweep=sweep)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | FsPath) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- records ----------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    trial: int
    iteration: int
    sender: int
    mode: str
    t_msg_cycles: int
    L_cycles: float
    s_per_flit: float
    minimal_fraction: float
    counters: NicCounters
    default_arm_fraction: float | None = None
    allocation_hash: str = ""
    size_bytes: int | None = None

    def row(self) -> dict[str, Any]:
        c = self.counters
        return {
            "trial": self.trial,
            "iteration": self.iteration,
            "sender": self.sender,
            "mode": self.mode,
            "t_msg_cycles": self.t_msg_cycles,
            "L_cycles": f"{self.L_cycles:.6f}",
            "s_per_flit": f"{self.s_per_flit:.6f}",
            "minimal_fraction": f"{self.minimal_fraction:.6f}",
            "req_flits": c.req_flits,
            "req_flits_stalled": c.req_flits_stalled_cycles,
            "req_packets": c.req_packets,
            "req_cum_latency": c.req_packets_cum_latency,
            "default_arm_fraction": "" if self.default_arm_fraction is None
            else f"{self.default_arm_fraction:.6f}",
        }


def write_csv(records: Sequence[RunRecord], out=None, extra: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    writer = csv.DictWriter(buf, fieldnames=list(extra) + CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        row = r.row()
        for key in extra:
            row[key] = getattr(r, key)
        writer.writerow(row)
    text = buf.getvalue()
    if out is not None:
        FsPath(out).write_text(text)
    return text


def read_csv(path_or_text: str) -> list[dict[str, str]]:
    p = FsPath(path_or_text)
    text = p.read_text() if "\n" not in path_or_text and p.exists() else path_or_text
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- background traffic -------------------------------------------------------

class CrossTraffic:
    """Open-loop background flows that run while ``active()`` is true."""

    def __init__(self, sim: Simulator, spec: BackgroundSpec, exclude: Sequence[NodeId] = (),
                 active=lambda: True):
        self.sim = sim
        self.spec = spec
        self.active = active
        self.rng = random.Random(spec.seed)
        self.sent = 0
        topo = sim.topology
        if spec.pairs:
            self.flows = [(a, b) for a, b in spec.pairs]
        elif spec.load > 0 and spec.nodes > 0:
            alloc = make_allocation(topo, spec.nodes, spec.placement, spec.seed, exclude=exclude)
            nodes = list(alloc.nodes)
            if spec.pattern == "uniform":
                self.flows = [(n, None) for n in nodes]
                self.pool = nodes
            elif spec.pattern in ("pairs", "permutation"):
                perm = nodes[:]
                if spec.pattern == "pairs":
                    perm = nodes[len(nodes) // 2:] + nodes[:len(nodes) // 2]
                else:
                    while len(perm) > 1 and any(a == b for a, b in zip(nodes, perm)):
                        self.rng.shuffle(perm)
                self.flows = [(a, b) for a, b in zip(nodes, perm) if a != b]
            else:
                raise ConfigError(f"unknown background pattern {spec.pattern!r}")
        else:
            self.flows = []
        f, _ = flit_counts(spec.size)
        self.mean_gap = f * spec.burst / spec.load if spec.load > 0 else None

    @property
    def nodes(self) -> list[NodeId]:
        return [a for a, _ in self.flows]

    def start(self, at: int = 0):
        if self.mean_gap is None:
            return
        for i, flow in enumerate(self.flows):
            first = at + int(self.rng.random() * self.mean_gap)
            self.sim.call_at(first, self._emitter(i, flow))

    def _emitter(self, i, flow):
        src, dst = flow

        def emit(t):
            if not self.active():
                return
            for _ in range(self.spec.burst):
                target = dst
                if target is None:
                    target = src
                    while target == src:
                        target = self.pool[self.rng.randrange(len(self.pool))]
                self.sim.inject(Message(src, target, self.spec.size, mode=self.spec.mode,
                                        tag=("bg", i, self.sent)), t)
                self.sent += 1
            gap = max(1, int(round(self.rng.expovariate(1.0) * self.mean_gap)))
            self.sim.call_at(t + gap, emit)

        return emit


def inject_cross_traffic(sim: Simulator, section: BackgroundSpec | dict, exclude=(),
                         active=lambda: True, start: int = 0) -> CrossTraffic:
    if isinstance(section, dict):
        section = dict(section)
        if "mode" in section:
            section["mode"] = RoutingMode.parse(section["mode"])
        if "pairs" in section:
            section["pairs"] = tuple((NodeId(*a), NodeId(*b)) for a, b in section["pairs"])
        section = BackgroundSpec(**section)
    if section.load < 0:
        raise ConfigError("background load must be >= 0")
    # explicit pairs may overlap the measured allocation on purpose
    traffic = CrossTraffic(sim, section, exclude, active)
    traffic.start(start)
    return traffic


# -- plan execution -----------------------------------------------------------

class PlanExecutor:
    """Feeds a plan into a simulator, honouring dependencies and routing."""

    def __init__(self, sim: Simulator, plan: Plan, alloc: Allocation, *, start: int = 0,
                 think_time: int = 0, tag_prefix: str = "fg"):
        if plan.ranks != len(alloc):
            raise ConfigError("plan rank count does not match allocation size")
        self.sim = sim
        self.plan = plan
        self.alloc = alloc
        self.think_time = think_time
        self.prefix = tag_prefix
        self.msgs = {m.id: m for m in plan.messages}
        self.waiting = {m.id: len(m.deps) for m in plan.messages}
        self.children: dict[int, list[int]] = defaultdict(list)
        for m in plan.messages:
            for d in m.deps:
                self.children[d].append(m.id)
        self.inject_cycle: dict[int, int] = {}
        self.delivered: dict[int, int] = {}
        self.mode_used: dict[int, RoutingMode] = {}
        self.arm_used: dict[int, Arm] = {}
        self.records: dict[int, MessageRecord] = {}
        self.policies: dict[int, PolicyState] | None = None
        if plan.policy is not None:
            params = {k: v for k, v in plan.policy.items() if k in POLICY_KEYS | {"alltoall"}}
            self.policies = {r: PolicyState(**params) for r in range(plan.ranks)}
        sim.on_delivery(self._on_delivery)
        sim.on_complete(self._on_complete)
        for m in plan.messages:
            if not m.deps:
                self._release(m.id, start)

    @property
    def done(self) -> bool:
        return len(self.delivered) == len(self.msgs)

    def _release(self, mid: int, t: int):
        m = self.msgs[mid]
        at = t
        mode = m.mode
        if self.policies is not None:
            state = self.policies[m.src]
            evals = state.evaluations
            mode = select_routing(m.size, state, m.kind)
            self.arm_used[mid] = state.arm_of(mode)
            if state.evaluations > evals:
                at += state.read_penalty
        self.mode_used[mid] = mode
        msg = Message(self.alloc.nodes[m.src], self.alloc.nodes[m.dst], m.size, m.kind, mode,
                      (self.prefix, mid))
        self.inject_cycle[mid] = at
        self.sim.inject(msg, at)

    def _on_delivery(self, rec: MessageRecord, t: int):
        tag = rec.tag
        if not (isinstance(tag, tuple) and tag[0] == self.prefix):
            return
        mid = tag[1]
        self.delivered[mid] = t
        self.records[mid] = rec
        for c in self.children.get(mid, ()):
            self.waiting[c] -= 1
            if self.waiting[c] == 0:
                self._release(c, t + self.think_time)

    def _on_complete(self, rec: MessageRecord, t: int):
        tag = rec.tag
        if self.policies is None or not (isinstance(tag, tuple) and tag[0] == self.prefix):
            return
        mid = tag[1]
        if rec.packets_sent == 0 or rec.cum_latency <= 0:
            return
        L = rec.cum_latency / rec.packets_sent
        s = rec.stalled / rec.req_flits if rec.req_flits else 0.0
        record_observation(self.mode_used[mid], L, s, self.policies[self.msgs[mid].src])

    def iteration_rows(self, trial: int, senders: Sequence[int] | None, alloc_hash: str) -> list[RunRecord]:
        by_key_sent: dict[tuple[int, int], list[int]] = defaultdict(list)
        by_key_touch: dict[tuple[int, int], list[int]] = defaultdict(list)
        for m in self.plan.messages:
            by_key_sent[(m.iteration, m.src)].append(m.id)
            by_key_touch[(m.iteration, m.src)].append(m.id)
            by_key_touch[(m.iteration, m.dst)].append(m.id)
        ranks = range(self.plan.ranks) if senders is None else senders
        rows = []
        for it in range(self.plan.pattern.iterations):
            for r in ranks:
                sent = by_key_sent.get((it, r), [])
                touched = by_key_touch.get((it, r), [])
                if not touched:
                    continue
                start_ids = sent or touched
                t0 = min(self.inject_cycle[i] for i in start_ids)
                t1 = max(self.delivered[i] for i in touched)
                counters = NicCounters()
                routed = minimal = 0
                bytes_by_mode: dict[RoutingMode, int] = defaultdict(int)
                default_bytes = 0
                total_bytes = 0
                for i in sent:
                    rec = self.records[i]
                    counters = counters + rec.counters
                    routed += rec.routed_packets
                    minimal += rec.minimal_packets
                    bytes_by_mode[self.mode_used[i]] += self.msgs[i].size
                    total_bytes += self.msgs[i].size
                    if self.arm_used.get(i) is Arm.DEFAULT:
                        default_bytes += self.msgs[i].size
                if bytes_by_mode:
                    mode = max(bytes_by_mode.items(), key=lambda kv: kv[1])[0].value
                else:
                    mode = ""
                L = counters.req_packets_cum_latency / counters.req_packets if counters.req_packets else 0.0
                s = counters.req_flits_stalled_cycles / counters.req_flits if counters.req_flits else 0.0
                daf = None
                if self.policies is not None and total_bytes:
                    daf = default_bytes / total_bytes
                rows.append(RunRecord(trial, it, r, mode, t1 - t0, L, s,
                                      minimal / routed if routed else 1.0, counters, daf,
                                      alloc_hash, self.plan.pattern.message_bytes))
        return rows


def allocation_hash(alloc: Allocation) -> str:
    return hashlib.sha1(alloc.fingerprint().encode()).hexdigest()[:12]


def _run_trial(args) -> list[RunRecord]:
    config, topo, alloc, trial = args
    topo = topo or build_topology(config.topology)
    plan = config.routing.attach(schedule(config.workload.pattern, alloc))
    sim = Simulator(topo, seed=config.seed, bias=config.routing.bias,
                    max_cycles=config.engine.max_cycles,
                    max_outstanding=config.engine.max_outstanding)
    start = config.workload.warmup
    executor = PlanExecutor(sim, plan, alloc, start=start, think_time=config.workload.think_time)
    if config.background is not None:
        inject_cross_traffic(sim, config.background, exclude=alloc.nodes,
                             active=lambda: not executor.done)
    try:
        sim.run_until_idle()
    except LivelockGuard as exc:
        raise LivelockGuard(f"trial {trial} of {config.workload.pattern.kind}: {exc}") from exc
    return executor.iteration_rows(trial, config.workload.senders, allocation_hash(alloc))


def run_experiment(config: ExperimentConfig, topology: Topology | None = None) -> list[RunRecord]:
    """Run every trial on one fixed allocation and return the per-iteration rows."""
    topo = topology or build_topology(config.topology)
    alloc = make_allocation(topo, config.allocation.size, config.allocation.placement_class,
                            config.allocation.seed)
    jobs = [(config, topo if config.workers <= 1 else None, alloc, t) for t in range(config.trials)]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    records = [r for rows in results for r in rows]
    records.sort(key=lambda r: (r.trial, r.iteration, r.sender))
    hashes = {r.allocation_hash for r in records}
    assert len(hashes) <= 1, "allocation changed within an experiment"
    return records


def sweep(config: ExperimentConfig) -> list[RunRecord]:
    """Cartesian product over ``sweep.sizes`` x ``sweep.modes``."""
    spec = config.sweep or {}
    sizes = spec.get("sizes") or [config.workload.pattern.size]
    modes = spec.get("modes")
    out = []
    topo = build_topology(config.topology)
    for size, mode in itertools.product(sizes, modes or [None]):
        pattern = replace(config.workload.pattern, size=int(size))
        cfg = replace(config, workload=replace(config.workload, pattern=pattern))
        if mode is not None:
            cfg = replace(cfg, routing=replace(config.routing, static=RoutingMode.parse(mode),
                                               alternate=None, policy=None))
        out.extend(run_experiment(cfg, topo))
    return out


# -- summaries ----------------------------------------------------------------

def _natural_key(key: tuple) -> tuple:
    out = []
    for part in key:
        try:
            out.append((0, float(part), ""))
        except ValueError:
            out.append((1, 0.0, part))
    return tuple(out)


def summarize(records: Sequence[RunRecord | dict], group_by: Sequence[str] = ("mode",),
              value: str = "t_msg_cycles", baseline_mode: str = "ADAPTIVE_0") -> list[dict]:
    """Per-group dispersion statistics plus medians normalized to ``baseline_mode``."""
    if not records:
        raise EmptyRecords("nothing to summarize")
    rows = [r.row() | {"size_bytes": r.size_bytes} if isinstance(r, RunRecord) else r
            for r in records]
    groups: dict[tuple, list[float]] = defaultdict(list)
    for row in rows:
        groups[tuple(str(row[k]) for k in group_by)].append(float(row[value]))
    stats = {key: describe(vals) | {"n": len(vals)} for key, vals in groups.items()}
    out = []
    mode_pos = list(group_by).index("mode") if "mode" in group_by else None
    for key in sorted(stats, key=_natural_key):
        entry = dict(zip(group_by, key)) | stats[key]
        norm = None
        if mode_pos is not None:
            base_key = key[:mode_pos] + (baseline_mode,) + key[mode_pos + 1:]
            base = stats.get(base_key)
            if base and base["median"]:
                norm = entry["median"] / base["median"]
        entry["normalized_median"] = norm
        out.append(entry)
    return out


def write_summary(summary: Sequence[dict], group_by: Sequence[str], out=None) -> str:
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    writer = csv.DictWriter(buf, fieldnames=list(group_by) + SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in summary:
        writer.writerow({k: ("" if row.get(k) is None else
                             (f"{row[k]:.6f}" if isinstance(row[k], float) else row[k]))
                         for k in list(group_by) + SUMMARY_COLUMNS})
    text = buf.getvalue()
    if out is not None:
        FsPath(out).write_text(text)
    return text
