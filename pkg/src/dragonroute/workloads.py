"""Microbenchmark message schedules over an allocation of simulated nodes.

A plan is a list of messages between ranks with dependency edges: a message
may be handed to its NIC once every message it depends on has been delivered.
Collectives use the usual small/medium-size algorithms: recursive doubling
(allreduce), binomial tree (broadcast), dissemination (barrier) and linear
pairwise exchange (alltoall).
"""

from __future__ import annotations

import math
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from typing import Sequence

from .packets import MessageKind
from .routing import RoutingMode
from .topology import NodeId, Topology

PATTERNS = ("pingpong", "allreduce", "alltoall", "barrier", "broadcast", "halo3d", "sweep3d")
PLACEMENTS = ("inter_node", "inter_blade", "inter_chassis", "inter_group", "scattered")
ELEMENT_BYTES = 4


class RankMismatch(ValueError):
    pass


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    nodes: tuple[NodeId, ...]
    placement_class: str

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise AllocationError("allocation nodes must be distinct")
        if self.placement_class not in PLACEMENTS:
            raise AllocationError(f"unknown placement class {self.placement_class!r}")

    def __len__(self):
        return len(self.nodes)

    def fingerprint(self) -> str:
        return ";".join(".".join(map(str, n)) for n in self.nodes)


def pair_class(a: NodeId, b: NodeId) -> str:
    if a.router == b.router:
        return "inter_node"
    if a.group == b.group and a.chassis == b.chassis:
        return "inter_blade"
    if a.group == b.group:
        return "inter_chassis"
    return "inter_group"


def spread_class(nodes: Sequence[NodeId]) -> str:
    """Widest pair class present among ``nodes``."""
    order = PLACEMENTS[:4]
    widest = 0
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            widest = max(widest, order.index(pair_class(a, b)))
    return order[widest]


def make_allocation(topology: Topology, size: int, placement_class: str, seed: int = 0,
                    exclude: Sequence[NodeId] = ()) -> Allocation:
    """Deterministically pick ``size`` nodes with the requested spread."""
    cfg = topology.config
    rng = random.Random(seed)
    banned = set(exclude)
    if size < 1:
        raise AllocationError("allocation size must be >= 1")

    def free(nodes):
        return [n for n in nodes if n not in banned]

    if placement_class == "scattered":
        pool = free(topology.nodes)
        if len(pool) < size:
            raise AllocationError("not enough free nodes")
        return Allocation(tuple(rng.sample(pool, size)), placement_class)

    if placement_class == "inter_node":
        routers = [r for r in topology.routers if len(free(topology.nodes_of(r))) >= size]
        if not routers or size > cfg.nodes_per_router:
            raise AllocationError(f"no router has {size} free nodes")
        r = routers[rng.randrange(len(routers))]
        return Allocation(tuple(free(topology.nodes_of(r))[:size]), placement_class)

    if placement_class == "inter_blade":
        # distinct blades of one chassis
        chassis = [(g, c) for g in range(cfg.groups) for c in range(cfg.chassis_per_group)]
        rng.shuffle(chassis)
        for g, c in chassis:
            blades = list(range(cfg.blades_per_chassis))
            rng.shuffle(blades)
            picks = []
            for b in blades:
                cand = free(topology.nodes_of(topology.routers_in_group(g)[c * cfg.blades_per_chassis + b]))
                if cand:
                    picks.append(cand[0])
                if len(picks) == size:
                    return Allocation(tuple(picks), placement_class)
        raise AllocationError(f"no chassis has {size} free blades")

    if placement_class == "inter_chassis":
        if size > 1 and cfg.chassis_per_group < 2:
            raise AllocationError("inter_chassis needs at least 2 chassis per group")
        groups = list(range(cfg.groups))
        rng.shuffle(groups)
        for g in groups:
            members = topology.routers_in_group(g)
            picks: list[NodeId] = []
            used_blades: set[int] = set()
            for i in range(size):
                c = i % cfg.chassis_per_group
                blades = list(range(cfg.blades_per_chassis))
                rng.shuffle(blades)
                # prefer unused blade positions so pairs are not row neighbours
                blades.sort(key=lambda b: b in used_blades)
                for bl in blades:
                    cand = [n for n in free(topology.nodes_of(members[c * cfg.blades_per_chassis + bl]))
                            if n not in picks]
                    if cand:
                        picks.append(cand[0])
                        used_blades.add(bl)
                        break
            if len(picks) == size:
                return Allocation(tuple(picks), placement_class)
        raise AllocationError("cannot place an inter_chassis allocation")

    if placement_class == "inter_group":
        topology.require_inter_group()
        picks = []
        groups = list(range(cfg.groups))
        rng.shuffle(groups)
        for i in range(size):
            g = groups[i % cfg.groups]
            pool = [n for r in topology.routers_in_group(g) for n in free(topology.nodes_of(r))
                    if n not in picks]
            if not pool:
                raise AllocationError(f"group {g} has no free nodes")
            picks.append(pool[rng.randrange(len(pool))])
        return Allocation(tuple(picks), placement_class)

    raise AllocationError(f"unknown placement class {placement_class!r}")


@dataclass(frozen=True)
class TrafficPattern:
    kind: str
    size: int
    iterations: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PATTERNS:
            raise ValueError(f"unknown pattern {self.kind!r}; expected one of {PATTERNS}")
        if self.size < 1 or self.iterations < 1:
            raise ValueError("size and iterations must be >= 1")

    @property
    def message_bytes(self) -> int:
        """Bytes per message; allreduce sizes count 4-byte elements."""
        if self.kind == "allreduce":
            return self.size * ELEMENT_BYTES
        return self.size


@dataclass(frozen=True)
class PlannedMessage:
    id: int
    src: int
    dst: int
    size: int
    iteration: int
    deps: tuple[int, ...] = ()
    step: int = 0
    mode: RoutingMode | None = None
    kind: MessageKind = MessageKind.PUT


@dataclass(frozen=True)
class Plan:
    pattern: TrafficPattern
    ranks: int
    messages: tuple[PlannedMessage, ...]
    policy: dict | None = None

    def by_rank(self) -> dict[int, list[PlannedMessage]]:
        out = defaultdict(list)
        for m in self.messages:
            out[m.src].append(m)
        return dict(out)

    def topological_order(self) -> list[int]:
        """Kahn's algorithm; raises ValueError on a cycle."""
        indeg = {m.id: len(m.deps) for m in self.messages}
        children = defaultdict(list)
        for m in self.messages:
            for d in m.deps:
                children[d].append(m.id)
        ready = deque(sorted(i for i, d in indeg.items() if d == 0))
        order = []
        while ready:
            i = ready.popleft()
            order.append(i)
            for c in children[i]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.messages):
            raise ValueError("plan dependency graph has a cycle")
        return order


def grid_dims(n: int, ndim: int) -> tuple[int, ...]:
    """Most balanced factorization of ``n`` into ``ndim`` factors."""
    best = None
    def rec(rest, k, acc):
        nonlocal best
        if k == 1:
            dims = tuple(sorted(acc + [rest], reverse=True))
            if best is None or max(dims) - min(dims) < max(best) - min(best):
                best = dims
            return
        for d in range(1, rest + 1):
            if rest % d == 0:
                rec(rest // d, k - 1, acc + [d])
    rec(n, ndim, [])
    return best


class _Builder:
    def __init__(self, size: int):
        self.size = size
        self.msgs: list[PlannedMessage] = []

    def add(self, src, dst, iteration, step, deps=()) -> int:
        mid = len(self.msgs)
        self.msgs.append(PlannedMessage(mid, src, dst, self.size, iteration, tuple(deps), step))
        return mid


def _chain_iterations(msgs: list[PlannedMessage], ranks: int) -> list[PlannedMessage]:
    """Messages with no deps inside their iteration wait for the rank's previous iteration."""
    touched: dict[tuple[int, int], list[int]] = defaultdict(list)
    for m in msgs:
        touched[(m.iteration, m.src)].append(m.id)
        touched[(m.iteration, m.dst)].append(m.id)
    out = []
    for m in msgs:
        if m.iteration > 0 and not m.deps:
            m = replace(m, deps=tuple(sorted(touched.get((m.iteration - 1, m.src), ()))))
        out.append(m)
    return out


def schedule(pattern: TrafficPattern, alloc: Allocation | int) -> Plan:
    n = alloc if isinstance(alloc, int) else len(alloc)
    kind = pattern.kind
    b = _Builder(pattern.message_bytes)
    p = pattern.params

    if kind == "pingpong":
        if n != 2:
            raise RankMismatch("pingpong needs exactly 2 ranks")
        for it in range(pattern.iterations):
            ping = b.add(0, 1, it, 0)
            b.add(1, 0, it, 1, [ping])

    elif kind == "alltoall":
        if n < 2:
            raise RankMismatch("alltoall needs at least 2 ranks")
        for it in range(pattern.iterations):
            recv_prev: dict[int, int] = {}
            for k in range(1, n):
                recv_now = {}
                for i in range(n):
                    deps = [recv_prev[i]] if i in recv_prev else []
                    dst = (i + k) % n
                    recv_now[dst] = b.add(i, dst, it, k - 1, deps)
                recv_prev = recv_now

    elif kind == "allreduce":
        if n < 2 or n & (n - 1):
            raise RankMismatch("recursive doubling allreduce needs a power-of-two rank count")
        rounds = int(math.log2(n))
        for it in range(pattern.iterations):
            recv_prev: dict[int, int] = {}
            for j in range(rounds):
                recv_now = {}
                for i in range(n):
                    deps = [recv_prev[i]] if i in recv_prev else []
                    peer = i ^ (1 << j)
                    recv_now[peer] = b.add(i, peer, it, j, deps)
                recv_prev = recv_now

    elif kind == "barrier":
        if n < 2:
            raise RankMismatch("barrier needs at least 2 ranks")
        for it in range(pattern.iterations):
            recv_prev: dict[int, int] = {}
            dist, j = 1, 0
            while dist < n:
                recv_now = {}
                for i in range(n):
                    deps = [recv_prev[i]] if i in recv_prev else []
                    dst = (i + dist) % n
                    recv_now[dst] = b.add(i, dst, it, j, deps)
                recv_prev = recv_now
                dist *= 2
                j += 1

    elif kind == "broadcast":
        if n < 2:
            raise RankMismatch("broadcast needs at least 2 ranks")
        root = p.get("root", 0)
        for it in range(pattern.iterations):
            got: dict[int, int] = {}
            dist, j = 1, 0
            while dist < n:
                for rel in range(dist):
                    if rel + dist >= n:
                        continue
                    src = (rel + root) % n
                    dst = (rel + dist + root) % n
                    deps = [got[src]] if src in got else []
                    got[dst] = b.add(src, dst, it, j, deps)
                dist *= 2
                j += 1

    elif kind == "halo3d":
        dims = tuple(p.get("grid") or grid_dims(n, 3))
        if len(dims) != 3 or math.prod(dims) != n:
            raise RankMismatch(f"halo3d grid {dims} does not match {n} ranks")
        periodic = bool(p.get("periodic", False))
        coords = [(x, y, z) for x in range(dims[0]) for y in range(dims[1]) for z in range(dims[2])]
        index = {c: i for i, c in enumerate(coords)}
        for it in range(pattern.iterations):
            for i, c in enumerate(coords):
                for axis in range(3):
                    for step in (-1, 1):
                        nb = list(c)
                        nb[axis] += step
                        if periodic:
                            nb[axis] %= dims[axis]
                        elif not 0 <= nb[axis] < dims[axis]:
                            continue
                        j = index[tuple(nb)]
                        if j != i:
                            b.add(i, j, it, 0)

    elif kind == "sweep3d":
        dims = tuple(p.get("grid") or grid_dims(n, 2))
        if len(dims) != 2 or math.prod(dims) != n:
            raise RankMismatch(f"sweep3d grid {dims} does not match {n} ranks")
        kblocks = int(p.get("kblocks", 2))
        px, py = dims
        rank = lambda x, y: x * py + y  # noqa: E731
        for it in range(pattern.iterations):
            for k in range(kblocks):
                inbound: dict[int, list[int]] = defaultdict(list)
                # wavefront from corner (0, 0): diagonal order keeps deps earlier
                for diag in range(px + py - 1):
                    for x in range(px):
                        y = diag - x
                        if not 0 <= y < py:
                            continue
                        r = rank(x, y)
                        for nx, ny in ((x + 1, y), (x, y + 1)):
                            if nx < px and ny < py:
                                inbound[rank(nx, ny)].append(
                                    b.add(r, rank(nx, ny), it, k, inbound.get(r, []))
                                )
    else:  # pragma: no cover - guarded by TrafficPattern
        raise ValueError(kind)

    msgs = _chain_iterations(b.msgs, n)
    return Plan(pattern, n, tuple(msgs))


@dataclass(frozen=True)
class StaticRouting:
    mode: RoutingMode


@dataclass(frozen=True)
class Alternation:
    modes: tuple[RoutingMode, ...]


def attach_policy(plan: Plan, routing) -> Plan:
    """Tag each message with a static mode, or hand the plan a policy config.

    ``routing`` is a :class:`StaticRouting`, an :class:`Alternation` (one mode
    per iteration, cycling), or a dict of policy parameters.
    """
    if isinstance(routing, (str, RoutingMode)):
        routing = StaticRouting(RoutingMode.parse(routing))
    if isinstance(routing, StaticRouting):
        msgs = tuple(replace(m, mode=routing.mode) for m in plan.messages)
        return replace(plan, messages=msgs, policy=None)
    if isinstance(routing, Alternation):
        modes = routing.modes
        msgs = tuple(replace(m, mode=modes[m.iteration % len(modes)]) for m in plan.messages)
        return replace(plan, messages=msgs, policy=None)
    policy = dict(routing)
    policy["alltoall"] = plan.pattern.kind == "alltoall"
    msgs = tuple(replace(m, mode=None) for m in plan.messages)
    return replace(plan, messages=msgs, policy=policy)
