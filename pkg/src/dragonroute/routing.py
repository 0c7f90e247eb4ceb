"""Routing modes and UGAL-style path selection with non-minimal bias."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

from .topology import NoIntermediateGroup, Path, PathClass, RouterId, Topology


class EmptyTrace(ValueError):
    pass


class RoutingMode(str, Enum):
    ADAPTIVE_0 = "ADAPTIVE_0"
    ADAPTIVE_1 = "ADAPTIVE_1"
    ADAPTIVE_2 = "ADAPTIVE_2"
    ADAPTIVE_3 = "ADAPTIVE_3"
    MIN_HASH = "MIN_HASH"
    NMIN_HASH = "NMIN_HASH"
    IN_ORDER = "IN_ORDER"

    @property
    def adaptive(self) -> bool:
        return self.value.startswith("ADAPTIVE")

    @classmethod
    def parse(cls, name: str | RoutingMode) -> RoutingMode:
        if isinstance(name, RoutingMode):
            return name
        try:
            return cls(name)
        except ValueError:
            raise ValueError(
                f"unknown routing mode {name!r}; expected one of {[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class BiasProfile:
    """Congestion penalty added to non-minimal candidates, in flits."""

    low_bias: float = 5.0
    high_bias: float = 20.0
    imb_step: float = 5.0

    def __post_init__(self):
        if not 0 < self.low_bias < self.high_bias:
            raise ValueError("need 0 < low_bias < high_bias")
        if self.imb_step <= 0:
            raise ValueError("imb_step must be positive")

    def bias(self, mode: RoutingMode, hops_taken: int = 0) -> float:
        if mode is RoutingMode.ADAPTIVE_0:
            return 0.0
        if mode is RoutingMode.ADAPTIVE_1:
            return self.imb_step * (hops_taken + 1)
        if mode is RoutingMode.ADAPTIVE_2:
            return self.low_bias
        if mode is RoutingMode.ADAPTIVE_3:
            return self.high_bias
        return 0.0


DEFAULT_BIAS = BiasProfile()


class CongestionView(Protocol):
    """What the router can see locally about one of its output tiles."""

    def queued_flits(self, u: RouterId, v: RouterId) -> int: ...

    def credit_deficit(self, u: RouterId, v: RouterId) -> int: ...


class EmptyNetwork:
    def queued_flits(self, u, v):
        return 0

    def credit_deficit(self, u, v):
        return 0


@dataclass(frozen=True)
class RouteDecision:
    path: Path
    estimated_costs: tuple[tuple[Path, float], ...]
    bias_applied: float = 0.0
    mode: RoutingMode = RoutingMode.ADAPTIVE_0
    degraded: bool = False

    @property
    def is_minimal(self) -> bool:
        return self.path.cls is PathClass.MINIMAL

    def biased_costs(self) -> list[float]:
        return [
            cost + (0.0 if p.is_minimal else self.bias_applied)
            for p, cost in self.estimated_costs
        ]


def estimate_congestion(path: Path, state: CongestionView) -> float:
    """First-hop queue occupancy plus credit deficit, scaled by hop count."""
    if path.hop_count == 0:
        return 0.0
    u, v = path.hops[0], path.hops[1]
    local = state.queued_flits(u, v) + state.credit_deficit(u, v)
    return float(local * path.hop_count)


def flow_hash(key) -> int:
    digest = hashlib.blake2b(repr(key).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _hashed_nonminimal(topology: Topology, src: RouterId, dst: RouterId, h: int) -> Path:
    groups = topology.intermediate_groups(src, dst)
    if not groups:
        raise NoIntermediateGroup(f"no intermediate group between {src} and {dst}")
    g = groups[h % len(groups)]
    members = topology.routers_in_group(g)
    via = members[(h // len(groups)) % len(members)]
    return topology.nonminimal_via(src, dst, via, choose=h >> 20)


def choose_route(
    topology: Topology,
    mode: RoutingMode,
    src: RouterId,
    dst: RouterId,
    hops_taken: int = 0,
    flow_key=None,
    rng: random.Random | None = None,
    state: CongestionView | None = None,
    bias: BiasProfile = DEFAULT_BIAS,
) -> RouteDecision:
    if src == dst:
        raise ValueError("same-router delivery does not need routing")
    mode = RoutingMode.parse(mode)
    state = state or EmptyNetwork()

    if mode in (RoutingMode.MIN_HASH, RoutingMode.IN_ORDER):
        paths = topology.minimal_paths(src, dst)
        path = paths[flow_hash(("min", flow_key)) % len(paths)]
        return RouteDecision(path, ((path, 0.0),), 0.0, mode)

    if mode is RoutingMode.NMIN_HASH:
        try:
            path = _hashed_nonminimal(topology, src, dst, flow_hash(("nmin", flow_key)))
            return RouteDecision(path, ((path, 0.0),), 0.0, mode)
        except NoIntermediateGroup:
            paths = topology.minimal_paths(src, dst)
            path = paths[flow_hash(("min", flow_key)) % len(paths)]
            return RouteDecision(path, ((path, 0.0),), 0.0, mode, degraded=True)

    if rng is None:
        rng = random.Random(0)
    minimal = topology.minimal_paths(src, dst)
    candidates: list[Path] = (
        rng.sample(minimal, 2) if len(minimal) > 2 else list(minimal)
    )
    degraded = False
    groups = topology.intermediate_groups(src, dst)
    if groups:
        picks = rng.sample(groups, 2) if len(groups) > 1 else groups * 2
        for g in picks:
            members = topology.routers_in_group(g)
            via = members[rng.randrange(len(members))]
            candidates.append(topology.nonminimal_via(src, dst, via, rng))
    else:
        degraded = True

    b = bias.bias(mode, hops_taken)
    costs = tuple((p, estimate_congestion(p, state)) for p in candidates)
    best_i = 0
    best = None
    for i, (p, c) in enumerate(costs):
        biased = c if p.is_minimal else c + b
        if best is None or biased < best:
            best, best_i = biased, i
    return RouteDecision(costs[best_i][0], costs, b, mode, degraded)


def minimal_fraction(trace: Sequence[RouteDecision]) -> float:
    if not trace:
        raise EmptyTrace("minimal_fraction of an empty trace")
    return sum(d.is_minimal for d in trace) / len(trace)
