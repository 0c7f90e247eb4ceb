"""Dragonfly topology with the Aries three-tier layout.

Routers are arranged in groups of ``chassis_per_group x blades_per_chassis``.
Inside a group every router is linked to all routers of its chassis (the
"column") and to the router at the same blade position on every other chassis
(the "row").  Groups are joined by global links assigned round-robin so that
every pair of groups shares at least one link.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import NamedTuple


class TopologyError(ValueError):
    """Raised for configurations that cannot be built."""


class NoIntermediateGroup(TopologyError):
    """No group other than the endpoints' groups can carry a detour."""


class RouterId(NamedTuple):
    group: int
    chassis: int
    blade: int


class NodeId(NamedTuple):
    group: int
    chassis: int
    blade: int
    node: int

    @property
    def router(self) -> RouterId:
        return RouterId(self.group, self.chassis, self.blade)


class PathClass(str, Enum):
    MINIMAL = "minimal"
    NONMINIMAL = "nonminimal"


@dataclass(frozen=True)
class Path:
    """Router-level route; ``hops`` includes both endpoints."""

    hops: tuple[RouterId, ...]
    cls: PathClass = PathClass.MINIMAL
    intermediate_group: int | None = None

    @property
    def hop_count(self) -> int:
        return len(self.hops) - 1

    @property
    def src(self) -> RouterId:
        return self.hops[0]

    @property
    def dst(self) -> RouterId:
        return self.hops[-1]

    @property
    def is_minimal(self) -> bool:
        return self.cls is PathClass.MINIMAL


@dataclass(frozen=True)
class TopologyConfig:
    groups: int
    chassis_per_group: int = 6
    blades_per_chassis: int = 16
    nodes_per_router: int = 4
    global_links_per_router: int = 10
    queue_capacity: int = 32
    link_cycle_cost: int = 10
    global_tiles_per_connection: int = 1
    # cycles between consecutive flits on a router-to-router tile
    router_flit_interval: int = 1

    def __post_init__(self):
        for name in (
            "groups",
            "chassis_per_group",
            "blades_per_chassis",
            "nodes_per_router",
            "global_links_per_router",
            "queue_capacity",
            "link_cycle_cost",
            "global_tiles_per_connection",
            "router_flit_interval",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise TopologyError(f"{name} must be an integer >= 1, got {value!r}")

    @property
    def routers_per_group(self) -> int:
        return self.chassis_per_group * self.blades_per_chassis


class Topology:
    """Immutable router graph; build it with :func:`build_topology`."""

    def __init__(self, config: TopologyConfig):
        self.config = config
        cfg = config
        self.routers: list[RouterId] = [
            RouterId(g, c, b)
            for g in range(cfg.groups)
            for c in range(cfg.chassis_per_group)
            for b in range(cfg.blades_per_chassis)
        ]
        self.nodes: list[NodeId] = [
            NodeId(*r, n) for r in self.routers for n in range(cfg.nodes_per_router)
        ]
        self._node_index = {n: i for i, n in enumerate(self.nodes)}
        self._router_index = {r: i for i, r in enumerate(self.routers)}

        # directed (u, v) -> lane count, and "local" / "global"
        self.link_lanes: dict[tuple[RouterId, RouterId], int] = {}
        self.link_kind: dict[tuple[RouterId, RouterId], str] = {}
        # (ga, gb) -> sorted list of (gateway in ga, landing router in gb)
        self.global_links: dict[tuple[int, int], list[tuple[RouterId, RouterId]]] = {}

        self._wire_local()
        self._wire_global()
        self.neighbors: dict[RouterId, tuple[RouterId, ...]] = {r: () for r in self.routers}
        adjacency: dict[RouterId, set[RouterId]] = {r: set() for r in self.routers}
        for u, v in self.link_lanes:
            adjacency[u].add(v)
        self.neighbors = {r: tuple(sorted(adjacency[r])) for r in self.routers}
        self._minimal_cache: dict[tuple[RouterId, RouterId], tuple[Path, ...]] = {}

    # -- construction -----------------------------------------------------

    def _add_link(self, u: RouterId, v: RouterId, kind: str, lanes: int = 1):
        for a, b in ((u, v), (v, u)):
            self.link_lanes[(a, b)] = self.link_lanes.get((a, b), 0) + lanes
            self.link_kind[(a, b)] = kind

    def _wire_local(self):
        cfg = self.config
        for g in range(cfg.groups):
            for c in range(cfg.chassis_per_group):
                for b in range(cfg.blades_per_chassis):
                    here = RouterId(g, c, b)
                    for b2 in range(b + 1, cfg.blades_per_chassis):
                        self._add_link(here, RouterId(g, c, b2), "local")
                    for c2 in range(c + 1, cfg.chassis_per_group):
                        self._add_link(here, RouterId(g, c2, b), "local")

    def _wire_global(self):
        cfg = self.config
        G = cfg.groups
        if G < 2:
            return
        R = cfg.routers_per_group
        ports = R * cfg.global_links_per_router
        if ports < G - 1:
            raise TopologyError(
                f"{cfg.global_links_per_router} global links per router x {R} routers "
                f"cannot reach {G - 1} other groups"
            )
        copies = ports // (G - 1)

        def local_router(group: int, slot: int) -> RouterId:
            r = slot % R
            return RouterId(group, r // cfg.blades_per_chassis, r % cfg.blades_per_chassis)

        for ga in range(G):
            for gb in range(ga + 1, G):
                j_ab = gb - 1  # index of gb among ga's peers
                j_ba = ga  # index of ga among gb's peers
                pairs = []
                for m in range(copies):
                    u = local_router(ga, m * (G - 1) + j_ab)
                    v = local_router(gb, m * (G - 1) + j_ba)
                    self._add_link(u, v, "global", cfg.global_tiles_per_connection)
                    pairs.append((u, v))
                uniq = sorted(set(pairs))
                self.global_links[(ga, gb)] = uniq
                self.global_links[(gb, ga)] = sorted((v, u) for u, v in uniq)

    # -- lookups ------------------------------------------------------------

    @property
    def num_routers(self) -> int:
        return len(self.routers)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def num_links(self) -> int:
        """Undirected router-to-router adjacencies (parallel lanes merged)."""
        return len(self.link_lanes) // 2

    def router_index(self, r: RouterId) -> int:
        return self._router_index[r]

    def node_index(self, n: NodeId) -> int:
        return self._node_index[n]

    def nodes_of(self, r: RouterId) -> list[NodeId]:
        return [NodeId(*r, k) for k in range(self.config.nodes_per_router)]

    def routers_in_group(self, g: int) -> list[RouterId]:
        R = self.config.routers_per_group
        return self.routers[g * R:(g + 1) * R]

    def is_linked(self, u: RouterId, v: RouterId) -> bool:
        return (u, v) in self.link_lanes

    def validate_path(self, path: Path) -> bool:
        return all(self.is_linked(a, b) for a, b in zip(path.hops, path.hops[1:]))

    def require_inter_group(self):
        if self.config.groups < 2:
            raise TopologyError("inter-group experiment needs at least 2 groups")

    # -- paths --------------------------------------------------------------

    def _local_paths(self, src: RouterId, dst: RouterId) -> list[tuple[RouterId, ...]]:
        """Shortest intra-group routes: 0, 1 or 2 hops via row/column."""
        if src == dst:
            return [(src,)]
        if src.chassis == dst.chassis or src.blade == dst.blade:
            return [(src, dst)]
        g = src.group
        return [
            (src, RouterId(g, src.chassis, dst.blade), dst),
            (src, RouterId(g, dst.chassis, src.blade), dst),
        ]

    def _enumerate_minimal(self, src: RouterId, dst: RouterId) -> tuple[Path, ...]:
        if src.group == dst.group:
            return tuple(Path(h) for h in self._local_paths(src, dst))
        links = self.global_links.get((src.group, dst.group))
        if not links:
            raise TopologyError(f"groups {src.group} and {dst.group} are not connected")

        def local_dist(a: RouterId, b: RouterId) -> int:
            if a == b:
                return 0
            return 1 if (a.chassis == b.chassis or a.blade == b.blade) else 2

        best = min(local_dist(src, x) + 1 + local_dist(y, dst) for x, y in links)
        out = []
        for x, y in links:
            if local_dist(src, x) + 1 + local_dist(y, dst) != best:
                continue
            for head in self._local_paths(src, x):
                for tail in self._local_paths(y, dst):
                    out.append(Path(head + tail))
        return tuple(out)

    def minimal_paths(self, src: RouterId, dst: RouterId, limit: int | None = None) -> list[Path]:
        """All shortest routes using at most one global hop, in a fixed order."""
        key = (src, dst)
        paths = self._minimal_cache.get(key)
        if paths is None:
            paths = self._enumerate_minimal(src, dst)
            self._minimal_cache[key] = paths
        return list(paths if limit is None else paths[:limit])

    def minimal_distance(self, src: RouterId, dst: RouterId) -> int:
        return self.minimal_paths(src, dst, 1)[0].hop_count

    def intermediate_groups(self, src: RouterId, dst: RouterId) -> list[int]:
        groups = []
        for g in range(self.config.groups):
            if g in (src.group, dst.group):
                continue
            if (src.group, g) in self.global_links and (g, dst.group) in self.global_links:
                groups.append(g)
        return groups

    def nonminimal_via(self, src: RouterId, dst: RouterId, via: RouterId,
                       rng: random.Random | None = None, choose: int = 0) -> Path:
        """Detour ``src -> via -> dst``; each leg is a minimal route.

        Legs are picked by ``rng`` when given, otherwise by index ``choose``.
        """
        first = self.minimal_paths(src, via)
        second = self.minimal_paths(via, dst)
        if rng is not None:
            a = first[rng.randrange(len(first))]
            b = second[rng.randrange(len(second))]
        else:
            a = first[choose % len(first)]
            b = second[(choose // len(first)) % len(second)]
        return Path(a.hops + b.hops[1:], PathClass.NONMINIMAL, via.group)

    def sample_nonminimal_path(self, src: RouterId, dst: RouterId, rng: random.Random) -> Path:
        groups = self.intermediate_groups(src, dst)
        if not groups:
            raise NoIntermediateGroup(f"no intermediate group between {src} and {dst}")
        g = groups[rng.randrange(len(groups))]
        members = self.routers_in_group(g)
        via = members[rng.randrange(len(members))]
        return self.nonminimal_via(src, dst, via, rng)

    def bfs_distances(self, src: RouterId, max_global_hops: int | None = None) -> dict[RouterId, int]:
        """Hop distances from ``src``; optionally bounded in global hops."""
        if max_global_hops is None:
            dist = {src: 0}
            queue = deque([src])
            while queue:
                u = queue.popleft()
                for v in self.neighbors[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        queue.append(v)
            return dist
        seen = {(src, 0): 0}
        queue = deque([(src, 0)])
        while queue:
            u, k = queue.popleft()
            for v in self.neighbors[u]:
                k2 = k + (self.link_kind[(u, v)] == "global")
                if k2 > max_global_hops or (v, k2) in seen:
                    continue
                seen[(v, k2)] = seen[(u, k)] + 1
                queue.append((v, k2))
        best: dict[RouterId, int] = {}
        for (v, _), d in seen.items():
            if v not in best or d < best[v]:
                best[v] = d
        return best


def build_topology(config: TopologyConfig) -> Topology:
    return Topology(config)
