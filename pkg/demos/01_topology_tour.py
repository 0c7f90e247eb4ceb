"""
A tour of a small Dragonfly
===========================

Build the four-group machine the other demos use and look at its paths.
"""

# a topology is a frozen config plus a builder that wires the links
from dragonroute.scenarios import SCENARIO_TOPOLOGY
from dragonroute.topology import build_topology
import random

topo = build_topology(SCENARIO_TOPOLOGY)
print(topo.num_routers, "routers,", topo.num_nodes, "nodes,", topo.num_links, "links")

# every router has a fixed set of neighbours, local ones first
r0 = topo.routers[0]
print(r0, "->", topo.neighbors[r0][:6], "...")

# groups are joined by global links, assigned round-robin
for (ga, gb), links in sorted(topo.global_links.items()):
    if ga < gb:
        print(f"group {ga} <-> group {gb}: {len(links)} link(s)")

# minimal paths cross at most one global link
src, dst = topo.routers_in_group(0)[0], topo.routers_in_group(2)[-1]
paths = topo.minimal_paths(src, dst)
print(len(paths), "minimal paths, length", paths[0].hop_count)

# a non-minimal path detours through a third group
detour = topo.sample_nonminimal_path(src, dst, random.Random(1))
print("non-minimal length", detour.hop_count, "minimal?", detour.is_minimal)

# the BFS distance agrees with the minimal path length
print("bfs distance", topo.bfs_distances(src, max_global_hops=1)[dst])
