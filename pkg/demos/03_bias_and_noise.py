"""
Routing bias, path choice and noise
===================================

Stronger bias toward minimal paths keeps more packets minimal, and under
background traffic it also makes latency less variable.
"""

from dragonroute.routing import RoutingMode
from dragonroute.scenarios import allocation_spread, bias_sweep, noise_variance

A0, A2, A3 = RoutingMode.ADAPTIVE_0, RoutingMode.ADAPTIVE_2, RoutingMode.ADAPTIVE_3

# fraction of packets that took a minimal path, per bias mode
for mode, res in bias_sweep().items():
    print(f"{mode.value:11s} minimal fraction {res.minimal_fraction:.3f} over {res.packets} packets")

# repeated pings between groups, with some unrelated traffic around
rep = noise_variance(repetitions=20)
for mode in (A0, A3):
    s = rep.inter_group[mode]
    print(f"{mode.value:11s} median L {s.median_L:6.1f}  qcd(L) {s.qcd_L:.3f}")

# inside a group the stall ratio moves the other way
for mode in (A0, A3):
    print(f"{mode.value:11s} intra-group mean s {rep.intra_group[mode].mean_s:.3f}")

# the wider the allocation, the slower and noisier a small exchange gets
spread = allocation_spread()
for place, res in spread.items():
    print(f"{place:14s} median {res.median:6.1f}  qcd {res.qcd:.3f}")
