"""
How good is the transmission-time model?
========================================

Send one message per size between two groups, read the NIC counters,
and compare the predicted cycle count with what the simulator measured.
"""

from dragonroute.scenarios import model_fidelity

report = model_fidelity()

# one row per message size
print(f"{'bytes':>8} {'flits':>6} {'pkts':>5} {'measured':>9} {'predicted':>10} {'err':>6}")
for pt in report.points:
    print(f"{pt.size:8d} {pt.f:6d} {pt.p:5d} {pt.measured:9d} {pt.predicted:10.1f} {pt.rel_error:6.1%}")

# the model tracks the simulator closely over the whole size range
print("pearson r =", round(report.correlation, 4))
print("worst relative error =", f"{report.max_rel_error:.1%}")

# the same comparison from the command line:
#   dragonroute validate-model --out fidelity.csv
