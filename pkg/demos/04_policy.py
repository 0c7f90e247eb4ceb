"""
Picking a routing mode per message
==================================

The policy keeps a latency and stall estimate for each arm and switches
when the model says the other arm would be faster for this size.
"""

from dragonroute.packets import flit_counts
from dragonroute.policy import (Arm, PolicyState, record_observation, select_routing,
                                switch_threshold)
from dragonroute.routing import RoutingMode
from dragonroute.scenarios import DEFAULT_REGIMES, policy_regret

# a state where high bias has lower latency but stalls more
state = PolicyState(current=Arm.DEFAULT, L_ad=1000, s_ad=1.0, L_bs=600, s_bs=1.4,
                    obs_age_ad=0, obs_age_bs=0)
_, p = flit_counts(4096)
print("switch threshold in flits:", round(switch_threshold(1000, 600, 1.0, 1.4, p), 1))

# small messages favour the low-latency arm, large ones the low-stall arm
for size in (4096, 65536, 1 << 20):
    print(f"{size:8d} B -> {select_routing(size, state).value}")

# observations update the estimate for whichever arm produced them
state = record_observation(RoutingMode.ADAPTIVE_3, 550, 1.3, state)
print("after an observation: L_bs =", state.L_bs)

# against a sequence of regimes the policy stays close to the best static choice
rep = policy_regret(DEFAULT_REGIMES)
print(f"policy {rep.policy_time:.0f}  best static per regime {rep.best_per_regime_time:.0f}"
      f"  regret {rep.regret:.2%}")
