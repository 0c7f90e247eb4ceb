"""Application-aware routing: per-message choice between the default adaptive
mode and adaptive-with-high-bias, driven by NIC latency and stall feedback.

The sender keeps the last latency ``L`` and stall ratio ``s`` observed under
each arm.  When the arm not currently in use has no recent observation, its
values are extrapolated from the active arm with the scaling factors
``lambda_ad`` and ``sigma_ad``.  A message is sent on whichever arm the
transmission-time model predicts to be faster; small messages skip the
evaluation and go out with high bias until enough bytes accumulate.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .counters import OUTSTANDING_WINDOW, tmsg
from .packets import MessageKind, flit_counts
from .routing import RoutingMode


class Arm(str, Enum):
    DEFAULT = "default"
    HIGH_BIAS = "high_bias"


NEVER = math.inf


@dataclass
class PolicyState:
    current: Arm = Arm.DEFAULT
    L_ad: float | None = None
    s_ad: float | None = None
    L_bs: float | None = None
    s_bs: float | None = None
    lambda_ad: float = 1.0
    sigma_ad: float = 1.0
    obs_age_ad: float = NEVER
    obs_age_bs: float = NEVER
    staleness_limit: int = 32
    cumulative_bytes: int = 0
    trigger_threshold: int = 4096
    alltoall: bool = False
    hysteresis: bool = False
    read_penalty: int = 0
    # bookkeeping
    evaluations: int = 0
    pending: Arm | None = None
    bytes_by_arm: dict = field(default_factory=lambda: {Arm.DEFAULT: 0, Arm.HIGH_BIAS: 0})

    def __post_init__(self):
        if self.lambda_ad <= 0 or self.sigma_ad <= 0:
            raise ValueError("scaling factors must be positive")
        if self.staleness_limit < 1:
            raise ValueError("staleness_limit must be >= 1")
        if self.trigger_threshold < 0:
            raise ValueError("trigger_threshold must be >= 0")

    @property
    def default_mode(self) -> RoutingMode:
        return RoutingMode.ADAPTIVE_1 if self.alltoall else RoutingMode.ADAPTIVE_0

    def mode_of(self, arm: Arm) -> RoutingMode:
        return self.default_mode if arm is Arm.DEFAULT else RoutingMode.ADAPTIVE_3

    def arm_of(self, mode: RoutingMode) -> Arm:
        mode = RoutingMode.parse(mode)
        if mode is RoutingMode.ADAPTIVE_3:
            return Arm.HIGH_BIAS
        if mode in (RoutingMode.ADAPTIVE_0, RoutingMode.ADAPTIVE_1):
            return Arm.DEFAULT
        raise ValueError(f"{mode.value} is not one of the policy's arms")

    @property
    def default_arm_fraction(self) -> float:
        total = sum(self.bytes_by_arm.values())
        return self.bytes_by_arm[Arm.DEFAULT] / total if total else 0.0


def estimate_counterpart(L_known: float, s_known: float, lam: float, sigma: float) -> tuple[float, float]:
    return L_known * lam, s_known * sigma


def switch_threshold(L_ad: float, L_bs: float, s_ad: float, s_bs: float, p: int) -> float:
    """Flit count at which both arms predict the same transmission time."""
    return (L_ad - L_bs) / (s_bs - s_ad) * (p + OUTSTANDING_WINDOW / 2) / OUTSTANDING_WINDOW


def high_bias_faster(L_ad: float, L_bs: float, s_ad: float, s_bs: float, f: int, p: int) -> bool:
    """Strictly faster on high bias, via the flit-count bound.

    Dividing by ``s_bs - s_ad`` flips the inequality when high bias stalls
    less; equal stall ratios reduce to comparing latencies.
    """
    if s_bs == s_ad:
        return L_bs < L_ad
    bound = switch_threshold(L_ad, L_bs, s_ad, s_bs, p)
    return f < bound if s_bs > s_ad else f > bound


def default_faster(L_ad: float, L_bs: float, s_ad: float, s_bs: float, f: int, p: int) -> bool:
    if s_bs == s_ad:
        return L_ad < L_bs
    bound = switch_threshold(L_ad, L_bs, s_ad, s_bs, p)
    return f > bound if s_bs > s_ad else f < bound


def _evaluate(state: PolicyState, f: int, p: int) -> Arm:
    limit = state.staleness_limit
    if state.current is Arm.DEFAULT:
        if state.L_ad is None:
            return Arm.DEFAULT
        if state.obs_age_bs > limit or state.L_bs is None:
            state.L_bs, state.s_bs = estimate_counterpart(
                state.L_ad, state.s_ad, state.lambda_ad, state.sigma_ad
            )
        if high_bias_faster(state.L_ad, state.L_bs, state.s_ad, state.s_bs, f, p):
            return Arm.HIGH_BIAS
        return Arm.DEFAULT
    if state.L_bs is None:
        return Arm.HIGH_BIAS
    if state.obs_age_ad > limit or state.L_ad is None:
        state.L_ad, state.s_ad = estimate_counterpart(
            state.L_bs, state.s_bs, 1 / state.lambda_ad, 1 / state.sigma_ad
        )
    if default_faster(state.L_ad, state.L_bs, state.s_ad, state.s_bs, f, p):
        return Arm.DEFAULT
    return Arm.HIGH_BIAS


def select_routing(msg_size: int, state: PolicyState,
                   kind: MessageKind | str = MessageKind.PUT) -> RoutingMode:
    """Pick the routing mode for the next message and update ``state``."""
    state.cumulative_bytes += msg_size
    if state.cumulative_bytes < state.trigger_threshold:
        state.bytes_by_arm[Arm.HIGH_BIAS] += msg_size
        return RoutingMode.ADAPTIVE_3
    state.cumulative_bytes = 0
    state.evaluations += 1
    f, p = flit_counts(msg_size, kind)
    choice = _evaluate(state, f, p)
    if state.hysteresis and choice is not state.current:
        if state.pending is not choice:
            state.pending = choice
            choice = state.current
        else:
            state.pending = None
    else:
        state.pending = None
    state.current = choice
    state.bytes_by_arm[choice] += msg_size
    return state.mode_of(choice)


def record_observation(mode: RoutingMode | str, L: float, s: float, state: PolicyState) -> PolicyState:
    """Store the latest counters read after a message sent with ``mode``."""
    if L <= 0 or s < 0:
        raise ValueError(f"invalid observation L={L}, s={s}")
    if state.arm_of(mode) is Arm.HIGH_BIAS:
        state.L_bs, state.s_bs = L, s
        state.obs_age_bs = 0
        state.obs_age_ad += 1
    else:
        state.L_ad, state.s_ad = L, s
        state.obs_age_ad = 0
        state.obs_age_bs += 1
    return state


def oracle_choice(L_ad, L_bs, s_ad, s_bs, f, p, current: Arm = Arm.DEFAULT) -> Arm:
    """Arm with the lower predicted time; ties keep ``current``."""
    if s_bs == s_ad:
        if L_bs == L_ad:
            return current
        return Arm.HIGH_BIAS if L_bs < L_ad else Arm.DEFAULT
    t_ad = tmsg(L_ad, s_ad, f, p)
    t_bs = tmsg(L_bs, s_bs, f, p)
    if t_bs == t_ad:
        return current
    return Arm.HIGH_BIAS if t_bs < t_ad else Arm.DEFAULT


def calibrate_scaling(samples: Iterable[tuple[float, float, float, float]]) -> tuple[float, float]:
    """Median ratios high-bias/default over ``(L_ad, s_ad, L_bs, s_bs)`` samples."""
    lam, sig = [], []
    for L_ad, s_ad, L_bs, s_bs in samples:
        if L_ad > 0:
            lam.append(L_bs / L_ad)
        if s_ad > 0:
            sig.append(s_bs / s_ad)
    return (statistics.median(lam) if lam else 1.0,
            statistics.median(sig) if sig else 1.0)
