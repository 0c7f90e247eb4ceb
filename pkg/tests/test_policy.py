import random

import pytest

from dragonroute.counters import tmsg
from dragonroute.packets import flit_counts
from dragonroute.policy import (
    Arm,
    PolicyState,
    calibrate_scaling,
    default_faster,
    estimate_counterpart,
    high_bias_faster,
    oracle_choice,
    record_observation,
    select_routing,
    switch_threshold,
)
from dragonroute.routing import RoutingMode

A0, A1, A3 = RoutingMode.ADAPTIVE_0, RoutingMode.ADAPTIVE_1, RoutingMode.ADAPTIVE_3


def fresh(**kw):
    return PolicyState(**kw)


def test_small_messages_use_high_bias_without_evaluation():
    st = fresh(cumulative_bytes=1024)
    assert select_routing(2048, st) is A3
    assert st.evaluations == 0 and st.cumulative_bytes == 3072


def test_trigger_resets_cumulative_bytes():
    st = fresh()
    modes = [select_routing(1024, st) for _ in range(8)]
    assert modes[:3] == [A3] * 3
    assert st.evaluations == 2  # at 4096 and again at 8192
    assert st.cumulative_bytes == 0


def test_first_evaluation_uses_default():
    assert select_routing(8192, fresh()) is A0
    assert select_routing(8192, fresh(alltoall=True)) is A1


def test_switch_threshold_worked_example():
    # (1000 / 2) * (513 / 1024) = 250.49
    assert switch_threshold(2000, 1000, 1, 3, 1) == pytest.approx(250.5, abs=0.05)
    assert high_bias_faster(2000, 1000, 1, 3, f=100, p=1)
    assert not high_bias_faster(2000, 1000, 1, 3, f=300, p=1)


def test_single_threshold_in_f():
    flips = [high_bias_faster(2000, 1000, 1, 3, f, 1) for f in range(1, 600)]
    assert flips == sorted(flips, reverse=True)


def test_equal_stalls_compare_latency():
    assert high_bias_faster(10, 5, 1, 1, 100, 1)
    assert not high_bias_faster(5, 10, 1, 1, 100, 1)
    assert default_faster(5, 10, 1, 1, 100, 1)


def test_record_observation_bookkeeping():
    st = fresh()
    record_observation(A3, 100, 0.5, st)
    assert (st.L_bs, st.s_bs, st.obs_age_bs) == (100, 0.5, 0)
    record_observation(A0, 80, 0.1, st)
    record_observation(A0, 90, 0.2, st)
    assert (st.L_ad, st.s_ad, st.obs_age_ad) == (90, 0.2, 0)
    assert st.obs_age_bs == 2
    with pytest.raises(ValueError):
        record_observation(A0, 0, 0, st)


def test_stale_counterpart_is_re_estimated():
    st = fresh(staleness_limit=3, lambda_ad=0.5, sigma_ad=2.0)
    record_observation(A3, 999, 9, st)
    for _ in range(4):
        record_observation(A0, 1000, 0.1, st)
    select_routing(8192, st)
    assert (st.L_bs, st.s_bs) == (500, 0.2)


def test_estimate_counterpart():
    assert estimate_counterpart(2000, 0.3, 1, 1) == (2000, 0.3)
    assert estimate_counterpart(2000, 0.3, 0.8, 1)[0] == 1600


def test_calibration_is_median_ratio():
    lam, sig = calibrate_scaling([(100, 1, 50, 2), (100, 1, 80, 4), (100, 1, 90, 3)])
    assert lam == 0.8 and sig == 3


def _state_with(L_ad, s_ad, L_bs, s_bs, current):
    return PolicyState(current=current, L_ad=L_ad, s_ad=s_ad, L_bs=L_bs, s_bs=s_bs,
                       obs_age_ad=0, obs_age_bs=0)


def test_oracle_equivalence_randomized():
    rng = random.Random(11)
    for _ in range(2000):
        L_ad, L_bs = rng.uniform(10, 5000), rng.uniform(10, 5000)
        s_ad, s_bs = rng.uniform(0, 3), rng.uniform(0, 3)
        size = rng.randrange(4096, 1 << 20)
        kind = rng.choice(["PUT", "GET"])
        current = rng.choice(list(Arm))
        st = _state_with(L_ad, s_ad, L_bs, s_bs, current)
        f, p = flit_counts(size, kind)
        got = st.arm_of(select_routing(size, st, kind))
        assert got is oracle_choice(L_ad, L_bs, s_ad, s_bs, f, p, current)


def test_scale_invariance_of_choice():
    rng = random.Random(3)
    for _ in range(500):
        L_ad, L_bs = rng.uniform(10, 5000), rng.uniform(10, 5000)
        s_ad, s_bs = rng.uniform(0, 3), rng.uniform(0, 3)
        c = rng.uniform(0.1, 10)
        f, p = flit_counts(rng.randrange(4096, 1 << 18))
        bound = switch_threshold(L_ad, L_bs, s_ad, s_bs, p)
        assert switch_threshold(c * L_ad, c * L_bs, c * s_ad, c * s_bs, p) == pytest.approx(bound)
        if abs(f - bound) > 1e-6 * f:
            assert high_bias_faster(L_ad, L_bs, s_ad, s_bs, f, p) == high_bias_faster(
                c * L_ad, c * L_bs, c * s_ad, c * s_bs, f, p)


def test_hysteresis_needs_two_votes():
    st = _state_with(100, 0, 5000, 0, Arm.HIGH_BIAS)
    st.hysteresis = True
    assert select_routing(8192, st) is A3
    assert select_routing(8192, st) is A0


def test_bytes_by_arm_fraction():
    st = fresh()
    select_routing(1024, st)
    select_routing(8192, st)
    assert st.default_arm_fraction == pytest.approx(8192 / 9216)


def test_tmsg_helper_matches_model():
    assert tmsg(1000, 0, 5, 1) == pytest.approx(505.98, abs=0.01)


def test_invalid_state():
    with pytest.raises(ValueError):
        PolicyState(lambda_ad=0)
    with pytest.raises(ValueError):
        PolicyState(staleness_limit=0)
