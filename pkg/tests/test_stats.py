import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from dragonroute.counters import NicCounters
from dragonroute.stats import (
    EmptySample,
    TooFewSamples,
    ZeroDenominator,
    ZeroInterval,
    describe,
    iqr,
    median_ci95,
    normalize_counters,
    qcd,
    quartiles,
)


def brute_quantile(xs, q):
    """Closest-rank linear interpolation written out by hand."""
    s = sorted(xs)
    pos = q * (len(s) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def test_quartile_examples():
    assert quartiles([1, 2, 3, 4, 5]) == (2, 3, 4)
    assert quartiles([7, 7, 7]) == (7, 7, 7)
    assert quartiles([42]) == (42, 42, 42)
    assert iqr([1, 2, 3, 4, 5]) == 2
    with pytest.raises(EmptySample):
        quartiles([])


def test_qcd_examples():
    assert qcd([1, 2, 3, 4, 5]) == pytest.approx(1 / 3)
    assert qcd([4, 4, 4]) == 0
    with pytest.raises(ZeroDenominator):
        qcd([0, 0, 0])


def test_ci_examples():
    lo, hi = median_ci95(range(1, 101))
    assert hi - lo == pytest.approx(2 * 1.57 * 49.5 / 10)
    assert median_ci95([3, 3, 3]) == (3, 3)
    with pytest.raises(TooFewSamples):
        median_ci95([1, 2])


def test_against_brute_force():
    rng = random.Random(1)
    for _ in range(300):
        xs = [rng.uniform(0.1, 100) for _ in range(rng.randrange(1, 400))]
        q1, med, q3 = quartiles(xs)
        assert q1 == pytest.approx(brute_quantile(xs, 0.25), rel=1e-12)
        assert med == pytest.approx(brute_quantile(xs, 0.5), rel=1e-12)
        assert q3 == pytest.approx(brute_quantile(xs, 0.75), rel=1e-12)


def test_large_sample_against_brute_force():
    rng = random.Random(5)
    xs = [rng.expovariate(1.0) for _ in range(10_000)]
    assert quartiles(xs)[2] == pytest.approx(brute_quantile(xs, 0.75), rel=1e-12)


positive = st.lists(st.floats(0.01, 1e6, allow_nan=False), min_size=1, max_size=50)


@settings(max_examples=200, deadline=None)
@given(positive, st.floats(0.01, 1e3))
def test_qcd_scale_invariant(xs, c):
    assert qcd([c * x for x in xs]) == pytest.approx(qcd(xs), rel=1e-9, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(positive)
def test_qcd_translation_sensitive(xs):
    if iqr(xs) > 1e-6 * max(xs):
        assert qcd([x + 1000 for x in xs]) < qcd(xs)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=60))
def test_ci_contains_median(xs):
    lo, hi = median_ci95(xs)
    assert lo <= quartiles(xs)[1] <= hi


def test_ci_width_shrinks_with_root_n():
    rng = random.Random(2)
    widths = {}
    for n in (100, 400, 1600):
        w = []
        for _ in range(40):
            xs = [rng.gauss(0, 1) for _ in range(n)]
            lo, hi = median_ci95(xs)
            w.append(hi - lo)
        widths[n] = sum(w) / len(w)
    assert widths[100] / widths[400] == pytest.approx(2, rel=0.15)
    assert widths[400] / widths[1600] == pytest.approx(2, rel=0.15)


def test_describe_keys():
    d = describe([1, 2, 3, 4, 5])
    assert set(d) == {"q1", "median", "q3", "iqr", "qcd", "ci_low", "ci_high", "mean"}
    assert d["mean"] == 3


def test_normalize_counters():
    a = normalize_counters(NicCounters(110_000_000, 0, 0, 0), 1.0)
    b = normalize_counters(NicCounters(255_000_000, 0, 0, 0), 2.0)
    assert a["req_flits"] == 110e6 and b["req_flits"] == 127.5e6
    assert set(normalize_counters(NicCounters(), 5).values()) == {0.0}
    d = NicCounters(10, 4, 2, 8)
    assert normalize_counters(d + d, 4) == normalize_counters(d, 2)
    with pytest.raises(ZeroInterval):
        normalize_counters(d, 0)
