import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volopt import (
    WHOLE_LINE,
    Interval,
    IntervalUnion,
    SortedSample,
    contains,
    count_covered,
    is_subset,
    normalize,
    volume,
)


def test_normalize_merges_overlap():
    u = normalize([(0, 1), (0.5, 2)])
    assert u.pairs() == [[0, 2]]


def test_normalize_point_interval():
    u = normalize([(3, 3)])
    assert u.pairs() == [[3, 3]]
    assert volume(u) == 0.0


def test_normalize_sorts():
    u = normalize([(5, 6), (0, 1)])
    assert u.pairs() == [[0, 1], [5, 6]]


def test_normalize_merges_touching():
    u = normalize([(0, 1), (1, 2)])
    assert u.pairs() == [[0, 2]]


def test_normalize_rejects_inverted():
    with pytest.raises(ValueError):
        normalize([(2, 1)])


def test_capacity_bound():
    with pytest.raises(ValueError):
        IntervalUnion((Interval(0, 1), Interval(2, 3)), k=1)
    assert len(normalize([(0, 1), (0.5, 3)], k=1)) == 1


def test_volume_examples():
    assert volume(normalize([(0, 1), (2, 4)])) == 3.0
    assert volume(normalize([(3, 3)])) == 0.0
    assert volume(IntervalUnion(())) == 0.0


def test_contains_closed_endpoints():
    u = normalize([(0, 1)])
    assert contains(u, 1.0)
    assert not contains(u, 1.0000001)
    assert contains(normalize([(3, 3)]), 3)
    assert not contains(IntervalUnion(()), 0.0)


def test_count_covered_examples():
    s = SortedSample.from_values([1, 2, 3, 4, 5])
    assert count_covered(s, normalize([(2, 4)])) == 3
    assert count_covered(SortedSample.from_values([1, 2, 3]), IntervalUnion(())) == 0
    assert count_covered(SortedSample.from_values([0, 0, 0, 1]), normalize([(0, 0)])) == 3


def test_whole_line_sentinel():
    assert WHOLE_LINE.volume == float("inf")
    assert WHOLE_LINE.contains(1e300) and WHOLE_LINE.contains(-1e300)
    s = SortedSample.from_values([1, 2, 3])
    assert count_covered(s, WHOLE_LINE) == 3
    assert is_subset(normalize([(0, 1)]), WHOLE_LINE)
    assert not is_subset(WHOLE_LINE, normalize([(0, 1)]))


def test_is_subset():
    a = normalize([(0, 1), (2, 3)])
    b = normalize([(0, 5)])
    assert is_subset(a, b)
    assert not is_subset(b, a)
    assert is_subset(IntervalUnion(()), a)
    assert is_subset(a, a)


def test_json_roundtrip_full_precision():
    u = normalize([(0.1, 0.30000000000000004), (5.5, 7.25)])
    back = IntervalUnion.from_json(u.to_json())
    assert back == u
    assert json.loads(u.to_json()) == u.pairs()


def test_sorted_sample_validation():
    with pytest.raises(ValueError):
        SortedSample(np.array([2.0, 1.0]))
    s = SortedSample.from_values([3, 1, 2])
    assert s.values.tolist() == [1, 2, 3]
    assert s.n == 3


finite = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


@st.composite
def interval_lists(draw):
    pairs = draw(st.lists(st.tuples(finite, finite), min_size=0, max_size=8))
    return [(min(a, b), max(a, b)) for a, b in pairs]


@given(interval_lists())
@settings(max_examples=100, deadline=None)
def test_normalize_idempotent(ivs):
    once = normalize(ivs)
    twice = normalize(once.intervals)
    assert once == twice


@given(interval_lists(), interval_lists())
@settings(max_examples=100, deadline=None)
def test_union_volume_subadditive(a, b):
    va = volume(normalize(a))
    vb = volume(normalize(b))
    vu = volume(normalize(list(a) + list(b)))
    assert vu <= va + vb + 1e-9 * (1 + va + vb)


@given(
    st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=1, max_size=40),
    interval_lists(),
)
@settings(max_examples=100, deadline=None)
def test_count_covered_matches_linear_scan(values, ivs):
    s = SortedSample.from_values(values)
    u = normalize(ivs)
    fast = count_covered(s, u)
    slow = sum(1 for v in s.values if u.contains(float(v)))
    assert fast == slow
