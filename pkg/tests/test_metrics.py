from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import example
from ivl.core import ControlSchedule, Scalar, SymbolicPoint, splice
from ivl.examples import a2_eim_construction
from ivl.metrics import (
    BlockLanguage,
    IntervalUnion,
    MeanProfile,
    dist_to_set,
    distance_sequence,
    exception_density,
    exceptions_from_distances,
    in_eps_neighborhood,
    limsup_mean_estimate,
    mean_profile,
    upper_density_estimate,
)

ZERO, ONE = ControlSchedule.constant(0), ControlSchedule.constant(1)
AB = BlockLanguage(("ab", "cde"))


def test_interval_distance():
    Q = IntervalUnion.single(0, Fr(1, 4))
    assert dist_to_set(Scalar(Fr(1, 2)), Q) == Scalar(Fr(1, 4))
    assert dist_to_set(Scalar(Fr(1, 8)), Q) == Scalar(0)


def test_interval_union_validation():
    with pytest.raises(ValueError):
        IntervalUnion(((0, Fr(1, 2)), (Fr(1, 4), 1)))
    with pytest.raises(ValueError):
        IntervalUnion(())


def test_interval_distance_of_enclosure_contains_pointwise():
    Q = IntervalUnion(((0, Fr(1, 8)), (Fr(1, 2), Fr(3, 4))))
    x = Scalar(Fr(1, 4), Fr(3, 8))
    d = dist_to_set(x, Q)
    for q in (Fr(1, 4), Fr(5, 16), Fr(3, 8)):
        assert d.lo <= Q.distance(Scalar(q)).lo <= d.hi


def test_block_language_distance():
    assert dist_to_set(SymbolicPoint("", "b"), AB) == Scalar(1)
    assert dist_to_set(SymbolicPoint("ab", "b"), AB) == Scalar(Fr(1, 3))
    assert dist_to_set(SymbolicPoint("abcde", "ab"), AB) == Scalar(0)


def test_eps_neighborhood():
    Q = IntervalUnion.single(Fr(1, 4), Fr(1, 2))
    assert not in_eps_neighborhood(Scalar(1), Q, Fr(1, 8))
    assert in_eps_neighborhood(Scalar(1), Q, Fr(3, 5))
    assert in_eps_neighborhood(Scalar(Fr(1, 3)), Q, Fr(1, 1000))


def test_mean_profile_zero_inside(a1):
    p = mean_profile(a1.system, Scalar(Fr(5, 16)), ZERO, a1.target, 20)
    assert all(v == Scalar(0) for v in p.values)


def test_mean_profile_a4_two_steps(a4):
    p = mean_profile(a4.system, Scalar(0), ZERO, a4.target, 2)
    assert p.values[1] == Scalar(Fr(1, 8))


def test_mean_profile_a2_construction_peak(a2):
    N, delta, omega = a2_eim_construction(Fr(1, 100))
    p = mean_profile(a2.system, Scalar(Fr(3, 8)), omega, a2.target, 200)
    peak = max(p.values, key=lambda v: v.lo)
    k = p.values.index(peak) + 1
    # the excursion to 1 happens at time N+1 and is first averaged in at k = N+2
    assert (k, peak) == (N + 2, Scalar(Fr(1, 2 * (N + 2))))
    assert all(v.lo <= peak.lo for v in p.values[k:])


def test_running_max_nondecreasing(a5):
    p = mean_profile(a5.system, Scalar(Fr(5, 16)), ONE, a5.target, 64)
    his = [m.hi for m in p.running_max]
    assert his == sorted(his)


def test_limsup_estimates(a4, a5):
    est, trend = limsup_mean_estimate(a4.system, Scalar(Fr(1, 8)), ONE, a4.target, 512, 256)
    assert est.hi < Fr(1, 100) and trend
    est, _ = limsup_mean_estimate(a5.system, Scalar(Fr(5, 16)), ZERO, a5.target, 512, 256)
    assert est.lo >= Fr(1, 16)


def test_upper_density():
    assert upper_density_estimate([False] * 10) == 0
    E = [k % 2 == 0 for k in range(100)]
    assert abs(upper_density_estimate(E) - Fr(1, 2)) <= Fr(1, 100)
    with pytest.raises(ValueError):
        upper_density_estimate([])


def test_exception_density_examples(a2, a5):
    N, delta, omega = a2_eim_construction(Fr(1, 10))
    assert exception_density(a2.system, Scalar(Fr(3, 8)), omega, a2.target, Fr(1, 10), 256) <= Fr(1, 128)
    d = exception_density(a5.system, Scalar(Fr(3, 8) + Fr(1, 64)), ONE, a5.target, Fr(1, 16), 256)
    assert d >= Fr(1, 2)


def test_distance_sequence_periodic_shortcut_matches_direct(a2):
    omega = splice([0, 0, 1], ControlSchedule((), (0, 2)))
    x = Scalar(Fr(13, 32))
    fast = distance_sequence(a2.system, x, omega, a2.target, 40)
    direct = [dist_to_set(y, a2.target) for y in a2.system.trajectory(x, omega, 39)]
    assert fast == direct


dists = st.lists(st.fractions(0, 1, max_denominator=64).map(Scalar), min_size=1, max_size=40)


@given(dists)
def test_mean_recurrence_exact(ds):
    p = MeanProfile.from_distances(ds)
    for k in range(1, len(ds)):
        assert p.values[k].value == (k * p.values[k - 1].value + ds[k].value) / (k + 1)


@settings(max_examples=300)
@given(dists, st.fractions(Fr(1, 64), 1, max_denominator=64))
def test_small_means_force_small_exception_density(ds, eps):
    # if every running mean is below ε², the exceptions at level ε have density below ε
    p = MeanProfile.from_distances(ds)
    if max(v.hi for v in p.values) < eps * eps:
        E = exceptions_from_distances(ds, eps)
        assert all(Fr(sum(E[:n]), n) < eps for n in range(1, len(E) + 1))


@settings(max_examples=300)
@given(st.lists(st.booleans(), min_size=1, max_size=60), st.randoms())
def test_density_depends_on_prefix_counts_only(E, rnd):
    # permuting within the first half leaves every evaluated prefix count unchanged
    from math import ceil

    head = max(ceil(len(E) / 2) - 1, 0)
    first = E[:head]
    rnd.shuffle(first)
    assert upper_density_estimate(first + E[head:]) == upper_density_estimate(E)
