from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivl.core import (
    AmbiguityError,
    ControlSchedule,
    OutOfSpaceError,
    Scalar,
    SymbolicPoint,
    cube_root,
    format_schedule,
    parse_schedule,
    splice,
    step,
    trajectory,
)
from ivl.examples import embed


# --- scalars


def test_exact_arithmetic_stays_exact():
    a, b = Scalar(Fr(1, 3)), Scalar(Fr(1, 6))
    assert (a + b).is_exact and (a + b).value == Fr(1, 2)
    assert (a - b).value == Fr(1, 6)
    assert (a * b).value == Fr(1, 18)


def test_overlapping_enclosures_are_ambiguous():
    a = Scalar(Fr(0), Fr(1, 2))
    b = Scalar(Fr(1, 4))
    with pytest.raises(AmbiguityError):
        _ = a < b


def test_disjoint_enclosures_compare():
    assert Scalar(Fr(0), Fr(1, 8)) < Scalar(Fr(1, 4))


def test_cube_root_encloses_true_value():
    r = cube_root(Scalar(Fr(1, 8)))
    assert r.lo <= Fr(1, 2) <= r.hi
    r = cube_root(Scalar(Fr(2)))
    assert r.lo ** 3 <= 2 <= r.hi ** 3
    assert r.error_bound <= Fr(1, 2**48)


def test_empty_enclosure_rejected():
    with pytest.raises(ValueError):
        Scalar(1, 0)


# --- symbolic points


def test_symbolic_canonical_form():
    assert SymbolicPoint("abab", "ab") == SymbolicPoint("", "ab")
    assert SymbolicPoint("a", "baba") == SymbolicPoint("", "ab")
    assert str(SymbolicPoint("", "b").shift(3)) == "(b)"


def test_shift_examples():
    x = SymbolicPoint("", "ab")
    assert x.shift(0) == x
    assert x.shift(1) == SymbolicPoint("b", "ab")
    assert SymbolicPoint("abcde", "ab").shift(2) == SymbolicPoint("cde", "ab")


def test_symbolic_metric():
    x, y = SymbolicPoint("abc", "ab"), SymbolicPoint("abd", "ab")
    assert x.distance(y) == Fr(1, 3)
    assert x.distance(x) == 0


@given(st.text("ab", max_size=6), st.text("ab", min_size=1, max_size=4), st.integers(0, 20))
def test_shift_matches_sequence(prefix, cycle, p):
    x = SymbolicPoint(prefix, cycle)
    seq = prefix + cycle * (40 + p)
    assert x.shift(p).take(20) == seq[p : p + 20]


# --- schedules


def test_schedule_indexing_and_splice():
    assert splice((), ControlSchedule.constant(1)) == ControlSchedule.constant(1)
    s = splice((0, 1), ControlSchedule.constant(1))
    assert s[5] == 1 and s[0] == 0
    w = splice([0] * 51 + [2], ControlSchedule.constant(0))
    assert w.take(53) == tuple([0] * 51 + [2, 0])


@pytest.mark.parametrize("text", ["0^4 2 (0)", "(1)", "0 1 1", "ε", "1^3 (0 1)"])
def test_schedule_round_trip(text):
    s = parse_schedule(text)
    assert parse_schedule(format_schedule(s)) == s


def test_schedule_parse_errors():
    with pytest.raises(ValueError):
        parse_schedule("(0) 1")
    with pytest.raises(ValueError):
        parse_schedule("0 ? 1")


def test_finite_schedule_bounds():
    s = ControlSchedule.word([0, 1])
    with pytest.raises(IndexError):
        s[2]


# --- stepping


def test_step_examples(a1, a4):
    assert step(a1.system, Scalar(Fr(5, 16)), 0) == Scalar(Fr(5, 16))
    assert step(a1.system, Scalar(Fr(7, 16)), 1) == Scalar(Fr(1, 2))
    assert step(a1.system, Scalar(Fr(7, 16)), 0) == Scalar(Fr(11, 16))
    assert step(a4.system, Scalar(0), 1) == Scalar(1)
    assert step(a4.system, Scalar(0), 0) == Scalar(Fr(1, 2))


def test_out_of_space(a1):
    with pytest.raises(OutOfSpaceError):
        a1.system.step(Scalar(Fr(3, 2)), 0)
    with pytest.raises(ValueError):
        a1.system.step(Scalar(Fr(1, 2)), 7)


def test_trajectory_basics(a1, a3):
    t = trajectory(a1.system, Scalar(Fr(5, 16)), ControlSchedule.constant(0), 10)
    assert t == [Scalar(Fr(5, 16))] * 11
    assert trajectory(a1.system, Scalar(Fr(1, 3)), ControlSchedule.constant(0), 0) == [Scalar(Fr(1, 3))]
    x = embed("ABA")
    t = trajectory(a3.system, x, ControlSchedule.word([0, 1]), 2)
    assert t[1] == x.shift(2) and t[2] == x.shift(2).shift(3)


points = st.fractions(0, 1, max_denominator=256).map(Scalar)
words = st.lists(st.integers(0, 1), max_size=16)


@settings(max_examples=200)
@given(points, words, st.integers(0, 16), st.integers(0, 16))
def test_trajectory_prefix_consistency(x, word, n, m):
    from conftest import example

    sys = example("A1").system
    sched = splice(word, ControlSchedule.constant(0))
    long = sys.trajectory(x, sched, n + m)
    assert long[: n + 1] == sys.trajectory(x, sched, n)


@settings(max_examples=200)
@given(points, words, words, st.integers(0, 10))
def test_trajectory_cocycle(x, head, tail, k):
    from conftest import example

    sys = example("A4").system
    omega = splice(tail, ControlSchedule.constant(1))
    full = sys.trajectory(x, splice(head, omega), len(head) + k)
    mid = sys.run(x, head)
    assert full[len(head) + k] == sys.trajectory(mid, omega, k)[k]
