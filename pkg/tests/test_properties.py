"""Invariants checked over generated cases; every test here runs at least 1000 examples."""

import random
from fractions import Fraction as Fr
from functools import lru_cache

from hypothesis import given
from hypothesis import strategies as st

from conftest import corpus, example
from ivl.classify import (
    Budget,
    Certificate,
    Notion,
    ball_points,
    certify_point,
    compatible,
    implies,
    refute_point,
    replay_certificate,
    replay_refutation,
)
from ivl.core import ControlSchedule, Scalar
from ivl.spanning import EXACT, NoSpanningSet, ProfileEntry, complexity_profile, kernel_row, make_grid
from ivl.store import cert_from_dict, cert_to_dict, pack, ref_from_dict, ref_to_dict

EXAMPLES = ["A1", "A2", "A3", "A4", "A5"]
SMALL_GRID = {"A1": Fr(1, 32), "A2": Fr(1, 32), "A3": 4, "A4": Fr(1, 32), "A5": Fr(1, 32)}
EPS_LADDER = [Fr(1, 16), Fr(1, 10), Fr(1, 8), Fr(1, 4), Fr(1, 2)]


@lru_cache(maxsize=None)
def small_grid(eid):
    ex = example(eid)
    return make_grid(ex.target, SMALL_GRID[eid])


@st.composite
def kernel_cases(draw):
    eid = draw(st.sampled_from(EXAMPLES))
    alphabet = sorted(example(eid).system.alphabet)
    word = tuple(draw(st.lists(st.sampled_from(alphabet), min_size=1, max_size=10)))
    eps = draw(st.sampled_from(EPS_LADDER))
    return eid, word, eps


def subset(a, b):
    return a & ~b == 0


# --- kernels


@given(kernel_cases(), st.sampled_from(["plain", "mean"]))
def test_kernel_antitone_in_horizon(case, mode):
    eid, word, eps = case
    ex, g = example(eid), small_grid(eid)
    rows = [kernel_row(ex.system, g, word[:n], eps, mode) for n in range(1, len(word) + 1)]
    assert all(subset(rows[i + 1], rows[i]) for i in range(len(rows) - 1))


@given(kernel_cases(), st.sampled_from(EPS_LADDER))
def test_kernel_monotone_in_eps_and_mean_contains_plain(case, other):
    eid, word, eps = case
    ex, g = example(eid), small_grid(eid)
    lo, hi = sorted((eps, other))
    for mode in ("plain", "mean"):
        assert subset(kernel_row(ex.system, g, word, lo, mode), kernel_row(ex.system, g, word, hi, mode))
    assert subset(kernel_row(ex.system, g, word, eps, "plain"), kernel_row(ex.system, g, word, eps, "mean"))


# --- invariance complexity


PROFILE_EPS = [Fr(1, 10), Fr(1, 8), Fr(1, 4)]
NMAX = 10


@lru_cache(maxsize=None)
def small_profile(eid, eps, mode):
    """Entries by horizon; horizons with no spanning set (r = ∞) are absent."""
    ex = example(eid)
    for nmax in range(NMAX, 0, -1):
        try:
            return {e.n: e for e in complexity_profile(ex.system, small_grid(eid), eps, nmax, mode).entries}
        except NoSpanningSet:
            continue
    return {}


@given(st.sampled_from(EXAMPLES), st.sampled_from(PROFILE_EPS), st.sampled_from(PROFILE_EPS), st.integers(1, NMAX - 1))
def test_r_inv_monotone(eid, e1, e2, n):
    lo, hi = sorted((e1, e2))
    inf = ProfileEntry(0, float("inf"), EXACT, float("inf"))
    for mode in ("plain", "mean"):
        p = small_profile(eid, lo, mode)
        a, b = p.get(n, inf), p.get(n + 1, inf)
        # once no spanning set exists it never exists again
        assert n + 1 not in p or n in p
        if a.tag == EXACT and b.tag == EXACT:
            assert a.r <= b.r
        assert a.lower_bound <= a.r
        q = small_profile(eid, hi, mode).get(n, inf)
        if a.tag == EXACT and q.tag == EXACT:
            assert q.r <= a.r
    plain, mean = small_profile(eid, lo, "plain").get(n, inf), small_profile(eid, lo, "mean").get(n, inf)
    if plain.tag == EXACT and mean.tag == EXACT:
        assert mean.r <= plain.r


# --- certificates and refutations from the preset corpus


def _corpus_pools():
    certs, refs = [], []
    for run in corpus().runs:
        for sv in run.sets.values():
            for v in sv.points.values():
                if v.certificate is not None:
                    certs.append((run.id.name, v.certificate))
                elif v.refutation is not None:
                    refs.append((run.id.name, v.refutation))
    return certs, refs


@lru_cache(maxsize=None)
def pools():
    return _corpus_pools()


@lru_cache(maxsize=None)
def replay_sample():
    certs, refs = pools()
    rnd = random.Random(1019)
    return rnd.sample(certs, min(24, len(certs))), rnd.sample(refs, min(12, len(refs)))


@given(st.data())
def test_witness_encoding_is_bit_stable(data):
    certs, refs = pools()
    _, c = data.draw(st.sampled_from(certs))
    d = cert_to_dict(c)
    again = cert_from_dict(d)
    assert again == c and pack(b"X", [cert_to_dict(again)]) == pack(b"X", [d])
    _, r = data.draw(st.sampled_from(refs))
    d = ref_to_dict(r)
    assert ref_from_dict(d) == r and pack(b"X", [ref_to_dict(ref_from_dict(d))]) == pack(b"X", [d])


_replays: dict = {}


def _replay_cert(eid, c, eps=None):
    key = ("c", id(c), eps)
    if key not in _replays:
        ex = example(eid)
        _replays[key] = (replay_certificate(ex.system, ex.target, c, eps), replay_certificate(ex.system, ex.target, cert_from_dict(cert_to_dict(c)), eps))
    return _replays[key]


def _replay_ref(eid, r):
    key = ("r", id(r))
    if key not in _replays:
        ex = example(eid)
        _replays[key] = (replay_refutation(ex.system, ex.target, r), replay_refutation(ex.system, ex.target, ref_from_dict(ref_to_dict(r))))
    return _replays[key]


@given(st.data(), st.sampled_from([Fr(1), Fr(5, 4), Fr(2)]))
def test_replay_bit_stable_and_downward_closed(data, scale):
    certs, refs = replay_sample()
    eid, c = data.draw(st.sampled_from(certs))
    first, decoded = _replay_cert(eid, c)
    assert first is True and decoded is True
    # a certificate at ε also certifies every larger tolerance
    assert _replay_cert(eid, c, c.eps * scale) == (True, True)
    eid, r = data.draw(st.sampled_from(refs))
    assert _replay_ref(eid, r) == (True, True)


# --- no certified/refuted coexistence


COEX_POINTS = {"A1": Fr(1, 64)}
COEX_EPS = [Fr(1, 10), Fr(1, 8), Fr(1, 4)]
COEX_BUDGET = Budget(burn_in=128, window=64, density_horizon=512)
NOTIONS = [Notion.EI, Notion.EIM, Notion.MEI, Notion.FEI, Notion.FEIM, Notion.FMEI]


@lru_cache(maxsize=None)
def coex_points(eid):
    ex = example(eid)
    return make_grid(ex.target, COEX_POINTS[eid]).points


@lru_cache(maxsize=None)
def certified(eid, j, notion, eps):
    ex = example(eid)
    v = certify_point(ex.system, ex.target, coex_points(eid)[j], notion, eps, COEX_BUDGET)
    if v.certificate is None or not replay_certificate(ex.system, ex.target, v.certificate):
        return None
    return v.certificate


@lru_cache(maxsize=None)
def refuted(eid, j, notion, eps):
    ex = example(eid)
    v = refute_point(ex.system, ex.target, coex_points(eid)[j], notion, eps, Fr(1, 256), 16)
    if v.refutation is None or not replay_refutation(ex.system, ex.target, v.refutation):
        return None
    return v.refutation


@st.composite
def coex_cases(draw):
    eid = draw(st.sampled_from(sorted(COEX_POINTS)))
    j = draw(st.integers(0, len(coex_points(eid)) - 1))
    strong = draw(st.sampled_from(NOTIONS))
    weak = draw(st.sampled_from([n for n in NOTIONS if implies(strong, n)]))
    e1, e2 = sorted((draw(st.sampled_from(COEX_EPS)), draw(st.sampled_from(COEX_EPS))))
    return eid, j, strong, weak, e1, e2


@given(coex_cases())
def test_no_certified_refuted_coexistence(case):
    # a replaying certificate for a stronger notion at ε and a replaying refutation of a
    # weaker notion at ε' ≥ ε at the same point would contradict each other
    eid, j, strong, weak, e1, e2 = case
    c = certified(eid, j, strong, e1)
    if c is None:
        return
    r = refuted(eid, j, weak, e2)
    assert r is None or not compatible(c, r)


def test_coexistence_detector_negative_control():
    # a fabricated certificate contradicting a real refutation is caught by replay
    ex = example("A1")
    x = Scalar(Fr(3, 8))
    r = refute_point(ex.system, ex.target, x, Notion.EI, Fr(1, 8), Fr(1, 256), 16).refutation
    ball = ball_points(ex.target, x, Fr(1, 16), Fr(1, 1024))
    fake = Certificate(Notion.EI, x, Fr(1, 8), Fr(1, 16), [ControlSchedule.constant(0)], {"horizon": 64}, Fr(1, 1024), [(y, 0, Scalar(0)) for y in ball])
    assert compatible(fake, r) and replay_refutation(ex.system, ex.target, r)
    assert not replay_certificate(ex.system, ex.target, fake)
