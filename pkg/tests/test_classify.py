from dataclasses import replace
from fractions import Fraction as Fr
from functools import lru_cache
from itertools import product

import pytest

from conftest import example
from ivl.classify import (
    CERTIFIED,
    INCONCLUSIVE,
    REFUTED,
    Budget,
    Certificate,
    Notion,
    SetVerdict,
    StoreEntry,
    Verdict,
    VerdictStore,
    as_finite_certificate,
    ball_points,
    ball_within_reach,
    certify_point,
    classify_point,
    classify_set,
    compatible,
    escape_for_word,
    find_traps,
    implication_audit,
    implies,
    mean_l_stability_check,
    refute_point,
    replay_certificate,
    replay_refutation,
    theorem_audit,
)
from ivl.core import ControlSchedule, Scalar, splice
from ivl.examples import a2_eim_construction, embed
from ivl.spanning import ComplexityVerdict, interval_grid

ZERO, ONE = ControlSchedule.constant(0), ControlSchedule.constant(1)
x38 = Scalar(Fr(3, 8))


@lru_cache(maxsize=None)
def a1_ei_refutation():
    ex = example("A1")
    return refute_point(ex.system, ex.target, x38, Notion.EI, Fr(1, 8), Fr(1, 256), 16)


def test_notion_flags():
    assert not Notion.EI.finite and Notion.FEIM.finite
    assert Notion.MEI.criterion == "limsup" and Notion.FMLS.criterion == "density"
    assert Notion.EIM.finite_form is Notion.FEIM
    assert Notion.parse("fmei") is Notion.FMEI
    with pytest.raises((KeyError, ValueError)):
        Notion.parse("XYZ")


def test_implication_closure():
    assert implies(Notion.EI, Notion.FMEI)
    assert implies(Notion.EIM, Notion.MEI)
    assert not implies(Notion.FEI, Notion.EI)
    assert not implies(Notion.MEI, Notion.FEIM)


def test_ball_points_interval(a1):
    b = ball_points(a1.target, Scalar(Fr(1, 4)), Fr(1, 16), Fr(1, 64))
    assert b[0] == Scalar(Fr(1, 4))
    assert all(a1.target.contains(y) and abs(y.value - Fr(1, 4)) < Fr(1, 16) for y in b)
    assert len(b) == 4  # 1/4 + j/64, j = 0..3 (the left side lies outside Q)


def test_ball_points_symbolic(a3):
    x = embed("AB")
    b = ball_points(a3.target, x, Fr(1, 8))
    assert b[0] == x
    assert all(x.distance(y) < Fr(1, 8) for y in b)
    assert not ball_within_reach(a3.target, Fr(1, 128), 64)
    assert ball_within_reach(a3.target, Fr(1, 16), 64)


def test_certify_a1_fixed_point(a1):
    v = certify_point(a1.system, a1.target, Scalar(Fr(5, 16)), Notion.EI, Fr(1, 10), Budget())
    assert v.kind == CERTIFIED
    c = v.certificate
    assert c.family == [ZERO] and c.delta <= Fr(1, 16)
    assert replay_certificate(a1.system, a1.target, c)


def test_certify_a2_construction(a2):
    N, delta, omega = a2_eim_construction(Fr(1, 100))
    b = Budget(deltas=(delta,), candidates=(omega,), horizon=2 * N)
    v = certify_point(a2.system, a2.target, x38, Notion.EIM, Fr(1, 100), b)
    assert v.kind == CERTIFIED and v.certificate.family == [omega]
    assert replay_certificate(a2.system, a2.target, v.certificate)


def test_certify_a5_fmei(a5):
    b = Budget(candidates=(ZERO, ONE))
    v = certify_point(a5.system, a5.target, x38, Notion.FMEI, Fr(1, 100), b)
    assert v.kind == CERTIFIED and set(v.certificate.family) == {ZERO, ONE}
    assert replay_certificate(a5.system, a5.target, v.certificate)


def test_refute_a1_ei():
    ex = example("A1")
    v = a1_ei_refutation()
    assert v.kind == REFUTED and v.refutation.kind == "escape"
    assert replay_refutation(ex.system, ex.target, v.refutation)
    for word in [(0,) * 16, (1,) + (0,) * 15, (1,) * 16]:
        leaf = escape_for_word(v.refutation, word)
        assert word[: len(leaf.prefix)] == leaf.prefix
        assert abs(leaf.y.value - Fr(3, 8)) < Fr(1, 256)
        assert leaf.value.lo >= Fr(1, 8)


def test_refutation_tampering_detected():
    ex = example("A1")
    ref = a1_ei_refutation().refutation
    assert not replay_refutation(ex.system, ex.target, replace(ref, leaves=ref.leaves[1:]))
    bad = replace(ref.leaves[0], index=0)
    assert not replay_refutation(ex.system, ex.target, replace(ref, leaves=[bad] + ref.leaves[1:]))


def test_certificate_tampering_detected(a1):
    c = certify_point(a1.system, a1.target, Scalar(Fr(5, 16)), Notion.EI, Fr(1, 10), Budget()).certificate
    assert not replay_certificate(a1.system, a1.target, replace(c, family=[ONE]))
    assert not replay_certificate(a1.system, a1.target, replace(c, witnesses=c.witnesses[1:]))
    assert not replay_certificate(a1.system, a1.target, replace(c, family=[ZERO, ONE]))


def test_refute_a4_feim_single_point(a4):
    v = refute_point(a4.system, a4.target, Scalar(0), Notion.FEIM, Fr(1, 9), Fr(1, 64), 2)
    assert v.kind == REFUTED and v.refutation.kind == "single-point"
    r = v.refutation
    assert r.point == Scalar(0)
    assert sorted(l.value for l in r.leaves) == [Scalar(Fr(1, 8)), Scalar(Fr(3, 8))]
    assert all(l.value.lo >= Fr(1, 8) for l in r.leaves)
    assert replay_refutation(a4.system, a4.target, r)


def test_refute_a5_mei(a5):
    v = refute_point(a5.system, a5.target, x38, Notion.MEI, Fr(1, 32), Fr(1, 128), 32)
    assert v.kind == REFUTED
    assert replay_refutation(a5.system, a5.target, v.refutation)
    assert any(l.reason == "trap" for l in v.refutation.leaves)


def test_find_traps_a5(a5):
    traps = find_traps(a5.system, a5.target, Fr(1, 32))
    assert any(lo == 0 and hi == Fr(1, 8) for lo, hi, _ in traps)


def test_refute_a3_fei_family_size(a3):
    from ivl.examples import BlockDecodeSchedules

    x = embed("")
    v = refute_point(a3.system, a3.target, x, Notion.FEI, Fr(1, 4), Fr(1, 16), 24)
    assert v.kind == REFUTED and v.refutation.kind == "family-size"
    assert v.refutation.family_bound > v.refutation.max_family
    assert replay_refutation(a3.system, a3.target, v.refutation)


def test_classify_set_a1(a1):
    g = interval_grid(a1.target, Fr(1, 64))
    ei = classify_set(a1.system, a1.target, g, Notion.EI, Fr(1, 10))
    assert ei.kind == REFUTED and ei.refuted_points() == [x38]
    fei = classify_set(a1.system, a1.target, g, Notion.FEI, Fr(1, 10))
    assert fei.kind == CERTIFIED


def test_classify_set_a4_mei_with_one(a4):
    g = interval_grid(a4.target, Fr(1, 32))
    sv = classify_set(a4.system, a4.target, g, Notion.MEI, Fr(1, 50), Budget(candidates=(ONE,)))
    assert sv.kind == CERTIFIED
    assert all(v.certificate.family == [ONE] for v in sv.points.values())


def test_classify_set_parallel_matches_serial(a1):
    g = interval_grid(a1.target, Fr(1, 16))
    serial = classify_set(a1.system, a1.target, g, Notion.EIM, Fr(1, 10))
    par = classify_set(a1.system, a1.target, g, Notion.EIM, Fr(1, 10), jobs=2)
    assert [str(v) for v in serial.points.values()] == [str(v) for v in par.points.values()]


def test_tight_budget_is_inconclusive(a5):
    b = Budget(refute_delta=Fr(1, 128), refute_horizon=4, burn_in=64, window=32)
    v = classify_point(a5.system, a5.target, x38, Notion.MEI, Fr(1, 32), b)
    assert v.kind == INCONCLUSIVE and v.report


def test_singleton_embedding(a4):
    c = certify_point(a4.system, a4.target, Scalar(Fr(1, 8)), Notion.MEI, Fr(1, 50), Budget()).certificate
    f = as_finite_certificate(c)
    assert f.notion is Notion.FMEI and len(f.family) == 1
    assert replay_certificate(a4.system, a4.target, f)


def test_mean_l_stability(a4, a5):
    v = mean_l_stability_check(a5.system, a5.target, x38, Fr(1, 10), Fr(1, 64), [ZERO, ONE], 1024)
    assert v.kind == CERTIFIED
    # A4 at 0 is finitely mean equi-invariant, so it must also be finitely mean-L-stable
    v = mean_l_stability_check(a4.system, a4.target, Scalar(0), Fr(1, 9), Fr(1, 64), [ONE], 64)
    assert v.kind == CERTIFIED
    v = mean_l_stability_check(a5.system, a5.target, x38, Fr(1, 16), Fr(1, 64), [ZERO], 256)
    assert v.kind != CERTIFIED


def _fake_ei_certificate(ex, eps, delta):
    ball = ball_points(ex.target, x38, delta, Fr(1, 1024))
    return Certificate(Notion.EI, x38, eps, delta, [ZERO], {"horizon": 64}, Fr(1, 1024), [(y, 0, Scalar(0)) for y in ball])


def test_audit_flags_corrupted_store():
    ex = example("A1")
    ref = refute_point(ex.system, ex.target, x38, Notion.EIM, Fr(1, 10), Fr(1, 256), 16).refutation
    cert = _fake_ei_certificate(ex, Fr(1, 10), Fr(1, 16))
    assert compatible(cert, ref)
    assert not replay_certificate(ex.system, ex.target, cert)
    store = VerdictStore()
    store.add("A1", Verdict(CERTIFIED, Notion.EI, x38, Fr(1, 10), certificate=cert))
    store.add("A1", Verdict(REFUTED, Notion.EIM, x38, Fr(1, 10), refutation=ref))
    report = implication_audit(store)
    assert not report.consistent and "EI certified but EIM refuted" in report.violations[0]


def test_audit_ignores_incompatible_pairs():
    ex = example("A1")
    ref = a1_ei_refutation().refutation
    # certificate at a tolerance above the refutation's says nothing about it
    cert = _fake_ei_certificate(ex, Fr(1, 4), Fr(1, 16))
    assert not compatible(cert, ref)
    report = implication_audit([StoreEntry("A1", Notion.EI, "3/8", Verdict(CERTIFIED, Notion.EI, x38, Fr(1, 4), certificate=cert), Fr(1, 4)),
                                StoreEntry("A1", Notion.EI, "3/8", Verdict(REFUTED, Notion.EI, x38, Fr(1, 8), refutation=ref), Fr(1, 8))])
    assert report.consistent and report.skipped


def test_audit_singleton_replay_no_flag(a1):
    g = interval_grid(a1.target, Fr(1, 16))
    ei = classify_set(a1.system, a1.target, g, Notion.EI, Fr(1, 10))
    fei_points = {x: Verdict(CERTIFIED, Notion.FEI, x, v.eps, certificate=as_finite_certificate(v.certificate))
                  for x, v in ei.points.items() if v.certificate is not None}
    store = VerdictStore()
    store.add("A1", ei)
    store.add("A1", SetVerdict(Notion.FEI, Fr(1, 10), fei_points))
    assert implication_audit(store).consistent


def test_theorem_audit_cases():
    cert = SetVerdict(Notion.FEI, Fr(1, 10), {x38: Verdict(CERTIFIED, Notion.FEI, x38, Fr(1, 10))})
    [t] = theorem_audit(fei=cert, plain_verdict=ComplexityVerdict("BoundedEvidence", 2))
    assert t.consistent
    [t] = theorem_audit(fei=cert, plain_verdict=ComplexityVerdict("GrowthEvidence"))
    assert not t.consistent
    fmei = SetVerdict(Notion.FMEI, Fr(1, 10), {x38: Verdict(CERTIFIED, Notion.FMEI, x38, Fr(1, 10))})
    fmls = SetVerdict(Notion.FMLS, Fr(1, 10), {x38: Verdict(REFUTED, Notion.FMLS, x38, Fr(1, 10))})
    [t] = theorem_audit(fmei=fmei, fmls=fmls)
    assert not t.consistent
