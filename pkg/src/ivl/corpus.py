"""Preset runs over the five example systems: classification, profiles and audits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction as Fr
from typing import Optional

from .classify import (
    CERTIFIED,
    REFUTED,
    Budget,
    Notion,
    SetVerdict,
    VerdictStore,
    classify_set,
    default_deltas,
    implication_audit,
    mean_l_stability_check,
    theorem_audit,
)
from .core import ControlSchedule, Scalar
from .examples import BlockDecodeSchedules, ExampleId, a2_eim_construction, build_example
from .spanning import block_grid, bounded_complexity_verdict, complexity_profile, interval_grid

log = logging.getLogger(__name__)

ZERO, ONE = ControlSchedule.constant(0), ControlSchedule.constant(1)


@dataclass(frozen=True)
class Task:
    notion: Notion
    eps: Fr
    budget: Budget


@dataclass(frozen=True)
class Preset:
    grid: object  # mesh (interval) or block depth (symbolic)
    tasks: tuple
    profile_eps: Optional[Fr] = None
    profile_grid: object = None
    profile_nmax: int = 16


@dataclass(frozen=True)
class FixedSchedules:
    """Candidate generator returning the same schedules for every point (picklable)."""

    schedules: tuple

    def __call__(self, x) -> list:
        return list(self.schedules)


def example_budget_overrides(eid, eps) -> dict:
    """Example-specific candidate generators and δ values added to any budget."""
    eid = ExampleId(eid)
    if eid is ExampleId.A2:
        N, delta, omega = a2_eim_construction(eps)
        return {"extra": FixedSchedules((omega,)), "extra_deltas": (delta,)}
    if eid is ExampleId.A3:
        return {"extra": BlockDecodeSchedules()}
    return {}


def _a2_budget(eps) -> Budget:
    o = example_budget_overrides(ExampleId.A2, eps)
    return Budget(deltas=default_deltas() + o["extra_deltas"], extra=o["extra"])


def preset(eid: ExampleId) -> Preset:
    eid = ExampleId(eid)
    if eid is ExampleId.A1:
        b = Budget()
        eps = Fr(1, 10)
        return Preset(Fr(1, 64), tuple(Task(n, eps, b) for n in (Notion.EI, Notion.EIM, Notion.FEI, Notion.FEIM)), eps, Fr(1, 512), 32)
    if eid is ExampleId.A2:
        eps = Fr(1, 100)
        b = _a2_budget(eps)
        return Preset(Fr(1, 64), tuple(Task(n, eps, b) for n in (Notion.EI, Notion.EIM, Notion.FEI, Notion.FEIM)))
    if eid is ExampleId.A3:
        b = Budget(extra=BlockDecodeSchedules(), refute_delta=Fr(1, 16), refute_horizon=24)
        eps = Fr(1, 4)
        return Preset(3, tuple(Task(n, eps, b) for n in (Notion.EI, Notion.EIM, Notion.FEI, Notion.FEIM)), eps, 8, 24)
    if eid is ExampleId.A4:
        refute = Budget(refute_delta=Fr(1, 64), refute_horizon=2)
        limsup = Budget()
        return Preset(
            Fr(1, 64),
            (
                Task(Notion.EIM, Fr(1, 9), refute),
                Task(Notion.FEIM, Fr(1, 9), refute),
                Task(Notion.MEI, Fr(1, 50), limsup),
                Task(Notion.FMEI, Fr(1, 50), limsup),
            ),
        )
    if eid is ExampleId.A5:
        fam = Budget(candidates=(ZERO, ONE))
        return Preset(
            Fr(1, 64),
            (
                Task(Notion.MEI, Fr(1, 32), Budget(refute_delta=Fr(1, 128), refute_horizon=32)),
                Task(Notion.FMEI, Fr(1, 100), fam),
                Task(Notion.FMLS, Fr(1, 100), Budget(candidates=(ZERO, ONE), refute_delta=None)),
            ),
        )
    raise KeyError(eid)


def grid_for(ex, resolution):
    return block_grid(ex.target, int(resolution)) if ex.id is ExampleId.A3 else interval_grid(ex.target, Fr(resolution))


@dataclass
class ExampleRun:
    id: ExampleId
    sets: dict  # notion -> SetVerdict
    profiles: dict = field(default_factory=dict)  # mode -> ComplexityProfile
    theorems: list = field(default_factory=list)
    claim_checks: list = field(default_factory=list)  # (notion, where, expected, observed, ok)

    def lines(self) -> list[str]:
        out = [f"== {self.id.name} ({self.id.value})"]
        out += ["  " + s.summary() for s in self.sets.values()]
        for mode, p in self.profiles.items():
            v = bounded_complexity_verdict(p)
            out.append(f"  profile {mode:<5} eps={p.eps}: r = {[e.r for e in p.entries]} -> {v}")
        out += [f"  theorem {t}" for t in self.theorems]
        for notion, where, exp, obs, ok in self.claim_checks:
            out.append(f"  claim {notion:<5} {exp:<9} @ {where:<4}: observed {obs} {'ok' if ok else 'MISMATCH'}")
        return out


def run_example(eid, with_profiles: bool = True, jobs: int = 1, store: Optional[VerdictStore] = None) -> ExampleRun:
    ex = build_example(eid)
    pre = preset(ex.id)
    grid = grid_for(ex, pre.grid)
    sets = {}
    for task in pre.tasks:
        sv = classify_set(ex.system, ex.target, grid, task.notion, task.eps, task.budget, jobs)
        sets[task.notion] = sv
        if store is not None:
            store.add(ex.id.name, sv)
    run = ExampleRun(ex.id, sets)
    if with_profiles and pre.profile_eps is not None:
        pgrid = grid_for(ex, pre.profile_grid)
        for mode in ("plain", "mean"):
            run.profiles[mode] = complexity_profile(ex.system, pgrid, pre.profile_eps, pre.profile_nmax, mode)
    run.theorems = theorem_audit(
        fei=sets.get(Notion.FEI),
        plain_verdict=bounded_complexity_verdict(run.profiles["plain"]) if "plain" in run.profiles else None,
        feim=sets.get(Notion.FEIM),
        mean_verdict=bounded_complexity_verdict(run.profiles["mean"]) if "mean" in run.profiles else None,
        fmei=sets.get(Notion.FMEI),
        fmls=sets.get(Notion.FMLS),
    )
    run.claim_checks = check_claims(ex, sets)
    return run


def check_claims(ex, sets: dict) -> list:
    out = []
    for (notion, where), expected in sorted(ex.claims.items()):
        sv: Optional[SetVerdict] = sets.get(Notion(notion))
        if sv is None:
            out.append((notion, where, expected, "not run", True))
            continue
        if where == "set":
            observed = "Certified" if sv.kind == CERTIFIED else ("Refuted" if sv.kind == REFUTED else "Inconclusive")
        else:
            v = sv.points.get(Scalar(Fr(where)))
            observed = "missing" if v is None else {CERTIFIED: "Certified", REFUTED: "Refuted"}.get(v.kind, "Inconclusive")
        out.append((notion, where, expected, observed, observed == expected))
    return out


@dataclass
class CorpusReport:
    runs: list
    implications: object

    @property
    def consistent(self) -> bool:
        return self.implications.consistent and all(t.consistent for r in self.runs for t in r.theorems)

    def lines(self) -> list[str]:
        out = []
        for r in self.runs:
            out += r.lines()
        out.append("== implication audit")
        out += ["  " + s for s in self.implications.lines()]
        out.append(f"== overall: {'consistent' if self.consistent else 'INCONSISTENT'}")
        return out


def run_corpus(examples=tuple(ExampleId), with_profiles: bool = True, jobs: int = 1) -> CorpusReport:
    store = VerdictStore()
    runs = [run_example(e, with_profiles, jobs, store) for e in examples]
    return CorpusReport(runs, implication_audit(store))


def fmls_for_fmei(ex, sv: SetVerdict, N: int = 2048) -> SetVerdict:
    """Mean-L-stability checks reusing each FMEI certificate's δ and family."""
    out = {}
    for x, v in sv.points.items():
        if v.certificate is None:
            continue
        c = v.certificate
        out[x] = mean_l_stability_check(ex.system, ex.target, x, c.eps, c.delta, c.family, N, c.h)
    return SetVerdict(Notion.FMLS, sv.eps, out)
