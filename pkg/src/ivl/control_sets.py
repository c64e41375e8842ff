"""Reachable sets, control-set property checks and the (mean) dichotomy probes."""

from __future__ import annotations

import bisect
import csv
import io
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import floor
from typing import Optional, Sequence

from .classify import CERTIFIED, REFUTED, Budget, Notion, Verdict, classify_point, format_point
from .core import AmbiguityError, ControlSchedule, ControlSystem, Scalar, SymbolicPoint, format_fraction
from .metrics import IntervalUnion, TargetSet, dist_to_set
from .spanning import TargetGrid, enumerate_levels

log = logging.getLogger(__name__)


@dataclass
class ReachSet:
    source: object
    horizon: int
    cell: Fraction
    entries: dict  # bucket -> (state, m, word)

    def states(self) -> list:
        return [e[0] for e in self.entries.values()]

    def buckets(self) -> set:
        return set(self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "m", "word"])
        for b in sorted(self.entries, key=str):
            state, m, word = self.entries[b]
            w.writerow([str(state), m, "".join(str(u) for u in word) or "ε"])
        return buf.getvalue()


def _bucket(y, cell: Fraction):
    if isinstance(y, Scalar):
        return floor(y.value / cell)
    return y


def reachable_set(sys: ControlSystem, x, n: int, cell=Fraction(1, 1024), max_states: int = 1_000_000) -> ReachSet:
    """States reachable from x in at most n steps, one witness per grid cell.

    Interval states are bucketed into cells of width ``cell`` and only the
    first representative of each cell is expanded further.
    """
    if n < 0:
        raise ValueError("horizon must be nonnegative")
    cell = Fraction(cell)
    entries = {_bucket(x, cell): (x, 0, ())}
    frontier = [(x, ())]
    for m in range(1, n + 1):
        nxt = []
        for y, word in frontier:
            for u in sys.alphabet:
                z = sys.step(y, u)
                b = _bucket(z, cell)
                if b not in entries:
                    entries[b] = (z, m, word + (u,))
                    nxt.append((z, word + (u,)))
        if len(entries) > max_states:
            raise RuntimeError(f"reach set exceeded {max_states} cells")
        frontier = nxt
        if not frontier:
            break
    return ReachSet(x, n, cell, entries)


def replay_reach_witnesses(sys: ControlSystem, R: ReachSet) -> bool:
    for b, (state, m, word) in R.entries.items():
        if len(word) != m or sys.run(R.source, word) != state or _bucket(state, R.cell) != b:
            return False
    return True


# ---------------------------------------------------------------------------
# controlled invariance and approximate reachability


@dataclass
class InvarianceReport:
    eps: Fraction
    horizon: int
    passed: list
    failed: list
    witness: dict  # point -> word

    @property
    def ok(self) -> bool:
        return not self.failed

    def lines(self) -> list[str]:
        out = [f"controlled invariance at eps={format_fraction(self.eps)}, N={self.horizon}: {len(self.passed)} pass, {len(self.failed)} fail"]
        out += [f"  fails at {format_point(p)}" for p in self.failed[:20]]
        return out


def controlled_invariance_check(sys: ControlSystem, Q: TargetSet, grid: TargetGrid, N: int, eps) -> InvarianceReport:
    """Per grid point: is there a length-N word keeping the orbit in B_ε(Q)?"""
    table = None
    for table in enumerate_levels(sys, grid, eps, N, "plain"):
        pass
    witness = {}
    for word in sorted(table.rows):
        mask = table.rows[word]
        for j, p in enumerate(grid.points):
            if mask >> j & 1 and p not in witness:
                witness[p] = word
    passed = [p for p in grid.points if p in witness]
    failed = [p for p in grid.points if p not in witness]
    return InvarianceReport(Fraction(eps), N, passed, failed, witness)


@dataclass
class ReachabilityReport:
    eps: Fraction
    horizon: int
    fractions: dict  # source -> fraction of target grid points within eps of the reach set

    @property
    def minimum(self) -> Fraction:
        return min(self.fractions.values())

    def lines(self) -> list[str]:
        out = [f"approximate reachability at eps={format_fraction(self.eps)}, N={self.horizon}: min fraction {format_fraction(self.minimum)}"]
        for src, frac in self.fractions.items():
            flag = "" if frac == 1 else "  <-- incomplete"
            out.append(f"  from {format_point(src)}: {format_fraction(frac)}{flag}")
        return out


def _near_any(p, reached: list, eps: Fraction, sorted_vals=None) -> bool:
    if isinstance(p, Scalar):
        v = p.value
        i = bisect.bisect_left(sorted_vals, v)
        for k in (i - 1, i):
            if 0 <= k < len(sorted_vals) and abs(sorted_vals[k] - v) < eps:
                return True
        return False
    return any(p.distance(q) < eps for q in reached)


def approx_reachability_check(sys: ControlSystem, Q: TargetSet, grid: TargetGrid, eps, N: int, cell=None) -> ReachabilityReport:
    """For each source grid point, the share of grid points within ε of its reach set."""
    eps = Fraction(eps)
    cell = Fraction(cell) if cell is not None else eps / 4
    fractions = {}
    for src in grid.points:
        R = reachable_set(sys, src, N, cell)
        reached = R.states()
        vals = sorted(s.value for s in reached) if isinstance(src, Scalar) else None
        hits = sum(1 for p in grid.points if _near_any(p, reached, eps, vals))
        fractions[src] = Fraction(hits, len(grid.points))
    return ReachabilityReport(eps, N, fractions)


@dataclass
class NoReturnSample:
    x: object
    word: tuple
    flagged: bool
    exit_index: Optional[int]
    max_distance: Scalar
    valid: bool  # starts in Q and returns to B_ε(Q)


@dataclass
class NoReturnReport:
    eps: Fraction
    samples: list

    @property
    def flagged(self) -> list:
        return [s for s in self.samples if s.flagged]

    def lines(self) -> list[str]:
        skipped = sum(1 for s in self.samples if not s.valid)
        out = [
            f"no-return check at eps={format_fraction(self.eps)}: {len(self.flagged)} of {len(self.samples)} samples leave and return"
            f" ({skipped} skipped: not starting in Q or not ending near Q)"
        ]
        for s in self.samples:
            word = "".join(str(u) for u in s.word)
            if s.flagged:
                out.append(f"  x={format_point(s.x)} word={word}: exits at k={s.exit_index}, max distance {s.max_distance}")
        return out


def no_return_check(sys: ControlSystem, Q: TargetSet, samples: Sequence, eps) -> NoReturnReport:
    """Flag sampled trajectories that leave B_ε(Q) and come back.

    Each sample is ``(x, word)``; ``word`` may be a ControlSchedule together
    with an explicit length as ``(x, schedule, n)``.
    """
    eps = Fraction(eps)
    out = []
    for sample in samples:
        if len(sample) == 3:
            x, sched, n = sample
            word = sched.take(n) if isinstance(sched, ControlSchedule) else tuple(sched)[:n]
        else:
            x, word = sample
            word = tuple(word.take(len(word)) if isinstance(word, ControlSchedule) else word)
        traj = sys.trajectory(x, ControlSchedule.word(word), len(word))
        ds = [dist_to_set(y, Q) for y in traj]
        valid = ds[0].hi == 0 and ds[-1].hi < eps
        exit_index = None
        for k in range(1, len(ds) - 1):
            if ds[k].lo >= eps:
                exit_index = k
                break
        dmax = Scalar(max(d.lo for d in ds), max(d.hi for d in ds))
        out.append(NoReturnSample(x, tuple(word), valid and exit_index is not None, exit_index, dmax, valid))
    return NoReturnReport(eps, out)


# ---------------------------------------------------------------------------
# EIM_k / MEI_k and the dichotomy


def eimk_membership(sys, Q, x, k: int, budget: Optional[Budget] = None) -> Verdict:
    """x ∈ EIM_k(Q): one schedule keeps all running means of a neighbourhood below 1/k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return classify_point(sys, Q, x, Notion.EIM, Fraction(1, k), budget or Budget())


def meik_membership(sys, Q, x, k: int, budget: Optional[Budget] = None) -> Verdict:
    """x ∈ MEI_k(Q): one schedule keeps the limsup mean of a neighbourhood below 1/k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return classify_point(sys, Q, x, Notion.MEI, Fraction(1, k), budget or Budget())


DICHOTOMY_KINDS = {
    "mean": ("EquiInvariantInMeanEvidence", "UnstableInMeanEvidence"),
    "limsup": ("MeanEquiInvariantEvidence", "MeanUnstableEvidence"),
}


@dataclass
class DichotomyVerdict:
    kind: str
    mode: str
    k: Optional[int] = None  # the witness k for unstable evidence
    ks: tuple = ()
    verdicts: dict = field(default_factory=dict)  # k -> {point: Verdict}
    warnings: list = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"dichotomy ({self.mode}): {self.kind}" + (f" with empty level set at k={self.k}" if self.k else "")]
        for k in self.ks:
            vs = self.verdicts.get(k, {})
            c = sum(1 for v in vs.values() if v.kind == CERTIFIED)
            r = sum(1 for v in vs.values() if v.kind == REFUTED)
            out.append(f"  k={k}: {c} certified, {r} refuted, {len(vs) - c - r} inconclusive of {len(vs)}")
        out += [f"  warning: {w}" for w in self.warnings]
        return out


def dense_interior(Q: TargetSet) -> bool:
    return Q.has_dense_interior


def dichotomy_probe(sys, Q, grid: TargetGrid, k_range: Sequence[int], budget: Optional[Budget] = None, mode: str = "mean") -> DichotomyVerdict:
    """Equi-invariant evidence if every grid point is certified for every k; unstable
    evidence if for some k every grid point is refuted (the level set is empty)."""
    if mode not in DICHOTOMY_KINDS:
        raise ValueError(f"mode must be one of {sorted(DICHOTOMY_KINDS)}")
    budget = budget or Budget()
    warnings = []
    if not dense_interior(Q):
        warnings.append("Q is not the closure of its interior; the dichotomy need not apply")
    member = eimk_membership if mode == "mean" else meik_membership
    good, bad = DICHOTOMY_KINDS[mode]
    ks = tuple(sorted(set(k_range)))
    verdicts = {}
    all_certified = True
    for k in ks:
        vs = {}
        for p in grid.points:
            try:
                vs[p] = member(sys, Q, p, k, budget)
            except AmbiguityError as exc:
                vs[p] = Verdict("Inconclusive", Notion.EIM if mode == "mean" else Notion.MEI, p, Fraction(1, k), report=str(exc))
        verdicts[k] = vs
        if vs and all(v.kind == REFUTED for v in vs.values()):
            return DichotomyVerdict(bad, mode, k, ks, verdicts, warnings)
        if not all(v.kind == CERTIFIED for v in vs.values()):
            all_certified = False
    kind = good if all_certified else "Inconclusive"
    return DichotomyVerdict(kind, mode, None, ks, verdicts, warnings)
