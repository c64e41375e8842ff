"""Certificates and refutations for the equi-invariance notions, plus consistency audits.

Every verdict is horizon-bounded evidence: a certificate replays a finite
family of eventually periodic schedules on the grid points of a ball
B(x, δ) ∩ Q up to a horizon, and a refutation records, for every control
word of a given length, a ball point whose orbit violates the criterion.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from math import ceil, floor
from typing import Callable, Optional, Sequence

from .core import (
    AmbiguityError,
    ControlSchedule,
    ControlSystem,
    IntervalSpace,
    PiecewiseMap,
    Scalar,
    SymbolicPoint,
    format_fraction,
    format_schedule,
    splice,
)
from .metrics import (
    BlockLanguage,
    IntervalUnion,
    MeanProfile,
    TargetSet,
    dist_to_set,
    distance_sequence,
    exceptions_from_distances,
    limsup_from_distances,
    upper_density_estimate,
)
from .spanning import TargetGrid, enumerate_levels, exact_cover

log = logging.getLogger(__name__)

CERTIFIED = "Certified"
REFUTED = "RefutedAtResolution"
INCONCLUSIVE = "Inconclusive"


class Notion(str, enum.Enum):
    EI = "EI"
    EIM = "EIM"
    MEI = "MEI"
    FEI = "FEI"
    FEIM = "FEIM"
    FMEI = "FMEI"
    FMLS = "FMLS"

    @property
    def finite(self) -> bool:
        """True for notions quantifying over a finite schedule family."""
        return self.value.startswith("F")

    @property
    def criterion(self) -> str:
        return _CRITERIA[self]

    @property
    def singleton_form(self) -> Optional["Notion"]:
        return {Notion.FEI: Notion.EI, Notion.FEIM: Notion.EIM, Notion.FMEI: Notion.MEI}.get(self)

    @property
    def finite_form(self) -> Optional["Notion"]:
        return {Notion.EI: Notion.FEI, Notion.EIM: Notion.FEIM, Notion.MEI: Notion.FMEI}.get(self)

    @classmethod
    def parse(cls, name: str) -> "Notion":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise ValueError(f"unknown notion {name!r}; choose from {[n.value for n in cls]}") from None


_CRITERIA = {
    Notion.EI: "sup",
    Notion.FEI: "sup",
    Notion.EIM: "mean",
    Notion.FEIM: "mean",
    Notion.MEI: "limsup",
    Notion.FMEI: "limsup",
    Notion.FMLS: "density",
}


def default_deltas() -> tuple:
    return tuple(Fraction(1, 2**k) for k in range(4, 11))


@dataclass
class Budget:
    deltas: tuple = field(default_factory=default_deltas)
    horizon: int = 64  # sup and mean criteria
    h: Fraction = Fraction(1, 1024)  # ball spacing for interval spaces
    burn_in: int = 512
    window: int = 256
    density_horizon: int = 2048
    candidates: Optional[tuple] = None  # replaces the default pool when given
    extra: Optional[Callable] = None  # x -> extra point-specific schedules
    splice_max: int = 2
    max_family: int = 4
    refute_delta: Optional[Fraction] = Fraction(1, 256)
    refute_horizon: int = 16
    max_nodes: int = 200_000

    def criterion_params(self, criterion: str) -> dict:
        if criterion == "limsup":
            return {"burn_in": self.burn_in, "window": self.window}
        if criterion == "density":
            return {"horizon": self.density_horizon}
        return {"horizon": self.horizon}


# ---------------------------------------------------------------------------
# balls


def _block_cover(Q: BlockLanguage, x: SymbolicPoint, length: int) -> str:
    """Shortest concatenation of whole blocks that is a prefix of x and has ≥ length symbols."""
    word = ""
    while len(word) < length:
        k = len(word)
        for b in Q.blocks:
            if x.take(k + len(b))[k:] == b:
                word += b
                break
        else:
            raise ValueError(f"{x} is not in the block language")
    return word


def ball_points(Q: TargetSet, x, delta, h=Fraction(1, 1024)) -> list:
    """Grid sample of B(x, δ) ∩ Q, starting with x and ordered by distance from x.

    Interval spaces use spacing min(h, δ/4). For block languages the sample
    is x plus every point that agrees with x on a block-aligned prefix of at
    least ⌊1/δ⌋ symbols and continues with up to three further blocks before
    the periodic tail; agreement on ⌊1/δ⌋ symbols forces ρ < δ.
    """
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if isinstance(Q, IntervalUnion):
        s = min(Fraction(h), delta / 4)
        J = ceil(delta / s) - 1
        out = []
        for j in sorted(range(-J, J + 1), key=lambda j: (abs(j), j)):
            y = x + Scalar(j * s)
            if Q.contains(y):
                out.append(y)
        return out
    M = floor(1 / delta)
    head = _block_cover(Q, x, M)
    tail = SymbolicPoint("", Q.blocks[0])
    out = [x]
    seen = {x}
    for n in range(4):
        for ext in product(Q.blocks, repeat=n):
            y = SymbolicPoint(head + "".join(ext), tail.cycle)
            if y not in seen:
                seen.add(y)
                out.append(y)
    return out


def ball_within_reach(Q: TargetSet, delta, horizon: int) -> bool:
    """Whether a horizon can see where symbolic ball points differ.

    Ball points of a block language differ only after ⌊1/δ⌋ symbols plus up
    to three blocks. A system that consumes at least one symbol per step
    needs that many steps before the differences matter, so shorter
    horizons would certify vacuously.
    """
    if isinstance(Q, IntervalUnion):
        return True
    return floor(1 / Fraction(delta)) + 3 * max(len(b) for b in Q.blocks) <= horizon


# ---------------------------------------------------------------------------
# criterion evaluation


class _Evaluator:
    """Memoised distance sequences per (point, schedule)."""

    def __init__(self, sys: ControlSystem, Q: TargetSet):
        self.sys = sys
        self.Q = Q
        self.cache: dict = {}
        self.values: dict = {}

    def dists(self, y, omega: ControlSchedule, n: int) -> list:
        key = (y, omega)
        got = self.cache.get(key)
        if got is None or len(got) < n:
            try:
                got = distance_sequence(self.sys, y, omega, self.Q, n)
            except AmbiguityError:
                got = None
            if got is None:
                self.cache[key] = [Scalar(0, self.sys.space.diameter)] * n
                return self.cache[key]
            self.cache[key] = got
        return got[:n]

    def value(self, y, omega, criterion: str, eps: Fraction, params: dict):
        """(criterion value, trend flag); the point passes iff value < eps and trend."""
        key = (y, omega, criterion, eps if criterion == "density" else None, tuple(sorted(params.items())))
        got = self.values.get(key)
        if got is None:
            got = self.values[key] = self._value(y, omega, criterion, eps, params)
        return got

    def _value(self, y, omega, criterion: str, eps: Fraction, params: dict):
        if criterion == "sup":
            ds = self.dists(y, omega, params["horizon"])
            return Scalar(max(d.lo for d in ds), max(d.hi for d in ds)), True
        if criterion == "mean":
            ds = self.dists(y, omega, params["horizon"])
            return MeanProfile.from_distances(ds).running_max[-1], True
        if criterion == "limsup":
            burn, window = params["burn_in"], params["window"]
            ds = self.dists(y, omega, max(burn, 1) + window)
            return limsup_from_distances(ds, burn, window)
        if criterion == "density":
            ds = self.dists(y, omega, params["horizon"])
            try:
                E = exceptions_from_distances(ds, eps)
            except AmbiguityError:
                return Scalar(0, 1), False
            return Scalar(upper_density_estimate(E)), True
        raise ValueError(f"unknown criterion {criterion!r}")

    def passes(self, y, omega, criterion, eps, params) -> bool:
        v, trend = self.value(y, omega, criterion, eps, params)
        return trend and v.hi < eps


# ---------------------------------------------------------------------------
# verdict records


def format_point(x) -> str:
    return str(x)


@dataclass
class Certificate:
    notion: Notion
    x: object
    eps: Fraction
    delta: Fraction
    family: list  # ControlSchedules
    params: dict  # criterion parameters (horizon, or burn_in/window)
    h: Fraction
    witnesses: list  # (y, index into family, criterion value)

    @property
    def horizon(self) -> int:
        p = self.params
        return p.get("horizon", p.get("burn_in", 0) + p.get("window", 0))

    def points(self) -> set:
        return {w[0] for w in self.witnesses}

    def summary(self) -> str:
        fam = ", ".join(format_schedule(s) for s in self.family)
        return (
            f"{self.notion.value} certified at x={format_point(self.x)}: eps={format_fraction(self.eps)} "
            f"delta={format_fraction(self.delta)} F={{{fam}}} checked to n={self.horizon} on {len(self.witnesses)} ball points"
        )


@dataclass
class Leaf:
    prefix: tuple
    y: object
    index: int  # time index m of the violation
    value: Scalar
    reason: str  # "sup" | "mean" | "trap"


@dataclass
class Refutation:
    notion: Notion
    x: object
    eps: Fraction
    delta0: Fraction
    horizon: int
    h: Fraction
    kind: str  # "escape" | "single-point" | "family-size"
    leaves: list = field(default_factory=list)
    point: object = None  # the ball point failed by every word (single-point kind)
    traps: list = field(default_factory=list)  # [(lo, hi, dist)] used by trap leaves
    family_bound: int = 0  # family-size kind: minimal cover size found
    max_family: int = 0
    ball: list = field(default_factory=list)

    def word_count_covered(self) -> Fraction:
        return sum((Fraction(1, self.alphabet_size ** len(l.prefix)) for l in self.leaves), Fraction(0))

    alphabet_size: int = 2

    def summary(self) -> str:
        head = f"{self.notion.value} refuted at x={format_point(self.x)}: eps={format_fraction(self.eps)} delta0={format_fraction(self.delta0)} N={self.horizon}"
        if self.kind == "family-size":
            return f"{head}; every ball cover needs {self.family_bound} > {self.max_family} words"
        if self.kind == "single-point":
            return f"{head}; y={format_point(self.point)} escapes under every word ({len(self.leaves)} prefix classes)"
        return f"{head}; {len(self.leaves)} prefix classes each with an escaping ball point"


@dataclass
class Verdict:
    kind: str
    notion: Notion
    x: object
    eps: Fraction
    certificate: Optional[Certificate] = None
    refutation: Optional[Refutation] = None
    report: str = ""

    def __str__(self):
        if self.certificate is not None:
            return self.certificate.summary()
        if self.refutation is not None:
            return self.refutation.summary()
        return f"{self.notion.value} inconclusive at x={format_point(self.x)}: {self.report}"


# ---------------------------------------------------------------------------
# candidate schedules


def candidate_pool(sys: ControlSystem, splice_max: int = 2) -> list[list[ControlSchedule]]:
    """Stages of candidates: constants first, then u^N v u'^∞ splices."""
    U = sys.alphabet
    consts = [ControlSchedule.constant(u) for u in U]
    splices = []
    seen = set(consts)
    for N in range(1, splice_max + 1):
        for u, v, w in product(U, repeat=3):
            s = splice([u] * N + [v], ControlSchedule.constant(w))
            if s not in seen:
                seen.add(s)
                splices.append(s)
    return [consts, splices]


def _stages(sys, x, budget: Budget) -> list[list[ControlSchedule]]:
    extra = list(budget.extra(x)) if budget.extra else []
    if budget.candidates is not None:
        return [list(budget.candidates) + extra]
    consts, splices = candidate_pool(sys, budget.splice_max)
    return [consts + extra, splices]


# ---------------------------------------------------------------------------
# certification


def certify_point(
    sys: ControlSystem,
    Q: TargetSet,
    x,
    notion,
    eps,
    budget: Optional[Budget] = None,
    evaluator: Optional[_Evaluator] = None,
) -> Verdict:
    """Search the δ ladder and candidate schedules for a certificate at x."""
    notion = Notion(notion)
    eps = Fraction(eps)
    budget = budget or Budget()
    ev = evaluator or _Evaluator(sys, Q)
    crit = notion.criterion
    params = budget.criterion_params(crit)
    stages = _stages(sys, x, budget)
    if not any(stages):
        raise ValueError("empty candidate set")
    reach = params.get("horizon", params.get("burn_in", 0) + params.get("window", 0))
    for delta in sorted(budget.deltas, reverse=True):
        if not ball_within_reach(Q, delta, reach):
            continue
        ball = ball_points(Q, x, delta, budget.h)
        pool: list = []
        for stage in stages:
            pool.extend(stage)
            masks = []
            for omega in pool:
                m = 0
                for j, y in enumerate(ball):
                    if ev.passes(y, omega, crit, eps, params):
                        m |= 1 << j
                masks.append(m)
            full = (1 << len(ball)) - 1
            if not notion.finite:
                for omega, m in zip(pool, masks):
                    if m == full:
                        return Verdict(CERTIFIED, notion, x, eps, certificate=_make_cert(ev, notion, x, eps, delta, [omega], ball, crit, params, budget.h))
                continue
            union = 0
            for m in masks:
                union |= m
            if union != full:
                continue
            chosen = exact_cover(masks, full)
            if chosen is None or len(chosen) > budget.max_family:
                continue
            family = [pool[i] for i in chosen]
            return Verdict(CERTIFIED, notion, x, eps, certificate=_make_cert(ev, notion, x, eps, delta, family, ball, crit, params, budget.h))
    return Verdict(INCONCLUSIVE, notion, x, eps, report="no candidate family passed on any ball of the delta ladder")


def _make_cert(ev, notion, x, eps, delta, family, ball, crit, params, h) -> Certificate:
    witnesses = []
    for y in ball:
        for i, omega in enumerate(family):
            if ev.passes(y, omega, crit, eps, params):
                witnesses.append((y, i, ev.value(y, omega, crit, eps, params)[0]))
                break
    return Certificate(notion, x, eps, Fraction(delta), list(family), dict(params), Fraction(h), witnesses)


def replay_certificate(sys: ControlSystem, Q: TargetSet, cert: Certificate, eps=None) -> bool:
    """Recompute every witness from scratch; optionally at a different ε."""
    eps = cert.eps if eps is None else Fraction(eps)
    ev = _Evaluator(sys, Q)
    crit = cert.notion.criterion
    if not cert.notion.finite and len(cert.family) != 1:
        return False
    if len(cert.witnesses) != len(set(cert.points())):
        return False
    for y, i, value in cert.witnesses:
        v, trend = ev.value(y, cert.family[i], crit, eps, cert.params)
        if eps == cert.eps and v != value:
            return False
        if not (trend and v.hi < eps):
            return False
    expected = ball_points(Q, cert.x, cert.delta, cert.h)
    return set(expected) == cert.points()


def as_finite_certificate(cert: Certificate) -> Certificate:
    """An EI/EIM/MEI certificate read as an FEI/FEIM/FMEI certificate with |F| = 1."""
    target = cert.notion.finite_form
    if target is None:
        raise ValueError(f"{cert.notion} has no finite form")
    return Certificate(target, cert.x, cert.eps, cert.delta, list(cert.family), dict(cert.params), cert.h, list(cert.witnesses))


# ---------------------------------------------------------------------------
# traps


def find_traps(sys: ControlSystem, Q: TargetSet, eps, lattice: int = 64) -> list[tuple]:
    """Maximal lattice intervals R with F_u(R) ⊆ R for all u and dist(R, Q) ≥ ε.

    An orbit entering such an R keeps distance ≥ ε from Q forever, so its
    limsup mean and exception density are both bounded below.
    """
    eps = Fraction(eps)
    if not isinstance(sys.space, IntervalSpace) or not isinstance(Q, IntervalUnion):
        return []
    if not all(isinstance(f, PiecewiseMap) for f in sys.maps.values()):
        return []
    lo0, hi0 = sys.space.lo, sys.space.hi
    step = (hi0 - lo0) / lattice
    found = []
    for a in range(lattice + 1):
        for b in range(lattice, a - 1, -1):
            lo, hi = lo0 + a * step, lo0 + b * step
            d = Q.distance(Scalar(lo, hi)).lo if lo < hi else Q.distance(Scalar(lo)).lo
            if d < eps:
                continue
            ok = True
            for u in sys.alphabet:
                img = sys.maps[u].image(lo, hi)
                if img.lo < lo or img.hi > hi:
                    ok = False
                    break
            if ok:
                found.append((lo, hi, d))
                break
    maximal = [t for t in found if not any(o is not t and o[0] <= t[0] and t[1] <= o[1] for o in found)]
    return sorted(set(maximal))


def _in_trap(y, traps):
    if not isinstance(y, Scalar):
        return None
    for t in traps:
        if t[0] <= y.lo and y.hi <= t[1]:
            return t
    return None


# ---------------------------------------------------------------------------
# refutation


class _Unresolved(Exception):
    pass


def _violation(crit, eps, m, y, d: Scalar, s_lo, s_hi, traps):
    """(reason, value) if the state at index m violates the criterion, None if not, 'undecided' if unclear."""
    if crit == "sup":
        if d.lo >= eps:
            return "sup", d
        return "undecided" if d.hi >= eps else None
    if crit == "mean":
        lo, hi = s_lo / (m + 1), s_hi / (m + 1)
        if lo >= eps:
            return "mean", Scalar(lo, hi) if lo != hi else Scalar(lo)
        return "undecided" if hi >= eps else None
    t = _in_trap(y, traps)
    if t is not None:
        return "trap", Scalar(t[2])
    return None


def _word_tree(sys, Q, ball, crit, eps, N, traps, max_nodes):
    """Prefix-code DFS: every word of length N gets a leaf with an escaping ball point.

    Returns (leaves, survivors, undecided_prefixes).
    """
    U = sys.alphabet
    leaves, survivors, undecided = [], [], []
    nodes = 0
    init = []
    for y in ball:
        d = dist_to_set(y, Q)
        init.append((y, d, d.lo, d.hi))
    stack = [((), init)]
    while stack:
        prefix, states = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise _Unresolved(f"node budget {max_nodes} exhausted")
        m = len(prefix)
        hit = None
        unclear = False
        for y0, (y, d, slo, shi) in zip(ball, states):
            v = _violation(crit, eps, m, y, d, slo, shi, traps)
            if v == "undecided":
                unclear = True
            elif v is not None:
                hit = Leaf(prefix, y0, m, v[1], v[0])
                break
        if hit is not None:
            leaves.append(hit)
            continue
        if m == N - 1:
            (undecided if unclear else survivors).append(prefix)
            continue
        for u in reversed(U):
            nxt = []
            for y, d, slo, shi in states:
                try:
                    z = sys.step(y, u)
                except AmbiguityError:
                    raise _Unresolved(f"ambiguous step after prefix {prefix + (u,)}")
                dz = dist_to_set(z, Q)
                nxt.append((z, dz, slo + dz.lo, shi + dz.hi))
            stack.append((prefix + (u,), nxt))
    leaves.sort(key=lambda l: l.prefix)
    return leaves, survivors, undecided


def refute_point(
    sys: ControlSystem,
    Q: TargetSet,
    x,
    notion,
    eps,
    delta0,
    N: int,
    h=Fraction(1, 1024),
    max_nodes: int = 200_000,
    max_family: int = 4,
) -> Verdict:
    """Try to show that no δ ≥ δ0 works for x at this ε and horizon N."""
    notion = Notion(notion)
    eps, delta0 = Fraction(eps), Fraction(delta0)
    if N < 1:
        raise ValueError("horizon must be at least 1")
    crit = notion.criterion
    if crit == "density" and notion is not Notion.FMLS:
        raise ValueError(notion)
    traps = find_traps(sys, Q, eps) if crit in ("limsup", "density") else []
    ball = ball_points(Q, x, delta0, h)
    base = dict(notion=notion, x=x, eps=eps, delta0=delta0, horizon=N, h=Fraction(h), traps=traps, alphabet_size=len(sys.alphabet))
    notes = []
    try:
        if not notion.finite:
            leaves, surv, und = _word_tree(sys, Q, ball, crit, eps, N, traps, max_nodes)
            if not surv and not und:
                return Verdict(REFUTED, notion, x, eps, refutation=Refutation(kind="escape", leaves=leaves, ball=ball, **base))
            notes.append(f"{len(surv)} surviving and {len(und)} undecided prefixes, e.g. {(surv or und)[0]}")
        else:
            for y in ball:
                leaves, surv, und = _word_tree(sys, Q, [y], crit, eps, N, traps, max_nodes)
                if not surv and not und:
                    return Verdict(
                        REFUTED, notion, x, eps, refutation=Refutation(kind="single-point", leaves=leaves, point=y, ball=[y], **base)
                    )
            notes.append("every ball point survives under some word")
            if crit in ("sup", "mean"):
                size = _ball_cover_size(sys, Q, ball, crit, eps, N, max_nodes)
                if size is not None and size > max_family:
                    return Verdict(
                        REFUTED,
                        notion,
                        x,
                        eps,
                        refutation=Refutation(kind="family-size", family_bound=size, max_family=max_family, ball=ball, **base),
                    )
                notes.append(f"ball cover size {size} within family bound {max_family}")
    except _Unresolved as exc:
        notes.append(str(exc))
    return Verdict(INCONCLUSIVE, notion, x, eps, report="; ".join(notes))


def _ball_cover_size(sys, Q, ball, crit, eps, N, max_nodes) -> Optional[int]:
    grid = TargetGrid(tuple(ball), None, Q, "ball")
    mode = "plain" if crit == "sup" else "mean"
    table = None
    for table in enumerate_levels(sys, grid, eps, N, mode, max_nodes):
        pass
    if table is None or not table.complete:
        return None
    rows = list(table.rows.values())
    full = grid.full_mask
    covered = 0
    for r in rows:
        covered |= r
    if covered != full:
        return None  # some point fails every word; handled by the single-point search
    chosen = exact_cover(rows, full)
    return None if chosen is None else len(chosen)


def _replay_leaf(sys, Q, leaf: Leaf, crit, eps, traps) -> bool:
    y = leaf.y
    slo = shi = Fraction(0)
    for m in range(leaf.index + 1):
        if m:
            y = sys.step(y, leaf.prefix[m - 1])
        d = dist_to_set(y, Q)
        slo += d.lo
        shi += d.hi
    v = _violation(crit, eps, leaf.index, y, d, slo, shi, traps)
    return v is not None and v != "undecided" and v[0] == leaf.reason and v[1] == leaf.value


def _is_complete_prefix_code(prefixes: Sequence[tuple], alphabet_size: int) -> bool:
    ps = sorted(prefixes)
    for a, b in zip(ps, ps[1:]):
        if b[: len(a)] == a:
            return False
    return sum((Fraction(1, alphabet_size ** len(p)) for p in ps), Fraction(0)) == 1


def replay_refutation(sys: ControlSystem, Q: TargetSet, ref: Refutation) -> bool:
    """Re-verify every recorded escape and the completeness of the prefix code."""
    crit = ref.notion.criterion
    if ref.traps:
        for lo, hi, d in ref.traps:
            if Q.distance(Scalar(lo, hi) if lo < hi else Scalar(lo)).lo != d or d < ref.eps:
                return False
            for u in sys.alphabet:
                img = sys.maps[u].image(lo, hi)
                if img.lo < lo or img.hi > hi:
                    return False
    ball = ball_points(Q, ref.x, ref.delta0, ref.h)
    if ref.kind == "family-size":
        size = _ball_cover_size(sys, Q, ball, crit, ref.eps, ref.horizon, 10**6)
        return size == ref.family_bound and size > ref.max_family
    allowed = {ref.point} if ref.kind == "single-point" else set(ball)
    if ref.kind == "single-point" and ref.point not in set(ball):
        return False
    if not _is_complete_prefix_code([l.prefix for l in ref.leaves], len(sys.alphabet)):
        return False
    for leaf in ref.leaves:
        if leaf.y not in allowed or leaf.index >= ref.horizon or len(leaf.prefix) > ref.horizon - 1:
            return False
        if not _replay_leaf(sys, Q, leaf, crit, ref.eps, ref.traps):
            return False
    return True


def escape_for_word(ref: Refutation, word: Sequence) -> Leaf:
    """The recorded escape witness that defeats a particular length-N word."""
    word = tuple(word)
    for leaf in ref.leaves:
        if word[: len(leaf.prefix)] == leaf.prefix:
            return leaf
    raise KeyError(word)


# ---------------------------------------------------------------------------
# set-level classification


@dataclass
class SetVerdict:
    notion: Notion
    eps: Fraction
    points: dict  # point -> Verdict

    @property
    def kind(self) -> str:
        kinds = [v.kind for v in self.points.values()]
        if kinds and all(k == CERTIFIED for k in kinds):
            return CERTIFIED
        if any(k == REFUTED for k in kinds):
            return REFUTED
        return INCONCLUSIVE

    def refuted_points(self) -> list:
        return [x for x, v in self.points.items() if v.kind == REFUTED]

    def summary(self) -> str:
        counts = {k: sum(1 for v in self.points.values() if v.kind == k) for k in (CERTIFIED, REFUTED, INCONCLUSIVE)}
        extra = ""
        bad = self.refuted_points()
        if bad:
            extra = " refuted at " + ", ".join(format_point(x) for x in bad[:5]) + (" …" if len(bad) > 5 else "")
        return (
            f"{self.notion.value:<5} eps={format_fraction(self.eps)}: {self.kind} "
            f"({counts[CERTIFIED]} certified, {counts[REFUTED]} refuted, {counts[INCONCLUSIVE]} inconclusive){extra}"
        )


def classify_point(sys, Q, x, notion, eps, budget: Budget, evaluator=None) -> Verdict:
    v = certify_point(sys, Q, x, notion, eps, budget, evaluator)
    if v.kind == CERTIFIED or budget.refute_delta is None:
        return v
    r = refute_point(sys, Q, x, notion, eps, budget.refute_delta, budget.refute_horizon, budget.h, budget.max_nodes, budget.max_family)
    if r.kind == REFUTED:
        return r
    return Verdict(INCONCLUSIVE, Notion(notion), x, Fraction(eps), report=f"{v.report}; {r.report}")


def _classify_chunk(args):
    sys, Q, xs, notion, eps, budget = args
    ev = _Evaluator(sys, Q)
    return [classify_point(sys, Q, x, notion, eps, budget, ev) for x in xs]


def classify_set(sys, Q, grid: TargetGrid | Sequence, notion, eps, budget: Optional[Budget] = None, jobs: int = 1) -> SetVerdict:
    """Per-point verdicts over a grid; set-level Certified only if every point is."""
    notion = Notion(notion)
    eps = Fraction(eps)
    budget = budget or Budget()
    points = list(grid.points if isinstance(grid, TargetGrid) else grid)
    if jobs > 1 and len(points) > 1:
        chunks = [points[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_classify_chunk, [(sys, Q, c, notion, eps, budget) for c in chunks]))
        by_point = {}
        for c, part in zip(chunks, parts):
            by_point.update(zip(c, part))
        verdicts = {x: by_point[x] for x in points}
    else:
        verdicts = dict(zip(points, _classify_chunk((sys, Q, points, notion, eps, budget))))
    return SetVerdict(notion, eps, verdicts)


def mean_l_stability_check(sys, Q, x, eps, delta, F: Sequence[ControlSchedule], N: int, h=Fraction(1, 1024)) -> Verdict:
    """Each ball point needs some ω ∈ F whose exception set below ε has density < ε up to N."""
    eps = Fraction(eps)
    budget = Budget(deltas=(Fraction(delta),), density_horizon=N, h=Fraction(h), candidates=tuple(F), max_family=len(F), refute_delta=None)
    v = certify_point(sys, Q, x, Notion.FMLS, eps, budget)
    if v.kind != CERTIFIED:
        v.report = f"some ball point has exception density >= {format_fraction(eps)} under every schedule of F"
    return v


# ---------------------------------------------------------------------------
# audits


ARROWS = (
    (Notion.EI, Notion.EIM),
    (Notion.EIM, Notion.MEI),
    (Notion.EI, Notion.FEI),
    (Notion.EIM, Notion.FEIM),
    (Notion.MEI, Notion.FMEI),
    (Notion.FEI, Notion.FEIM),
    (Notion.FEIM, Notion.FMEI),
)

NON_ARROWS = (
    (Notion.FEI, Notion.EI, "A1"),
    (Notion.FEIM, Notion.EIM, "A1"),
    (Notion.EIM, Notion.EI, "A2"),
    (Notion.FEIM, Notion.FEI, "A3"),
    (Notion.MEI, Notion.EIM, "A4"),
    (Notion.FMEI, Notion.FEIM, "A4"),
    (Notion.FMEI, Notion.MEI, "A5"),
)


def implies(a: Notion, b: Notion) -> bool:
    """Reflexive-transitive closure of the implication arrows."""
    if a == b:
        return True
    return any(x == a and implies(y, b) for x, y in ARROWS)


def compatible(cert: Certificate, ref: Refutation) -> bool:
    """Whether a certificate and a refutation at the same point would contradict each other.

    Requires ε_cert ≤ ε_ref, δ_cert ≥ δ0, a certificate horizon covering the
    refutation horizon, and the refutation's witness points among the points
    the certificate checked.
    """
    if cert.x != ref.x or cert.eps > ref.eps or cert.delta < ref.delta0:
        return False
    if not implies(cert.notion, ref.notion):
        return False
    crit = ref.notion.criterion
    pts = cert.points()
    if ref.kind == "family-size":
        return cert.horizon >= ref.horizon and set(ref.ball) <= pts and len(cert.family) <= ref.max_family
    witnesses = {l.y for l in ref.leaves}
    if not witnesses <= pts:
        return False
    if crit in ("sup", "mean"):
        return cert.notion.criterion in ("sup", "mean") and cert.horizon >= ref.horizon
    if cert.notion.criterion not in ("limsup", "density") and cert.notion.criterion != crit:
        return False
    burn = cert.params.get("burn_in", cert.params.get("horizon", 0) // 2)
    # entering a trap at index m forces every mean at n ≥ burn to be ≥ (burn - m)/burn · dist
    for leaf in ref.leaves:
        if leaf.reason != "trap" or burn <= leaf.index:
            return False
        if Fraction(burn - leaf.index, burn) * leaf.value.lo < cert.eps:
            return False
    return True


@dataclass
class StoreEntry:
    example: str
    notion: Notion
    where: str  # "set" or a formatted point
    verdict: object  # Verdict or SetVerdict
    eps: Fraction


class VerdictStore:
    """Append-only log of verdicts; audits read a frozen snapshot."""

    def __init__(self):
        self._entries: list[StoreEntry] = []

    def add(self, example: str, verdict) -> None:
        where = "set" if isinstance(verdict, SetVerdict) else format_point(verdict.x)
        self._entries.append(StoreEntry(example, Notion(verdict.notion), where, verdict, Fraction(verdict.eps)))

    def snapshot(self) -> tuple:
        return tuple(self._entries)

    def __len__(self):
        return len(self._entries)


def _point_verdicts(entry: StoreEntry) -> list[Verdict]:
    v = entry.verdict
    return list(v.points.values()) if isinstance(v, SetVerdict) else [v]


@dataclass
class AuditReport:
    violations: list = field(default_factory=list)
    realized: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [f"violations: {len(self.violations)}"]
        out += [f"  VIOLATION {v}" for v in self.violations]
        out += [f"  realized {r}" for r in self.realized]
        out += [f"  note {n}" for n in self.notes]
        if self.skipped:
            out.append(f"  {len(self.skipped)} incompatible pairs skipped")
        return out


def implication_audit(store: VerdictStore | Sequence[StoreEntry]) -> AuditReport:
    """Flag certificate/refutation pairs contradicting an arrow; list realized non-arrows."""
    entries = store.snapshot() if isinstance(store, VerdictStore) else tuple(store)
    report = AuditReport()
    by_example: dict = {}
    for e in entries:
        by_example.setdefault(e.example, []).append(e)
    for ex, es in sorted(by_example.items()):
        certs, refs = [], []
        for e in es:
            for v in _point_verdicts(e):
                if v.certificate is not None:
                    certs.append(v.certificate)
                elif v.refutation is not None:
                    refs.append(v.refutation)
        for c in certs:
            for r in refs:
                if c.x != r.x or not implies(c.notion, r.notion):
                    continue
                if compatible(c, r):
                    report.violations.append(
                        f"{ex}: {c.notion.value} certified but {r.notion.value} refuted at x={format_point(c.x)} "
                        f"(eps {format_fraction(c.eps)} vs {format_fraction(r.eps)})"
                    )
                else:
                    report.skipped.append((ex, c.notion.value, r.notion.value, format_point(c.x)))
        # realized non-arrows: A certified on the set while B is refuted somewhere
        set_kind = {(e.notion, e.where): e.verdict.kind for e in es}
        refuted_at = {}
        for e in es:
            for v in _point_verdicts(e):
                if v.kind == REFUTED:
                    refuted_at.setdefault(e.notion, format_point(v.x))
        for a, b, label in NON_ARROWS:
            if set_kind.get((a, "set")) == CERTIFIED and b in refuted_at:
                report.realized.append(f"{a.value} =/=> {b.value} realized by {ex} (refuted at {refuted_at[b]})")
    return report


@dataclass
class TheoremCheck:
    name: str
    left: str
    right: str
    consistent: bool
    note: str = ""

    def __str__(self):
        mark = "consistent" if self.consistent else "INCONSISTENT"
        return f"{self.name}: {self.left} vs {self.right} -> {mark}{(' (' + self.note + ')') if self.note else ''}"


def _family_budget_below(sv: SetVerdict, bound) -> bool:
    """All refutations only exclude families of at most ``max_family`` words, and that is below the bound."""
    refs = [v.refutation for v in sv.points.values() if v.kind == REFUTED]
    return bool(refs) and bound is not None and all(r.kind == "family-size" and r.max_family < bound for r in refs)


def _pair(name, sv, profile_verdict, yes_right, no_right) -> TheoremCheck:
    left_kind, right_kind = sv.kind, profile_verdict.kind
    left_label, right_label = f"{sv.notion.value} {left_kind}", str(profile_verdict)
    if left_kind == INCONCLUSIVE or right_kind == "Inconclusive":
        return TheoremCheck(name, left_label, right_label, True, "inconclusive side, nothing to compare")
    if left_kind == CERTIFIED:
        return TheoremCheck(name, left_label, right_label, right_kind != no_right)
    if right_kind == yes_right and _family_budget_below(sv, profile_verdict.bound):
        return TheoremCheck(name, left_label, right_label, True, "resolution artifact: the bound exceeds the family budget")
    return TheoremCheck(name, left_label, right_label, right_kind != yes_right)


def theorem_audit(
    fei: Optional[SetVerdict] = None,
    plain_verdict=None,
    feim: Optional[SetVerdict] = None,
    mean_verdict=None,
    fmei: Optional[SetVerdict] = None,
    fmls: Optional[SetVerdict] = None,
) -> list[TheoremCheck]:
    """Cross-check classification verdicts against the complexity-profile evidence.

    FEI ⟺ bounded complexity, FEIM ⟺ bounded complexity in the mean, and
    FMEI ⟺ finite mean-L-stability. A certified left side against growth
    evidence (or a refuted left side against bounded evidence) is flagged.
    """
    out = []
    if fei is not None and plain_verdict is not None:
        out.append(_pair("FEI <=> bounded complexity", fei, plain_verdict, "BoundedEvidence", "GrowthEvidence"))
    if feim is not None and mean_verdict is not None:
        out.append(_pair("FEIM <=> bounded mean complexity", feim, mean_verdict, "BoundedEvidence", "GrowthEvidence"))
    if fmei is not None and fmls is not None:
        a, b = fmei.kind, fmls.kind
        ok = not ({a, b} == {CERTIFIED, REFUTED})
        out.append(TheoremCheck("FMEI <=> finitely mean-L-stable", f"FMEI {a}", f"FMLS {b}", ok))
    return out
