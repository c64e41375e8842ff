"""Invariance kernels over target grids, minimal spanning covers and complexity profiles.

A kernel row records, for one control word of length n, which grid points
stay ε-close to Q at times 0..n-1 (plain mode) or keep every running mean
of their distances below ε (mean mode). The minimal number of rows covering
the grid is the grid version of r_inv(n, ε, Q) (resp. its mean variant).
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence

from gmpy2 import mpq

from .core import ControlSystem, Scalar, SymbolicPoint, format_fraction
from .metrics import BlockLanguage, IntervalUnion, TargetSet, dist_to_set

log = logging.getLogger(__name__)

PLAIN = "plain"
MEAN = "mean"
MODES = (PLAIN, MEAN)

EXACT = "exact"
GREEDY = "greedy-upper"
LOWER = "lower-bound"

DEFAULT_EXACT_THRESHOLD = 10_000
DEFAULT_MAX_NODES = 200_000


class NoSpanningSet(ValueError):
    """Some grid point is kept near Q by no word at this horizon."""

    def __init__(self, point, index):
        super().__init__(f"grid point {point} (index {index}) is not covered by any word")
        self.point = point
        self.index = index


class IncompleteTable(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class TargetGrid:
    """Finite sample of Q. ``resolution`` is a mesh width or a block depth."""

    points: tuple
    resolution: object
    target: TargetSet
    kind: str  # "interval" | "block"

    def __len__(self):
        return len(self.points)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.points)) - 1

    def refine(self) -> "TargetGrid":
        if self.kind == "interval":
            return interval_grid(self.target, self.resolution / 2)
        return block_grid(self.target, self.resolution + 1)

    def describe_resolution(self) -> str:
        if self.kind == "interval":
            return f"h={format_fraction(self.resolution)}"
        return f"depth={self.resolution}"


def interval_grid(Q: IntervalUnion, h) -> TargetGrid:
    """Points a, a+h, … of every component [a, b], always including b."""
    h = Fraction(h)
    if h <= 0:
        raise ValueError("mesh must be positive")
    pts = []
    for a, b in Q.intervals:
        k = 0
        while a + k * h < b:
            pts.append(Scalar(a + k * h))
            k += 1
        pts.append(Scalar(b))
    return TargetGrid(tuple(pts), h, Q, "interval")


def block_grid(Q: BlockLanguage, depth: int) -> TargetGrid:
    """All block words of length ≤ depth, completed with the periodic first-block tail."""
    from itertools import product

    tail = SymbolicPoint("", Q.blocks[0])
    seen = set()
    pts = []
    for n in range(depth + 1):
        for word in product(Q.blocks, repeat=n):
            p = SymbolicPoint("".join(word), tail.cycle)
            if p not in seen:
                seen.add(p)
                pts.append(p)
    pts.sort(key=str)
    return TargetGrid(tuple(pts), depth, Q, "block")


def make_grid(Q: TargetSet, resolution) -> TargetGrid:
    if isinstance(Q, IntervalUnion):
        return interval_grid(Q, resolution)
    return block_grid(Q, int(resolution))


# ---------------------------------------------------------------------------
# kernels


def _verdict(lo: Fraction, hi: Fraction, bound: Fraction):
    """True if hi < bound, False if lo >= bound, None if undecided."""
    if hi < bound:
        return True
    if lo >= bound:
        return False
    return None


def kernel_membership(sys: ControlSystem, x, Q: TargetSet, word: Sequence, eps, mode: str = PLAIN):
    """Whether x belongs to the kernel of ``word`` at horizon len(word).

    Returns True, False, or None when an enclosure straddles ε.
    """
    eps = Fraction(eps)
    n = len(word)
    if n < 1:
        raise ValueError("word must be nonempty")
    lo = hi = Fraction(0)
    state = x
    for i in range(n):
        if i:
            state = sys.step(state, word[i - 1])
        d = dist_to_set(state, Q)
        if mode == PLAIN:
            v = _verdict(d.lo, d.hi, eps)
        else:
            lo += d.lo
            hi += d.hi
            v = _verdict(lo / (i + 1), hi / (i + 1), eps)
        if v is not True:
            return v
    return True


def kernel_row(sys: ControlSystem, grid: TargetGrid, word: Sequence, eps, mode: str = PLAIN) -> int:
    """Bitset of grid points in the kernel of ``word``; undecided points count as outside."""
    mask = 0
    for j, x in enumerate(grid.points):
        if kernel_membership(sys, x, grid.target, word, eps, mode) is True:
            mask |= 1 << j
    return mask


def kernel_rows(sys: ControlSystem, grid: TargetGrid, words: Sequence[Sequence], eps, mode: str = PLAIN) -> list[int]:
    """kernel_row for many words at once, sharing the work on common prefixes."""
    eps = Fraction(eps)
    words = [tuple(w) for w in words]
    if any(not w for w in words):
        raise ValueError("words must be nonempty")
    Q = grid.target
    alive, states, sums = [], [], []
    for j, x in enumerate(grid.points):
        d = dist_to_set(x, Q)
        if _verdict(d.lo, d.hi, eps) is True:
            alive.append(j)
            states.append(x)
            sums.append((mpq(d.lo), mpq(d.hi)))
    start = _Node((), 1, tuple(alive), tuple(states), tuple(sums) if mode == MEAN else ())
    out = [0] * len(words)
    cache: dict = {}
    order = sorted(range(len(words)), key=lambda i: words[i])
    # walk the words in lexicographic order keeping the stack of shared prefixes
    stack = [start]
    for i in order:
        w = words[i]
        depth = 0
        while depth < len(stack) - 1 and depth < len(w) - 1 and stack[depth + 1].word == w[: depth + 1]:
            depth += 1
        del stack[depth + 1 :]
        while len(stack) < len(w):
            node = stack[-1]
            k = len(node.word)
            if node.alive:
                a, s, sm, _ = _advance(sys, Q, node, w[k], k + 1, eps, mode, cache)
            else:
                a, s, sm = (), (), ()
            stack.append(_Node(w[: k + 1], 1, a, s, sm))
        mask = 0
        for j in stack[len(w) - 1].alive:
            mask |= 1 << j
        out[i] = mask
    return out


@dataclass
class KernelTable:
    horizon: int
    eps: Fraction
    mode: str
    grid_size: int
    rows: dict  # representative word -> bitset
    multiplicity: dict  # representative word -> number of words sharing the row
    pruned: list = field(default_factory=list)
    complete: bool = True
    indeterminate: int = 0  # points that were undecided for at least one word
    levels: dict = field(default_factory=dict, repr=False)

    def at(self, n: int) -> "KernelTable":
        return self if n == self.horizon else self.levels[n]

    def covered(self) -> int:
        m = 0
        for r in self.rows.values():
            m |= r
        return m


@dataclass
class _Node:
    word: tuple
    mult: int
    alive: tuple
    states: tuple
    sums: tuple  # (lo, hi) per alive point, mean mode only


def _advance(sys, Q, node: _Node, u, index: int, eps: Fraction, mode: str, cache: Optional[dict] = None):
    alive, states, sums = [], [], []
    undecided = 0
    eps = mpq(eps)
    bound = eps * (index + 1)
    if cache is None:
        cache = {}
    for pos, j in enumerate(node.alive):
        key = (node.states[pos], u)
        hit = cache.get(key)
        if hit is None:
            y = sys.step(node.states[pos], u)
            d = dist_to_set(y, Q)
            hit = cache[key] = (y, mpq(d.lo), mpq(d.hi))
        y, dlo, dhi = hit
        if mode == PLAIN:
            v = _verdict(dlo, dhi, eps)
            s = None
        else:
            lo, hi = node.sums[pos]
            s = (lo + dlo, hi + dhi)
            v = _verdict(s[0], s[1], bound)
        if v is True:
            alive.append(j)
            states.append(y)
            if s is not None:
                sums.append(s)
        elif v is None:
            undecided |= 1 << j
    return tuple(alive), tuple(states), tuple(sums), undecided


def enumerate_levels(
    sys: ControlSystem,
    grid: TargetGrid,
    eps,
    n_max: int,
    mode: str = PLAIN,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> Iterator[KernelTable]:
    """Yield the kernel table for every horizon n = 1..n_max.

    Word prefixes whose per-point states (and running sums) coincide have
    identical futures, so they are merged into the lexicographically least
    prefix with a multiplicity count. Prefixes with empty kernels are pruned.
    """
    eps = Fraction(eps)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if eps <= 0 or n_max < 1:
        raise ValueError("need eps > 0 and n_max >= 1")
    Q = grid.target
    U = sys.alphabet
    alive, states, sums = [], [], []
    undecided = 0
    for j, x in enumerate(grid.points):
        d = dist_to_set(x, Q)
        v = _verdict(d.lo, d.hi, eps)
        if v is True:
            alive.append(j)
            states.append(x)
            sums.append((mpq(d.lo), mpq(d.hi)))
        elif v is None:
            undecided |= 1 << j
    frontier = [_Node((), 1, tuple(alive), tuple(states), tuple(sums) if mode == MEAN else ())] if alive else []
    complete = True
    cache: dict = {}
    for n in range(1, n_max + 1):
        rows: dict = {}
        mult: dict = {}
        by_mask: dict = {}
        for node in frontier:
            mask = 0
            for j in node.alive:
                mask |= 1 << j
            rep = by_mask.get(mask)
            if rep is None:
                rep = node.word + (U[0],)
                by_mask[mask] = rep
                rows[rep] = mask
                mult[rep] = 0
            mult[rep] += node.mult * len(U)
        level_pruned: list = []
        yield KernelTable(n, eps, mode, len(grid), rows, mult, level_pruned, complete, undecided)
        if n == n_max:
            return
        nxt: dict = {}
        for node in frontier:
            for u in U:
                a, s, sm, und = _advance(sys, Q, node, u, n, eps, mode, cache)
                undecided |= und
                if not a:
                    level_pruned.append(node.word + (u,))
                    continue
                key = (a, s, sm)
                hit = nxt.get(key)
                if hit is None:
                    nxt[key] = _Node(node.word + (u,), node.mult, a, s, sm)
                else:
                    hit.mult += node.mult
        frontier = list(nxt.values())
        if len(frontier) > max_nodes:
            log.warning("frontier of %d prefixes at n=%d exceeds budget; truncating", len(frontier), n + 1)
            frontier.sort(key=lambda nd: nd.word)
            frontier = frontier[:max_nodes]
            complete = False


def enumerate_words(sys, grid, eps, n_max: int, mode: str = PLAIN, max_nodes: int = DEFAULT_MAX_NODES) -> KernelTable:
    levels = {t.horizon: t for t in enumerate_levels(sys, grid, eps, n_max, mode, max_nodes)}
    table = levels[n_max]
    table.levels = levels
    return table


# ---------------------------------------------------------------------------
# set cover


@dataclass
class CoverSolution:
    words: list
    size: int
    tag: str
    lower_bound: int
    rows: list = field(default_factory=list)


def _popcount(m: int) -> int:
    return bin(m).count("1")


def _bits(m: int):
    j = 0
    while m:
        if m & 1:
            yield j
        m >>= 1
        j += 1


def greedy_cover(rows: Sequence[int], universe: int) -> list[int]:
    chosen = []
    left = universe
    while left:
        best, gain = -1, 0
        for i, r in enumerate(rows):
            g = _popcount(r & left)
            if g > gain:
                best, gain = i, g
        if best < 0:
            raise ValueError("universe not coverable")
        chosen.append(best)
        left &= ~rows[best]
    return chosen


def cover_lower_bound(rows: Sequence[int], universe: int) -> int:
    """max(⌈|U| / largest row⌉, size of a set of elements no row covers two of)."""
    if not universe:
        return 0
    maxpop = max(_popcount(r & universe) for r in rows)
    lb1 = -(-_popcount(universe) // maxpop)
    covering = {e: frozenset(i for i, r in enumerate(rows) if r >> e & 1) for e in _bits(universe)}
    used: set = set()
    lb2 = 0
    for e in sorted(covering, key=lambda e: (len(covering[e]), e)):
        if used.isdisjoint(covering[e]):
            used |= covering[e]
            lb2 += 1
    return max(lb1, lb2)


def exact_cover(rows: Sequence[int], universe: int, node_limit: int = 2_000_000) -> Optional[list[int]]:
    """Minimum-cardinality cover by branch and bound; None if the node limit is hit."""
    n = len(rows)
    # drop rows dominated by another row (keep the earliest among equals)
    order = sorted(range(n), key=lambda i: (-_popcount(rows[i] & universe), i))
    kept: list[int] = []
    if n <= 4000:
        for i in order:
            ri = rows[i] & universe
            if ri and not any((ri | (rows[k] & universe)) == (rows[k] & universe) for k in kept):
                kept.append(i)
    else:
        seen = set()
        for i in order:
            ri = rows[i] & universe
            if ri and ri not in seen:
                seen.add(ri)
                kept.append(i)
    kept.sort()
    covering = {e: [i for i in kept if rows[i] >> e & 1] for e in _bits(universe)}
    if any(not c for c in covering.values()):
        return None
    forced = sorted({c[0] for c in covering.values() if len(c) == 1})
    left = universe
    for i in forced:
        left &= ~rows[i]
    best = [i for i in forced] + [kept[k] for k in greedy_cover([rows[i] for i in kept], left)] if left else list(forced)
    nodes = 0

    def rec(left: int, chosen: list[int]):
        nonlocal best, nodes
        nodes += 1
        if nodes > node_limit:
            raise _NodeLimit
        if not left:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        gain = max(_popcount(rows[i] & left) for i in kept)
        if len(chosen) + -(-_popcount(left) // gain) >= len(best):
            return
        e = min(_bits(left), key=lambda e: (len(covering[e]), e))
        for i in sorted(covering[e], key=lambda i: (-_popcount(rows[i] & left), i)):
            chosen.append(i)
            rec(left & ~rows[i], chosen)
            chosen.pop()

    try:
        rec(left, list(forced))
    except _NodeLimit:
        return None
    return sorted(best)


class _NodeLimit(Exception):
    pass


def min_cover(table: KernelTable, grid: Optional[TargetGrid] = None, exact_threshold: int = DEFAULT_EXACT_THRESHOLD) -> CoverSolution:
    """Smallest family of table rows covering the grid."""
    if not table.complete:
        raise IncompleteTable("kernel table was truncated; refusing to report a cover")
    size = grid and len(grid) or table.grid_size
    universe = (1 << size) - 1
    words = sorted(table.rows)
    rows = [table.rows[w] for w in words]
    covered = 0
    for r in rows:
        covered |= r
    if covered != universe:
        missing = next(_bits(universe & ~covered))
        raise NoSpanningSet(grid.points[missing] if grid else missing, missing)
    lb = cover_lower_bound(rows, universe)
    chosen = None
    if len(rows) <= exact_threshold:
        chosen = exact_cover(rows, universe)
    if chosen is not None:
        return CoverSolution([words[i] for i in chosen], len(chosen), EXACT, len(chosen), [rows[i] for i in chosen])
    chosen = greedy_cover(rows, universe)
    return CoverSolution([words[i] for i in chosen], len(chosen), GREEDY, lb, [rows[i] for i in chosen])


# ---------------------------------------------------------------------------
# profiles


@dataclass
class ProfileEntry:
    n: int
    r: int
    tag: str
    lower_bound: int
    words: list = field(default_factory=list)


@dataclass
class ComplexityProfile:
    eps: Fraction
    mode: str
    entries: list
    resolution: str = ""

    def exact_entries(self) -> list[ProfileEntry]:
        return [e for e in self.entries if e.tag == EXACT]

    def to_csv_rows(self) -> list[list[str]]:
        return [[str(e.n), format_fraction(self.eps), self.mode, str(e.r), e.tag] for e in self.entries]


def complexity_profile(
    sys: ControlSystem,
    grid: TargetGrid,
    eps,
    n_max: int,
    mode: str = PLAIN,
    refine: bool = True,
    max_nodes: int = DEFAULT_MAX_NODES,
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
) -> ComplexityProfile:
    """Per-horizon grid covers with optimality tags.

    An optimal grid cover is tagged exact only if its words also cover the
    refined grid; otherwise the value is reported as a lower bound (any
    spanning family for Q must in particular cover the grid).
    """
    eps = Fraction(eps)
    fine = grid.refine() if refine else None
    entries = []
    for table in enumerate_levels(sys, grid, eps, n_max, mode, max_nodes):
        sol = min_cover(table, grid, exact_threshold)
        tag = sol.tag
        if tag == EXACT and fine is not None:
            union = 0
            for r in kernel_rows(sys, fine, sol.words, eps, mode):
                union |= r
            if union != fine.full_mask:
                tag = LOWER
        entries.append(ProfileEntry(table.horizon, sol.size, tag, sol.lower_bound, sol.words))
    return ComplexityProfile(eps, mode, entries, grid.describe_resolution())


@dataclass
class EntropyEstimate:
    per_n: list  # (n, log r / n)
    slope: float
    bound_only: bool
    eps: Fraction


def entropy_estimate(profile: ComplexityProfile) -> EntropyEstimate:
    """log r(n)/n per horizon and the least-squares slope of log r over the tail half.

    This is a fixed-ε estimate; the ε → 0 limit is never extrapolated.
    """
    usable = profile.exact_entries()
    bound_only = False
    if len(usable) < 4:
        if len(profile.entries) < 4:
            raise ValueError("need at least 4 profile entries")
        usable = list(profile.entries)
        bound_only = True
    per_n = [(e.n, math.log(e.r) / e.n) for e in usable]
    tail = usable[len(usable) // 2 :]
    xs = [e.n for e in tail]
    ys = [math.log(e.r) for e in tail]
    slope = 0.0 if len(set(ys)) == 1 else statistics.linear_regression(xs, ys).slope
    return EntropyEstimate(per_n, slope, bound_only, profile.eps)


@dataclass
class ComplexityVerdict:
    kind: str  # BoundedEvidence | GrowthEvidence | Inconclusive
    bound: Optional[int] = None
    detail: str = ""

    def __str__(self):
        return f"{self.kind}({self.bound})" if self.bound is not None else self.kind


def bounded_complexity_verdict(profile: ComplexityProfile) -> ComplexityVerdict:
    exact = profile.exact_entries()
    if len(exact) < 8:
        return ComplexityVerdict("Inconclusive", detail=f"only {len(exact)} exact entries")
    tail = exact[len(exact) // 2 :]
    values = [e.r for e in tail]
    if len(set(values)) == 1:
        return ComplexityVerdict("BoundedEvidence", values[0], f"constant over n={tail[0].n}..{tail[-1].n}")
    ups = [b.n for a, b in zip(tail, tail[1:]) if b.r > a.r]
    if len(ups) >= 3 and all(b.r >= a.r for a, b in zip(tail, tail[1:])):
        return ComplexityVerdict("GrowthEvidence", detail=f"strict increases at n={ups}")
    return ComplexityVerdict("Inconclusive", detail=f"tail values {values}")
