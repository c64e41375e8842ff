"""Distances to target sets, running means along orbits and upper densities."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction
from math import ceil
from typing import Sequence, Union

from gmpy2 import mpq

from .core import (
    AmbiguityError,
    ControlSchedule,
    ControlSystem,
    Scalar,
    StatePoint,
    SymbolicPoint,
    format_fraction,
)


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of disjoint closed rational intervals."""

    intervals: tuple  # ((a, b), ...)

    def __post_init__(self):
        ivs = tuple(sorted((Fraction(a), Fraction(b)) for a, b in self.intervals))
        if not ivs:
            raise ValueError("empty target set")
        for a, b in ivs:
            if b < a:
                raise ValueError(f"empty interval [{a}, {b}]")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if a1 <= b0:
                raise ValueError("intervals must be disjoint")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def single(cls, a, b) -> "IntervalUnion":
        return cls(((a, b),))

    def _point_distance(self, q: Fraction) -> Fraction:
        return min(max(a - q, q - b, Fraction(0)) for a, b in self.intervals)

    def distance(self, x: Scalar) -> Scalar:
        if x.is_exact:
            return Scalar(self._point_distance(x.lo))
        lo, hi = x.lo, x.hi
        if any(a <= hi and lo <= b for a, b in self.intervals):
            dmin = Fraction(0)
        else:
            dmin = min(self._point_distance(lo), self._point_distance(hi))
        # the distance is piecewise linear with peaks at gap midpoints
        candidates = [lo, hi]
        ivs = self.intervals
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            mid = (b0 + a1) / 2
            if lo <= mid <= hi:
                candidates.append(mid)
        dmax = max(self._point_distance(c) for c in candidates)
        return Scalar(dmin, dmax)

    def contains(self, x) -> bool:
        q = x.lo if isinstance(x, Scalar) else Fraction(x)
        if isinstance(x, Scalar) and not x.is_exact:
            return any(a <= x.lo and x.hi <= b for a, b in self.intervals)
        return any(a <= q <= b for a, b in self.intervals)

    @property
    def has_dense_interior(self) -> bool:
        """cl Int(Q) = cl Q holds iff no component is degenerate."""
        return all(a < b for a, b in self.intervals)

    def __str__(self):
        return " ∪ ".join(f"[{format_fraction(a)},{format_fraction(b)}]" for a, b in self.intervals)


@dataclass(frozen=True)
class BlockLanguage:
    """Infinite concatenations of ``blocks`` inside a one-sided shift space.

    Blocks must begin with pairwise distinct symbols so that parsing is
    deterministic.
    """

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        heads = [b[0] for b in blocks]
        if not blocks or any(not b for b in blocks) or len(set(heads)) != len(heads):
            raise ValueError("blocks must be nonempty and start with distinct symbols")
        object.__setattr__(self, "blocks", blocks)

    def _start(self, sym):
        for i, b in enumerate(self.blocks):
            if b[0] == sym:
                return i
        return None

    def advance(self, state, sym):
        """One automaton step; ``state`` is None (block boundary) or (block, offset)."""
        if state is None:
            i = self._start(sym)
            if i is None:
                return False, None
            state = (i, 0)
        else:
            i, off = state
            if self.blocks[i][off] != sym:
                return False, None
        i, off = state
        off += 1
        return True, (None if off == len(self.blocks[i]) else (i, off))

    def longest_prefix(self, x: SymbolicPoint):
        """Length of the longest prefix of x extendable into the language, None if x is in it."""
        state = None
        for k, sym in enumerate(x.prefix):
            ok, state = self.advance(state, sym)
            if not ok:
                return k
        seen = set()
        k = len(x.prefix)
        ci = 0
        while (state, ci) not in seen:
            seen.add((state, ci))
            ok, state = self.advance(state, x.cycle[ci])
            if not ok:
                return k
            k += 1
            ci = (ci + 1) % len(x.cycle)
        return None

    def distance(self, x: SymbolicPoint) -> Scalar:
        L = self.longest_prefix(x)
        return Scalar(0) if L is None else Scalar(Fraction(1, L + 1))

    def contains(self, x) -> bool:
        return self.longest_prefix(x) is None

    @property
    def has_dense_interior(self) -> bool:
        # asserted by construction: the subspace topology has the cylinders as a base
        return True

    def __str__(self):
        return "(" + "|".join(self.blocks) + ")^N0"


TargetSet = Union[IntervalUnion, BlockLanguage]


@lru_cache(maxsize=1 << 18)
def _cached_distance(Q, x):
    return Q.distance(x)


def dist_to_set(x: StatePoint, Q: TargetSet) -> Scalar:
    return _cached_distance(Q, x)


def in_eps_neighborhood(x: StatePoint, Q: TargetSet, eps) -> bool:
    """True iff d(x, Q) < eps; ambiguous enclosures raise AmbiguityError."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    return dist_to_set(x, Q) < eps


# ---------------------------------------------------------------------------
# orbit distances


def distance_sequence(sys: ControlSystem, x: StatePoint, schedule: ControlSchedule, Q: TargetSet, n: int) -> list[Scalar]:
    """``[d(φ(k,x,ω), Q) for k < n]``.

    For eventually periodic schedules the state is recorded at each cycle
    boundary; once one repeats the remaining distances are copied from the
    detected period instead of being recomputed.
    """
    out: list[Scalar] = []
    if n <= 0:
        return out
    p0 = len(schedule.prefix)
    plen = len(schedule.cycle)
    seen: dict = {}
    k = 0
    state = x
    while k < n:
        if plen and k >= p0 and (k - p0) % plen == 0:
            first = seen.setdefault(state, k)
            if first != k:
                period = out[first:k]
                while len(out) < n:
                    out.extend(period)
                del out[n:]
                return out
        out.append(dist_to_set(state, Q))
        k += 1
        if k < n:
            state = sys.step(state, schedule[k - 1])
    return out


@dataclass
class MeanProfile:
    """Running means ``values[k-1] = (1/k) Σ_{i<k} d_i`` and their prefix maxima."""

    values: list
    running_max: list

    @classmethod
    def from_distances(cls, dists: Sequence[Scalar]) -> "MeanProfile":
        values, runmax = [], []
        lo = hi = Fraction(0)
        mlo = mhi = None
        for k, d in enumerate(dists, start=1):
            lo += d.lo
            hi += d.hi
            v = Scalar(lo / k) if lo == hi else Scalar(lo / k, hi / k)
            values.append(v)
            mlo = v.lo if mlo is None else max(mlo, v.lo)
            mhi = v.hi if mhi is None else max(mhi, v.hi)
            runmax.append(Scalar(mlo, mhi))
        return cls(values, runmax)

    @property
    def exact(self) -> bool:
        return all(v.is_exact for v in self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "mean_k", "runmax_k"])
        for k, (v, m) in enumerate(zip(self.values, self.running_max), start=1):
            w.writerow([k, str(v), str(m)])
        return buf.getvalue()


def mean_profile(sys: ControlSystem, x: StatePoint, schedule: ControlSchedule, Q: TargetSet, n: int) -> MeanProfile:
    if n < 1:
        raise ValueError("n must be at least 1")
    return MeanProfile.from_distances(distance_sequence(sys, x, schedule, Q, n))


def limsup_from_distances(dists: Sequence[Scalar], burn_in: int, window: int):
    """Max of the running means over n ∈ [burn_in, burn_in+window] and a trend flag.

    The flag is True when the upper bounds of those means never increase,
    a heuristic signal that the tail has settled.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    start = max(burn_in, 1)
    end = start + window
    if len(dists) < end:
        raise ValueError("distance sequence shorter than burn_in + window")
    # gmpy2 rationals: these sums run over hundreds of terms with large denominators
    lo = sum((mpq(d.lo) for d in dists[: start - 1]), mpq(0))
    hi = sum((mpq(d.hi) for d in dists[: start - 1]), mpq(0))
    est_lo = est_hi = None
    prev_hi = None
    trend = True
    for n in range(start, end + 1):
        d = dists[n - 1]
        lo += mpq(d.lo)
        hi += mpq(d.hi)
        m_lo, m_hi = lo / n, hi / n
        est_lo = m_lo if est_lo is None else max(est_lo, m_lo)
        est_hi = m_hi if est_hi is None else max(est_hi, m_hi)
        if prev_hi is not None and m_hi > prev_hi:
            trend = False
        prev_hi = m_hi
    return Scalar(_frac(est_lo), _frac(est_hi)), trend


def _frac(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


def limsup_mean_estimate(sys, x, schedule, Q, burn_in: int, window: int):
    dists = distance_sequence(sys, x, schedule, Q, max(burn_in, 1) + window)
    return limsup_from_distances(dists, burn_in, window)


def upper_density_estimate(E: Sequence[bool]) -> Fraction:
    """max over n ∈ [⌈N/2⌉, N] of #(E ∩ [0, n-1]) / n."""
    N = len(E)
    if N < 1:
        raise ValueError("need at least one index")
    start = max(1, ceil(N / 2))
    count = sum(1 for e in E[: start - 1] if e)
    best = Fraction(0)
    for n in range(start, N + 1):
        if E[n - 1]:
            count += 1
        best = max(best, Fraction(count, n))
    return best


def exceptions_from_distances(dists: Sequence[Scalar], eps) -> list[bool]:
    eps = Fraction(eps)
    return [not (d < eps) for d in dists]


def exception_density(sys, x, schedule, Q, eps, N: int) -> Fraction:
    """Upper-density estimate of {k < N : d(φ(k,x,ω), Q) ≥ eps}."""
    eps = Fraction(eps)
    if eps <= 0 or N < 1:
        raise ValueError("need eps > 0 and N >= 1")
    return upper_density_estimate(exceptions_from_distances(distance_sequence(sys, x, schedule, Q, N), eps))


__all__ = [
    "AmbiguityError",
    "BlockLanguage",
    "IntervalUnion",
    "MeanProfile",
    "TargetSet",
    "dist_to_set",
    "distance_sequence",
    "exception_density",
    "exceptions_from_distances",
    "in_eps_neighborhood",
    "limsup_from_distances",
    "limsup_mean_estimate",
    "mean_profile",
    "upper_density_estimate",
]
