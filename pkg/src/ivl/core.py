"""State spaces, scalars, control schedules and trajectory evaluation.

Interval states are :class:`Scalar` values. A scalar is either an exact
rational or a rational enclosure ``[lo, hi]`` whose endpoints are rounded
outward onto a dyadic lattice; the enclosure width is the propagated error.
Symbolic states are eventually periodic sequences (:class:`SymbolicPoint`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import gmpy2

#: approximate scalars live on the 2**-PRECISION_BITS lattice
PRECISION_BITS = 64
#: exact values whose denominators outgrow this many bits become approximate
DENOMINATOR_CAP_BITS = 192

_SCALE = 1 << PRECISION_BITS


class AmbiguityError(ArithmeticError):
    """A comparison or branch choice cannot be decided at the current precision."""


class OutOfSpaceError(ValueError):
    """A state does not belong to the declared state space."""


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Scalar):
        if not value.is_exact:
            raise AmbiguityError(f"{value} is not exact")
        return value.lo
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass a Fraction, int or 'p/q' string")
    return Fraction(value)


def _floor_lattice(q: Fraction) -> Fraction:
    return Fraction((q.numerator * _SCALE) // q.denominator, _SCALE)


def _ceil_lattice(q: Fraction) -> Fraction:
    return Fraction(-((-q.numerator * _SCALE) // q.denominator), _SCALE)


def _too_big(q: Fraction) -> bool:
    return q.denominator.bit_length() > DENOMINATOR_CAP_BITS


class Scalar:
    """Exact rational or outward-rounded rational enclosure.

    Arithmetic never narrows an enclosure, so ``error_bound`` can only be
    reset by an operation whose result is known exactly (a constant branch).
    Order comparisons raise :class:`AmbiguityError` when the enclosures
    overlap in a way that leaves the answer undetermined.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = as_fraction(lo)
        hi = lo if hi is None else as_fraction(hi)
        if hi < lo:
            raise ValueError(f"empty enclosure [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    @classmethod
    def settle(cls, lo: Fraction, hi: Fraction) -> "Scalar":
        """Build a scalar, rounding outward when exactness is too expensive."""
        if lo == hi:
            if not _too_big(lo):
                return cls(lo)
        elif not (_too_big(lo) or _too_big(hi)) and lo.denominator <= _SCALE and hi.denominator <= _SCALE:
            return cls(lo, hi)
        return cls(_floor_lattice(lo), _ceil_lattice(hi))

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    @property
    def value(self) -> Fraction:
        """Exact value, or the midpoint of the enclosure."""
        return self.lo if self.lo == self.hi else (self.lo + self.hi) / 2

    @property
    def error_bound(self) -> Fraction:
        return (self.hi - self.lo) / 2

    def _coerce(self, other) -> "Scalar":
        return other if isinstance(other, Scalar) else Scalar(other)

    def __add__(self, other):
        o = self._coerce(other)
        return Scalar.settle(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Scalar.settle(self.lo - o.hi, self.hi - o.lo)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return Scalar(-self.hi, -self.lo)

    def __mul__(self, other):
        o = self._coerce(other)
        if self.is_exact and o.is_exact:
            v = self.lo * o.lo
            return Scalar.settle(v, v)
        products = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Scalar.settle(min(products), max(products))

    __rmul__ = __mul__

    def __truediv__(self, other):
        d = as_fraction(other)
        if d <= 0:
            raise ZeroDivisionError("only division by positive exact constants is supported")
        return Scalar.settle(self.lo / d, self.hi / d)

    def square(self) -> "Scalar":
        if self.lo >= 0:
            return Scalar.settle(self.lo * self.lo, self.hi * self.hi)
        if self.hi <= 0:
            return Scalar.settle(self.hi * self.hi, self.lo * self.lo)
        return Scalar.settle(Fraction(0), max(self.lo * self.lo, self.hi * self.hi))

    def hull(self, other: "Scalar") -> "Scalar":
        return Scalar(min(self.lo, other.lo), max(self.hi, other.hi))

    def contains(self, value) -> bool:
        v = as_fraction(value)
        return self.lo <= v <= self.hi

    def __lt__(self, other):
        o = self._coerce(other)
        if self.hi < o.lo:
            return True
        if self.lo >= o.hi:
            return False
        raise AmbiguityError(f"cannot decide {self} < {o}")

    def __le__(self, other):
        o = self._coerce(other)
        if self.hi <= o.lo:
            return True
        if self.lo > o.hi:
            return False
        raise AmbiguityError(f"cannot decide {self} <= {o}")

    def __gt__(self, other):
        return self._coerce(other) < self

    def __ge__(self, other):
        return self._coerce(other) <= self

    def __eq__(self, other):
        if isinstance(other, Scalar):
            return self.lo == other.lo and self.hi == other.hi
        if isinstance(other, (int, Fraction)):
            return self.is_exact and self.lo == other
        return NotImplemented

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"Scalar({self})"

    def __str__(self):
        if self.is_exact:
            return format_fraction(self.lo)
        return f"{float(self.value):.17g}±{float(self.error_bound):.3g}"


def format_fraction(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def cube_root(s: Scalar) -> Scalar:
    """Enclosure of the real cube root of a nonnegative scalar."""
    if s.lo < 0:
        raise ValueError("cube root branch evaluated below its domain")

    def exact_root(q: Fraction):
        n, ok_n = gmpy2.iroot(q.numerator, 3)
        d, ok_d = gmpy2.iroot(q.denominator, 3)
        if ok_n and ok_d:
            return Fraction(int(n), int(d))
        return None

    if s.is_exact:
        r = exact_root(s.lo)
        if r is not None:
            return Scalar(r)
    lo_r = exact_root(s.lo)
    if lo_r is None:
        scaled = (s.lo.numerator << (3 * PRECISION_BITS)) // s.lo.denominator
        lo_r = Fraction(int(gmpy2.iroot(scaled, 3)[0]), _SCALE)
    hi_r = exact_root(s.hi)
    if hi_r is None:
        num = s.hi.numerator << (3 * PRECISION_BITS)
        scaled = -((-num) // s.hi.denominator)
        root, exact = gmpy2.iroot(scaled, 3)
        hi_r = Fraction(int(root) + (0 if exact else 1), _SCALE)
    return Scalar.settle(lo_r, hi_r)


# ---------------------------------------------------------------------------
# symbolic points


def _primitive_root(word: str) -> str:
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


_SYMBOLIC_RE = re.compile(r"^([^()]*)\(([^()]+)\)$")


@dataclass(frozen=True)
class SymbolicPoint:
    """The one-sided sequence ``prefix · cycle^∞`` in canonical form.

    Canonical means the cycle is primitive and the prefix does not end with
    the last symbol of the cycle, which makes equality of points the same as
    equality of the stored words.
    """

    prefix: str
    cycle: str

    def __post_init__(self):
        if not self.cycle:
            raise ValueError("cycle must be nonempty")
        prefix, cycle = self.prefix, _primitive_root(self.cycle)
        while prefix and prefix[-1] == cycle[-1]:
            prefix = prefix[:-1]
            cycle = cycle[-1] + cycle[:-1]
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "cycle", cycle)

    @classmethod
    def parse(cls, text: str) -> "SymbolicPoint":
        """Parse ``'abcde(ab)'`` as abcde·(ab)^∞."""
        m = _SYMBOLIC_RE.match(text.strip())
        if not m:
            raise ValueError(f"not an eventually periodic sequence: {text!r}")
        return cls(m.group(1), m.group(2))

    def __getitem__(self, k: int) -> str:
        if k < len(self.prefix):
            return self.prefix[k]
        return self.cycle[(k - len(self.prefix)) % len(self.cycle)]

    def take(self, n: int) -> str:
        if n <= len(self.prefix):
            return self.prefix[:n]
        rest = n - len(self.prefix)
        reps = -(-rest // len(self.cycle))
        return self.prefix + (self.cycle * reps)[:rest]

    def shift(self, p: int = 1) -> "SymbolicPoint":
        if p < 0:
            raise ValueError("shift power must be nonnegative")
        if p <= len(self.prefix):
            return SymbolicPoint(self.prefix[p:], self.cycle)
        r = (p - len(self.prefix)) % len(self.cycle)
        return SymbolicPoint("", self.cycle[r:] + self.cycle[:r])

    def first_difference(self, other: "SymbolicPoint"):
        """Index of the first differing symbol, or None when equal."""
        if self == other:
            return None
        # two eventually periodic sequences that agree this long agree forever
        bound = max(len(self.prefix), len(other.prefix)) + len(self.cycle) * len(other.cycle)
        for k in range(bound + 1):
            if self[k] != other[k]:
                return k
        raise AssertionError("canonical forms differ but sequences agree")

    def distance(self, other: "SymbolicPoint") -> Fraction:
        k = self.first_difference(other)
        return Fraction(0) if k is None else Fraction(1, k + 1)

    def __str__(self):
        return f"{self.prefix}({self.cycle})"


StatePoint = Union[Scalar, SymbolicPoint]


# ---------------------------------------------------------------------------
# control schedules


@dataclass(frozen=True)
class ControlSchedule:
    """Finite word (empty cycle) or eventually periodic control sequence."""

    prefix: tuple = ()
    cycle: tuple = ()

    def __post_init__(self):
        prefix, cycle = tuple(self.prefix), tuple(self.cycle)
        if cycle:
            n = len(cycle)
            for p in range(1, n + 1):
                if n % p == 0 and cycle[:p] * (n // p) == cycle:
                    cycle = cycle[:p]
                    break
            while prefix and prefix[-1] == cycle[-1]:
                prefix = prefix[:-1]
                cycle = cycle[-1:] + cycle[:-1]
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "cycle", cycle)

    @classmethod
    def constant(cls, u) -> "ControlSchedule":
        return cls((), (u,))

    @classmethod
    def word(cls, symbols: Iterable) -> "ControlSchedule":
        return cls(tuple(symbols), ())

    @property
    def is_finite(self) -> bool:
        return not self.cycle

    def __len__(self):
        if self.cycle:
            raise TypeError("infinite schedule has no length")
        return len(self.prefix)

    def __getitem__(self, k: int):
        if k < 0:
            raise IndexError(k)
        if k < len(self.prefix):
            return self.prefix[k]
        if not self.cycle:
            raise IndexError(f"finite schedule of length {len(self.prefix)} indexed at {k}")
        return self.cycle[(k - len(self.prefix)) % len(self.cycle)]

    def take(self, n: int) -> tuple:
        return tuple(self[k] for k in range(n))

    def __str__(self):
        return format_schedule(self)

    @classmethod
    def parse(cls, text: str) -> "ControlSchedule":
        return parse_schedule(text)


def splice(head: Sequence, tail: ControlSchedule) -> ControlSchedule:
    """The schedule ``head · tail``."""
    return ControlSchedule(tuple(head) + tail.prefix, tail.cycle)


def _runs(symbols: Sequence) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        j = i
        while j < len(symbols) and symbols[j] == symbols[i]:
            j += 1
        out.append(str(symbols[i]) if j - i == 1 else f"{symbols[i]}^{j - i}")
        i = j
    return out


def format_schedule(s: ControlSchedule) -> str:
    parts = _runs(s.prefix)
    if s.cycle:
        parts.append("(" + " ".join(str(u) for u in s.cycle) + ")")
    return " ".join(parts) if parts else "ε"


_TOKEN_RE = re.compile(r"\(([^()]*)\)|(\w+)(?:\^(\d+))?")


def parse_schedule(text: str) -> ControlSchedule:
    """Parse schedules such as ``'0^4 2 (0)'``, ``'(1)'`` or ``'0 1 1'``.

    Symbols are integers; a parenthesized group is the repeating cycle and
    must come last.
    """
    text = text.strip()
    if text in ("", "ε"):
        return ControlSchedule()
    prefix: list = []
    cycle: tuple = ()
    pos = 0
    for m in _TOKEN_RE.finditer(text):
        if text[pos:m.start()].strip():
            raise ValueError(f"cannot parse schedule {text!r}")
        pos = m.end()
        if cycle:
            raise ValueError("the cycle group must be the last token")
        if m.group(1) is not None:
            cycle = tuple(int(t) for t in m.group(1).split())
            if not cycle:
                raise ValueError("empty cycle group")
        else:
            prefix.extend([int(m.group(2))] * int(m.group(3) or 1))
    if text[pos:].strip():
        raise ValueError(f"cannot parse schedule {text!r}")
    return ControlSchedule(tuple(prefix), cycle)


# ---------------------------------------------------------------------------
# interval maps


@dataclass(frozen=True)
class Constant:
    value: Fraction

    def at(self, x: Scalar) -> Scalar:
        return Scalar(self.value)

    image = at

    def formula(self):
        return format_fraction(self.value)


@dataclass(frozen=True)
class Affine:
    """``slope·(x − center) + offset``."""

    slope: Fraction
    center: Fraction
    offset: Fraction

    def at(self, x: Scalar) -> Scalar:
        return (x - self.center) * self.slope + self.offset

    image = at

    def formula(self):
        return f"{format_fraction(self.slope)}(x-{format_fraction(self.center)})+{format_fraction(self.offset)}"


@dataclass(frozen=True)
class Quadratic:
    """``scale·(x − center)² + offset``."""

    scale: Fraction
    center: Fraction
    offset: Fraction

    def at(self, x: Scalar) -> Scalar:
        return (x - self.center).square() * self.scale + self.offset

    image = at

    def formula(self):
        return f"{format_fraction(self.scale)}(x-{format_fraction(self.center)})^2+{format_fraction(self.offset)}"


@dataclass(frozen=True)
class CubeRoot:
    """``scale·(x − center)^(1/3) + offset``; defined for x ≥ center."""

    scale: Fraction
    center: Fraction
    offset: Fraction

    def at(self, x: Scalar) -> Scalar:
        return cube_root(x - self.center) * self.scale + self.offset

    image = at

    def formula(self):
        return f"{format_fraction(self.scale)}(x-{format_fraction(self.center)})^(1/3)+{format_fraction(self.offset)}"


Branch = Union[Constant, Affine, Quadratic, CubeRoot]


@dataclass(frozen=True)
class PiecewiseMap:
    """Map on [0, 1] given by branches on ``[0,b1), [b1,b2), …, [bk,1]``."""

    breakpoints: tuple
    branches: tuple

    def __post_init__(self):
        if len(self.branches) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more branch than breakpoints")
        if list(self.breakpoints) != sorted(set(self.breakpoints)):
            raise ValueError("breakpoints must be strictly increasing")

    def _branch_index(self, q: Fraction) -> int:
        i = 0
        while i < len(self.breakpoints) and q >= self.breakpoints[i]:
            i += 1
        return i

    def continuity_defects(self) -> list[Fraction]:
        """Interior breakpoints where the adjacent branch formulas disagree."""
        bad = []
        for i, b in enumerate(self.breakpoints):
            left = self.branches[i].at(Scalar(b))
            right = self.branches[i + 1].at(Scalar(b))
            if left != right:
                bad.append(b)
        return bad

    def __call__(self, x: Scalar) -> Scalar:
        i, j = self._branch_index(x.lo), self._branch_index(x.hi)
        if i == j:
            return self.branches[i].at(x)
        # the enclosure straddles breakpoints: take the hull over the pieces
        defects = set(self.continuity_defects())
        straddled = self.breakpoints[i:j]
        if any(b in defects for b in straddled):
            raise AmbiguityError(f"{x} straddles a discontinuity at {straddled}; raise precision")
        return self.image(x.lo, x.hi)

    def image(self, lo: Fraction, hi: Fraction) -> Scalar:
        """Enclosure of the image of the closed interval [lo, hi]."""
        i, j = self._branch_index(lo), self._branch_index(hi)
        cuts = [lo, *self.breakpoints[i:j], hi]
        out = None
        for k in range(j - i + 1):
            piece = self.branches[i + k].image(Scalar(cuts[k], cuts[k + 1]))
            out = piece if out is None else out.hull(piece)
        return out

    def describe(self) -> list[tuple[str, str]]:
        edges = [Fraction(0), *self.breakpoints, Fraction(1)]
        rows = []
        for k, br in enumerate(self.branches):
            close = "]" if k == len(self.branches) - 1 else ")"
            rows.append((f"[{format_fraction(edges[k])},{format_fraction(edges[k + 1])}{close}", br.formula()))
        return rows


# ---------------------------------------------------------------------------
# symbolic maps


@dataclass(frozen=True)
class ShiftMap:
    power: int

    def __call__(self, x: SymbolicPoint) -> SymbolicPoint:
        return x.shift(self.power)

    def formula(self):
        return f"sigma^{self.power}"


@dataclass(frozen=True)
class ConstantPoint:
    point: SymbolicPoint

    def __call__(self, x: SymbolicPoint) -> SymbolicPoint:
        return self.point

    def formula(self):
        return f"const {self.point}"


@dataclass(frozen=True)
class FirstSymbolSwitch:
    """Constant map chosen by the first symbol of the input."""

    cases: tuple  # ((symbol, point), ...)
    default: SymbolicPoint

    def __call__(self, x: SymbolicPoint) -> SymbolicPoint:
        head = x[0]
        for sym, pt in self.cases:
            if sym == head:
                return pt
        return self.default

    def formula(self):
        cases = ", ".join(f"{pt} if x in [{sym}]" for sym, pt in self.cases)
        return f"{cases}, {self.default} otherwise"


# ---------------------------------------------------------------------------
# spaces and systems


@dataclass(frozen=True)
class IntervalSpace:
    """[lo, hi] with the Euclidean metric."""

    lo: Fraction = Fraction(0)
    hi: Fraction = Fraction(1)

    @property
    def diameter(self) -> Fraction:
        return self.hi - self.lo

    def contains(self, x) -> bool:
        return isinstance(x, Scalar) and self.lo <= x.lo and x.hi <= self.hi

    def distance(self, x: Scalar, y: Scalar) -> Scalar:
        d = x - y
        if d.lo >= 0:
            return d
        if d.hi <= 0:
            return -d
        return Scalar(0, max(-d.lo, d.hi))

    def __str__(self):
        return f"[{format_fraction(self.lo)},{format_fraction(self.hi)}]"


@dataclass(frozen=True)
class SymbolicSpace:
    """One-sided shift space over ``alphabet`` with metric 1/(i+1)."""

    alphabet: str

    @property
    def diameter(self) -> Fraction:
        return Fraction(1)

    def contains(self, x) -> bool:
        return isinstance(x, SymbolicPoint) and set(x.prefix + x.cycle) <= set(self.alphabet)

    def distance(self, x: SymbolicPoint, y: SymbolicPoint) -> Scalar:
        return Scalar(x.distance(y))

    def __str__(self):
        return f"{{{','.join(self.alphabet)}}}^N0"


Space = Union[IntervalSpace, SymbolicSpace]


@dataclass(frozen=True)
class ControlSystem:
    """Discrete-time system ``x_{k+1} = F(x_k, u_k)`` over a finite alphabet."""

    name: str
    space: Space
    maps: Mapping = field(hash=False)

    @property
    def alphabet(self) -> tuple:
        return tuple(sorted(self.maps))

    def step(self, x: StatePoint, u) -> StatePoint:
        if not self.space.contains(x):
            raise OutOfSpaceError(f"{x} is not in {self.space}")
        try:
            f = self.maps[u]
        except KeyError:
            raise ValueError(f"control symbol {u!r} not in {self.alphabet}") from None
        y = f(x)
        if not self.space.contains(y):
            raise OutOfSpaceError(f"F_{u}({x}) = {y} left {self.space}")
        return y

    def run(self, x: StatePoint, word: Iterable) -> StatePoint:
        for u in word:
            x = self.step(x, u)
        return x

    def trajectory(self, x: StatePoint, schedule, n: int) -> list:
        """``[φ(0,x,ω), …, φ(n,x,ω)]``."""
        if n < 0:
            raise ValueError("horizon must be nonnegative")
        if not isinstance(schedule, ControlSchedule):
            schedule = ControlSchedule.word(schedule)
        out = [x]
        for k in range(n):
            x = self.step(x, schedule[k])
            out.append(x)
        return out

    def point(self, value) -> StatePoint:
        """Coerce user input ('5/16', Fraction, 'ab(cde)') into a state."""
        if isinstance(value, (Scalar, SymbolicPoint)):
            p = value
        elif isinstance(self.space, SymbolicSpace):
            p = SymbolicPoint.parse(value)
        else:
            p = Scalar(as_fraction(value))
        if not self.space.contains(p):
            raise OutOfSpaceError(f"{p} is not in {self.space}")
        return p


def trajectory(sys: ControlSystem, x: StatePoint, schedule, n: int) -> list:
    return sys.trajectory(x, schedule, n)


def step(sys: ControlSystem, x: StatePoint, u) -> StatePoint:
    return sys.step(x, u)

