"""The five example systems, their target sets and claimed classifications."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction as Fr
from itertools import product

from .core import (
    Affine,
    Constant,
    ConstantPoint,
    ControlSchedule,
    ControlSystem,
    CubeRoot,
    FirstSymbolSwitch,
    IntervalSpace,
    PiecewiseMap,
    Quadratic,
    ShiftMap,
    SymbolicPoint,
    SymbolicSpace,
    splice,
)
from .metrics import BlockLanguage, IntervalUnion, TargetSet


class ExampleId(str, enum.Enum):
    A1 = "A1_FEI_not_EI"
    A2 = "A2_EIM_not_EI"
    A3 = "A3_FEIM_not_FEI"
    A4 = "A4_FMEI_not_FEIM_MEI"
    A5 = "A5_FMEI_not_MEI"

    @classmethod
    def lookup(cls, name: str) -> "ExampleId":
        key = name.strip().upper()
        for member in cls:
            if key in (member.name, member.value.upper()):
                return member
        raise KeyError(f"unknown example {name!r}; choose from {[m.name for m in cls]}")


# ---------------------------------------------------------------------------
# symbolic machinery for A3

BLOCKS = {"A": "ab", "B": "cde"}
ALPHABET = "abcde"
AB_TAIL = SymbolicPoint("", "ab")
B_INF = SymbolicPoint("", "b")


def embed(blocks, tail=AB_TAIL) -> SymbolicPoint:
    """Concatenate block names (e.g. 'ABA') and append ``tail``."""
    word = "".join(BLOCKS[b] for b in blocks)
    return SymbolicPoint(word + tail.prefix, tail.cycle)


def embed_periodic(prefix_blocks, cycle_blocks) -> SymbolicPoint:
    return SymbolicPoint("".join(BLOCKS[b] for b in prefix_blocks), "".join(BLOCKS[b] for b in cycle_blocks))


def block_parse(word: str):
    """Greedy parse of a finite word into block names.

    Returns ``(blocks, failure)`` where ``blocks`` lists the completed blocks
    and ``failure`` is the first index at which the word stops being a prefix
    of a block concatenation, or None when the whole word is such a prefix.
    """
    lang = BlockLanguage(tuple(BLOCKS.values()))
    names = {v: k for k, v in BLOCKS.items()}
    state = None
    blocks = []
    for k, sym in enumerate(word):
        ok, new = lang.advance(state, sym)
        if not ok:
            return blocks, k
        if new is None:
            i = state[0] if state is not None else lang._start(sym)
            blocks.append(names[lang.blocks[i]])
        state = new
    return blocks, None


def decode_blocks(x: SymbolicPoint, count: int) -> list[str]:
    """First ``count`` block names of a point of the block language."""
    blocks, failure = block_parse(x.take(3 * count + 3))
    if len(blocks) < count:
        raise ValueError(f"{x} does not start with {count} blocks")
    return blocks[:count]


def dist_to_block_language(x: SymbolicPoint) -> Fr:
    return BlockLanguage(tuple(BLOCKS.values())).distance(x).lo


def shift(x: SymbolicPoint, p: int) -> SymbolicPoint:
    return x.shift(p)


def block_grid_points(depth: int) -> list[SymbolicPoint]:
    """Embeddings of all block words of length ≤ depth, completed with (ab)^∞."""
    seen = set()
    pts = []
    for n in range(depth + 1):
        for word in product("AB", repeat=n):
            p = embed(word)
            if p not in seen:
                seen.add(p)
                pts.append(p)
    return sorted(pts, key=str)


@dataclass(frozen=True)
class BlockDecodeSchedules:
    """Point-dependent candidates: decode k blocks, jump off to b^∞, return, then 0^∞."""

    max_blocks: int = 6

    def __call__(self, x) -> list[ControlSchedule]:
        out = []
        if not isinstance(x, SymbolicPoint):
            return out
        for k in range(1, self.max_blocks + 1):
            try:
                names = decode_blocks(x, k)
            except ValueError:
                break
            word = [0 if b == "A" else 1 for b in names]
            out.append(splice(word + [2, 3], ControlSchedule.constant(0)))
            out.append(splice(word, ControlSchedule.constant(0)))
        return out


def block_decoding_word(x: SymbolicPoint, count: int) -> tuple:
    return tuple(0 if b == "A" else 1 for b in decode_blocks(x, count))


# ---------------------------------------------------------------------------
# builders


def _pw(breaks, branches) -> PiecewiseMap:
    return PiecewiseMap(tuple(Fr(b) for b in breaks), tuple(branches))


def _a1_f0():
    return _pw(["3/8", "1/2"], [Affine(Fr(1), Fr(0), Fr(0)), Affine(Fr(5), Fr(1, 2), Fr(1)), Constant(Fr(1))])


def _a1_f1():
    return _pw(
        ["1/4", "3/8", "1/2", "5/8"],
        [
            Constant(Fr(1)),
            Affine(Fr(-4), Fr(1, 4), Fr(1)),
            Constant(Fr(1, 2)),
            Affine(Fr(4), Fr(5, 8), Fr(1)),
            Constant(Fr(1)),
        ],
    )


def build_a1() -> ControlSystem:
    return ControlSystem("A1", IntervalSpace(), {0: _a1_f0(), 1: _a1_f1()})


def build_a2() -> ControlSystem:
    f0 = _pw(
        ["3/8", "1/2", "5/8", "3/4"],
        [
            Affine(Fr(1), Fr(0), Fr(0)),
            Affine(Fr(5), Fr(1, 2), Fr(1)),
            Constant(Fr(1)),
            Affine(Fr(-5), Fr(3, 4), Fr(3, 8)),
            Constant(Fr(3, 8)),
        ],
    )
    f2 = _pw([], [Constant(Fr(1))])
    return ControlSystem("A2", IntervalSpace(), {0: f0, 1: _a1_f1(), 2: f2})


def build_a3() -> ControlSystem:
    f3 = FirstSymbolSwitch(cases=(("b", AB_TAIL),), default=B_INF)
    return ControlSystem(
        "A3",
        SymbolicSpace(ALPHABET),
        {0: ShiftMap(2), 1: ShiftMap(3), 2: ConstantPoint(B_INF), 3: f3},
    )


def build_a4() -> ControlSystem:
    f0 = _pw(["1/4", "1/2"], [Constant(Fr(1, 2)), Affine(Fr(2), Fr(1, 2), Fr(1)), Constant(Fr(1))])
    f1 = _pw(["1/4"], [Quadratic(Fr(12), Fr(1, 4), Fr(1, 4)), Quadratic(Fr(1), Fr(1, 4), Fr(1, 4))])
    return ControlSystem("A4", IntervalSpace(), {0: f0, 1: f1})


def build_a5() -> ControlSystem:
    f0 = _pw(
        ["1/4", "3/8"],
        [Constant(Fr(1, 8)), Affine(Fr(2), Fr(0), Fr(-3, 8)), Quadratic(Fr(1), Fr(3, 8), Fr(3, 8))],
    )
    f1 = _pw(
        ["1/16", "1/8", "1/4", "1/2"],
        [
            Constant(Fr(0)),
            Affine(Fr(2), Fr(0), Fr(-1, 8)),
            CubeRoot(Fr(1, 4), Fr(1, 8), Fr(1, 8)),
            Affine(Fr(-1), Fr(0), Fr(1, 2)),
            Constant(Fr(0)),
        ],
    )
    return ControlSystem("A5", IntervalSpace(), {0: f0, 1: f1})


def build_repeller() -> tuple[ControlSystem, IntervalUnion]:
    """One control, F(x) = clip(4(x - 1/2) + 1/2); every neighbourhood of Q = [7/16, 9/16] is pushed out."""
    f = _pw(["3/8", "5/8"], [Constant(Fr(0)), Affine(Fr(4), Fr(1, 2), Fr(1, 2)), Constant(Fr(1))])
    return ControlSystem("repeller", IntervalSpace(), {0: f}), IntervalUnion.single(Fr(7, 16), Fr(9, 16))


# ---------------------------------------------------------------------------
# claims


@dataclass(frozen=True)
class Claim:
    notion: str
    expected: str  # "Certified" | "Refuted"
    where: str  # "set" or a point, e.g. "3/8"
    note: str


CLAIMS = {
    ExampleId.A1: (
        Claim("FEI", "Certified", "set", "two constant schedules span Q"),
        Claim("EI", "Refuted", "3/8", "3/8 is the only non-equi-invariant point"),
        Claim("FEIM", "Certified", "set", "bounded complexity in the mean"),
        Claim("EIM", "Refuted", "3/8", "no single schedule keeps both sides of 3/8 near Q"),
    ),
    ExampleId.A2: (
        Claim("EIM", "Certified", "set", "one late excursion keeps every running mean small"),
        Claim("EI", "Refuted", "3/8", "no single schedule avoids the excursion at 3/8"),
    ),
    ExampleId.A3: (
        Claim("EIM", "Certified", "set", "one decoding schedule per point, with rare detours"),
        Claim("FEIM", "Certified", "set", "implied by EIM"),
        Claim("FEI", "Refuted", "set", "spanning families grow with the horizon"),
    ),
    ExampleId.A4: (
        Claim("MEI", "Certified", "set", "1^inf drives every point back to Q in the mean"),
        Claim("FMEI", "Certified", "set", "implied by MEI"),
        Claim("FEIM", "Refuted", "0", "both first controls push 0 far from Q"),
    ),
    ExampleId.A5: (
        Claim("FMEI", "Certified", "set", "the family {0^inf, 1^inf} suffices"),
        Claim("MEI", "Refuted", "3/8", "no single schedule keeps every neighbour of 3/8 near Q"),
    ),
}


def claims_matrix(eid: ExampleId) -> dict[tuple[str, str], str]:
    """``{(notion, where): expected}``; A4's EIM entry is left unlabeled on purpose."""
    return {(c.notion, c.where): c.expected for c in CLAIMS[ExampleId(eid)]}


@dataclass
class Example:
    id: ExampleId
    system: ControlSystem
    target: TargetSet
    claims: dict
    distinguished: tuple = field(default_factory=tuple)


_BUILDERS = {
    ExampleId.A1: (build_a1, lambda: IntervalUnion.single(Fr(1, 4), Fr(1, 2)), ("3/8",)),
    ExampleId.A2: (build_a2, lambda: IntervalUnion.single(Fr(1, 4), Fr(1, 2)), ("3/8",)),
    ExampleId.A3: (build_a3, lambda: BlockLanguage(tuple(BLOCKS.values())), ()),
    ExampleId.A4: (build_a4, lambda: IntervalUnion.single(Fr(0), Fr(1, 4)), ("0",)),
    ExampleId.A5: (build_a5, lambda: IntervalUnion.single(Fr(1, 4), Fr(1, 2)), ("3/8",)),
}


def build_example(eid) -> Example:
    eid = ExampleId.lookup(eid) if isinstance(eid, str) and not isinstance(eid, ExampleId) else ExampleId(eid)
    build, target, points = _BUILDERS[eid]
    return Example(eid, build(), target(), claims_matrix(eid), points)


def a2_eim_construction(eps) -> tuple[int, Fr, ControlSchedule]:
    """(N, δ, 0^N·2·0^∞) for the mean-invariance construction at 3/8.

    N is the least integer with 1/(2N) < eps; δ = min(δ', eps) where
    F_0^N(3/8 + δ') = 1/2, i.e. δ' = 5^-N / 8.
    """
    eps = Fr(eps)
    N = 1
    while Fr(1, 2 * N) >= eps:
        N += 1
    delta = min(Fr(1, 8 * 5**N), eps)
    return N, delta, splice([0] * N + [2], ControlSchedule.constant(0))


def dump_example(eid) -> str:
    ex = build_example(eid)
    lines = [f"example {ex.id.name} ({ex.id.value})", f"state space: {ex.system.space}", f"target Q: {ex.target}"]
    for u in ex.system.alphabet:
        f = ex.system.maps[u]
        if isinstance(f, PiecewiseMap):
            lines.append(f"F_{u}:")
            for dom, formula in f.describe():
                lines.append(f"  {dom:>14}  {formula}")
            lines.append(f"  breakpoints: {', '.join(str(b) for b in f.breakpoints) or '-'}")
        else:
            lines.append(f"F_{u}: {f.formula()}")
    lines.append("claims:")
    for c in CLAIMS[ex.id]:
        lines.append(f"  {c.notion:<5} {c.expected:<9} @ {c.where:<4}  ({c.note})")
    return "\n".join(lines)
