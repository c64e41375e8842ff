"""Binary caches (IVLK1 tables, IVLW1 witnesses), CSV output and run configuration files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
import zlib
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .classify import Certificate, Leaf, Notion, Refutation, Verdict
from .core import ControlSchedule, Scalar, SymbolicPoint, format_fraction, parse_schedule
from .spanning import ComplexityProfile, KernelTable, ProfileEntry

KERNEL_MAGIC = b"IVLK1"
WITNESS_MAGIC = b"IVLW1"
CONFIG_HEADER = "# ivl-config v1"


class CorruptFile(ValueError):
    pass


# ---------------------------------------------------------------------------
# framing: magic, then sections of (u32 LE length, JSON payload), then CRC32 of everything before it


def pack(magic: bytes, sections: list) -> bytes:
    body = bytearray(magic)
    for sec in sections:
        payload = json.dumps(sec, sort_keys=True, separators=(",", ":")).encode()
        body += struct.pack("<I", len(payload)) + payload
    return bytes(body) + struct.pack("<I", zlib.crc32(body))


def unpack(magic: bytes, data: bytes) -> list:
    if len(data) < len(magic) + 4 or not data.startswith(magic):
        raise CorruptFile("bad magic")
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) != crc:
        raise CorruptFile("checksum mismatch")
    pos = len(magic)
    out = []
    while pos < len(body):
        if pos + 4 > len(body):
            raise CorruptFile("truncated section header")
        (n,) = struct.unpack("<I", body[pos : pos + 4])
        pos += 4
        if pos + n > len(body):
            raise CorruptFile("truncated section")
        try:
            out.append(json.loads(body[pos : pos + n]))
        except ValueError as exc:
            raise CorruptFile(str(exc)) from None
        pos += n
    return out


# ---------------------------------------------------------------------------
# value encoding


def enc_fraction(q: Fraction) -> str:
    return format_fraction(Fraction(q))


def dec_fraction(s: str) -> Fraction:
    return Fraction(s)


def enc_scalar(x: Scalar) -> list:
    return [enc_fraction(x.lo), enc_fraction(x.hi)]


def dec_scalar(v) -> Scalar:
    return Scalar(Fraction(v[0]), Fraction(v[1]))


def enc_point(x) -> dict:
    if isinstance(x, SymbolicPoint):
        return {"sym": [x.prefix, x.cycle]}
    return {"x": enc_scalar(x)}


def dec_point(d):
    if "sym" in d:
        return SymbolicPoint(*d["sym"])
    return dec_scalar(d["x"])


def enc_schedule(s: ControlSchedule) -> list:
    return [list(s.prefix), list(s.cycle)]


def dec_schedule(v) -> ControlSchedule:
    return ControlSchedule(tuple(v[0]), tuple(v[1]))


# ---------------------------------------------------------------------------
# kernel tables and profiles


def table_to_dict(t: KernelTable) -> dict:
    words = sorted(t.rows)
    return {
        "horizon": t.horizon,
        "eps": enc_fraction(t.eps),
        "mode": t.mode,
        "grid_size": t.grid_size,
        "rows": [[list(w), format(t.rows[w], "x"), t.multiplicity[w]] for w in words],
        "pruned": [list(w) for w in t.pruned],
        "complete": t.complete,
        "indeterminate": format(t.indeterminate, "x"),
    }


def table_from_dict(d: dict) -> KernelTable:
    rows, mult = {}, {}
    for w, mask, m in d["rows"]:
        rows[tuple(w)] = int(mask, 16)
        mult[tuple(w)] = m
    return KernelTable(
        d["horizon"], dec_fraction(d["eps"]), d["mode"], d["grid_size"], rows, mult,
        [tuple(w) for w in d["pruned"]], d["complete"], int(d["indeterminate"], 16),
    )


def profile_to_dict(p: ComplexityProfile) -> dict:
    return {
        "eps": enc_fraction(p.eps),
        "mode": p.mode,
        "resolution": p.resolution,
        "entries": [[e.n, e.r, e.tag, e.lower_bound, [list(w) for w in e.words]] for e in p.entries],
    }


def profile_from_dict(d: dict) -> ComplexityProfile:
    entries = [ProfileEntry(n, r, tag, lb, [tuple(w) for w in words]) for n, r, tag, lb, words in d["entries"]]
    return ComplexityProfile(dec_fraction(d["eps"]), d["mode"], entries, d["resolution"])


def write_kernel_cache(path, key: str, profile: ComplexityProfile, tables: list = ()) -> None:
    sections = [{"key": key}, profile_to_dict(profile)] + [table_to_dict(t) for t in tables]
    Path(path).write_bytes(pack(KERNEL_MAGIC, sections))


def read_kernel_cache(path, key: str) -> Optional[tuple]:
    """(profile, tables) if the file exists, is intact and matches ``key``; else None."""
    p = Path(path)
    if not p.exists():
        return None
    try:
        sections = unpack(KERNEL_MAGIC, p.read_bytes())
        if not sections or sections[0].get("key") != key:
            return None
        return profile_from_dict(sections[1]), [table_from_dict(s) for s in sections[2:]]
    except (CorruptFile, KeyError, IndexError, TypeError, ValueError):
        return None


# ---------------------------------------------------------------------------
# certificates and refutations


def cert_to_dict(c: Certificate) -> dict:
    return {
        "type": "certificate",
        "notion": c.notion.value,
        "x": enc_point(c.x),
        "eps": enc_fraction(c.eps),
        "delta": enc_fraction(c.delta),
        "family": [enc_schedule(s) for s in c.family],
        "params": c.params,
        "h": enc_fraction(c.h),
        "witnesses": [[enc_point(y), i, enc_scalar(v)] for y, i, v in c.witnesses],
    }


def cert_from_dict(d: dict) -> Certificate:
    return Certificate(
        Notion(d["notion"]), dec_point(d["x"]), dec_fraction(d["eps"]), dec_fraction(d["delta"]),
        [dec_schedule(s) for s in d["family"]], dict(d["params"]), dec_fraction(d["h"]),
        [(dec_point(y), i, dec_scalar(v)) for y, i, v in d["witnesses"]],
    )


def ref_to_dict(r: Refutation) -> dict:
    return {
        "type": "refutation",
        "notion": r.notion.value,
        "x": enc_point(r.x),
        "eps": enc_fraction(r.eps),
        "delta0": enc_fraction(r.delta0),
        "horizon": r.horizon,
        "h": enc_fraction(r.h),
        "kind": r.kind,
        "leaves": [[list(l.prefix), enc_point(l.y), l.index, enc_scalar(l.value), l.reason] for l in r.leaves],
        "point": None if r.point is None else enc_point(r.point),
        "traps": [[enc_fraction(a), enc_fraction(b), enc_fraction(c)] for a, b, c in r.traps],
        "family_bound": r.family_bound,
        "max_family": r.max_family,
        "ball": [enc_point(y) for y in r.ball],
        "alphabet_size": r.alphabet_size,
    }


def ref_from_dict(d: dict) -> Refutation:
    return Refutation(
        notion=Notion(d["notion"]), x=dec_point(d["x"]), eps=dec_fraction(d["eps"]), delta0=dec_fraction(d["delta0"]),
        horizon=d["horizon"], h=dec_fraction(d["h"]), kind=d["kind"],
        leaves=[Leaf(tuple(p), dec_point(y), m, dec_scalar(v), why) for p, y, m, v, why in d["leaves"]],
        point=None if d["point"] is None else dec_point(d["point"]),
        traps=[(Fraction(a), Fraction(b), Fraction(c)) for a, b, c in d["traps"]],
        family_bound=d["family_bound"], max_family=d["max_family"],
        ball=[dec_point(y) for y in d["ball"]], alphabet_size=d["alphabet_size"],
    )


def write_witnesses(path, verdicts: list, meta: Optional[dict] = None) -> int:
    """Write every certificate/refutation among ``verdicts``; returns how many were written."""
    sections = [meta or {}]
    for v in verdicts:
        if v.certificate is not None:
            sections.append(cert_to_dict(v.certificate))
        elif v.refutation is not None:
            sections.append(ref_to_dict(v.refutation))
    Path(path).write_bytes(pack(WITNESS_MAGIC, sections))
    return len(sections) - 1


def read_witnesses(path) -> tuple[dict, list]:
    sections = unpack(WITNESS_MAGIC, Path(path).read_bytes())
    items = [cert_from_dict(s) if s["type"] == "certificate" else ref_from_dict(s) for s in sections[1:]]
    return sections[0], items


# ---------------------------------------------------------------------------
# CSV


def csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")  # RFC 4180 line endings
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    example: str = "A1"
    epsilons: list = field(default_factory=lambda: [Fraction(1, 10)])
    deltas: list = field(default_factory=list)  # empty: default ladder
    nmax: int = 16
    grid: Fraction = Fraction(1, 64)  # mesh, or block depth for symbolic targets
    h: Fraction = Fraction(1, 1024)
    mode: str = "plain"
    notions: list = field(default_factory=lambda: ["EI", "EIM", "MEI", "FEI", "FEIM", "FMEI"])
    horizon: int = 64
    burn_in: int = 512
    window: int = 256
    density_horizon: int = 2048
    refute_delta: Fraction = Fraction(1, 256)
    refute_horizon: int = 16
    max_family: int = 4
    max_nodes: int = 200_000
    jobs: int = 1
    out: str = "ivl-out"
    seed: int = 0

    def validate(self) -> None:
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if any(d <= 0 for d in self.deltas) or self.h <= 0 or self.grid <= 0 or self.refute_delta <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.nmax, self.horizon, self.refute_horizon, self.window, self.density_horizon, self.jobs) < 1:
            raise ValueError("horizons, window and jobs must be at least 1")
        if self.mode not in ("plain", "mean", "limsup"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for n in self.notions:
            Notion.parse(n)

    def dumps(self) -> str:
        lines = [CONFIG_HEADER]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                text = ",".join(enc_fraction(x) if isinstance(x, Fraction) else str(x) for x in v)
            elif isinstance(v, Fraction):
                text = enc_fraction(v)
            else:
                text = str(v)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        lines = [ln.strip() for ln in text.splitlines()]
        if not lines or lines[0] != CONFIG_HEADER:
            raise ValueError(f"config must start with {CONFIG_HEADER!r}")
        cfg = cls()
        known = {f.name: f for f in fields(cls)}
        for ln in lines[1:]:
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise ValueError(f"malformed config line {ln!r}")
            key, _, val = (s.strip() for s in ln.partition("="))
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(key, getattr(cfg, key), val))
        cfg.validate()
        return cfg

    def digest(self, *extra) -> str:
        text = self.dumps() + "|".join(str(e) for e in extra)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_FRACTION_LISTS = {"epsilons", "deltas"}


def _coerce(key: str, current, text: str):
    if isinstance(current, list):
        items = [t.strip() for t in text.split(",") if t.strip()]
        return [Fraction(t) for t in items] if key in _FRACTION_LISTS else items
    if isinstance(current, int):
        return int(text)
    if isinstance(current, Fraction):
        return Fraction(text)
    return text


def load_config(path) -> RunConfig:
    return RunConfig.loads(Path(path).read_text())


__all__ = [
    "CorruptFile",
    "RunConfig",
    "csv_text",
    "load_config",
    "pack",
    "parse_schedule",
    "read_kernel_cache",
    "read_witnesses",
    "unpack",
    "write_kernel_cache",
    "write_witnesses",
]
