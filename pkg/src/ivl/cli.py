"""Command-line entry point: simulate | span | classify | controlset | example | audit."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from fractions import Fraction
from math import ceil
from pathlib import Path

from . import corpus
from .classify import (
    CERTIFIED,
    REFUTED,
    Budget,
    Notion,
    VerdictStore,
    classify_set,
    default_deltas,
    format_point,
    implication_audit,
    theorem_audit,
)
from .control_sets import (
    approx_reachability_check,
    controlled_invariance_check,
    dichotomy_probe,
    no_return_check,
    reachable_set,
    replay_reach_witnesses,
)
from .core import ControlSchedule, format_fraction, format_schedule, parse_schedule
from .examples import CLAIMS, ExampleId, a2_eim_construction, build_example, dump_example
from .metrics import dist_to_set
from .spanning import bounded_complexity_verdict, complexity_profile, entropy_estimate
from .store import RunConfig, csv_text, load_config, read_kernel_cache, write_kernel_cache, write_witnesses

log = logging.getLogger("ivl")

SYMBOLIC_DEFAULT_DEPTH = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _fraction_list(text: str) -> list:
    return [Fraction(t.strip()) for t in text.split(",") if t.strip()]


def _notion_list(text: str) -> list:
    out = []
    for t in text.split(","):
        t = t.strip()
        if not t:
            continue
        try:
            out.append(Notion.parse(t).value)
        except (KeyError, ValueError):
            raise argparse.ArgumentTypeError(f"unknown notion {t!r}; choose from {[n.value for n in Notion]}") from None
    return out


def build_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "example": getattr(args, "example", None),
        "epsilons": getattr(args, "epsilon", None),
        "nmax": getattr(args, "nmax", None),
        "grid": getattr(args, "grid", None),
        "out": getattr(args, "out", None),
        "mode": getattr(args, "mode", None),
        "jobs": getattr(args, "jobs", None),
        "notions": getattr(args, "notion", None),
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    cfg.validate()
    return cfg


def _example(cfg: RunConfig):
    try:
        return build_example(cfg.example)
    except KeyError as exc:
        raise UsageError(str(exc)) from None


def _grid(ex, cfg: RunConfig):
    if ex.id is ExampleId.A3:
        depth = int(cfg.grid) if cfg.grid >= 1 and cfg.grid.denominator == 1 else SYMBOLIC_DEFAULT_DEPTH
        return corpus.grid_for(ex, depth)
    if cfg.grid >= 1:
        raise UsageError("interval grid step must be below 1")
    return corpus.grid_for(ex, cfg.grid)


def _budget(cfg: RunConfig, ex, eps) -> Budget:
    o = corpus.example_budget_overrides(ex.id, eps)
    deltas = tuple(cfg.deltas) if cfg.deltas else default_deltas()
    deltas = tuple(sorted(set(deltas) | set(o.get("extra_deltas", ())), reverse=True))
    return Budget(
        deltas=deltas,
        horizon=cfg.horizon,
        h=cfg.h,
        burn_in=cfg.burn_in,
        window=cfg.window,
        density_horizon=cfg.density_horizon,
        extra=o.get("extra"),
        max_family=cfg.max_family,
        refute_delta=cfg.refute_delta,
        refute_horizon=cfg.refute_horizon,
        max_nodes=cfg.max_nodes,
    )


def _out_dir(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cache_dir(cfg: RunConfig) -> Path:
    p = Path(os.environ.get("IVL_CACHE_DIR") or Path(cfg.out) / "cache")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(path: Path, text: str) -> None:
    # newline="" keeps the CSV line endings byte-exact
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# simulate


def _num_cells(s) -> tuple[str, str]:
    """(value, error) cells: exact values as p/q with error 0, enclosures as decimals."""
    if s.is_exact:
        return format_fraction(s.lo), "0"
    return f"{float(s.value):.17g}", f"{float(s.error_bound):.3g}"


def simulate_rows(ex, x, schedule: ControlSchedule, n: int) -> list[list[str]]:
    traj = ex.system.trajectory(x, schedule, n)
    rows = []
    total = None
    for k, y in enumerate(traj):
        d = dist_to_set(y, ex.target)
        total = d if total is None else total + d
        mean = total * Fraction(1, k + 1)
        if hasattr(y, "is_exact"):
            state, state_err = _num_cells(y)
        else:
            state, state_err = str(y), "0"
        dist, dist_err = _num_cells(d)
        m, m_err = _num_cells(mean)
        rows.append([str(k), state, dist, m, state_err, dist_err, m_err])
    return rows


SIMULATE_HEADER = ["k", "state", "dist_to_Q", "running_mean", "state_error", "dist_error", "mean_error"]


def cmd_simulate(cfg: RunConfig, x: str, schedule: str, n: int) -> str:
    ex = _example(cfg)
    if n < 0:
        raise UsageError("n must be nonnegative")
    pt = ex.system.point(x)
    omega = parse_schedule(schedule)
    if omega.is_finite and len(omega) < n:
        raise UsageError(f"finite schedule of length {len(omega)} is shorter than n={n}")
    text = csv_text(SIMULATE_HEADER, simulate_rows(ex, pt, omega, n))
    _write(_out_dir(cfg) / f"simulate_{ex.id.name}.csv", text)
    return text


# ---------------------------------------------------------------------------
# span


PROFILE_HEADER = ["n", "epsilon", "mode", "r", "tag"]


def cached_profile(cfg: RunConfig, ex, grid, eps, mode: str, nmax: int):
    key = cfg.digest("span", ex.id.name, format_fraction(Fraction(eps)), mode, nmax, grid.describe_resolution())
    path = cache_dir(cfg) / f"span_{ex.id.name}_{mode}_{key}.ivlk"
    hit = read_kernel_cache(path, key) if path.exists() else None
    if hit is not None:
        log.info("reusing cached profile %s", path)
        return hit[0], True
    profile = complexity_profile(ex.system, grid, eps, nmax, mode, max_nodes=cfg.max_nodes)
    write_kernel_cache(path, key, profile, [])
    return profile, False


def cmd_span(cfg: RunConfig) -> tuple[str, list[str]]:
    if cfg.mode not in ("plain", "mean"):
        raise UsageError("span needs --mode plain or mean")
    ex = _example(cfg)
    grid = _grid(ex, cfg)
    rows, report = [], []
    for eps in cfg.epsilons:
        profile, reused = cached_profile(cfg, ex, grid, eps, cfg.mode, cfg.nmax)
        rows += profile.to_csv_rows()
        verdict = bounded_complexity_verdict(profile)
        ent = entropy_estimate(profile)
        report.append(
            f"{ex.id.name} {cfg.mode} eps={format_fraction(eps)} grid={grid.describe_resolution()}: "
            f"r = {[e.r for e in profile.entries]} -> {verdict}; entropy slope {ent.slope:.6g}"
            + (" (cached)" if reused else "")
        )
        last = profile.entries[-1] if profile.entries else None
        if last is not None:
            report.append(f"  n={last.n} cover ({last.tag}): " + ", ".join("".join(str(u) for u in w) for w in last.words))
    text = csv_text(PROFILE_HEADER, rows)
    out = _out_dir(cfg)
    _write(out / f"span_{ex.id.name}_{cfg.mode}.csv", text)
    _write(out / f"span_{ex.id.name}_{cfg.mode}.txt", "\n".join(report) + "\n")
    return text, report


# ---------------------------------------------------------------------------
# classify


VERDICT_HEADER = ["notion", "epsilon", "point", "verdict", "delta", "family", "detail"]


def _verdict_rows(sets) -> list[list[str]]:
    rows = []
    for sv in sets:
        for x, v in sv.points.items():
            if v.certificate is not None:
                c = v.certificate
                rows.append([sv.notion.value, format_fraction(sv.eps), format_point(x), v.kind, format_fraction(c.delta), " | ".join(format_schedule(w) for w in c.family), ""])
            elif v.refutation is not None:
                r = v.refutation
                rows.append([sv.notion.value, format_fraction(sv.eps), format_point(x), v.kind, format_fraction(r.delta0), "", f"{r.kind}, N={r.horizon}"])
            else:
                rows.append([sv.notion.value, format_fraction(sv.eps), format_point(x), v.kind, "", "", v.report or ""])
    return rows


def _preset_run(cfg: RunConfig, ex):
    store = VerdictStore()
    run = corpus.run_example(ex.id, True, cfg.jobs, store)
    return list(run.sets.values()), run.lines(), store, run.theorems


def _config_run(cfg: RunConfig, ex):
    grid = _grid(ex, cfg)
    store = VerdictStore()
    sets, lines, theorems = [], [f"== {ex.id.name} ({ex.id.value}) grid={grid.describe_resolution()}"], []
    notions = [Notion.parse(n) for n in cfg.notions]
    for eps in cfg.epsilons:
        budget = _budget(cfg, ex, eps)
        by_notion = {}
        for notion in notions:
            sv = classify_set(ex.system, ex.target, grid, notion, eps, budget, cfg.jobs)
            by_notion[notion] = sv
            store.add(ex.id.name, sv)
            sets.append(sv)
            lines.append("  " + sv.summary())
        if Notion.FMEI in by_notion and Notion.FMLS not in by_notion:
            sv = classify_set(ex.system, ex.target, grid, Notion.FMLS, eps, budget, cfg.jobs)
            by_notion[Notion.FMLS] = sv
            sets.append(sv)
            lines.append("  " + sv.summary())
        plain = mean = None
        if Notion.FEI in by_notion:
            plain = bounded_complexity_verdict(cached_profile(cfg, ex, grid, eps, "plain", cfg.nmax)[0])
        if Notion.FEIM in by_notion:
            mean = bounded_complexity_verdict(cached_profile(cfg, ex, grid, eps, "mean", cfg.nmax)[0])
        checks = theorem_audit(by_notion.get(Notion.FEI), plain, by_notion.get(Notion.FEIM), mean, by_notion.get(Notion.FMEI), by_notion.get(Notion.FMLS))
        theorems += checks
        lines += [f"  theorem eps={format_fraction(eps)} {t}" for t in checks]
        for notion, where, exp, obs, ok in corpus.check_claims(ex, by_notion):
            if obs != "not run":
                lines.append(f"  claim {notion:<5} {exp:<9} @ {where:<4}: observed {obs} {'ok' if ok else 'MISMATCH'}")
    return sets, lines, store, theorems


def _explicit(cfg_args) -> bool:
    return any(getattr(cfg_args, k, None) is not None for k in ("config", "epsilon", "notion", "grid"))


def cmd_classify(cfg: RunConfig, use_preset: bool) -> tuple[bool, list[str]]:
    ex = _example(cfg)
    sets, lines, store, theorems = _preset_run(cfg, ex) if use_preset else _config_run(cfg, ex)
    audit = implication_audit(store)
    consistent = audit.consistent and all(t.consistent for t in theorems)
    lines.append("== implication audit")
    lines += ["  " + s for s in audit.lines()]
    lines.append(f"== overall: {'consistent' if consistent else 'INCONSISTENT'}")
    out = _out_dir(cfg)
    verdicts = [v for sv in sets for v in sv.points.values()]
    n = write_witnesses(out / f"witnesses_{ex.id.name}.ivlw", verdicts, {"example": ex.id.name, "config": cfg.digest()})
    lines.append(f"witnesses written: {n}")
    _write(out / f"classify_{ex.id.name}.txt", "\n".join(lines) + "\n")
    _write(out / f"classify_{ex.id.name}.csv", csv_text(VERDICT_HEADER, _verdict_rows(sets)))
    return consistent, lines


# ---------------------------------------------------------------------------
# controlset


def _no_return_samples(ex, grid, n: int) -> list:
    samples = [(p, ControlSchedule.constant(u), n) for p in grid.points for u in ex.system.alphabet]
    if ex.id is ExampleId.A2:
        N, _, omega = a2_eim_construction(Fraction(1, 100))
        samples.append((ex.system.point("25/64"), parse_schedule("0^4 2 (0)"), 12))
        samples.append((ex.system.point("3/8"), omega, N + 4))
    return samples


def cmd_controlset(cfg: RunConfig, x: str | None, n: int | None, ks: list | None) -> list[str]:
    ex = _example(cfg)
    grid = _grid(ex, cfg)
    n = cfg.nmax if n is None else n
    eps = cfg.epsilons[0]
    lines = [f"== {ex.id.name} control-set checks, grid={grid.describe_resolution()}, eps={format_fraction(eps)}"]
    src = ex.system.point(x) if x is not None else grid.points[len(grid.points) // 2]
    R = reachable_set(ex.system, src, n, min(Fraction(1, 1024), eps / 4))
    lines.append(f"reach set from {format_point(src)} within {n} steps: {len(R.entries)} cells, witnesses replay {replay_reach_witnesses(ex.system, R)}")
    lines += controlled_invariance_check(ex.system, ex.target, grid, n, eps).lines()
    lines += approx_reachability_check(ex.system, ex.target, grid, eps, n).lines()
    lines += no_return_check(ex.system, ex.target, _no_return_samples(ex, grid, n), eps).lines()
    mode = "limsup" if cfg.mode == "limsup" else "mean"
    ks = ks or sorted({ceil(1 / e) for e in cfg.epsilons})
    d = dichotomy_probe(ex.system, ex.target, grid, ks, _budget(cfg, ex, Fraction(1, max(ks))), mode)
    lines += d.lines()
    out = _out_dir(cfg)
    _write(out / f"controlset_{ex.id.name}.txt", "\n".join(lines) + "\n")
    _write(out / f"reach_{ex.id.name}.csv", R.to_csv().replace("\n", "\r\n"))
    return lines


# ---------------------------------------------------------------------------
# example / audit


def cmd_example(action: str, eid: str | None) -> str:
    if action == "list":
        lines = []
        for e in ExampleId:
            claims = ", ".join(f"{c.notion} {c.expected}@{c.where}" for c in CLAIMS[e])
            lines.append(f"{e.name}  {e.value:<22} {claims}")
        return "\n".join(lines)
    if eid is None:
        raise UsageError("example dump needs an id")
    try:
        return dump_example(eid)
    except KeyError as exc:
        raise UsageError(str(exc)) from None


def cmd_audit(cfg: RunConfig, examples=None) -> tuple[bool, list[str]]:
    ids = [ExampleId.lookup(e) for e in examples] if examples else list(ExampleId)
    report = corpus.run_corpus(ids, True, cfg.jobs)
    lines = report.lines()
    _write(_out_dir(cfg) / "audit.txt", "\n".join(lines) + "\n")
    return report.consistent, lines


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file with an '# ivl-config v1' header")
    p.add_argument("--example", help="example id (A1..A5)")
    p.add_argument("--epsilon", type=_fraction_list, help="comma-separated tolerances, e.g. 1/10,1/20")
    p.add_argument("--nmax", type=int, help="largest horizon")
    p.add_argument("--grid", type=Fraction, help="grid step (interval) or block depth (symbolic)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=["plain", "mean", "limsup"])
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivl", description="Invariance complexity and equi-invariance for finite-alphabet control systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="trajectory CSV with distances and running means")
    _common(p)
    p.add_argument("--x", required=True, help="initial state, e.g. 5/16 or 'ab(cde)'")
    p.add_argument("--schedule", default="(0)", help="control schedule, e.g. '0^4 2 (0)'")
    p.add_argument("--n", type=int, default=None, help="number of steps (default nmax)")

    p = sub.add_parser("span", help="complexity profile CSV and kernel cache")
    _common(p)

    p = sub.add_parser("classify", help="certificates and refutations for the equi-invariance notions")
    _common(p)
    p.add_argument("--notion", type=_notion_list, help="comma-separated notions (EI,EIM,MEI,FEI,FEIM,FMEI,FMLS)")

    p = sub.add_parser("controlset", help="reachability, no-return and dichotomy reports")
    _common(p)
    p.add_argument("--x", help="source state for the reach set")
    p.add_argument("--n", type=int, help="reach horizon (default nmax)")
    p.add_argument("--k", type=lambda s: [int(t) for t in s.split(",") if t.strip()], help="dichotomy levels k, e.g. 4,8")

    p = sub.add_parser("example", help="list or dump the built-in examples")
    p.add_argument("action", choices=["list", "dump"])
    p.add_argument("id", nargs="?")

    p = sub.add_parser("audit", help="classify every example and run the implication and theorem audits")
    _common(p)
    p.add_argument("ids", nargs="*", help="restrict to these examples")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "example":
            print(cmd_example(args.action, args.id))
            return 0
        cfg = build_config(args)
        if args.command == "simulate":
            sys.stdout.write(cmd_simulate(cfg, args.x, args.schedule, cfg.nmax if args.n is None else args.n))
            return 0
        if args.command == "span":
            _, report = cmd_span(cfg)
            print("\n".join(report))
            return 0
        if args.command == "classify":
            ok, lines = cmd_classify(cfg, use_preset=not _explicit(args))
            print("\n".join(lines))
            return 0 if ok else 1
        if args.command == "controlset":
            print("\n".join(cmd_controlset(cfg, args.x, args.n, args.k)))
            return 0
        if args.command == "audit":
            ok, lines = cmd_audit(cfg, args.ids)
            print("\n".join(lines))
            return 0 if ok else 1
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    return 2


if __name__ == "__main__":
    sys.exit(main())
