"""Command line entry point.

Every subcommand writes into ``--out``: a JSONL (or CSV) record file, a
``summary.json``, the fully resolved ``config.json`` and a ``manifest.json``.
Passing the resolved config back with ``--config`` reproduces the record
file byte for byte.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 a check
reported a failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import secrets
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import groups as grp
from .measures import DiscreteMeasure, MeasureFamily
from .spaces import Sphere2, isometry_from_json, space_from_json
from .transport import TransportError, w1_exact

OK, CONFIG_ERROR, RUNTIME_ERROR, CHECK_FAILED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# files


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise ex.ConfigError([f"cannot read {path}: {e.strerror}"]) from None
    except json.JSONDecodeError as e:
        raise ex.ConfigError([f"{path}: invalid JSON ({e})"]) from None


def validate_config(path) -> ex.WalkConfig:
    """Schema-check a walk config file; every problem is listed in the raised ConfigError."""
    return ex.config_from_json(load_json(path))


def resolve_seed(flag, cfg: dict) -> int:
    if flag is not None:
        return int(flag)
    if cfg.get("seed") is not None:
        return int(cfg["seed"])
    return secrets.randbits(63)


# ---------------------------------------------------------------------------
# subcommands; each returns (records, summary, resolved config, status)


def _walk_config(args, raw: dict) -> ex.WalkConfig:
    raw = dict(raw)
    raw["seed"] = resolve_seed(args.seed, raw)
    return ex.config_from_json(raw)


def cmd_converge(args, raw):
    cfg = _walk_config(args, raw)
    series = ex.run_convergence(cfg, record_supports=cfg.space.finite)
    d = series.distances
    summary = {
        "metric": series.metric,
        "initial": float(d[0]),
        "final": float(d[-1]),
        "window_gap": series.window_gap(),
        "note": series.note,
    }
    records = series.csv_rows() if args.format == "csv" else series.jsonl()
    return records, summary, ex.config_to_json(cfg), OK


def cmd_ergodic(args, raw):
    cfg = _walk_config(args, raw)
    rep = ex.run_ergodic(cfg)
    if args.format == "csv":
        records = [["trial", "n", "average"]] + [
            [t, n, float(a)] for t, row in enumerate(rep.averages) for n, a in zip(rep.checkpoints, row)
        ]
    else:
        records = rep.jsonl()
    return records, rep.summary(), ex.config_to_json(cfg), OK


def cmd_ld(args, raw):
    cfg = _walk_config(args, raw)
    grid = raw.get("n_grid", [50, 100, 150, 200, 250, 300, 350, 400])
    eps = raw.get("epsilon", cfg.epsilon)
    if eps is None:
        raise ex.ConfigError(["epsilon: missing"])
    trials = raw.get("ld_trials", max(cfg.trials, 1000))
    rep = ex.run_large_deviations(cfg, grid, eps, trials)
    rows = [{"n": n, "p_hat": p, "count": c} for n, p, c in zip(rep.n_grid, rep.p_hat, rep.counts)]
    records = [["n", "p_hat", "count"]] + [[r["n"], r["p_hat"], r["count"]] for r in rows] if args.format == "csv" else [
        json.dumps(r, sort_keys=True) for r in rows
    ]
    resolved = ex.config_to_json(cfg) | {"n_grid": list(grid), "epsilon": eps, "ld_trials": trials}
    return records, rep.to_json(), resolved, OK


def cmd_probe(args, raw):
    seed = resolve_seed(args.seed, raw)
    try:
        space = space_from_json(raw["space"])
        fam = MeasureFamily.from_json(space, raw["family"])
    except (KeyError, ValueError, TypeError) as e:
        raise ex.ConfigError([f"family: {e}"]) from None
    delta = raw.get("delta", 0.1)
    trials, cap, windows = raw.get("trials", 100), raw.get("cap", 64), raw.get("windows", "auto")
    res = ex.probe_standing_assumption(fam, delta, trials=trials, cap=cap, seed=seed, windows=windows)
    records = [json.dumps({"m": m, "max_distance": g, "exhaustive": e}, sort_keys=True) for m, g, e in res.history]
    if args.format == "csv":
        records = [["m", "max_distance", "exhaustive"]] + [list(h) for h in res.history]
    summary = res.to_json()
    del summary["history"]
    if res.found:
        summary["revalidation_max"] = ex.revalidate_standing_assumption(fam, res.m, seed=seed)
    resolved = {"space": space.to_json(), "family": fam.to_json(), "delta": delta, "trials": trials,
                "cap": cap, "windows": windows, "seed": seed}
    return records, summary, resolved, OK


def cmd_ito_kawada(args, raw):
    seed = resolve_seed(args.seed, raw)
    names = raw.get("groups")
    groups = [grp.builtin(n) for n in names] if names else grp.builtin_groups(raw.get("max_order", 12))
    per_group, horizon = raw.get("per_group", 200), raw.get("horizon", 500)
    entries = ex.run_ito_kawada_census(groups, per_group, seed, horizon)
    bad = [e for e in entries if not e.consistent]
    bad_w = [e for e in entries if not e.witness_consistent]
    summary = {
        "measures": len(entries),
        "converging": sum(e.converged for e in entries),
        "exceptions": len(bad),
        "witness_exceptions": len(bad_w),
    }
    records = [json.dumps(e.to_json(), sort_keys=True) for e in entries]
    if args.format == "csv":
        keys = ["group", "adapted", "strictly_aperiodic", "coset_aperiodic", "witnesses", "tv_final", "verdict"]
        records = [keys] + [[getattr(e, k) for k in keys] for e in entries]
    resolved = {"groups": [g.name for g in groups], "per_group": per_group, "horizon": horizon, "seed": seed}
    return records, summary, resolved, CHECK_FAILED if bad or bad_w else OK


def cmd_stromberg(args, raw):
    horizon = raw.get("horizon", 200)
    rep = ex.run_stromberg(horizon)
    even_ok = all(rep.supports[n] == ["Id", "(1 2)"] for n in range(2, horizon + 1, 2))
    odd_ok = all(rep.supports[n] == ["(2 3)", "(1 2 3)"] for n in range(1, horizon + 1, 2))
    summary = rep.summary() | {"alternation_holds": even_ok and odd_ok}
    rows = [{"step": n, "tv": tv, "support": s} for n, (tv, s) in enumerate(zip(rep.tv, rep.supports))]
    if args.format == "csv":
        records = [["step", "tv", "support"]] + [[r["step"], r["tv"], " ".join(r["support"])] for r in rows]
    else:
        records = [json.dumps(r, sort_keys=True) for r in rows]
    return records, summary, {"horizon": horizon}, OK if even_ok and odd_ok else CHECK_FAILED


def cmd_sphere(args, raw):
    seed = resolve_seed(args.seed, raw)
    if "A" in raw and "B" in raw:
        S = Sphere2()
        A, B = isometry_from_json(S, raw["A"]), isometry_from_json(S, raw["B"])
    else:
        A, B = ex.seeded_rotation_pair(seed)
    x = tuple(raw.get("x", [1.0, 0.0, 0.0]))
    center = tuple(raw.get("center", [0.0, 0.0, 1.0]))
    area = raw.get("area", 0.3)
    ns = raw.get("n", [10, 14, 18])
    ns = [ns] if isinstance(ns, int) else list(ns)
    res = [ex.run_sphere_equidistribution(A, B, x, n, center, area) for n in ns]
    rows = [{"n": r.n, "share": r.share, "area": r.area, "deviation": r.deviation} for r in res]
    if args.format == "csv":
        records = [["n", "share", "area", "deviation"]] + [list(r.values()) for r in rows]
    else:
        records = [json.dumps(r, sort_keys=True) for r in rows]
    summary = {"A": list(A.quat), "B": list(B.quat), "last": rows[-1]}
    resolved = {"seed": seed, "A": list(A.quat), "B": list(B.quat), "x": list(x), "center": list(center),
                "area": area, "n": ns}
    return records, summary, resolved, OK


def _group_from(raw):
    g = raw.get("group", "S3")
    return grp.builtin(g) if isinstance(g, str) else grp.FiniteGroupTable.from_json(g)


def cmd_analyze_group(args, raw):
    if args.group:
        raw = dict(raw, group=args.group)
    G = _group_from(raw)
    subs = grp.all_subgroups(G)
    summary = {
        "group": G.name,
        "order": G.order,
        "subgroups": [{"order": H.order, "normal": H.is_normal, "elements": [G.labels[i] for i in sorted(H.elements)]} for H in subs],
    }
    if "measure" in raw or args.support:
        if args.support:
            supp = [G.element(s) for s in args.support.split(";")]
            v = np.zeros(G.order)
            v[supp] = 1.0 / len(supp)
        else:
            v = np.zeros(G.order)
            for lab, w in raw["measure"].items():
                v[G.element(lab)] += float(w)
            v = v / v.sum()
        ca, trap = grp.is_coset_aperiodic(G, v)
        sa, ntrap = grp.is_strictly_aperiodic(G, v)
        wit = grp.group_witnesses(G, v, max_subsets=5)
        summary["measure"] = {
            "support": [G.labels[i] for i in grp.support_of(v)],
            "adapted": grp.is_adapted(G, v),
            "coset_aperiodic": ca,
            "strictly_aperiodic": sa,
            "coset_trap": None if trap is None else {"g": G.labels[trap[0]], "H": [G.labels[i] for i in sorted(trap[1].elements)]},
            "normal_trap": None if ntrap is None else {"g": G.labels[ntrap[0]], "H": [G.labels[i] for i in sorted(ntrap[1].elements)]},
            "witnesses": [{"A": [G.labels[i] for i in a], "B": [G.labels[i] for i in b]} for a, b in wit],
        }
    records = [json.dumps(s, sort_keys=True) for s in summary["subgroups"]]
    if args.format == "csv":
        records = [["order", "normal", "elements"]] + [[s["order"], s["normal"], " ".join(s["elements"])] for s in summary["subgroups"]]
    return records, summary, {"group": G.to_json()} | ({"measure": raw["measure"]} if "measure" in raw else {}), OK


def _measure_file(path):
    obj = load_json(path)
    try:
        space = space_from_json(obj["space"])
        return DiscreteMeasure.from_json(space, obj)
    except (KeyError, ValueError, TypeError) as e:
        raise ex.ConfigError([f"{path}: {e}"]) from None


def cmd_ot(args, raw):
    if not (args.a and args.b):
        raise ex.ConfigError(["ot needs --a and --b measure files"])
    nu1, nu2 = _measure_file(args.a), _measure_file(args.b)
    value, plan = w1_exact(nu1, nu2)
    summary = {"w1": value}
    if args.plan:
        summary["plan"] = plan.to_json()
    records = [json.dumps({"i": i, "j": j, "mass": m}) for i, j, m in plan.entries]
    if args.format == "csv":
        records = [["i", "j", "mass"]] + [list(e) for e in plan.entries]
    return records, summary, {"a": str(args.a), "b": str(args.b)}, OK


def cmd_selftest(args, raw):
    from .selftest import run_all

    results = run_all(seed=args.seed if args.seed is not None else 0)
    checks = [{k: r[k] for k in ("name", "passed", "detail")} for r in results]
    records = [json.dumps(r, sort_keys=True) for r in checks]
    if args.format == "csv":
        records = [["name", "passed", "detail"]] + [[r["name"], r["passed"], r["detail"]] for r in checks]
    failed = [r["name"] for r in results if not r["passed"]]
    summary = {"checks": len(results), "failed": failed, "seconds": {r["name"]: r["seconds"] for r in results}}
    return records, summary, {}, CHECK_FAILED if failed else OK


COMMANDS = {
    "converge": cmd_converge,
    "probe-sa": cmd_probe,
    "ergodic": cmd_ergodic,
    "ld": cmd_ld,
    "ito-kawada": cmd_ito_kawada,
    "stromberg": cmd_stromberg,
    "sphere-equi": cmd_sphere,
    "analyze-group": cmd_analyze_group,
    "ot": cmd_ot,
    "selftest": cmd_selftest,
}
NEEDS_CONFIG = {"converge", "ergodic", "ld", "probe-sa"}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="isowalk", description="Random walks by isometries: experiments and checks")
    ap.add_argument("--version", action="version", version=f"isowalk {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
        if name == "ot":
            p.add_argument("--a", type=Path)
            p.add_argument("--b", type=Path)
            p.add_argument("--plan", action="store_true", help="include the optimal plan in the output")
        if name == "analyze-group":
            p.add_argument("--group", help="built-in group name, e.g. S3, D4, Z6, V4")
            p.add_argument("--support", help="support labels separated by ';' (uniform weights)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as e:
        print(f"isowalk: {e}", file=sys.stderr)
        return CONFIG_ERROR
    if args.command is None:
        ap.print_usage(sys.stderr)
        return CONFIG_ERROR
    started = datetime.now(timezone.utc).isoformat()
    try:
        if args.threads < 1:
            raise ex.ConfigError(["threads ≥ 1"])
        if args.command in NEEDS_CONFIG and args.config is None:
            raise ex.ConfigError([f"{args.command} needs --config"])
        raw = load_json(args.config) if args.config else {}
        records, summary, resolved, status = COMMANDS[args.command](args, raw)
    except ex.ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return CONFIG_ERROR
    except (ValueError, TransportError, RuntimeError, MemoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return RUNTIME_ERROR

    print(json.dumps(summary, sort_keys=True, default=_json_default))
    out = args.out or Path("runs") / args.command
    ext = "csv" if args.format == "csv" else "jsonl"
    rec_path = out / f"{args.command}.{ext}"
    text = _csv_text(records) if args.format == "csv" else "".join(r + "\n" for r in records)
    atomic_write(rec_path, text)
    atomic_write(out / "summary.json", _dumps(summary))
    atomic_write(out / "config.json", _dumps(resolved))
    manifest = {
        "command": args.command,
        "config": str(args.config) if args.config else None,
        "resolved_config": str(out / "config.json"),
        "seed": resolved.get("seed") if isinstance(resolved, dict) else None,
        "version": __version__,
        "threads": args.threads,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": [str(rec_path), str(out / "summary.json")],
        "status": status,
    }
    atomic_write(out / "manifest.json", _dumps(manifest))
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
