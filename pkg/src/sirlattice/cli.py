"""Command-line entry point: ``sirlattice <command> ...``.

Exit status is 0 only when no invariant check failed.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .harness import ExperimentSpec, load_config_file, read_rows, replay, run_experiment
from .lattice import RngStream
from .serialization import dumps

log = logging.getLogger("sirlattice")


def expand_grid(cfg: dict) -> List[dict]:
    """`grid` as given, or the cartesian product of `vary` lists applied over `base`."""
    if "grid" in cfg:
        return [dict(c) for c in cfg["grid"]]
    base = dict(cfg.get("base", {}))
    vary = cfg.get("vary", {})
    if not vary:
        return [base] if base else []
    keys = sorted(vary)
    return [{**base, **dict(zip(keys, vals))} for vals in itertools.product(*(vary[k] for k in keys))]


def _load(args) -> dict:
    return load_config_file(args.config) if args.config else {}


def _emit(obj, out: Optional[str]) -> None:
    text = dumps(obj) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _sweep(kind: str, args) -> int:
    cfg = _load(args)
    spec = ExperimentSpec(kind=kind, grid=expand_grid(cfg), replicas=int(cfg.get("replicas", 1)),
                          seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
                          out=args.out or cfg.get("out"), workers=args.workers or int(cfg.get("workers", 1)),
                          keep_trajectories=bool(cfg.get("keep_trajectories", kind == "sir-sweep")))
    res = run_experiment(spec)
    bad = [r for r in res.rows if not r.get("ok") or r.get("violation") or r.get("audit_violations")
           or r.get("bound_ok") is False or r.get("coupled") is False]
    summary = {"kind": kind, "cells": res.cells, "digest": res.meta["digest"], "failed_rows": len(bad)}
    if not spec.out:
        _emit(summary, None)
    else:
        log.info("wrote %s (digest %s)", spec.out, res.meta["digest"])
    return 1 if bad else 0


def cmd_sir_run(args) -> int:
    from .harness import _sir_task

    cfg = _load(args)
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    if args.engine:
        cfg["engine"] = args.engine
    _, text = _sir_task(cfg, seed, 0, 0)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_ssp_run(args) -> int:
    from .trials import ssp_containment_trial

    cfg = _load(args)
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    row = ssp_containment_trial(RngStream(seed), **cfg)
    _emit(row, args.out)
    return 1 if row["violation"] or row["audit_violations"] else 0


def cmd_multiscale(args) -> int:
    from .multiscale import TOY, ScaleSequence, decompose, gamma_modes

    cfg = _load(args)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    seq = ScaleSequence(tuple(cfg.get("scales", TOY.r)))
    if "seeds" in cfg:
        pts = [tuple(v) for v in cfg["seeds"]]
    else:
        g = RngStream(seed).child("multiscale").generator()
        r, p = int(cfg.get("radius", 100)), float(cfg.get("p", 1e-3))
        xs, ys = np.nonzero(g.random((2 * r, 2 * r)) < p)
        pts = [(int(x) - r, int(y) - r) for x, y in zip(xs, ys)]
    dec = decompose(pts, seq, cfg.get("K"))
    _emit({"decomposition": dec.to_dict(), "gamma": gamma_modes(seq), "n_seeds": len(pts)}, args.out)
    return 0


def cmd_couple_check(args) -> int:
    from .trials import couple_check

    cfg = _load(args)
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    row = couple_check(cfg, seed)
    _emit(row, args.out)
    return 0 if row["coupled"] else 1


def cmd_replay(args) -> int:
    d = Path(args.result)
    meta = json.loads((d / "meta.json").read_text())
    spec = meta["spec"]
    if spec["kind"] != "sir-sweep":
        raise SystemExit("replay supports sir-sweep results")
    rows = read_rows(d / "rows.csv")
    row = next(r for r in rows if int(r["cell"]) == args.cell and int(r["replica"]) == args.replica)
    rep = replay({**row, "schema_version": meta["schema_version"]}, spec["grid"][args.cell])
    if args.out:
        Path(args.out).write_text(rep.to_jsonl())
    log.info("replayed cell %d replica %d: digest %s", args.cell, args.replica, rep.digest())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sirlattice", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--config", help="YAML or JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if workers:
            p.add_argument("--workers", type=int, default=0)
        return p

    sir = sub.add_parser("sir").add_subparsers(dest="action", required=True)
    p = common(sir.add_parser("run"))
    p.add_argument("--engine", choices=("direct", "block"))
    p.set_defaults(func=cmd_sir_run)
    common(sir.add_parser("sweep"), True).set_defaults(func=lambda a: _sweep("sir-sweep", a))

    ssp = sub.add_parser("ssp").add_subparsers(dest="action", required=True)
    common(ssp.add_parser("run")).set_defaults(func=cmd_ssp_run)
    common(ssp.add_parser("sweep"), True).set_defaults(func=lambda a: _sweep("ssp-sweep", a))

    ms = sub.add_parser("multiscale").add_subparsers(dest="action", required=True)
    common(ms.add_parser("analyze")).set_defaults(func=cmd_multiscale)
    common(ms.add_parser("sweep"), True).set_defaults(func=lambda a: _sweep("multiscale", a))

    common(sub.add_parser("blue-seed-sweep"), True).set_defaults(func=lambda a: _sweep("blue-seed-sweep", a))
    common(sub.add_parser("couple-check")).set_defaults(func=cmd_couple_check)
    common(sub.add_parser("chain-oracle"), True).set_defaults(func=lambda a: _sweep("chain-oracle", a))

    p = sub.add_parser("replay")
    p.add_argument("result", help="sweep output directory")
    p.add_argument("--cell", type=int, default=0)
    p.add_argument("--replica", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return int(args.func(args) or 0)
    except (ValueError, TypeError, KeyError, OSError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
