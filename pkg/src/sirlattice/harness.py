"""Monte Carlo sweeps, estimators and deterministic replay.

Every replica's randomness is keyed by (root seed, cell index, replica index),
so results do not depend on worker count or completion order.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .engine import EngineConfig, TrajectoryReport, run_trajectory
from .lattice import RngStream, Window
from .serialization import SCHEMA_VERSION, SchemaError, digest, dumps

log = logging.getLogger(__name__)

KINDS = ("sir-sweep", "ssp-sweep", "multiscale", "blue-seed-sweep", "couple-check", "chain-oracle")
SURVIVAL_PROXY = ("alive at t_max and outer front >= 1/2 of the median outer front at t_max "
                  "among the cell's uncensored runs alive at t_max")
MIN_UNCENSORED = 30


# -- estimators -----------------------------------------------------------------

def wilson(k: int, n: int, z: float = 1.959963984540054) -> Tuple[float, float]:
    """Wilson score interval for k successes in n trials."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, c - h)
    hi = 1.0 if k == n else min(1.0, c + h)
    return lo, hi


@dataclass
class SurvivalEstimate:
    k: int
    n: int
    freq: float
    lo: float
    hi: float
    censored: int
    sufficient: bool
    proxy: str = SURVIVAL_PROXY


def _alive_at_end(r: TrajectoryReport) -> bool:
    return r.termination == "t_max" and r.final.n_I > 0


def survival_flags(reports: Sequence[TrajectoryReport]) -> List[Optional[bool]]:
    """Per-report proxy verdict; None for censored runs."""
    unc = [r for r in reports if r.termination != "censored"]
    alive_fronts = [r.final.front for r in unc if _alive_at_end(r)]
    ref = float(np.median(alive_fronts)) if alive_fronts else 0.0
    out: List[Optional[bool]] = []
    for r in reports:
        if r.termination == "censored":
            out.append(None)
        else:
            out.append(_alive_at_end(r) and r.final.front >= 0.5 * ref)
    return out


def estimate_survival(reports: Sequence[TrajectoryReport], min_n: int = MIN_UNCENSORED) -> SurvivalEstimate:
    flags = survival_flags(reports)
    unc = [f for f in flags if f is not None]
    k, n = sum(unc), len(unc)
    lo, hi = wilson(k, n)
    return SurvivalEstimate(k=k, n=n, freq=k / n if n else float("nan"), lo=lo, hi=hi,
                            censored=len(flags) - n, sufficient=n >= min_n)


def linear_fit(t: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """(slope, intercept, R^2) of ordinary least squares."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    if len(t) < 2 or np.ptp(t) == 0:
        return float("nan"), float("nan"), float("nan")
    res = stats.linregress(t, y)
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


def front_fit(r: TrajectoryReport) -> Tuple[float, float]:
    """(speed, R^2) of the outer front over the last half of the run."""
    half = r.end_time / 2
    pts = [(s.t, s.front) for s in r.samples if s.t >= half]
    if len(pts) < 3:
        return float("nan"), float("nan")
    s, _, r2 = linear_fit(*zip(*pts))
    return s, r2


def l1_ball_size(r: float, d: int = 2) -> int:
    k = int(math.floor(r))
    return 2 * k + 1 if d == 1 else 2 * k * k + 2 * k + 1


def herd_immunity(r: TrajectoryReport, speed: float, c: float = 0.1) -> Tuple[float, int]:
    """(susceptible density, infected count) inside the l1 disk of radius c * speed * t_end."""
    if not r.hist_S:
        raise ValueError("report carries no radial histograms")
    rad = int(math.floor(c * speed * r.end_time))
    if rad >= len(r.hist_S) - 1:
        raise ValueError("histogram range too short for the disk")
    s = sum(r.hist_S[:rad + 1])
    i = sum(r.hist_I[:rad + 1])
    d = int(r.config.get("d", 2))
    return s / l1_ball_size(rad, d), i


def probe_quantile(reports: Sequence[TrajectoryReport], probes: Sequence[int], q: float = 0.99) -> float:
    vals = [r.probe_duration[k] for r in reports for k in probes if not math.isnan(r.probe_duration[k])]
    return float(np.quantile(vals, q)) if vals else float("nan")


# -- experiments -------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    kind: str
    grid: List[dict] = field(default_factory=list)
    replicas: int = 1
    seed: int = 0
    out: Optional[str] = None
    censoring: str = "exclude"
    workers: int = 1
    keep_trajectories: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.censoring != "exclude":
            raise ValueError("only the 'exclude' censoring policy is supported")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(**d)


@dataclass
class SweepResult:
    spec: ExperimentSpec
    rows: List[dict]
    cells: List[dict]
    meta: dict
    reports: Dict[Tuple[int, int], TrajectoryReport] = field(default_factory=dict)

    def digest(self) -> str:
        return digest({"rows": self.rows, "cells": self.cells})


def replica_path(cell: int, replica: int) -> Tuple[int, int]:
    return (int(cell), int(replica))


def engine_config(params: dict) -> EngineConfig:
    p = dict(params)
    p.pop("engine", None)
    return EngineConfig.from_dict(p)


def _sir_task(params: dict, seed: int, cell: int, rep: int):
    if params.get("engine") == "block":
        from .blocks import BlockEngineConfig, run_block_sir

        p = dict(params)
        p.pop("engine")
        rep_ = run_block_sir(BlockEngineConfig.from_dict(p), seed, replica_path(cell, rep)).report
    else:
        rep_ = run_trajectory(engine_config(params), seed, replica_path(cell, rep))
    f = rep_.final
    row = {"termination": rep_.termination, "end_time": rep_.end_time, "censor_time": rep_.censor_time,
           "extinction_time": rep_.extinction_time, "n_I": f.n_I, "n_S": f.n_S, "n_R": f.n_R,
           "front": f.front, "digest": rep_.digest()}
    return row, rep_.to_jsonl()


def _ssp_task(params: dict, seed: int, cell: int, rep: int):
    from .trials import ssp_containment_trial

    return ssp_containment_trial(RngStream(seed, replica_path(cell, rep)), **params), None


def _multiscale_task(params: dict, seed: int, cell: int, rep: int):
    from .trials import multiscale_trial

    return multiscale_trial(RngStream(seed, replica_path(cell, rep)), **params), None


def _blue_seed_task(params: dict, seed: int, cell: int, rep: int):
    from .trials import blue_seed_trial

    return blue_seed_trial(RngStream(seed, replica_path(cell, rep)), **params), None


def _couple_task(params: dict, seed: int, cell: int, rep: int):
    from .trials import couple_check

    return couple_check(params, seed, replica_path(cell, rep)), None


def _chain_task(params: dict, seed: int, cell: int, rep: int):
    from .trials import chain_oracle_trial

    return chain_oracle_trial(RngStream(seed, replica_path(cell, rep)), **params), None


TASKS: Dict[str, Callable] = {"sir-sweep": _sir_task, "ssp-sweep": _ssp_task, "multiscale": _multiscale_task,
                              "blue-seed-sweep": _blue_seed_task, "couple-check": _couple_task,
                              "chain-oracle": _chain_task}


def _run_one(args):
    kind, params, seed, cell, rep = args
    try:
        row, traj = TASKS[kind](params, seed, cell, rep)
        return cell, rep, {"ok": True, **row}, traj
    except Exception as e:  # recorded per replica; the sweep continues
        return cell, rep, {"ok": False, "error": f"{type(e).__name__}: {e}"}, None


def _summarize_sir(rows: List[dict], reports: List[TrajectoryReport]) -> dict:
    est = estimate_survival(reports)
    out = {"survival": est.freq, "survival_lo": est.lo, "survival_hi": est.hi, "uncensored": est.n,
           "censored": est.censored, "sufficient": est.sufficient}
    flags = survival_flags(reports)
    surv = [r for r, f in zip(reports, flags) if f]
    fits = [front_fit(r) for r in surv]
    if fits:
        out["speed_mean"] = float(np.nanmean([f[0] for f in fits]))
        out["front_r2_min"] = float(np.nanmin([f[1] for f in fits]))
    if surv and surv[0].probe_duration:
        q = [float(np.nanquantile(r.probe_duration, 0.5)) for r in surv
             if not all(math.isnan(v) for v in r.probe_duration)]
        out["probe_duration_median"] = float(np.median(q)) if q else float("nan")
    return out


def _summarize_generic(rows: List[dict]) -> dict:
    ok = [r for r in rows if r.get("ok")]
    out: Dict[str, Any] = {"replicas": len(rows), "failed": len(rows) - len(ok)}
    for key in ("holds", "violation", "contained", "eligible", "bound_ok", "coupled"):
        vals = [bool(r[key]) for r in ok if key in r and r[key] is not None]
        if vals:
            k = sum(vals)
            lo, hi = wilson(k, len(vals))
            out[key] = k / len(vals)
            out[key + "_n"] = len(vals)
            out[key + "_lo"], out[key + "_hi"] = lo, hi
    return out


def run_experiment(spec: ExperimentSpec) -> SweepResult:
    """Run every (cell, replica) and fold the results in key order."""
    tasks = [(spec.kind, dict(params), int(spec.seed), c, r)
             for c, params in enumerate(spec.grid) for r in range(spec.replicas)]
    if spec.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            done = list(ex.map(_run_one, tasks, chunksize=1))
    else:
        done = [_run_one(t) for t in tasks]
    done.sort(key=lambda x: (x[0], x[1]))
    rows, reports = [], {}
    for cell, rep, row, traj in done:
        rows.append({"cell": cell, "replica": rep, "seed": int(spec.seed), **row})
        if traj is not None:
            reports[(cell, rep)] = TrajectoryReport.from_jsonl(traj)
    cells = []
    for c, params in enumerate(spec.grid):
        crow = [r for r in rows if r["cell"] == c]
        if spec.kind == "sir-sweep":
            reps = [reports[(c, r["replica"])] for r in crow if (c, r["replica"]) in reports]
            summary = _summarize_sir(crow, reps) if reps else {"failed": len(crow)}
        else:
            summary = _summarize_generic(crow)
        cells.append({"cell": c, "params": params, **summary})
    meta = {"schema_version": SCHEMA_VERSION, "kind": spec.kind, "seed": spec.seed, "replicas": spec.replicas,
            "censoring": spec.censoring, "survival_proxy": SURVIVAL_PROXY, "min_uncensored": MIN_UNCENSORED}
    res = SweepResult(spec, rows, cells, meta, reports)
    meta["digest"] = res.digest()
    if spec.out:
        write_result(res, Path(spec.out))
    return res


def _csv(path: Path, rows: List[dict]) -> None:
    keys: List[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys or ["cell"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, (dict, list)) else
                            repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_result(res: SweepResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _csv(out / "rows.csv", res.rows)
    _csv(out / "cells.csv", res.cells)
    (out / "meta.json").write_text(dumps({**res.meta, "spec": asdict(res.spec)}) + "\n")
    if res.spec.keep_trajectories and res.reports:
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        for (c, r), rep in res.reports.items():
            (tdir / f"c{c:04d}_r{r:05d}.jsonl").write_text(rep.to_jsonl())


def read_rows(path) -> List[dict]:
    """Rows written by write_result, with numbers parsed back."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = json.loads(v)
                except (json.JSONDecodeError, TypeError):
                    try:
                        parsed[k] = float(v)
                    except ValueError:
                        parsed[k] = v
            out.append(parsed)
    return out


def replay(row: dict, params: dict) -> TrajectoryReport:
    """Regenerate a sir-sweep replica and check it against the stored digest."""
    if row.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise SchemaError("schema version mismatch")
    _, traj = _sir_task(params, int(row["seed"]), int(row["cell"]), int(row["replica"]))
    rep = TrajectoryReport.from_jsonl(traj)
    if "digest" in row and rep.digest() != row["digest"]:
        raise SchemaError("replayed trajectory does not match the stored digest")
    return rep


def load_config_file(path) -> dict:
    """YAML or JSON mapping."""
    import yaml

    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a mapping")
    return data
