"""Survival-proxy frequency across nu, plus front fits and herd immunity on survivors.

Defaults are a desk-scale trend run (t_max=100). Pass --t-max 1000 --replicas 200 for
the full-size sweep; its window then holds ~7.5e7 particles per run.
"""
import argparse
import json
import math

import numpy as np

from sirlattice.engine import EngineConfig
from sirlattice.harness import ExperimentSpec, front_fit, herd_immunity, run_experiment, survival_flags
from sirlattice.lattice import Window


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nu", type=float, nargs="+", default=[0.5, 0.1, 0.02, 0.004])
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--t-max", type=float, default=100.0)
    ap.add_argument("--replicas", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out")
    a = ap.parse_args()

    grid = []
    for nu in a.nu:
        probe = EngineConfig(mu=a.mu, nu=nu, window=Window(10, 2), t_max=a.t_max)
        R = int(math.ceil(probe.required_radius))
        grid.append(EngineConfig(mu=a.mu, nu=nu, window=Window(R, 2), t_max=a.t_max, hist_bins=R).to_dict())
    res = run_experiment(ExperimentSpec("sir-sweep", grid=grid, replicas=a.replicas, seed=a.seed,
                                        workers=a.workers, out=a.out, keep_trajectories=False))
    for c, cell in enumerate(res.cells):
        reps = [res.reports[(c, r)] for r in range(a.replicas) if (c, r) in res.reports]
        surv = [r for r, f in zip(reps, survival_flags(reps)) if f]
        fits = [front_fit(r) for r in surv]
        herd = [herd_immunity(r, v) for r, (v, _) in zip(surv, fits) if math.isfinite(v)]
        print(json.dumps({
            "nu": cell["params"]["nu"], "survival": cell.get("survival"),
            "ci": [cell.get("survival_lo"), cell.get("survival_hi")], "survivors": len(surv),
            "speed": float(np.nanmean([f[0] for f in fits])) if fits else None,
            "r2_min": float(np.nanmin([f[1] for f in fits])) if fits else None,
            "s_positive": float(np.mean([d > 0 for d, _ in herd])) if herd else None,
            "i_free": float(np.mean([i == 0 for _, i in herd])) if herd else None}))


if __name__ == "__main__":
    main()
