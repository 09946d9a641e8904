"""Single-replica experiments shared by the sweep harness, the CLI and the exit checks."""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .lattice import RngStream, Window
from .multiscale import TOY, Frame, ScaleSequence, build_engulfing_sets, containment_hypotheses, decompose


def ssp_containment_trial(rng: RngStream, radius: int = 100, kappa: float = 4001.0, p: float = 1e-3,
                          q: float = 0.5, scales: Sequence[int] = TOY.r) -> dict:
    """One random SSP instance on [-radius, radius)^2 checked for B(inf) inside [C]."""
    from .ssp import audit_grid, run_ssp_grid, sample_grid_instance

    g = rng.generator()
    inst = sample_grid_instance(-radius, radius - 1, -radius, radius - 1, kappa, p, g, q=q)
    st = run_ssp_grid(inst)
    seeds = inst.seed_set()
    seq = ScaleSequence(tuple(scales))
    dec = decompose(seeds, seq)
    # a disk of radius >= the window's l1 diameter covers the window, so clipping radii there is exact
    # for membership tests inside the window; the frame pad keeps D and C off the frame band
    cap = 4 * radius
    pad = cap + 2
    frame = Frame(-radius - pad, radius - 1 + pad, -radius - pad, radius - 1 + pad)
    eng = build_engulfing_sets(dec, frame, cap=cap)
    hyp = containment_hypotheses(dec, eng)
    flagged = st.boundary_flag or eng.C_touches_band or eng.D_touches_band
    blue = st.C == 1
    fill_c = eng.fill_C[pad:pad + 2 * radius, pad:pad + 2 * radius]
    contained = not bool((blue & ~fill_c).any())
    eligible = hyp and not flagged
    return {"n_seeds": len(seeds), "hypotheses": hyp, "boundary_flag": flagged, "eligible": eligible,
            "contained": contained, "violation": eligible and not contained, "audit_violations": audit_grid(inst, st),
            "n_blue": int(blue.sum())}


def _random_seeds(g: np.random.Generator, n: int, lo: int, hi: int) -> set:
    return {tuple(int(c) for c in g.integers(lo, hi + 1, size=2)) for _ in range(n)}


def multiscale_trial(rng: RngStream, trial: str = "nested", scales: Sequence[int] = TOY.r, K: int = 3) -> dict:
    """Nested-pair monotonicity or perturbation locality of the residual seed sets."""
    g = rng.generator()
    seq = ScaleSequence(tuple(scales))
    if trial == "nested":
        big = _random_seeds(g, int(g.integers(1, 80)), -60, 60)
        small = {v for v in big if g.uniform() < 0.6}
        db, ds = decompose(big, seq, K=K), decompose(small, seq, K=K)
        bad = sum(1 for rb, rs in zip(db.residuals, ds.residuals) if not rs <= rb)
        return {"trial": trial, "violation": bad > 0, "n_seeds": len(big)}
    if trial == "locality":
        seeds = _random_seeds(g, int(g.integers(1, 80)), -400, 400)
        X = _random_seeds(g, 3, -100, 100)
        k = int(g.integers(2, K + 1))
        rad = seq.r[k - 1] // 2

        def far(v):
            return min(abs(v[0] - x[0]) + abs(v[1] - x[1]) for x in X) > rad

        pert = {v for v in _random_seeds(g, 40, -400, 400) if far(v)}
        drop = {v for v in seeds if far(v) and g.uniform() < 0.5}
        a = decompose(seeds, seq, K=K).residuals[k - 1]
        b = decompose((seeds - drop) | pert, seq, K=K).residuals[k - 1]
        return {"trial": trial, "k": k, "violation": (X & a) != (X & b), "n_seeds": len(seeds)}
    raise ValueError(f"unknown trial {trial!r}")


def blue_seed_trial(rng: RngStream, L: int, mu: float = 1.0, nu: Optional[float] = None, alpha: str = "0.01",
                    kappa: int = 4096) -> dict:
    """Verdict of A_B for one block under a fresh root key."""
    from .blocks import BlockSource, SeedParams, check_blue_seed, root_key

    p = SeedParams(L=int(L), mu=mu, nu=float(L) ** -6 if nu is None else nu, alpha=alpha, kappa=kappa)
    v = check_blue_seed((0, 0), BlockSource(root_key(rng), p))
    return {"L": L, **v.to_row(), "a1": v.a1, "a3": v.a3, "a4": v.a4}


def couple_check(params: dict, seed: int, path=()) -> dict:
    """One block-construction run replayed through the derived-clock SSP with its own seed field."""
    from .blocks import (BlockEngineConfig, BlockSource, check_partition, check_tau_against_colouring,
                         root_key, run_block_sir, seed_field, seed_params_for)
    from .colouring import check_lipschitz, derive_clocks, verify_coupling

    cfg = BlockEngineConfig.from_dict(params)
    run = run_block_sir(cfg, seed, path)
    s = run.state
    col = s.colouring()
    src = BlockSource(root_key(RngStream(int(seed), tuple(path))), seed_params_for(cfg))
    blocks = cfg.colouring_config().blocks()
    seeds = seed_field(blocks, src)
    rep = verify_coupling(col, derive_clocks(col), seeds)
    lip = check_lipschitz(col)
    engine_bad = check_tau_against_colouring(s) + check_partition(s)
    return {"coupled": rep.ok and lip.ok and not engine_bad, "coupling_ok": rep.ok, "lipschitz_ok": lip.ok,
            "engine_audit": len(engine_bad), "compared": rep.compared, "mismatches": len(rep.mismatches),
            "red_outside": len(rep.red_outside), "n_seeds": len(seeds), "n_blocks": len(blocks),
            "n_coloured": len(col.tau), "n_ignited": len(col.ignited), "termination": run.report.termination,
            "end_time": run.report.end_time}


def chain_oracle_trial(rng: RngStream, T: float = 3.0, max_particles: int = 5, radius: int = 3,
                       nu: Optional[float] = None, guard: int = 20) -> dict:
    from .chains import small_archive, verify_chain_bound

    g = rng.generator()
    nu_ = float(g.uniform(0.0, 1.0)) if nu is None else nu
    arch, rejected = small_archive(g, T, nu_, max_particles, radius, guard)
    res = verify_chain_bound(arch, T, guard)
    return {"bound_ok": res.ok, "n_infected": res.n_infected, "n_chains": res.n_chains,
            "invalid_chains": res.invalid_chains, "n_particles": len(arch.tracks), "rejected": rejected, "nu": nu_}


# -- engine equivalence -----------------------------------------------------------

EQUIV_TIMES = (50.0, 100.0, 200.0)
CENSORED = -1.0


def equivalence_features(report, times: Sequence[float] = EQUIV_TIMES) -> Dict[str, float]:
    """n_I at fixed times (CENSORED once the run is censored), final front and censoring time."""
    by_t = {s.t: s for s in report.samples}
    out = {}
    for t in times:
        s = by_t.get(t)
        if s is not None:
            out[f"n_I@{t:g}"] = float(s.n_I)
        elif report.termination == "extinction" and report.end_time <= t:
            out[f"n_I@{t:g}"] = 0.0
        else:
            out[f"n_I@{t:g}"] = CENSORED
    out["front"] = float(report.final.front)
    out["censor_time"] = report.censor_time if math.isfinite(report.censor_time) else CENSORED
    return out


def equivalence_tests(direct: List[Dict[str, float]], block: List[Dict[str, float]], level: float = 0.01) -> dict:
    """Two-sample KS per feature with Bonferroni correction."""
    keys = list(direct[0])
    alpha = level / len(keys)
    p = {k: float(stats.ks_2samp([d[k] for d in direct], [b[k] for b in block]).pvalue) for k in keys}
    return {"pvalues": p, "alpha_each": alpha, "ok": all(v > alpha for v in p.values())}


def equivalence_config(mu=1.0, nu=0.05, L=16, radius=96, margin=2, t_max=200.0):
    from .blocks import BlockEngineConfig
    from .engine import EngineConfig

    w = Window(radius, margin)
    return (EngineConfig(mu=mu, nu=nu, window=w, t_max=t_max, strict_window=False),
            BlockEngineConfig(mu=mu, nu=nu, L=L, window=w, t_max=t_max))


def engine_equivalence(n: int, seed: int = 0, **kw) -> dict:
    """Paired seeds (seed, i) through both engines, then the corrected KS tests."""
    from .blocks import run_block_sir
    from .engine import run_trajectory

    ce, cb = equivalence_config(**kw)
    d, b = [], []
    for i in range(n):
        d.append(equivalence_features(run_trajectory(ce, seed, (i,))))
        b.append(equivalence_features(run_block_sir(cb, seed, (i,)).report))
    return {"n": n, **equivalence_tests(d, b)}
