import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sirlattice import cli
from sirlattice.engine import EngineConfig, run_trajectory
from sirlattice.harness import (
    ExperimentSpec, estimate_survival, herd_immunity, l1_ball_size, linear_fit, read_rows, replay,
    run_experiment, survival_flags, wilson,
)
from sirlattice.lattice import Window
from sirlattice.serialization import SchemaError

CELL = {"mu": 1.0, "nu": 0.2, "t_max": 8.0, "window": {"radius": 30, "margin": 2}, "strict_window": False}


def test_wilson_zero_successes():
    lo, hi = wilson(0, 200)
    assert lo == 0.0 and hi < 0.1
    assert wilson(0, 0) == (0.0, 1.0)


@given(st.integers(1, 400), st.data())
def test_wilson_contains_point_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_wilson_coverage_calibrated():
    rng = np.random.default_rng(0)
    for p, n in [(0.1, 50), (0.5, 30), (0.9, 200)]:
        ks = rng.binomial(n, p, size=4000)
        cover = np.mean([lo <= p <= hi for lo, hi in (wilson(int(k), n) for k in ks)])
        assert 0.93 <= cover <= 0.975, (p, n, cover)


def test_linear_fit_exact_line():
    s, b, r2 = linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
    assert s == pytest.approx(2) and b == pytest.approx(1) and r2 == pytest.approx(1)
    assert math.isnan(linear_fit([1.0], [2.0])[0])


def test_l1_ball_size():
    assert [l1_ball_size(r) for r in range(4)] == [1, 5, 13, 25]
    assert l1_ball_size(3, d=1) == 7


def test_empty_grid_gives_valid_header(tmp_path):
    res = run_experiment(ExperimentSpec("sir-sweep", grid=[], replicas=1, out=str(tmp_path / "e")))
    assert res.rows == [] and res.cells == []
    assert (tmp_path / "e" / "rows.csv").read_text().splitlines() == ["cell"]
    meta = json.loads((tmp_path / "e" / "meta.json").read_text())
    assert meta["schema_version"] == 1 and meta["kind"] == "sir-sweep"


def test_single_replica_matches_direct_run():
    res = run_experiment(ExperimentSpec("sir-sweep", grid=[CELL], replicas=1, seed=11))
    ref = run_trajectory(EngineConfig.from_dict(CELL), 11, (0, 0))
    assert res.rows[0]["digest"] == ref.digest()
    assert res.reports[(0, 0)].samples == ref.samples


def test_worker_count_does_not_change_results():
    grid = [CELL, {**CELL, "nu": 0.6}]
    a = run_experiment(ExperimentSpec("sir-sweep", grid=grid, replicas=3, seed=2, workers=1))
    b = run_experiment(ExperimentSpec("sir-sweep", grid=grid, replicas=3, seed=2, workers=2))
    assert a.digest() == b.digest()
    assert [r["digest"] for r in a.rows] == [r["digest"] for r in b.rows]


def test_rows_round_trip_and_replay(tmp_path):
    out = tmp_path / "r"
    res = run_experiment(ExperimentSpec("sir-sweep", grid=[CELL], replicas=2, seed=5, out=str(out)))
    rows = read_rows(out / "rows.csv")
    assert [r["digest"] for r in rows] == [r["digest"] for r in res.rows]
    assert rows[1]["n_I"] == res.rows[1]["n_I"] and rows[1]["end_time"] == res.rows[1]["end_time"]
    assert replay(rows[1], CELL).digest() == rows[1]["digest"]
    with pytest.raises(SchemaError):
        replay({**rows[1], "seed": 6}, CELL)
    with pytest.raises(SchemaError):
        replay({**rows[1], "schema_version": 2}, CELL)


def test_replica_errors_are_recorded():
    res = run_experiment(ExperimentSpec("sir-sweep", grid=[{**CELL, "mu": -1.0}], replicas=2))
    assert all(not r["ok"] and "error" in r for r in res.rows)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        ExperimentSpec("nope")


def test_survival_proxy_excludes_censored():
    reps = [run_trajectory(EngineConfig(mu=1.0, nu=nu, window=Window(30, 2), t_max=8.0, strict_window=False), s)
            for s, nu in enumerate([0.0, 0.0, 5.0])]
    flags = survival_flags(reps)
    assert flags[:2] == [True, True]
    est = estimate_survival(reps, min_n=30)
    assert not est.sufficient and est.n + est.censored == 3


def test_herd_immunity_reads_histograms():
    rep = run_trajectory(EngineConfig(mu=1.0, nu=0.0, window=Window(30, 2), t_max=8.0, strict_window=False,
                                      hist_bins=61), 1)
    dens, n_i = herd_immunity(rep, speed=1.0, c=0.5)
    assert 0.0 <= dens and n_i >= 0


def test_expand_grid():
    assert cli.expand_grid({"grid": [{"a": 1}]}) == [{"a": 1}]
    g = cli.expand_grid({"base": {"a": 0}, "vary": {"b": [1, 2], "c": [3]}})
    assert g == [{"a": 0, "b": 1, "c": 3}, {"a": 0, "b": 2, "c": 3}]
    assert cli.expand_grid({}) == []


def test_cli_sweep_and_replay(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": [CELL], "replicas": 2}))
    out = tmp_path / "o"
    assert cli.main(["sir", "sweep", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    assert (out / "trajectories" / "c0000_r00001.jsonl").exists()
    assert cli.main(["replay", str(out), "--cell", "0", "--replica", "1"]) == 0


def test_cli_chain_oracle_and_couple_check(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("grid: [{}]\nreplicas: 3\n")
    assert cli.main(["chain-oracle", "--config", str(cfg)]) == 0
    cc = tmp_path / "cc.yaml"
    cc.write_text("{mu: 1.0, nu: 0.0000038, L: 8, window: {radius: 32, margin: 2}, t_max: 10.0}\n")
    assert cli.main(["couple-check", "--config", str(cc), "--seed", "1", "--out", str(tmp_path / "cc.json")]) == 0
    assert json.loads((tmp_path / "cc.json").read_text())["coupled"] is True


def test_cli_bad_config_exits_nonzero(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("[1, 2]\n")
    assert cli.main(["ssp", "run", "--config", str(cfg)]) == 2
