import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sirlattice import _engine_kernel as K
from sirlattice.engine import (
    EngineConfig, SimState, TrajectoryReport, WindowTooSmall, advance_until, init_state, observe_metrics,
    probe_durations, run_trajectory, scripted_state,
)
from sirlattice.lattice import RngStream, Window
from sirlattice.serialization import SchemaError


def _cfg(**kw):
    base = dict(mu=1.0, nu=1.0, window=Window(12, 2), t_max=5.0, strict_window=False)
    base.update(kw)
    return EngineConfig(**base)


def test_config_window_invariant():
    with pytest.raises(WindowTooSmall):
        init_state(EngineConfig(mu=1.0, nu=1.0, window=Window(20, 1), t_max=10.0), RngStream(0))
    with pytest.raises(ValueError):
        EngineConfig(mu=0.0, nu=1.0, window=Window(20, 1), t_max=1.0)
    with pytest.raises(ValueError):
        EngineConfig(mu=1.0, nu=-1.0, window=Window(20, 1), t_max=1.0)


def test_init_counts():
    cfg = EngineConfig(mu=1.0, nu=1.0, window=Window(100, 1), t_max=1.0, strict_window=False)
    st_ = init_state(cfg, RngStream(1))
    n = 201 ** 2
    assert abs((st_.n - 1) - n) <= 5 * math.sqrt(n)
    # one seed infection; susceptibles sharing the origin are infected at time zero
    seeds = [p for p in st_.infected_ids() if st_.infby[p] == -1]
    assert len(seeds) == 1
    at_origin = int(np.sum((st_.px == 0) & (st_.py == 0)))
    assert st_.counts[1] == at_origin
    m = observe_metrics(st_)
    assert m.front == 0 and m.inner == 0.0


def test_init_deterministic():
    cfg = _cfg(mu=0.01, window=Window(30, 1))
    a = init_state(cfg, RngStream(5))
    b = init_state(cfg, RngStream(5))
    assert np.array_equal(a.positions(), b.positions())


def test_single_clock_healing():
    cfg = _cfg(window=Window(2, 0))
    s = scripted_state(cfg, [(0, 0)], [0], [], healing_points={0: [0.5]})
    assert advance_until(s, 0.4) == K.ST_REACHED
    assert s.counts == (0, 1, 0)
    assert advance_until(s, 1.0) == K.ST_EXTINCT
    assert s.counts == (0, 0, 1)
    assert s.extinction_time == 0.5


def test_infected_meets_three_susceptibles():
    cfg = _cfg(window=Window(3, 0))
    pos = [(0, 0), (1, 0), (1, 0), (1, 0)]
    s = scripted_state(cfg, pos, [0], [(1.0, 0, 0)])
    advance_until(s, 2.0)
    assert s.counts == (0, 4, 0)
    assert np.all(s.iota[1:] == 1.0)
    assert np.all(s.infby[1:] == 0)


def test_hand_trace_two_particles():
    cfg = _cfg(window=Window(2, 0))
    jumps = [
        (0.5, 1, 1), (1.0, 0, 2), (1.5, 1, 1), (2.0, 0, 3),
        (2.5, 1, 0), (3.0, 1, 0), (3.5, 1, 0),  # last one leaves the window and is rejected
    ]
    s = scripted_state(cfg, [(0, 0), (2, 0)], [0], jumps, healing_points={0: [2.2], 1: [1.0, 4.0]})
    assert advance_until(s, 10.0) == K.ST_EXTINCT
    expect = [
        (0.5, "jump", 1, (1, 0), 1),
        (1.0, "jump", 0, (0, 1), 2),
        (1.5, "jump", 1, (0, 0), 1),
        (2.0, "jump", 0, (0, 0), 3),
        (2.0, "infect", 1, (0, 0), 0),
        (2.2, "heal", 0, (0, 0), -1),
        (2.5, "jump", 1, (1, 0), 0),
        (3.0, "jump", 1, (2, 0), 0),
        (4.0, "heal", 1, (2, 0), -1),
    ]
    assert s.event_log() == expect
    assert s.front == 2
    assert s.extinction_time == 4.0


def test_heal_precedes_jump_at_equal_time():
    cfg = _cfg(window=Window(2, 0))
    s = scripted_state(cfg, [(0, 0), (1, 0)], [0], [(1.0, 0, 0)], healing_points={0: [1.0]})
    advance_until(s, 2.0)
    assert s.counts == (1, 0, 1)


def test_nu_zero_never_heals():
    r = run_trajectory(_cfg(nu=0.0, t_max=10.0, window=Window(60, 2)), seed=3)
    assert r.termination == "t_max"
    assert r.event_counts["heals"] == 0
    assert r.final.front > 0
    fronts = [s.front for s in r.samples]
    assert fronts == sorted(fronts)


def test_high_nu_goes_extinct():
    cfg = _cfg(nu=100.0, t_max=20.0, window=Window(15, 2))
    causes = [run_trajectory(cfg, seed=s).termination for s in range(100)]
    assert causes.count("extinction") >= 96


def test_after_extinction():
    cfg = _cfg(nu=100.0, t_max=3.0, window=Window(10, 2), probe_sites=((0, 0),))
    r = run_trajectory(cfg, seed=1)
    assert r.termination == "extinction"
    assert r.final.n_I == 0 and r.final.inner == math.inf
    assert r.probe_duration[0] == r.probe_last[0] - r.probe_first[0]


def test_determinism_bit_identical():
    cfg = _cfg(nu=0.3, t_max=8.0, window=Window(40, 2))
    a = run_trajectory(cfg, seed=11)
    b = run_trajectory(cfg, seed=11)
    c = run_trajectory(cfg, seed=12)
    assert a.to_jsonl().split("\n")[:-2] == b.to_jsonl().split("\n")[:-2]
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_report_roundtrip_and_tamper():
    r = run_trajectory(_cfg(nu=0.5, t_max=4.0, window=Window(30, 2)), seed=2)
    txt = r.to_jsonl()
    r2 = TrajectoryReport.from_jsonl(txt)
    assert r2.to_jsonl() == txt
    bad = txt.replace('"schema_version":1', '"schema_version":99')
    with pytest.raises(SchemaError):
        TrajectoryReport.from_jsonl(bad)
    lines = txt.splitlines()
    lines[0] = lines[0].replace('"n_I":', '"n_I":1', 1)
    with pytest.raises((SchemaError, ValueError)):
        TrajectoryReport.from_jsonl("\n".join(lines))


@given(st.integers(0, 10**6), st.floats(0.05, 2.0))
@settings(max_examples=15, deadline=None)
def test_conservation_and_monotone_exposure(seed, nu):
    cfg = _cfg(nu=nu, t_max=6.0, window=Window(25, 2), cadence=0.5)
    r = run_trajectory(cfg, seed=seed)
    total = r.samples[0].n_S + r.samples[0].n_I + r.samples[0].n_R
    assert all(s.n_S + s.n_I + s.n_R == total for s in r.samples)
    fronts = [s.front for s in r.samples]
    assert fronts == sorted(fronts)
    st_ = init_state(cfg, RngStream(seed))
    advance_until(st_, 6.0)
    for p in np.nonzero(st_.infby >= 0)[0]:
        assert st_.iota[st_.infby[p]] <= st_.iota[p]


def test_occupancy_audit_random_checkpoints():
    cfg = _cfg(nu=0.2, t_max=30.0, window=Window(40, 3))
    st_ = init_state(cfg, RngStream(21))
    times = np.sort(np.random.default_rng(0).uniform(0, 30.0, size=100))
    for t in times:
        if advance_until(st_, float(t)) != K.ST_REACHED:
            break
        st_.audit_occupancy()


def test_censoring_is_labelled():
    r = run_trajectory(_cfg(nu=0.0, t_max=50.0, window=Window(8, 2)), seed=1)
    assert r.termination == "censored"
    assert r.censor_time < 50.0
    assert r.end_time == r.censor_time


def test_probe_durations_track_presence():
    cfg = _cfg(window=Window(2, 0), probe_sites=((1, 0), (0, 0), (2, 2)))
    s = scripted_state(cfg, [(0, 0)], [0], [(1.0, 0, 0), (3.0, 0, 1)], healing_points={0: [5.0]})
    advance_until(s, 6.0)
    d = probe_durations(s)
    assert d[0] == 2.0   # occupied during [1, 3)
    assert d[1] == 5.0   # first at 0, last at 5 (heal)
    assert np.isnan(d[2])


@pytest.mark.parametrize("t", [10.0, 100.0])
def test_walk_tail_bound(t):
    # a lone infected walker: the front is the running max of |X|_1
    R = int(t + 8 * math.sqrt(t) + 10)
    cfg = EngineConfig(mu=1e-12, nu=0.0, window=Window(R, 1), t_max=t, cadence=t, strict_window=False)
    n = 10**4
    maxes = np.empty(n, dtype=np.int64)
    for s in range(n):
        st_ = SimState(cfg, np.zeros((1, 2), dtype=np.int64), [0], RngStream(s, (int(t),)))
        advance_until(st_, t)
        maxes[s] = st_.front
    for m in range(1, int(t) + 20):
        emp = np.mean(maxes >= m)
        se = math.sqrt(max(emp * (1 - emp), 1.0 / n) / n)
        bound = 8.0 * math.exp(-0.5 * m * m / (m + t))
        assert emp <= bound + 3 * se, (m, emp, bound)


def test_healing_implementations_agree():
    base = dict(mu=0.5, nu=0.4, window=Window(6, 1), t_max=5.0, cadence=5.0, strict_window=False)
    a = [run_trajectory(EngineConfig(**base), seed=s).final.n_I for s in range(1000)]
    b = [run_trajectory(EngineConfig(heal_mode="points", **base), seed=10**6 + s).final.n_I for s in range(1000)]
    assert stats.ks_2samp(a, b).pvalue > 0.001
    assert stats.mannwhitneyu(a, b).pvalue > 0.001


def test_block_feed_first_entries():
    cfg = _cfg(nu=0.0, t_max=15.0, window=Window(40, 2), block_feed_L=8)
    st_ = init_state(cfg, RngStream(4))
    advance_until(st_, 15.0)
    feed = st_.block_feed()
    assert feed[0][0] == 0.0 and feed[0][2] == (0, 0)
    blocks = [tuple((c + 4) // 8 for c in x) for _, _, x, _ in feed]
    assert len(blocks) == len(set(blocks))
    ts = [f[0] for f in feed]
    assert ts == sorted(ts)
    for _, _, x, f in feed[1:]:
        assert sum(abs(a - b) for a, b in zip(x, f)) == 1
