import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sirlattice import _block_kernel as K
from sirlattice.blocks import (
    BlockEngineConfig, BlockSource, ParticleTable, SeedParams, TrackingSource, boundary_sharp,
    case2_radius, check_blue_seed, ignition_sites, check_ignition_trace, check_partition, check_tau_against_colouring,
    is_principal, past_walk, root_key, run_block_sir, sample_block_process, seed_field, write_verdicts_csv,
)
from sirlattice.colouring import U_x
from sirlattice.engine import EngineConfig, run_trajectory
from sirlattice.lattice import RngStream, Window, block_distance


def _params(**kw):
    base = dict(L=8, mu=1.0, nu=0.0)
    base.update(kw)
    return SeedParams(**base)


# -- block processes -----------------------------------------------------------

def test_region_count_poisson_mean():
    p = _params()
    counts = [sample_block_process((0, 0), p, RngStream(s)).region_count(16) for s in range(200)]
    area = (8 + 2 * 16) ** 2
    se = math.sqrt(area / len(counts))
    assert abs(np.mean(counts) - area) < 4 * se


def test_nu_zero_gives_no_healing():
    M = sample_block_process((0, 0), _params(nu=0.0), RngStream(1))
    assert np.all(np.isinf(M.particles.heal1)) and math.isinf(M.ig_heal1)
    M2 = sample_block_process((0, 0), _params(nu=0.5), RngStream(1))
    assert np.all(np.isfinite(M2.particles.heal1))


def test_block_process_replay_ignores_access_order():
    p = _params()
    a = BlockSource(root_key(RngStream(5)), p)
    b = BlockSource(root_key(RngStream(5)), p)
    for B in [(0, 0), (1, 2), (-3, 1)]:
        a.get(B).particles
    for B in [(-3, 1), (1, 2), (0, 0)]:
        b.get(B).particles
    for B in [(0, 0), (1, 2), (-3, 1)]:
        pa, pb = a.get(B).particles, b.get(B).particles
        assert np.array_equal(pa.x0, pb.x0) and np.array_equal(pa.seg_t, pb.seg_t)
        assert np.array_equal(pa.status, pb.status)
    assert not np.array_equal(a.get((0, 0)).particles.x0, a.get((0, 1)).particles.x0 - 8) or \
        not np.array_equal(a.get((0, 0)).particles.seg_t, a.get((0, 1)).particles.seg_t)


def test_case2_radius():
    # P(Poisson(0.64) >= 12) = 5.5e-12, P(>= 13) = 2.7e-13
    assert case2_radius(0.64, 1e-12) == 13
    assert stats.poisson.sf(case2_radius(2.56, 1e-12) - 1, 2.56) < 1e-12


# -- principal particles -------------------------------------------------------

def test_principal_examples():
    L, xi = 8, 0.64
    assert is_principal((0, 0), [], (0, 0), L, xi)
    # distance L at -xi/8: the allowance there is L*floor(1/32) = 0
    assert not is_principal((3, 0), [(-xi / 8, 3 + L, 0)], (0, 0), L, xi)
    assert not is_principal((4, 0), [], (0, 0), L, xi)
    assert is_principal((3, 0), [(-4 * xi, 3 + L, 0)], (0, 0), L, xi)
    assert not is_principal((3, 0), [(-4 * xi, 4 + L, 0)], (0, 0), L, xi)


@given(st.integers(0, 2**40), st.integers(-4, 3), st.integers(-4, 3), st.sampled_from([0.64, 2.0]))
@settings(max_examples=200, deadline=None)
def test_cone_kernel_matches_reference(key, x, y, xi):
    L, T = 8, 12 * xi
    got = K.cone_status(np.uint64(key), x, y, -4, 3, -4, 3, L, xi, T, -1)
    ref = is_principal((x, y), past_walk(key, x, y, T), (0, 0), L, xi)
    assert (got > 0) == ref


def test_principal_particles_start_in_block():
    M = sample_block_process((1, -1), _params(), RngStream(2))
    P = M.particles
    assert np.all((P.x0 >= 4) & (P.x0 <= 11) & (P.y0 >= -12) & (P.y0 <= -5))
    assert 0 < P.principal.sum() <= len(P)


# -- block engine runs ---------------------------------------------------------

def _run(seed, **kw):
    base = dict(mu=1.0, nu=0.05, L=8, window=Window(40, 2), t_max=30.0, alpha="0.25", record_log=True)
    base.update(kw)
    return run_block_sir(BlockEngineConfig(**base), seed)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_run_invariants(seed):
    r = _run(seed)
    s = r.state
    assert r.report.engine == "block"
    assert r.report.event_counts["switches"] >= 1
    assert check_tau_against_colouring(s) == []
    assert check_partition(s) == []
    assert check_ignition_trace(s) == []
    n_S, n_I, n_R = s.counts
    assert n_S + n_I + n_R == s.n_revealed


def test_run_replay_is_identical():
    a, b = _run(7).report, _run(7).report
    assert a.samples == b.samples and a.block_feed == b.block_feed
    assert _run(8).report.samples != a.samples


def test_empty_lattice_gives_pure_cascade():
    r = run_block_sir(BlockEngineConfig(mu=0.0, nu=0.0, L=16, window=Window(64, 2), t_max=20.0), 3)
    s = r.state
    assert s.n_revealed == 1 and s.counts == (0, 1, 0)
    xi = s.config.xi
    for B, t in s.tau().items():
        assert math.isclose(t, (abs(B[0]) + abs(B[1])) * xi)
    assert set(s.causes().values()) == {"a", "b"} and s.causes()[(0, 0)] == "b"


def test_scripted_case1_reveal():
    # one candidate at (1, 0) whose past path is replayed by hand against chosen colouring times
    L, nz, zmin = 8, 3, -1
    key = np.uint64(12345)
    past = past_walk(int(key), 1, 0, 50.0)
    ci = np.array([[4, 1, 0, 1, 0]], dtype=np.int64)
    cf = np.zeros(1)
    cu = np.array([[key, 0]], dtype=np.uint64)

    def hand(bt, off):
        # tau of the block holding a(s - off) must exceed s for all s < off
        x, y, end = 1, 0, off
        for o, nx, ny in [(0.0, 1, 0)] + past:
            if off + o <= 0:
                break
            b = ((x + 4) // 8 - zmin) * nz + ((y + 4) // 8 - zmin)
            if bt[b, 0] < off + o:
                return False
            x, y = nx, ny
        return True

    rng = np.random.default_rng(0)
    for _ in range(50):
        bt = np.full((9, 2), np.inf)
        bt[:, 0] = np.where(rng.random(9) < 0.5, rng.uniform(0, 3, 9), np.inf)
        off = float(rng.uniform(0, 3))
        bt[4, 0] = off
        assert K.reveal_ok(0, off, ci, cf, cu, bt, L, zmin, nz, -1) == hand(bt, off)


def test_small_equivalence_with_direct_engine():
    w = Window(40, 2)
    cb = BlockEngineConfig(mu=1.0, nu=0.2, L=8, window=w, t_max=10.0)
    ce = EngineConfig(mu=1.0, nu=0.2, window=w, t_max=10.0, strict_window=False)
    a = [run_block_sir(cb, s).report.samples[-1].n_R for s in range(60)]
    b = [run_trajectory(ce, 10_000 + s).samples[-1].n_R for s in range(60)]
    assert stats.ks_2samp(a, b).pvalue > 0.001


# -- blue seeds ------------------------------------------------------------------

class _Frozen:
    """Hand-built M_B: frozen ignition walk and explicit principal paths."""

    def __init__(self, paths, heal=None):
        n = len(paths)
        ptr, ts, xs, ys = [0], [], [], []
        for segs in paths:
            for t, x, y in segs:
                ts.append(t), xs.append(x), ys.append(y)
            ptr.append(len(ts))
        self.particles = ParticleTable(
            x0=np.array([p[0][1] for p in paths], dtype=np.int64), y0=np.array([p[0][2] for p in paths], dtype=np.int64),
            status=np.ones(n, dtype=np.int64), heal1=np.full(n, np.inf) if heal is None else np.array(heal),
            seg_ptr=np.array(ptr, dtype=np.int64), seg_t=np.array(ts), seg_x=np.array(xs, dtype=np.int64),
            seg_y=np.array(ys, dtype=np.int64))
        self.ig_heal1 = math.inf

    def ig_sup_norm(self, w):
        return 0

    def ig_path(self, x, w):
        return np.zeros(1), np.array([x[0]]), np.array([x[1]])


class _FixtureSource:
    def __init__(self, params, procs):
        self.params, self.procs = params, procs

    def get(self, B):
        return self.procs.get(tuple(B), _Frozen([]))


def _straight(x, target, L, dt):
    """Path from x that walks straight into the target neighbour block, one step every dt."""
    h = L // 2
    segs = [(0.0, x[0], x[1])]
    cx, cy = x
    k = 1
    while ((cx + h) // L, (cy + h) // L) != target:
        cx += int(np.sign(target[0]))
        cy += int(np.sign(target[1]))
        segs.append((k * dt, cx, cy))
        k += 1
    return segs


def _dense_fixture(p, heal=None):
    L = p.L
    paths = []
    for x, _ in ignition_sites((0, 0), L, p.alpha_L):
        paths += [[(0.0, x[0], x[1])]] * p.q_threshold
        for Bp in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
            if Bp not in U_x(x, L, p.alpha_L):
                paths.append(_straight(x, Bp, L, p.w2 / (2 * L)))
    hv = None if heal is None else [heal] + [math.inf] * (len(paths) - 1)
    return _FixtureSource(p, {(0, 0): _Frozen(paths, hv)})


def test_blue_seed_fixture_holds():
    p = _params()
    v = check_blue_seed((0, 0), _dense_fixture(p))
    assert v.holds, v.failing
    # 28 boundary sites plus the origin; corner sites collect the stacks of both edges they belong to
    assert v.n_x == 29 and p.q_threshold == 15 and v.a5_min >= 15


def test_blue_seed_fixture_healing_breaks_a4():
    p = _params()
    v = check_blue_seed((0, 0), _dense_fixture(p, heal=p.heal_horizon / 2))
    assert not v.holds and v.failing == ["A4"]


def test_origin_is_an_ignition_site_of_b0_only():
    assert ((0, 0), (0, 0)) in ignition_sites((0, 0), 8, 0.08)
    assert ((0, 0), (0, 0)) not in ignition_sites((1, 0), 8, 0.08)
    assert len(ignition_sites((1, 0), 8, 0.08)) == len(boundary_sharp((1, 0), 8, 0.08)) == 28


def test_seed_field_examples():
    p = _params()
    src = _dense_fixture(p)
    assert seed_field([(0, 0)], src) == set()
    assert seed_field([(0, 0), (5, 5)], src) == {(5, 5)}


def test_window_lengths():
    p = _params(L=16)
    assert p.w2 == pytest.approx(p.xi / 4096)
    assert p.w1 == pytest.approx(p.xi / math.log(math.log(16)))
    assert p.q_threshold == math.floor(16 ** (2 - math.log(16) ** -0.5))


@pytest.mark.parametrize("B", [(0, 0), (4, -3)])
def test_seed_verdict_locality(B):
    p = _params(nu=8.0 ** -6)
    tr = TrackingSource(BlockSource(root_key(RngStream(9)), p))
    check_blue_seed(B, tr)
    assert tr.accessed and max(block_distance(B, Bp) for Bp in tr.accessed) <= 2


def test_verdicts_csv(tmp_path):
    p = _params(nu=8.0 ** -6)
    src = BlockSource(root_key(RngStream(9)), p)
    vs = [check_blue_seed(B, src) for B in [(0, 0), (1, 0)]]
    write_verdicts_csv(vs, tmp_path / "v.csv")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0].startswith("bx,by,holds,failing") and len(lines) == 3
