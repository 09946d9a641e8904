import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sirlattice.lattice import disk
from sirlattice.multiscale import (
    TOY, Frame, ScaleSequence, build_engulfing_sets, containment_hypotheses, decompose, decompose_mask, disk_union_mask,
    gamma_modes, largest_component_diameter, local_approximation, stabilization_radius, validate_gamma,
)

F = Frame(-60, 60, -60, 60)


def test_gamma_examples():
    assert not validate_gamma(ScaleSequence((1, 2, 4, 8))).ok
    r = [1]
    for i in range(6):
        r.append(int(1e13) * (i + 1) ** 2 * r[-1])
    rep = validate_gamma(ScaleSequence(tuple(r)), tail_c=1e13)
    assert rep.ok
    # prefix plus tail equals exp(0.1 * pi^2 / 6) up to log1p vs linear terms
    assert rep.bound <= math.exp(0.1 * math.pi ** 2 / 6) + 1e-12
    assert gamma_modes(TOY) == {"proof_constant": False, "toy": True}
    with pytest.raises(ValueError):
        ScaleSequence((1, 5, 5))


def test_decompose_examples():
    d = decompose([], TOY)
    assert all(not A for A in d.levels) and d.exhaustive
    e = build_engulfing_sets(d, F)
    assert not e.D.any() and not e.C.any() and not e.fill_D.any() and not e.fill_C.any()
    d = decompose([(3, 4)], TOY)
    assert d.levels[0] == {(3, 4)} and d.exhaustive and d.K == 1
    d = decompose([(0, 5), (1, 5)], TOY)
    assert d.levels[0] == set() and d.residuals[1] == {(0, 5), (1, 5)}
    assert d.levels[1] == {(0, 5), (1, 5)} and d.exhaustive and d.K == 2


def test_engulfing_radii():
    d = decompose([(2, 2)], TOY)
    e = build_engulfing_sets(d, Frame(-150, 150, -150, 150))
    fr = e.frame
    assert fr.to_set(e.D) == {(2, 2)}
    assert fr.to_set(e.C) == set(disk((2, 2), 100))
    d2 = decompose([(0, 5), (1, 5)], TOY)
    e2 = build_engulfing_sets(d2, F)
    assert set(disk((0, 5), 9)) | set(disk((1, 5), 9)) <= F.to_set(e2.D)


def test_disk_union_mask_matches_enumeration():
    A = [(0, 0), (7, -3), (-10, 12)]
    m = disk_union_mask(F, A, 6)
    expect = set().union(*(disk(a, 6) for a in A))
    assert F.to_set(m) == expect


def test_component_diameter():
    assert largest_component_diameter(set(), (0, 0), 5) == 0
    assert largest_component_diameter(set(disk((0, 0), 9)), (0, 0), 0) == 18
    two = set(disk((0, 0), 9)) | set(disk((40, 0), 3))
    assert largest_component_diameter(two, (40, 0), 1) == 6


def test_local_approximation_limits():
    seeds = [(0, 0), (1, 0), (30, 30)]
    full = build_engulfing_sets(decompose(seeds, TOY), F).fill_D
    assert np.array_equal(local_approximation((0, 0), 10**6, seeds, TOY, F), full)
    assert not local_approximation((-20, -20), 0, seeds, TOY, F).any()


def _random_seeds(rng, n, lo=-50, hi=50):
    return {tuple(int(c) for c in rng.integers(lo, hi + 1, size=2)) for _ in range(n)}


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_local_approximation_monotone_and_stabilises(seed):
    rng = np.random.default_rng(seed)
    seeds = _random_seeds(rng, int(rng.integers(0, 30)))
    B = tuple(int(c) for c in rng.integers(-20, 21, size=2))
    prev = None
    for r in (0, 5, 20, 60, 200):
        cur = local_approximation(B, r, seeds, TOY, F)
        if prev is not None:
            assert not (prev & ~cur).any()
        prev = cur
    assert stabilization_radius(B, seeds, TOY, F) <= 200


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_nested_monotonicity(seed):
    rng = np.random.default_rng(seed)
    big = _random_seeds(rng, int(rng.integers(1, 60)))
    small = {v for v in big if rng.uniform() < 0.6}
    db, ds = decompose(big, TOY, K=3), decompose(small, TOY, K=3)
    for rb, rs in zip(db.residuals, ds.residuals):
        assert rs <= rb
    eb, es = build_engulfing_sets(db, F), build_engulfing_sets(ds, F)
    if containment_hypotheses(db, eb):
        assert containment_hypotheses(ds, es)
        assert not (es.C & ~eb.C).any() and not (es.D & ~eb.D).any()


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_locality(seed):
    rng = np.random.default_rng(seed)
    seeds = _random_seeds(rng, int(rng.integers(1, 60)), -400, 400)
    X = _random_seeds(rng, 3, -100, 100)
    k = int(rng.integers(2, 4))
    rad = TOY.r[k - 1] // 2
    far = lambda v: min(abs(v[0] - x[0]) + abs(v[1] - x[1]) for x in X) > rad
    pert = {v for v in _random_seeds(rng, 40, -400, 400) if far(v)}
    drop = {v for v in seeds if far(v) and rng.uniform() < 0.5}
    other = (seeds - drop) | pert
    a = decompose(seeds, TOY, K=3).residuals
    b = decompose(other, TOY, K=3).residuals
    assert X & a[k - 1] == X & b[k - 1]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_idempotence(seed):
    rng = np.random.default_rng(seed)
    seeds = _random_seeds(rng, int(rng.integers(0, 60)))
    d = decompose(seeds, TOY, K=3)
    again = decompose(set().union(*d.levels), TOY, K=3)
    for v in set().union(*d.levels):
        assert again.level_of(v) == d.level_of(v)


def test_mask_route_matches_set_route():
    rng = np.random.default_rng(8)
    for _ in range(40):
        m = rng.uniform(size=(81, 81)) < rng.choice([0.002, 0.01, 0.05])
        seeds = {(int(i) - 40, int(j) - 40) for i, j in zip(*np.nonzero(m))}
        fr = Frame(-40, 40, -40, 40)
        a = decompose(seeds, TOY, K=3).residuals
        b = decompose_mask(m, TOY, 3)
        for k in range(len(a)):
            assert fr.to_set(b[k]) == a[k]


def test_level_probability_decay():
    # super-exponential decay of P(x in B_{*,k}) for Bernoulli(p) seeds, away from the window edge
    seq = ScaleSequence((1, 3, 9, 27))
    p = 0.01
    rng = np.random.default_rng(5)
    c = np.zeros(3)
    n = 0
    for _ in range(10):
        R = decompose_mask(rng.uniform(size=(2000, 2000)) < p, seq, 2)
        inner = (slice(30, -30), slice(30, -30))
        c += [R[k][inner].sum() for k in range(3)]
        n += R[0][inner].size
    P = c / n
    exact2 = p * (1 - (1 - p) ** 4)
    assert abs(P[1] - exact2) < 5 * np.sqrt(exact2 / n)
    ell = np.log(P)
    assert ell[0] > ell[1] > ell[2]
    assert (ell[1] - ell[2]) > (ell[0] - ell[1])
    # implied C in (C p)^(2^(k-1)) keeps C p < 1
    assert all(np.exp(ell[k] / 2 ** k) < 1 for k in range(3))
