"""Multi-scale decomposition of a blue-seed set.

Level 1 keeps seeds isolated within distance r_1/3; level k keeps residual
seeds with no residual seed at distance in [r_{k-1}, r_k/3]. Fractional radii
are floored. Engulfing sets are unions of L1 disks around each level,
radius r_k/100 for D and 100 r_{k-1} for C; their fills are taken relative
to a rectangular frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import ndimage

from .lattice import fill_mask, l1_distance

Vertex = Tuple[int, int]
PROOF_CONSTANT = 1e12
MAX_LEVEL = 8


@dataclass(frozen=True)
class ScaleSequence:
    r: Tuple[int, ...]

    def __post_init__(self):
        r = tuple(int(x) for x in self.r)
        object.__setattr__(self, "r", r)
        if len(r) < 2 or r[0] != 1:
            raise ValueError("need r_0 = 1 and at least r_1")
        if r[1] < 1 or any(b <= a for a, b in zip(r[1:], r[2:])):
            raise ValueError("scales must be strictly increasing from index 1")

    @property
    def K(self) -> int:
        return len(self.r) - 1


TOY = ScaleSequence((1, 9, 900, 90000))


@dataclass
class GammaReport:
    partial: float
    bound: float
    ok: bool
    constant: float
    tail: str


def validate_gamma(seq: ScaleSequence, constant: float = PROOF_CONSTANT, tail_c: Optional[float] = None) -> GammaReport:
    """prod (1 + constant r_i / r_{i+1}) over the prefix, times an analytic tail bound.

    With tail_c the sequence is assumed to continue as r_{i+1} = tail_c (i+1)^2 r_i
    past the prefix, and the tail is bounded by exp(constant / tail_c * sum_{j>m} j^-2).
    Without tail_c only the prefix product is available and the bound equals it.
    """
    r = seq.r
    log_p = sum(math.log1p(constant * a / b) for a, b in zip(r, r[1:]))
    partial = math.exp(log_p) if log_p < 700 else math.inf
    if tail_c is None:
        return GammaReport(partial, partial, partial < 2, constant, "prefix only")
    m = len(r) - 1  # first tail index i = m uses 1/(m+1)^2
    tail_sum = math.pi ** 2 / 6 - sum(1.0 / j ** 2 for j in range(1, m + 1))
    log_b = log_p + constant / tail_c * tail_sum
    bound = math.exp(log_b) if log_b < 700 else math.inf
    return GammaReport(partial, bound, bound < 2, constant, f"r_(i+1) = {tail_c:g} (i+1)^2 r_i")


def gamma_modes(seq: ScaleSequence, tail_c: Optional[float] = None) -> Dict[str, bool]:
    """Pass/fail with the large constant and with the constant set to 1."""
    return {"proof_constant": validate_gamma(seq, PROOF_CONSTANT, tail_c).ok,
            "toy": validate_gamma(seq, 1.0, tail_c).ok}


@dataclass
class MultiscaleDecomposition:
    seq: ScaleSequence
    seeds: frozenset
    levels: List[Set[Vertex]]      # A_1 .. A_K
    residuals: List[Set[Vertex]]   # B_{*,1} .. B_{*,K+1}

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def exhaustive(self) -> bool:
        return not self.residuals[-1]

    def level_of(self, v: Vertex) -> Optional[int]:
        for k, A in enumerate(self.levels, start=1):
            if v in A:
                return k
        return None

    def to_dict(self) -> dict:
        return {"scales": list(self.seq.r), "levels": [sorted(list(v) for v in A) for A in self.levels],
                "residual": sorted(list(v) for v in self.residuals[-1]), "exhaustive": self.exhaustive}


def _pairwise_l1(pts: np.ndarray) -> np.ndarray:
    return np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)


def decompose(seeds: Iterable[Sequence[int]], seq: ScaleSequence, K: Optional[int] = None) -> MultiscaleDecomposition:
    """Exact level sets A_k and residuals B_{*,k}.

    K defaults to the first k with an empty residual B_{*,k+1}, capped at 8 and at the sequence length.
    """
    pts = sorted({tuple(int(c) for c in v) for v in seeds})
    kmax = min(seq.K, MAX_LEVEL) if K is None else min(K, seq.K)
    levels: List[Set[Vertex]] = []
    residuals: List[Set[Vertex]] = [set(pts)]
    alive = np.ones(len(pts), dtype=bool)
    P = np.array(pts, dtype=np.int64).reshape(-1, 2)
    D = _pairwise_l1(P) if len(pts) <= 4000 else None
    for k in range(1, kmax + 1):
        idx = np.nonzero(alive)[0]
        if k == 1:
            lo, hi = 1, seq.r[1] // 3  # D(x, r_1/3) minus x itself
        else:
            lo, hi = seq.r[k - 1], seq.r[k] // 3
        A = set()
        for i in idx:
            if hi < lo:
                A.add(pts[i])
                continue
            if D is not None:
                d = D[i, idx]
            else:
                d = np.abs(P[idx] - P[i]).sum(axis=1)
            if not np.any((d >= lo) & (d <= hi)):
                A.add(pts[i])
        levels.append(A)
        for i in idx:
            if pts[i] in A:
                alive[i] = False
        residuals.append({pts[i] for i in np.nonzero(alive)[0]})
        if K is None and not residuals[-1]:
            break
    return MultiscaleDecomposition(seq=seq, seeds=frozenset(pts), levels=levels, residuals=residuals)


def _ring_kernel(lo: int, hi: int) -> np.ndarray:
    i = np.arange(-hi, hi + 1)
    d = np.abs(i)[:, None] + np.abs(i)[None, :]
    return ((d >= lo) & (d <= hi)).astype(np.float64)


def decompose_mask(seeds: np.ndarray, seq: ScaleSequence, K: int) -> List[np.ndarray]:
    """Residual masks B_{*,1} .. B_{*,K+1} for a seed mask, by counting residual seeds in each annulus."""
    from scipy.signal import fftconvolve

    alive = seeds.astype(bool).copy()
    out = [alive.copy()]
    for k in range(1, min(K, seq.K) + 1):
        lo, hi = (1, seq.r[1] // 3) if k == 1 else (seq.r[k - 1], seq.r[k] // 3)
        hi = min(hi, sum(alive.shape))  # no pair in the array is farther apart
        if hi >= lo and alive.any():
            ker = _ring_kernel(lo, hi)
            if ker.size <= 121:
                cnt = ndimage.convolve(alive.astype(np.float64), ker, mode="constant")
            else:
                cnt = fftconvolve(alive.astype(np.float64), ker, mode="same")
            level = alive & (np.rint(cnt) == 0)
        else:
            level = alive.copy()
        alive = alive & ~level
        out.append(alive.copy())
    return out


@dataclass(frozen=True)
class Frame:
    """Rectangle x0..x1, y0..y1 on which sets are held as boolean masks."""
    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def shape(self) -> Tuple[int, int]:
        return self.x1 - self.x0 + 1, self.y1 - self.y0 + 1

    def contains(self, v) -> bool:
        return self.x0 <= v[0] <= self.x1 and self.y0 <= v[1] <= self.y1

    def mask(self, A: Iterable[Sequence[int]]) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for v in A:
            if self.contains(v):
                m[v[0] - self.x0, v[1] - self.y0] = True
        return m

    def to_set(self, m: np.ndarray) -> Set[Vertex]:
        return {(int(i) + self.x0, int(j) + self.y0) for i, j in zip(*np.nonzero(m))}

    def band(self) -> np.ndarray:
        b = np.zeros(self.shape, dtype=bool)
        b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
        return b

    def at(self, m: np.ndarray, v) -> bool:
        return self.contains(v) and bool(m[v[0] - self.x0, v[1] - self.y0])


def disk_union_mask(frame: Frame, A: Iterable[Sequence[int]], r: int) -> np.ndarray:
    """D(A, r) within the frame; A must lie in the frame."""
    A = list(A)
    if not A or r < 0:
        return np.zeros(frame.shape, dtype=bool)
    if any(not frame.contains(a) for a in A):
        raise ValueError("centres must lie in the frame")
    m = frame.mask(A)
    dist = ndimage.distance_transform_cdt(~m, metric="taxicab")
    return dist <= r


@dataclass
class EngulfingSets:
    frame: Frame
    D: np.ndarray
    C: np.ndarray
    fill_D: np.ndarray
    fill_C: np.ndarray
    D_levels: List[np.ndarray]
    C_levels: List[np.ndarray]
    lower_bound: bool          # decomposition not exhaustive
    D_touches_band: bool
    C_touches_band: bool


def build_engulfing_sets(dec: MultiscaleDecomposition, frame: Frame, cap: Optional[int] = None) -> EngulfingSets:
    """D and C on the frame. With `cap`, disk radii are clipped to it; a clipped disk already covers
    every site within l1 distance `cap` of its centre, which is all that region-restricted checks need."""
    r = dec.seq.r
    lim = (lambda v: v) if cap is None else (lambda v: min(v, cap))
    Dl, Cl = [], []
    D = np.zeros(frame.shape, dtype=bool)
    C = np.zeros(frame.shape, dtype=bool)
    for k, A in enumerate(dec.levels, start=1):
        D = D | disk_union_mask(frame, A, lim(r[k] // 100))
        C = C | disk_union_mask(frame, A, lim(100 * r[k - 1]))
        Dl.append(D.copy())
        Cl.append(C.copy())
    band = frame.band()
    return EngulfingSets(frame=frame, D=D, C=C, fill_D=fill_mask(D), fill_C=fill_mask(C), D_levels=Dl,
                         C_levels=Cl, lower_bound=not dec.exhaustive, D_touches_band=bool((D & band).any()),
                         C_touches_band=bool((C & band).any()))


def containment_hypotheses(dec: MultiscaleDecomposition, eng: EngulfingSets, origin: Vertex = (0, 0)) -> bool:
    """Hypotheses of the containment check: exhaustive levels and origin outside [D]."""
    return dec.exhaustive and not eng.frame.at(eng.fill_D, origin)


def local_approximation(B: Sequence[int], r: int, seeds: Iterable[Sequence[int]], seq: ScaleSequence,
                        frame: Frame) -> np.ndarray:
    """[D] built only from seeds within L1 distance r of B."""
    near = [tuple(v) for v in seeds if l1_distance(v, B) <= r]
    dec = decompose(near, seq)
    return build_engulfing_sets(dec, frame).fill_D


def stabilization_radius(B: Sequence[int], seeds: Iterable[Sequence[int]], seq: ScaleSequence, frame: Frame,
                         r_max: Optional[int] = None) -> int:
    """Smallest r from which membership of B in [D(B, r')] agrees with [D] for every r' >= r up to r_max."""
    seeds = [tuple(v) for v in seeds]
    if r_max is None:
        r_max = max([l1_distance(v, B) for v in seeds], default=0)
    target = frame.at(build_engulfing_sets(decompose(seeds, seq), frame).fill_D, B)
    radii = sorted({l1_distance(v, B) for v in seeds if l1_distance(v, B) <= r_max} | {0})
    stable = r_max
    for rr in reversed(radii):
        if frame.at(local_approximation(B, rr, seeds, seq, frame), B) != target:
            break
        stable = rr
    return stable


def largest_component_diameter(S, probe_center: Sequence[int], probe_r: int, frame: Optional[Frame] = None) -> int:
    """L1 diameter of the widest 4-connected component of S meeting D(probe_center, probe_r); 0 if none."""
    if isinstance(S, np.ndarray):
        if frame is None:
            raise ValueError("mask input needs a frame")
        m = S
    else:
        pts = [tuple(v) for v in S]
        if not pts:
            return 0
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        frame = Frame(min(xs) - 1, max(xs) + 1, min(ys) - 1, max(ys) + 1)
        m = frame.mask(pts)
    lab, n = ndimage.label(m)
    if n == 0:
        return 0
    ii, jj = np.nonzero(lab)
    x = ii + frame.x0
    y = jj + frame.y0
    labs = lab[ii, jj]
    near = np.abs(x - probe_center[0]) + np.abs(y - probe_center[1]) <= probe_r
    hit = np.unique(labs[near])
    best = 0
    for k in hit:
        sel = labs == k
        s, d = x[sel] + y[sel], x[sel] - y[sel]
        best = max(best, int(max(s.max() - s.min(), d.max() - d.min())))
    return best
