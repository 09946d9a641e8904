"""Block colouring driven by a feed of first infected entries.

A block is coloured at time t when (a) a neighbour was coloured at t - xi,
(b) an infected particle first enters it at t, or (c) some block is coloured
by (b) at t through an entry site x within l-infinity distance alpha L of it.
Times are kept as exact Fractions so the derived SSP replay can be compared
by equality.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .lattice import block_distance, block_of
from .ssp import BLUE, RED, SspConfig, run_ssp, validate_config

Block = Tuple[int, int]
Vertex = Tuple[int, int]
INF = math.inf


def exact(x) -> Fraction:
    """Exact rational value of a float, int, str or Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


@dataclass(frozen=True)
class ColouringConfig:
    L: int
    alpha: str = "0.01"         # kept as a decimal string so xi is exact
    kappa: int = 4096
    radius: int = 6              # region of blocks: |z|_inf <= radius
    bounds: Optional[Tuple[int, int]] = None   # overrides radius with zlo <= z_i <= zhi

    def __post_init__(self):
        if self.L < 2 or self.L % 2:
            raise ValueError("L must be even and >= 2")
        a = Fraction(str(self.alpha))
        if not 0 < a < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    @property
    def alpha_q(self) -> Fraction:
        return Fraction(str(self.alpha))

    @property
    def xi(self) -> Fraction:
        return self.alpha_q * self.L * self.L

    @property
    def alpha_L(self) -> Fraction:
        return self.alpha_q * self.L

    def regime_ok(self, nu: float) -> bool:
        """Whether nu^(-1/6) <= L <= 2 nu^(-1/6)."""
        if nu <= 0:
            return False
        s = nu ** (-1.0 / 6.0)
        return s <= self.L <= 2 * s

    @property
    def zrange(self) -> Tuple[int, int]:
        return tuple(self.bounds) if self.bounds is not None else (-self.radius, self.radius)

    def blocks(self) -> List[Block]:
        lo, hi = self.zrange
        return [(x, y) for x in range(lo, hi + 1) for y in range(lo, hi + 1)]

    def in_region(self, B: Block) -> bool:
        lo, hi = self.zrange
        return lo <= B[0] <= hi and lo <= B[1] <= hi


def block_box(B: Block, L: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    return tuple((z * L - L // 2, z * L + L // 2 - 1) for z in B)


def linf_to_block(x: Vertex, B: Block, L: int) -> int:
    return max(max(0, lo - c, c - hi) for c, (lo, hi) in zip(x, block_box(B, L)))


def l1_to_block(x: Vertex, B: Block, L: int) -> int:
    return sum(max(0, lo - c, c - hi) for c, (lo, hi) in zip(x, block_box(B, L)))


def U_x(x: Vertex, L: int, alpha_L) -> List[Block]:
    """Blocks within l-infinity distance alpha L of x, sorted."""
    b = block_of(x, L)
    out = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            B = (b[0] + dx, b[1] + dy)
            if linf_to_block(x, B, L) <= alpha_L:
                out.append(B)
    return sorted(out)


def block_neighbours(B: Block) -> List[Block]:
    return [(B[0] + 1, B[1]), (B[0] - 1, B[1]), (B[0], B[1] + 1), (B[0], B[1] - 1)]


@dataclass
class Ignition:
    site: Vertex
    pid: int
    time: Fraction
    source: Block          # block coloured by rule (b) at this ignition


@dataclass
class ColouringState:
    config: ColouringConfig
    t_end: Fraction
    tau: Dict[Block, Fraction] = field(default_factory=dict)
    cause: Dict[Block, str] = field(default_factory=dict)
    ignition: Dict[Block, Ignition] = field(default_factory=dict)
    pending: Dict[Block, Fraction] = field(default_factory=dict)   # earliest rule-(a) deadline not yet reached
    simultaneous_ab: int = 0

    def tau_or_inf(self, B: Block):
        return self.tau.get(B, INF)

    @property
    def ignited(self) -> Set[Block]:
        return set(self.ignition)

    def coloured_by(self, t) -> Set[Block]:
        return {B for B, s in self.tau.items() if s <= t}

    def to_dict(self) -> dict:
        def q(x):
            return f"{x.numerator}/{x.denominator}"
        return {
            "L": self.config.L, "alpha": self.config.alpha, "t_end": q(self.t_end),
            "tau": sorted([list(B), q(t), self.cause[B]] for B, t in self.tau.items()),
            "ignition": sorted([list(B), list(g.site), g.pid, q(g.time), list(g.source)]
                               for B, g in self.ignition.items()),
        }


class FeedOrderError(ValueError):
    pass


def ingest(feed: Iterable[Sequence], config: ColouringConfig, t_end,
           origin_entry: Optional[Tuple[Vertex, int]] = None) -> ColouringState:
    """Apply rules (a), (b), (c) in time order up to t_end.

    feed rows are (t, pid, entry site, ...) for first infected entries into blocks;
    at equal times rule (b) is applied before rule (a).
    """
    L, xi, aL = config.L, config.xi, config.alpha_L
    st = ColouringState(config=config, t_end=exact(t_end))
    heap: list = []
    seq = itertools.count()

    def colour(B, t, why, ign=None):
        st.tau[B] = t
        st.cause[B] = why
        if ign is not None:
            st.ignition[B] = ign
        st.pending.pop(B, None)
        for N in block_neighbours(B):
            if config.in_region(N) and N not in st.tau:
                d = t + xi
                if d < st.pending.get(N, INF):
                    st.pending[N] = d
                    heapq.heappush(heap, (d, next(seq), N))

    def drain(until, inclusive):
        # rule (a) deadlines strictly before `until` (or up to it when inclusive)
        while heap and (heap[0][0] < until or (inclusive and heap[0][0] == until)):
            d, _, B = heapq.heappop(heap)
            if B in st.tau or st.pending.get(B) != d:
                continue
            if d > st.t_end:
                heapq.heappush(heap, (d, next(seq), B))
                return
            colour(B, d, "a")

    last = None
    rows = list(feed)
    for row in rows:
        t, pid, x = exact(row[0]), int(row[1]), tuple(int(c) for c in row[2])
        if last is not None and t < last:
            raise FeedOrderError("feed is not time ordered")
        last = t
        if t > st.t_end:
            break
        drain(t, inclusive=False)
        B = block_of(x, L)
        if not config.in_region(B) or B in st.tau:
            continue
        if st.pending.get(B) == t:
            st.simultaneous_ab += 1
        ign = Ignition(site=x, pid=pid, time=t, source=B)
        colour(B, t, "b", ign)
        for B2 in U_x(x, L, aL):
            if B2 != B and config.in_region(B2) and B2 not in st.tau:
                colour(B2, t, "c", ign)
    drain(st.t_end, inclusive=True)
    return st


@dataclass
class LipschitzReport:
    ok: bool
    worst: Optional[Tuple[Block, Block]]
    worst_gap: Fraction


def check_lipschitz(st: ColouringState) -> LipschitzReport:
    """|tau_B - tau_B'| <= xi for neighbours; a block coloured by t_end - xi forces its neighbours."""
    xi = st.config.xi
    worst, gap, ok = None, Fraction(0), True
    for B, t in st.tau.items():
        for N in block_neighbours(B):
            if not st.config.in_region(N):
                continue
            if N in st.tau:
                g = abs(st.tau[N] - t)
                if g > gap:
                    gap, worst = g, (B, N)
                if g > xi:
                    ok = False
            elif t + xi <= st.t_end:
                ok = False
                worst, gap = (B, N), st.t_end - t
    return LipschitzReport(ok, worst, gap)


def audit_causes(st: ColouringState, feed: Iterable[Sequence]) -> List[str]:
    """Re-derive every block's cause from the feed and the colouring times."""
    L, xi, aL = st.config.L, st.config.xi, st.config.alpha_L
    first = {}
    for row in feed:
        t = exact(row[0])
        B = block_of(tuple(row[2]), L)
        if B not in first:
            first[B] = (t, tuple(row[2]), int(row[1]))
    bad = []
    for B, t in st.tau.items():
        c = st.cause[B]
        if c == "a":
            if not any(st.tau.get(N) == t - xi for N in block_neighbours(B)):
                bad.append(f"{B}: rule (a) without a neighbour at t - xi")
        elif c == "b":
            if first.get(B, (None,))[0] != t:
                bad.append(f"{B}: rule (b) time differs from first entry")
        elif c == "c":
            g = st.ignition[B]
            if st.cause.get(g.source) != "b" or st.tau[g.source] != t or linf_to_block(g.site, B, L) > aL:
                bad.append(f"{B}: rule (c) not justified")
        else:
            bad.append(f"{B}: unknown cause")
        if B in first and first[B][0] < t:
            bad.append(f"{B}: infected entry at {first[B][0]} precedes colouring")
        earlier = [st.tau[N] + xi for N in block_neighbours(B) if N in st.tau]
        if earlier and min(earlier) < t:
            bad.append(f"{B}: rule (a) deadline missed")
    return bad


def sir_precedence(st: ColouringState) -> Set[Tuple[Block, Block]]:
    """Adjacent pairs (B, B') ignited by the same ignition with d(x, B) < d(x, B')."""
    L = st.config.L
    pairs = set()
    for B, g in st.ignition.items():
        for N in block_neighbours(B):
            h = st.ignition.get(N)
            if h is None or h is not g:
                continue
            if l1_to_block(g.site, B, L) < l1_to_block(g.site, N, L):
                pairs.add((B, N))
    return pairs


@dataclass
class DerivedClocks:
    x_red: Dict[Tuple[Block, Block], Fraction]
    x_blue: Dict[Tuple[Block, Block], Fraction]
    red_cap: Fraction
    blue_cap: Fraction
    precedence: Set[Tuple[Block, Block]]


class PrecedenceCycle(RuntimeError):
    pass


def derive_clocks(st: ColouringState, kappa=None) -> DerivedClocks:
    """Case-wise clocks on every directed adjacent pair in the region; unknown tau counts as +inf."""
    kappa = st.config.kappa if kappa is None else kappa
    xi = st.config.xi
    rcap = xi / kappa
    prec = sir_precedence(st)
    _check_acyclic(prec)
    xr, xb = {}, {}
    for B in st.config.blocks():
        for N in block_neighbours(B):
            if not st.config.in_region(N):
                continue
            tB, tN = st.tau_or_inf(B), st.tau_or_inf(N)
            if tB == INF:
                xr[(B, N)], xb[(B, N)] = rcap, xi
                continue
            d = tN - tB
            if d > 0:
                xr[(B, N)] = min(d, rcap) if d != INF else rcap
                xb[(B, N)] = min(d, xi) if d != INF else xi
            elif d == 0 and (B, N) in prec:
                xr[(B, N)] = xb[(B, N)] = Fraction(0)
            else:
                xr[(B, N)], xb[(B, N)] = rcap, xi
    return DerivedClocks(xr, xb, rcap, xi, prec)


def _check_acyclic(prec):
    succ: Dict[Block, List[Block]] = {}
    for a, b in prec:
        succ.setdefault(a, []).append(b)
    state: Dict[Block, int] = {}
    for root in succ:
        if root in state:
            continue
        stack = [(root, iter(succ.get(root, [])))]
        state[root] = 1
        while stack:
            v, it = stack[-1]
            w = next(it, None)
            if w is None:
                state[v] = 2
                stack.pop()
            elif state.get(w) == 1:
                raise PrecedenceCycle(f"precedence cycle through {w}")
            elif w not in state:
                state[w] = 1
                stack.append((w, iter(succ.get(w, []))))


@dataclass
class CouplingReport:
    ok: bool
    compared: int
    mismatches: List[Tuple[Block, object, object]]
    red_outside: List[Block]
    first_divergent: Optional[Block]
    T: Dict[Block, object]
    C: Dict[Block, str]


def verify_coupling(st: ColouringState, clocks: DerivedClocks, seeds: Iterable[Block], kappa=None) -> CouplingReport:
    """Replay SSP on the block region with the derived clocks and compare T(B) with tau_B."""
    kappa = st.config.kappa if kappa is None else kappa
    seeds = frozenset(tuple(s) for s in seeds)
    cfg = SspConfig(vertices=frozenset(st.config.blocks()), kappa=kappa, seeds=seeds, origin=(0, 0),
                    x_red=dict(clocks.x_red), x_blue=dict(clocks.x_blue), red_default=clocks.red_cap,
                    blue_default=clocks.blue_cap, red_cap=clocks.red_cap, blue_cap=clocks.blue_cap)
    rep = validate_config(cfg)
    if not rep.ok:
        raise PrecedenceCycle(f"derived clocks invalid: {rep}")
    ssp = run_ssp(cfg)
    t_end = st.t_end
    mism = []
    compared = 0
    for B in sorted(st.config.blocks()):
        T = ssp.T.get(B, INF)
        tau = st.tau_or_inf(B)
        if min(T, tau) > t_end:
            continue
        compared += 1
        if T != tau:
            mism.append((B, T, tau))
    ign = st.ignited | {(0, 0)}
    red_out = sorted(B for B, c in ssp.C.items() if c == RED and ssp.T[B] <= t_end and (B not in ign or B in seeds))
    first = min(mism, key=lambda m: min(m[1], m[2]))[0] if mism else None
    return CouplingReport(ok=not mism and not red_out, compared=compared, mismatches=mism, red_outside=red_out,
                          first_divergent=first, T=ssp.T, C=ssp.C)
