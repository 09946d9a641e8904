"""Block-Poisson construction of the SIR process and the blue-seed events.

Each block B carries an independent Poisson process M_B of two-sided walks plus
an ignition pair (W_{B,ig}, W^h_{B,ig}). A particle of M_B joins the process,
shifted by tau_B, exactly when its shifted path first meets a coloured block in
B: at tau_B if it sits in B at its own time 0, or at its first entry into B
during (tau_B, tau_B + xi]. An infected particle entering an uncoloured block
ignites it and from then on follows x + W_{B_x,ig}.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import stats

from . import _block_kernel as K
from .colouring import ColouringConfig, U_x, ingest, linf_to_block
from .engine import MetricsSample, TrajectoryReport, _sample_times
from .lattice import RngStream, Window, block_distance
from .rng import make_state

Block = Tuple[int, int]
CAUSES = {K.CAUSE_A: "a", K.CAUSE_B: "b", K.CAUSE_C: "c"}


def loglog(L: int) -> float:
    return math.log(math.log(L))


def case2_radius(xi: float, tail: float) -> int:
    """Smallest r with P(Poisson(xi) >= r) < tail: a walk from further out cannot reach B within xi."""
    r = 1
    while stats.poisson.sf(r - 1, xi) >= tail:
        r += 1
    return r


@dataclass(frozen=True)
class BlockEngineConfig:
    mu: float
    nu: float
    L: int
    window: Window
    t_max: float
    alpha: str = "0.01"
    kappa: int = 4096
    cadence: float = 1.0
    disk_c: float = 0.1
    rc_tail: float = 1e-12
    record_log: bool = False

    def __post_init__(self):
        if self.mu < 0 or self.nu < 0 or not self.t_max > 0:
            raise ValueError("need mu >= 0, nu >= 0, t_max > 0")
        if self.L < 2 or self.L % 2:
            raise ValueError("L must be even and >= 2")
        if self.window.dim != 2:
            raise ValueError("the block construction is two-dimensional")
        if not 0 < Fraction(str(self.alpha)) < Fraction(1, 2):
            raise ValueError("alpha must lie in (0, 1/2)")

    @property
    def xi(self) -> float:
        return float(Fraction(str(self.alpha)) * self.L * self.L)

    @property
    def alpha_L(self) -> float:
        return float(Fraction(str(self.alpha)) * self.L)

    @property
    def rc(self) -> int:
        return case2_radius(self.xi, self.rc_tail)

    @property
    def zrange(self) -> Tuple[int, int]:
        h, R = self.L // 2, self.window.radius
        return (-R + h) // self.L, (R + h) // self.L

    def colouring_config(self) -> ColouringConfig:
        return ColouringConfig(L=self.L, alpha=self.alpha, kappa=self.kappa, bounds=self.zrange)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = {"radius": self.window.radius, "margin": self.window.margin, "dim": self.window.dim}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BlockEngineConfig":
        d = dict(d)
        w = d.pop("window")
        if isinstance(w, dict):
            w = Window(int(w["radius"]), int(w.get("margin", 1)), int(w.get("dim", 2)))
        return cls(window=w, **d)


def root_key(rng: RngStream) -> int:
    return rng.child("blocks").key


class BlockSimState:
    """Arrays of one block-construction run. Not thread-safe."""

    def __init__(self, config: BlockEngineConfig, rng: RngStream, log_capacity: int = 0):
        self.config = config
        w = config.window
        self.radius = w.radius
        self.root = np.uint64(root_key(rng))
        zlo, zhi = config.zrange
        self.zmin, self.nz = zlo, zhi - zlo + 1
        nb = self.nz * self.nz
        self.nb = nb
        self.bi = np.full((nb, K.N_BI), -1, dtype=np.int64)
        rc = config.rc
        self.rc = rc
        cap = int(1.3 * config.mu * (w.side ** 2) + 8 * nb * config.mu * config.L * (rc + 2) + 1024)
        while True:
            ci = np.zeros((cap, K.N_CI), dtype=np.int64)
            cf = np.zeros(cap)
            cu = np.zeros((cap, 2), dtype=np.uint64)
            n = K.sample_candidates(self.root, float(config.mu), config.xi, config.L, self.zmin, self.nz,
                                    self.radius, rc, ci, cf, cu, self.bi)
            if n >= 0:
                break
            cap *= 2
        self.ncand = n
        self.ci, self.cf, self.cu = ci[:n], cf[:n], cu[:n]
        npart = n + 1
        self.pi = np.full((npart, K.N_PI), -1, dtype=np.int64)
        self.pf = np.full((npart, K.N_PF), np.inf)
        self.pu = np.zeros((npart, 2), dtype=np.uint64)
        nsites = w.side ** 2
        self.headS = np.full(nsites, -1, dtype=np.int64)
        self.nxtS = np.full(npart, -1, dtype=np.int64)
        self.prvS = np.full(npart, -1, dtype=np.int64)
        self.headI = np.full(nsites, -1, dtype=np.int64)
        self.nxtI = np.full(npart, -1, dtype=np.int64)
        self.prvI = np.full(npart, -1, dtype=np.int64)
        self.cntI = np.zeros(nsites, dtype=np.int64)
        hcap = 3 * npart + n + 8 * nb + 64
        self.ht = np.zeros(hcap)
        self.hk = np.zeros(hcap, dtype=np.int64)
        self.bt = np.full((nb, 2), np.inf)
        self.iv = np.zeros(K.N_IV, dtype=np.int64)
        self.fv = np.zeros(K.N_FV)
        self.fv[K.CENSOR_T] = np.inf
        self.fv[K.EXTINCT_T] = np.inf
        self.feed_seen = np.zeros(nb, dtype=np.int8)
        self.feed_t = np.zeros(nb)
        self.feed_i = np.zeros((nb, 5), dtype=np.int64)
        cap_log = log_capacity if config.record_log else 0
        self.lg_t = np.zeros(cap_log)
        self.lg_i = np.zeros((cap_log, 5), dtype=np.int64)
        self.params = np.zeros(K.N_PARAMS)
        self.params[[K.P_RADIUS, K.P_MARGIN, K.P_NU, K.P_XI, K.P_ALPHAL, K.P_L, K.P_ZMIN, K.P_NZ, K.P_LOG]] = [
            w.radius, w.margin, config.nu, config.xi, config.alpha_L, config.L, self.zmin, self.nz,
            1.0 if cap_log else 0.0]
        self._start()

    def _start(self) -> None:
        # the initially infected particle sits at the origin and ignites B0 at time 0
        p = 0
        self.pi[p] = [0, 0, K.I, self._bidx((0, 0)), -1, -1]
        self.pf[p, K.IOTA] = 0.0
        self.iv[K.N_P] = 1
        self.iv[K.N_INF] = 1
        s = self._site((0, 0))
        K._link(p, s, self.headI, self.nxtI, self.prvI)
        self.cntI[s] += 1
        self.feed_seen[self._bidx((0, 0))] = 1
        self.feed_t[0] = 0.0
        self.feed_i[0] = [p, 0, 0, 0, 0]
        self.iv[K.FEED_N] = 1
        K.ignite(p, 0, 0, 0.0, self.root, self.params, self.iv, self.pi, self.pf, self.pu, self.bt, self.bi,
                 self.ht, self.hk, self.cf, self.lg_t, self.lg_i)
        inner = self.radius - self.config.window.margin
        if inner < 0:
            self.iv[K.CENSORED] = 1
            self.fv[K.CENSOR_T] = 0.0

    def _site(self, v) -> int:
        return int(K.site_of(int(v[0]), int(v[1]), self.radius))

    def _bidx(self, v) -> int:
        L = self.config.L
        bx, by = (int(v[0]) + L // 2) // L, (int(v[1]) + L // 2) // L
        return (bx - self.zmin) * self.nz + (by - self.zmin)

    def block_of_index(self, b: int) -> Block:
        return (int(b) // self.nz + self.zmin, int(b) % self.nz + self.zmin)

    def index_of_block(self, B: Block) -> int:
        return (B[0] - self.zmin) * self.nz + (B[1] - self.zmin)

    # -- views -----------------------------------------------------------
    @property
    def now(self) -> float:
        return float(self.fv[K.NOW])

    @property
    def censored(self) -> bool:
        return bool(self.iv[K.CENSORED])

    @property
    def front(self) -> int:
        return int(self.iv[K.FRONT])

    @property
    def counts(self) -> Tuple[int, int, int]:
        """(revealed susceptibles, infected, removed)."""
        return int(self.iv[K.N_S]), int(self.iv[K.N_INF]), int(self.iv[K.N_R])

    @property
    def n_revealed(self) -> int:
        return int(self.iv[K.N_P])

    def tau(self) -> Dict[Block, float]:
        return {self.block_of_index(b): float(t) for b, t in enumerate(self.bt[:, 0]) if np.isfinite(t)}

    def causes(self) -> Dict[Block, str]:
        return {self.block_of_index(b): CAUSES[int(c)] for b, c in enumerate(self.bi[:, K.BCAUSE]) if c >= 0}

    def ignitions(self) -> Dict[Block, tuple]:
        out = {}
        for b in range(self.nb):
            if self.bi[b, K.BCAUSE] in (K.CAUSE_B, K.CAUSE_C):
                out[self.block_of_index(b)] = (int(self.bi[b, K.BIGP]), (int(self.bi[b, K.BIGX]),
                                               int(self.bi[b, K.BIGY])), self.block_of_index(self.bi[b, K.BIGSRC]))
        return out

    def block_feed(self) -> List[tuple]:
        return [(float(self.feed_t[i]), int(self.feed_i[i, 0]), (int(self.feed_i[i, 1]), int(self.feed_i[i, 2])),
                 (int(self.feed_i[i, 3]), int(self.feed_i[i, 4]))) for i in range(int(self.iv[K.FEED_N]))]

    def revealed_by_block(self) -> Dict[Block, List[int]]:
        """H_B as particle ids; the initial ignition particle counts for B0."""
        out: Dict[Block, List[int]] = {}
        for p in range(self.n_revealed):
            out.setdefault(self.block_of_index(self.pi[p, K.PBLK]), []).append(p)
        return out

    def log(self) -> List[tuple]:
        n = int(self.iv[K.LOG_N])
        return [(float(self.lg_t[i]), *[int(v) for v in self.lg_i[i]]) for i in range(n)]

    def colouring(self, t_end: Optional[float] = None):
        return ingest(self.block_feed(), self.config.colouring_config(), self.now if t_end is None else t_end)


def init_block_state(config: BlockEngineConfig, rng: RngStream) -> BlockSimState:
    cap = int(8 * config.mu * config.window.side ** 2 * config.t_max + 4096) if config.record_log else 0
    return BlockSimState(config, rng, log_capacity=cap)


def advance_blocks(state: BlockSimState, t: float) -> int:
    if t < state.now:
        raise ValueError("cannot advance backwards in time")
    return int(K.advance(float(t), state.root, state.params, state.iv, state.fv, state.pi, state.pf, state.pu,
                         state.ci, state.cf, state.cu, state.bt, state.bi,
                         state.headS, state.nxtS, state.prvS, state.headI, state.nxtI, state.prvI, state.cntI,
                         state.ht, state.hk, state.feed_seen, state.feed_t, state.feed_i, state.lg_t, state.lg_i))


def observe_block_metrics(state: BlockSimState, disk_radius: Optional[float] = None) -> MetricsSample:
    """Same fields as the direct engine; n_S and s_in_disk count revealed susceptibles only."""
    t = state.now
    rc = state.config.disk_c * t if disk_radius is None else disk_radius
    inner, s_in, i_in = K.observe(float(rc), state.iv, state.pi)
    nS, nI, nR = state.counts
    return MetricsSample(t=t, n_S=nS, n_I=nI, n_R=nR, front=state.front, inner=float(inner),
                         s_in_disk=int(s_in), i_in_disk=int(i_in), disk_radius=float(rc))


@dataclass
class BlockRun:
    report: TrajectoryReport
    state: BlockSimState


def run_block_sir(config: BlockEngineConfig, seed: int, path: Sequence[int] = (),
                  times: Optional[Sequence[float]] = None) -> BlockRun:
    """Run to t_max (or extinction or censoring), sampling at the cadence or at the given times."""
    t0 = time.perf_counter()
    state = init_block_state(config, RngStream(int(seed), tuple(path)))
    samples = [observe_block_metrics(state)]
    cause = "censored" if state.censored else "t_max"
    if cause != "censored":
        for t in (times if times is not None else _sample_times(config.t_max, config.cadence)):
            st = advance_blocks(state, t)
            if st == K.ST_CENSORED:
                cause = "censored"
                break
            samples.append(observe_block_metrics(state))
            if st == K.ST_EXTINCT:
                cause = "extinction"
                break
    if cause == "censored":
        samples.append(observe_block_metrics(state))
    iv = state.iv
    ev = {"jumps": int(iv[K.N_JUMPS]), "infections": int(iv[K.N_INFECT]), "heals": int(iv[K.N_HEAL]),
          "particles": state.n_revealed, "candidates": state.ncand, "reveals": int(iv[K.N_REVEAL]),
          "reveal_rejections": int(iv[K.N_REJECT]), "switches": int(iv[K.N_SWITCH]),
          "simultaneous_ab": int(iv[K.N_SIMULT]), "coloured": int(iv[K.N_COLOURED])}
    rep = TrajectoryReport(
        config=config.to_dict(), seed=int(seed), path=tuple(path), samples=samples, termination=cause,
        end_time=state.now, censor_time=float(state.fv[K.CENSOR_T]), extinction_time=float(state.fv[K.EXTINCT_T]),
        event_counts=ev, probe_first=[], probe_last=[], probe_duration=[], block_feed=state.block_feed(),
        wall_time=time.perf_counter() - t0, engine="block")
    return BlockRun(rep, state)


# -- run audits -------------------------------------------------------------

def check_tau_against_colouring(state: BlockSimState, t_end: Optional[float] = None) -> List[str]:
    """The engine's colouring equals the exact replay of its own feed (up to float rounding of tau + k xi)."""
    t_end = state.now if t_end is None else t_end
    col = state.colouring(t_end)
    eng, cause = state.tau(), state.causes()
    bad = []
    for B in set(eng) | set(col.tau):
        te, tc = eng.get(B, math.inf), col.tau.get(B)
        if tc is None:
            if te <= t_end:
                bad.append(f"{B}: engine coloured at {te}, replay did not")
            continue
        if not math.isclose(te, float(tc), rel_tol=1e-12, abs_tol=1e-9):
            bad.append(f"{B}: engine {te} vs replay {float(tc)}")
        elif cause.get(B) != col.cause[B]:
            bad.append(f"{B}: cause {cause.get(B)} vs {col.cause[B]}")
    return bad


def check_partition(state: BlockSimState, T_back_cap: float = math.inf) -> List[str]:
    """Each revealed particle comes from one candidate; principal particles of coloured blocks are revealed by them."""
    cfg = state.config
    bad = []
    n = state.n_revealed
    cand = state.pi[1:n, K.PCAND]
    if len(set(cand.tolist())) != len(cand):
        bad.append("a candidate was revealed twice")
    if np.any(state.ci[cand, K.CBLK] != state.pi[1:n, K.PBLK]):
        bad.append("revealed particle assigned to a foreign block")
    if np.any(state.cf[cand] > cfg.xi):
        bad.append("revealed particle outside H_B^+")
    revealed = set(cand.tolist())
    L, h = cfg.L, cfg.L // 2
    for b in range(state.nb):
        tau = state.bt[b, 0]
        if not tau <= state.now:
            continue
        bx, by = state.block_of_index(b)
        lox, loy = bx * L - h, by * L - h
        for c in range(state.bi[b, K.BCS], state.bi[b, K.BCE]):
            if state.cf[c] != 0.0:
                continue
            # principal over the part of the past that the reveal test sees
            st = K.cone_status(state.cu[c, K.CKEY], state.ci[c, K.CX0], state.ci[c, K.CY0], lox, lox + L - 1,
                               loy, loy + L - 1, L, cfg.xi, min(tau, T_back_cap), state.radius)
            if st > 0 and c not in revealed:
                bad.append(f"principal candidate {c} of block {(bx, by)} not revealed")
    return bad


def check_ignition_trace(state: BlockSimState) -> List[str]:
    """After each switch the particle follows x + W_{B_x,ig} exactly (needs a recorded log)."""
    if state.iv[K.LOG_OVERFLOW]:
        return ["log overflow"]
    log = state.log()
    by_p: Dict[int, List[int]] = {}
    for i, e in enumerate(log):
        if e[1] != K.LG_COLOUR:
            by_p.setdefault(e[2], []).append(i)
    bad = []
    radius = state.radius
    for i, e in enumerate(log):
        if e[1] != K.LG_SWITCH:
            continue
        t0, _, p, x, y, b = e
        B = state.block_of_index(b)
        bk = K.block_key(state.root, B[0], B[1])
        st = make_state(K.subkey(np.uint64(bk), 0, 0, K.TAG_IG_WALK))
        later = [log[j] for j in by_p[p] if j > i]
        prev = [log[j] for j in by_p[p] if j < i and log[j][1] in (K.LG_JUMP, K.LG_REVEAL)]
        if prev and (prev[-1][3], prev[-1][4]) != (x, y) and not (p == 0 and t0 == 0.0):
            bad.append(f"particle {p} switches away from its position at {t0}")
        own, cx, cy = 0.0, x, y
        for f in later:
            if f[1] == K.LG_SWITCH or f[1] == K.LG_HEAL:
                break
            if f[1] != K.LG_JUMP:
                continue
            while True:
                own += K.exponential(st, 1.0)
                d = K.randbelow(st, 4)
                nx, ny = K.step(cx, cy, d, radius)
                if (nx, ny) != (cx, cy):
                    break
            cx, cy = nx, ny
            if not (math.isclose(t0 + own, f[0], rel_tol=1e-12, abs_tol=1e-9) and (cx, cy) == (f[3], f[4])):
                bad.append(f"particle {p} leaves its ignition path after {t0}")
                break
    return bad


# -- blue-seed events --------------------------------------------------------

@dataclass(frozen=True)
class SeedParams:
    L: int
    mu: float
    nu: float
    alpha: str = "0.01"
    kappa: int = 4096
    radius: int = -1            # window for rejected walks; -1 is the whole lattice
    t_back_xi: float = 12.0     # principal test horizon in units of xi

    @property
    def xi(self) -> float:
        return float(Fraction(str(self.alpha)) * self.L * self.L)

    @property
    def alpha_L(self) -> float:
        return float(Fraction(str(self.alpha)) * self.L)

    @property
    def w1(self) -> float:
        """Window for the ignition confinement and the meeting counts."""
        return self.xi / loglog(self.L)

    @property
    def w2(self) -> float:
        """Window for the meet-then-enter event; never longer than xi / kappa."""
        return self.xi / max(loglog(self.L), self.kappa)

    @property
    def heal_horizon(self) -> float:
        return float(self.L) ** 3

    @property
    def q_threshold(self) -> int:
        return int(math.floor(self.L ** (2.0 - 1.0 / math.sqrt(math.log(self.L)))))

    @property
    def t_back(self) -> float:
        return self.t_back_xi * self.xi


@dataclass
class ParticleTable:
    x0: np.ndarray
    y0: np.ndarray
    status: np.ndarray    # 0 not principal, 1 principal, 2 principal on the horizon without slack
    heal1: np.ndarray     # first healing point after own time 0
    seg_ptr: np.ndarray
    seg_t: np.ndarray
    seg_x: np.ndarray
    seg_y: np.ndarray

    @property
    def principal(self) -> np.ndarray:
        return self.status > 0

    def __len__(self) -> int:
        return len(self.x0)


class BlockProcess:
    """M_B: particles starting in B and the ignition pair, generated on demand from keyed streams."""

    def __init__(self, block: Block, root: int, params: SeedParams):
        self.block = tuple(block)
        self.root = np.uint64(root)
        self.params = params
        key, h1 = K.ignition_keys(self.root, self.block[0], self.block[1], float(params.nu))
        self.ig_key = np.uint64(key)
        self.ig_heal1 = float(h1)

    @cached_property
    def particles(self) -> ParticleTable:
        p = self.params
        L = p.L
        w = max(p.w1, p.w2)
        cap = int(2 * p.mu * L * L + 64)
        while True:
            x0 = np.zeros(cap, dtype=np.int64)
            y0 = np.zeros(cap, dtype=np.int64)
            status = np.zeros(cap, dtype=np.int64)
            heal1 = np.zeros(cap)
            ptr = np.zeros(cap + 1, dtype=np.int64)
            scap = int(cap * (w + 10 * math.sqrt(w) + 8))
            st, sx, sy = np.zeros(scap), np.zeros(scap, dtype=np.int64), np.zeros(scap, dtype=np.int64)
            n = K.block_particles(self.root, self.block[0], self.block[1], float(p.mu), float(p.nu), L, p.xi,
                                  p.t_back, w, p.radius, x0, y0, status, heal1, ptr, st, sx, sy)
            if n >= 0:
                m = ptr[n]
                return ParticleTable(x0[:n], y0[:n], status[:n], heal1[:n], ptr[:n + 1], st[:m], sx[:m], sy[:m])
            cap *= 2

    def region_count(self, r: int) -> int:
        """Time-0 particle count over the sites within l-inf distance r of B."""
        return int(K.region_count(self.root, self.block[0], self.block[1], float(self.params.mu), self.params.L, int(r)))

    def ig_path(self, x: Block, w: float, radius: Optional[int] = None):
        """x + W_{B,ig} on [0, w] as (start times, xs, ys)."""
        r = self.params.radius if radius is None else radius
        cap = int(w + 10 * math.sqrt(w) + 64)
        while True:
            st, sx, sy = np.zeros(cap), np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64)
            n = K.walk_segments(self.ig_key, int(x[0]), int(x[1]), float(w), r, st, sx, sy, 0)
            if n >= 0:
                return st[:n], sx[:n], sy[:n]
            cap *= 2

    def ig_sup_norm(self, w: float) -> int:
        _, sx, sy = self.ig_path((0, 0), w, radius=-1)
        return int(np.max(np.abs(sx) + np.abs(sy)))


def sample_block_process(B: Block, params: SeedParams, rng: RngStream) -> BlockProcess:
    return BlockProcess(B, root_key(rng), params)


def past_walk(pkey: int, x0: int, y0: int, T_back: float, radius: int = -1) -> List[Tuple[float, int, int]]:
    """Backward path of a keyed particle as [(own time of jump, position just before it in forward time)]."""
    st = make_state(K.stream(np.uint64(pkey), K.STREAM_PAST))
    out = []
    o, x, y = 0.0, x0, y0
    while True:
        o -= float(K.exponential(st, 1.0))
        if -o > T_back:
            return out
        d = int(K.randbelow(st, 4))
        x, y = K.step(x, y, d, radius)
        out.append((o, int(x), int(y)))


def is_principal(x0: Block, past: Sequence[Tuple[float, int, int]], B: Block, L: int, xi: float) -> bool:
    """sup over t <= 0 of d(a(t), B) - L*floor(|t|/(4 xi)) equals 0, for a path constant between the listed jumps."""
    h = L // 2
    lo = (B[0] * L - h, B[1] * L - h)

    def d(v):
        return sum(max(0, lo[i] - v[i], v[i] - (lo[i] + L - 1)) for i in range(2))

    if d(x0) > 0:
        return False
    # on (o_{k+1}, o_k] the position is the one reached at o_k; |t| is smallest at t = o_k
    return all(d((x, y)) <= L * math.floor(abs(o) / (4 * xi)) for o, x, y in past)


def classify_principal(M: BlockProcess) -> np.ndarray:
    """Certification status per particle starting in B (0 not principal, 1 certified, 2 horizon-only)."""
    return M.particles.status


class BlockSource:
    """Caches one BlockProcess per block under a fixed root key."""

    def __init__(self, root: int, params: SeedParams):
        self.root = int(root)
        self.params = params
        self._cache: Dict[Block, BlockProcess] = {}

    def get(self, B: Block) -> BlockProcess:
        B = tuple(B)
        if B not in self._cache:
            self._cache[B] = BlockProcess(B, self.root, self.params)
        return self._cache[B]


class TrackingSource:
    """Records which blocks' data a computation reads."""

    def __init__(self, inner: BlockSource):
        self.inner = inner
        self.params = inner.params
        self.accessed: Set[Block] = set()

    def get(self, B: Block) -> BlockProcess:
        self.accessed.add(tuple(B))
        return self.inner.get(B)


@dataclass
class SeedVerdict:
    block: Block
    a1: bool
    a3: bool
    a4: bool
    a2_failures: int
    a5_failures: int
    a5_min: int
    n_x: int
    n_principal: int
    n_uncertified: int

    @property
    def holds(self) -> bool:
        return self.a1 and self.a3 and self.a4 and self.a2_failures == 0 and self.a5_failures == 0

    @property
    def failing(self) -> List[str]:
        out = []
        if not self.a1:
            out.append("A1")
        if self.a2_failures:
            out.append("A2")
        if not self.a3:
            out.append("A3")
        if not self.a4:
            out.append("A4")
        if self.a5_failures:
            out.append("A5")
        return out

    def to_row(self) -> dict:
        return {"bx": self.block[0], "by": self.block[1], "holds": int(self.holds), "failing": "+".join(self.failing),
                "a2_failures": self.a2_failures, "a5_failures": self.a5_failures, "a5_min": self.a5_min,
                "n_x": self.n_x, "n_principal": self.n_principal, "n_uncertified": self.n_uncertified}


def boundary_sharp(B: Block, L: int, alpha_L: float) -> List[Tuple[Block, Block]]:
    """Possible ignition sites x of blocks B' with B in U_x, paired with B_x."""
    h = L // 2
    out = []
    span = 1 + int(alpha_L // L)
    for dx in range(-span, span + 1):
        for dy in range(-span, span + 1):
            Bp = (B[0] + dx, B[1] + dy)
            lo = (Bp[0] * L - h, Bp[1] * L - h)
            for i in range(L):
                for j in range(L):
                    if 0 < i < L - 1 and 0 < j < L - 1:
                        continue
                    x = (lo[0] + i, lo[1] + j)
                    if linf_to_block(x, B, L) <= alpha_L:
                        out.append((x, Bp))
    return sorted(out)


def ignition_sites(B: Block, L: int, alpha_L: float) -> List[Tuple[Block, Block]]:
    """boundary_sharp, plus the origin for the block holding it (the initial infected ignites there)."""
    out = boundary_sharp(B, L, alpha_L)
    if tuple(B) == (0, 0) and ((0, 0), (0, 0)) not in out:
        out = sorted(out + [((0, 0), (0, 0))])
    return out


def _segments(P: ParticleTable, i: int, w: float):
    a, b = P.seg_ptr[i], P.seg_ptr[i + 1]
    t = P.seg_t[a:b]
    ends = np.append(t[1:], w)
    return t, ends, P.seg_x[a:b], P.seg_y[a:b]


def _meeting_index(P: ParticleTable, idx: np.ndarray, w: float) -> Dict[Block, List[tuple]]:
    """Position -> [(particle, start, end)] for path pieces of the chosen particles on [0, w]."""
    out: Dict[Block, List[tuple]] = {}
    for i in idx:
        t, e, xs, ys = _segments(P, int(i), w)
        for k in range(len(t)):
            if t[k] > w:
                break
            out.setdefault((int(xs[k]), int(ys[k])), []).append((int(i), float(t[k]), float(min(e[k], w))))
    return out


def _first_meetings(index, ig, w: float, closed: bool) -> Dict[int, float]:
    st, sx, sy = ig
    ends = np.append(st[1:], w)
    first: Dict[int, float] = {}
    for k in range(len(st)):
        s0, s1 = float(st[k]), float(min(ends[k], w))
        for i, t0, t1 in index.get((int(sx[k]), int(sy[k])), ()):
            lo, hi = max(s0, t0), min(s1, t1)
            if lo < hi or (closed and lo == hi == w):
                if lo < first.get(i, math.inf):
                    first[i] = lo
    return first


def check_blue_seed(B: Block, source, params: Optional[SeedParams] = None) -> SeedVerdict:
    """Evaluate A_B from the data of blocks within block distance 2."""
    p = source.params if params is None else params
    B = tuple(B)
    L, aL = p.L, p.alpha_L
    near = [(B[0] + i, B[1] + j) for i in range(-2, 3) for j in range(-2, 3) if abs(i) + abs(j) <= 2]
    a1 = all(source.get(Bp).ig_sup_norm(p.w1) <= aL / 2 for Bp in near)
    a3 = all(source.get(Bp).ig_heal1 > p.heal_horizon for Bp in near)
    P = source.get(B).particles
    pr = np.flatnonzero(P.principal)
    a4 = bool(np.all(P.heal1[pr] > p.heal_horizon))
    h = L // 2
    lo = (B[0] * L - h, B[1] * L - h)
    depth = np.minimum.reduce([P.x0 - lo[0] + 1, lo[0] + L - P.x0, P.y0 - lo[1] + 1, lo[1] + L - P.y0])
    interior = pr[depth[pr] >= L / 10]
    w1, w2 = p.w1, p.w2
    idx1 = _meeting_index(P, interior, w1)
    idx2 = _meeting_index(P, pr, w2)
    xs = ignition_sites(B, L, aL)
    a2_fail = a5_fail = 0
    a5_min = math.inf
    nbrs = [(B[0] + 1, B[1]), (B[0] - 1, B[1]), (B[0], B[1] + 1), (B[0], B[1] - 1)]
    for x, Bx in xs:
        Mx = source.get(Bx)
        q = len(_first_meetings(idx1, Mx.ig_path(x, w1), w1, closed=True))
        a5_min = min(a5_min, q)
        if q < p.q_threshold:
            a5_fail += 1
        Ux = set(U_x(x, L, aL))
        targets = [Bp for Bp in nbrs if Bp not in Ux]
        if not targets:
            continue
        meet = _first_meetings(idx2, Mx.ig_path(x, w2), w2, closed=False)
        reached = set()
        for i, m in meet.items():
            t, e, sx, sy = _segments(P, i, w2)
            for k in range(len(t)):
                if t[k] >= w2:
                    break
                Bk = ((int(sx[k]) + h) // L, (int(sy[k]) + h) // L)
                if Bk in Ux:
                    continue
                if m <= t[k] and Bk in targets:
                    reached.add(Bk)
                break
        a2_fail += sum(1 for Bp in targets if Bp not in reached)
    return SeedVerdict(block=B, a1=a1, a3=a3, a4=a4, a2_failures=a2_fail, a5_failures=a5_fail,
                       a5_min=int(a5_min) if xs else 0, n_x=len(xs), n_principal=len(pr),
                       n_uncertified=int(np.sum(P.status == 2)))


def seed_field(blocks: Iterable[Block], source, params: Optional[SeedParams] = None) -> Set[Block]:
    """B_*: blocks whose A_B fails."""
    return {tuple(B) for B in blocks if not check_blue_seed(B, source, params).holds}


def seed_params_for(config: BlockEngineConfig) -> SeedParams:
    return SeedParams(L=config.L, mu=config.mu, nu=config.nu, alpha=config.alpha, kappa=config.kappa,
                      radius=config.window.radius)


def write_verdicts_csv(verdicts: Sequence[SeedVerdict], path) -> None:
    rows = [v.to_row() for v in verdicts]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["bx", "by", "holds", "failing"])
        wr.writeheader()
        wr.writerows(rows)


def blocks_within(B: Block, r: int) -> List[Block]:
    return [(B[0] + i, B[1] + j) for i in range(-r, r + 1) for j in range(-r, r + 1)
            if block_distance(B, (B[0] + i, B[1] + j)) <= r]
