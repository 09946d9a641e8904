"""Direct event-driven SIR simulation of random walkers on Z^d.

Susceptibles start as i.i.d. Poisson(mu) per site of a finite window, one
infected particle sits at the origin. Walkers jump at rate 1 to a uniform
nearest neighbour; jumps leaving the window are rejected, which keeps the
Poisson(mu) field stationary. A run is censored as soon as an infected
particle comes within `margin` of the window edge.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _engine_kernel as K
from .lattice import RngStream, Window
from .serialization import SCHEMA_VERSION, SchemaError, digest, dumps


class WindowTooSmall(ValueError):
    pass


@dataclass
class EngineConfig:
    mu: float
    nu: float
    window: Window
    t_max: float
    cadence: float = 1.0
    d: int = 2
    probe_sites: Tuple[Tuple[int, ...], ...] = ()
    disk_c: float = 0.1
    v_front: float = 4.0
    heal_mode: str = "clock"  # clock | points
    strict_window: bool = True
    block_feed_L: int = 0  # >0: record first infected entry into each block of this side
    record_log: bool = False
    hist_bins: int = 0  # >0: radial S/I histograms in the final footer

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.cadence <= 0:
            raise ValueError("cadence must be positive")
        if self.d != self.window.dim:
            raise ValueError("window dimension does not match d")
        if self.heal_mode not in ("clock", "points"):
            raise ValueError("heal_mode must be 'clock' or 'points'")
        if self.block_feed_L and (self.block_feed_L < 2 or self.block_feed_L % 2):
            raise ValueError("block side must be even and >= 2")
        self.probe_sites = tuple(tuple(int(c) for c in p) for p in self.probe_sites)

    @property
    def required_radius(self) -> float:
        return self.v_front * self.t_max + 10.0 * math.sqrt(self.t_max) + self.window.margin

    def check_window(self) -> None:
        if self.strict_window and self.window.radius < self.required_radius:
            raise WindowTooSmall(
                f"window radius {self.window.radius} < required {self.required_radius:.1f}; "
                "enlarge it or set strict_window=False to rely on censoring"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = {"radius": self.window.radius, "margin": self.window.margin, "dim": self.window.dim}
        d["probe_sites"] = [list(p) for p in self.probe_sites]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        d = dict(d)
        w = d.pop("window")
        if isinstance(w, dict):
            w = Window(int(w["radius"]), int(w.get("margin", 1)), int(w.get("dim", d.get("d", 2))))
        d["probe_sites"] = tuple(tuple(p) for p in d.get("probe_sites", ()))
        return cls(window=w, **d)


@dataclass
class MetricsSample:
    t: float
    n_S: int
    n_I: int
    n_R: int
    front: int
    inner: float
    s_in_disk: int
    i_in_disk: int
    disk_radius: float

    def to_dict(self) -> dict:
        return asdict(self)


class SimState:
    """Owns the flat arrays of one trajectory. Not thread-safe; one worker per state."""

    def __init__(self, config: EngineConfig, positions: np.ndarray, infected_ids: Sequence[int],
                 rng: RngStream, scripted_jumps=None, healing_points=None, log_capacity: int = 0):
        self.config = config
        w = config.window
        self.radius = w.radius
        self.dim = w.dim
        n = positions.shape[0]
        self.n = n
        nsites = w.side ** w.dim
        self.px = np.ascontiguousarray(positions[:, 0], dtype=np.int32)
        self.py = np.ascontiguousarray(positions[:, 1] if w.dim == 2 else np.zeros(n), dtype=np.int32)
        if np.any(np.abs(self.px) > w.radius) or np.any(np.abs(self.py) > w.radius):
            raise ValueError("particle outside window")
        self.state = np.zeros(n, dtype=np.int8)
        self.iota = np.full(n, np.inf)
        self.heal = np.full(n, np.inf)
        self.infby = np.full(n, -1, dtype=np.int32)
        self.alive = np.arange(n, dtype=np.int32)
        self.alive_pos = np.arange(n, dtype=np.int32)
        self.inf_list = np.zeros(n, dtype=np.int32)
        self.inf_pos = np.full(n, -1, dtype=np.int32)
        self.headS = np.full(nsites, -1, dtype=np.int32)
        self.nxt = np.full(n, -1, dtype=np.int32)
        self.prv = np.full(n, -1, dtype=np.int32)
        self.cntI = np.zeros(nsites, dtype=np.int32)
        self.headI = np.full(nsites, -1, dtype=np.int32)
        self.nxtI = np.full(n, -1, dtype=np.int32)
        self.prvI = np.full(n, -1, dtype=np.int32)
        self.ht = np.zeros(n + 1)
        self.hid = np.zeros(n + 1, dtype=np.int32)
        self.iv = np.zeros(K.N_IV, dtype=np.int64)
        self.fv = np.zeros(K.N_FV)
        self.fv[K.NEXT_JUMP] = -1.0
        self.fv[K.CENSOR_T] = np.inf
        self.fv[K.EXTINCT_T] = np.inf
        self.rng_state = np.array([rng.child("dynamics").key], dtype=np.uint64)
        self.heal_key = np.uint64(rng.child("heal-points").key)

        # healing data
        if healing_points is not None:
            ptr = np.zeros(n + 1, dtype=np.int64)
            vals = []
            for i in range(n):
                pts = sorted(float(v) for v in healing_points.get(i, ()))
                vals.extend(pts)
                ptr[i + 1] = len(vals)
            self.hp_ptr, self.hp_val = ptr, np.array(vals, dtype=np.float64)
            heal_mode = K.HEAL_GIVEN_POINTS
        else:
            self.hp_ptr, self.hp_val = np.zeros(1, dtype=np.int64), np.zeros(0)
            heal_mode = K.HEAL_CLOCK if config.heal_mode == "clock" else K.HEAL_KEYED_POINTS

        # scripted jumps: (time, particle, direction) with direction in 0..2d-1 (+x, -x, +y, -y)
        if scripted_jumps is not None:
            sj = sorted(scripted_jumps, key=lambda e: (float(e[0]), int(e[1])))
            self.sj_t = np.array([float(e[0]) for e in sj], dtype=np.float64)
            self.sj_p = np.array([int(e[1]) for e in sj], dtype=np.int64)
            self.sj_d = np.array([int(e[2]) for e in sj], dtype=np.int64)
            if np.any(self.sj_d >= 2 * w.dim) or np.any(self.sj_d < 0):
                raise ValueError("bad scripted direction")
        else:
            self.sj_t = np.zeros(0)
            self.sj_p = np.zeros(0, dtype=np.int64)
            self.sj_d = np.zeros(0, dtype=np.int64)
        scripted = scripted_jumps is not None

        # probes
        self.probe_idx = np.full(nsites, -1, dtype=np.int32)
        probes = config.probe_sites
        for k, pz in enumerate(probes):
            if not w.contains(pz):
                raise ValueError(f"probe {pz} outside window")
            self.probe_idx[self._site(pz)] = k
        m = len(probes)
        self.p_first = np.full(m, np.inf)
        self.p_last = np.full(m, np.inf)
        self.p_present = np.zeros(m, dtype=np.int8)

        cap = log_capacity if config.record_log else 0
        self.logt = np.zeros(cap)
        self.logk = np.zeros(cap, dtype=np.int8)
        self.logp = np.zeros(cap, dtype=np.int64)
        self.logx = np.zeros(cap, dtype=np.int64)
        self.logy = np.zeros(cap, dtype=np.int64)
        self.loga = np.zeros(cap, dtype=np.int64)

        L = config.block_feed_L
        if L:
            zmin = (-w.radius + L // 2) // L
            zmax = (w.radius + L // 2) // L
            nzs = zmax - zmin + 1
            nb = nzs ** w.dim
        else:
            zmin, nzs, nb = 0, 1, 1
        self.feed_zmin, self.feed_nzs = zmin, nzs
        self.feed_seen = np.zeros(nb, dtype=np.int8)
        self.feed_t = np.zeros(nb)
        self.feed_p = np.zeros(nb, dtype=np.int64)
        self.feed_x = np.zeros(nb, dtype=np.int64)
        self.feed_y = np.zeros(nb, dtype=np.int64)
        self.feed_fx = np.zeros(nb, dtype=np.int64)
        self.feed_fy = np.zeros(nb, dtype=np.int64)

        self.params = np.array([w.radius, w.margin, w.dim, config.nu, heal_mode, 0.0,
                                1.0 if scripted else 0.0, 1.0 if cap else 0.0, L, zmin, nzs], dtype=np.float64)

        # occupancy: everybody starts susceptible
        for p in range(n):
            K._s_link(p, self._site((self.px[p], self.py[p])), self.headS, self.nxt, self.prv)
        self.iv[K.N_ALIVE] = n
        self.iv[K.N_S] = n
        for p in infected_ids:
            self._infect_at_start(int(p), -1)
        # susceptibles sharing a site with an initial infected are infected at time 0
        for p in list(infected_ids):
            s = self._site((self.px[p], self.py[p]))
            q = self.headS[s]
            while q >= 0:
                qn = self.nxt[q]
                self._infect_at_start(int(q), int(p))
                q = qn
        if L:
            for p in infected_ids:
                b = self._block_slot((self.px[p], self.py[p]))
                if not self.feed_seen[b]:
                    self.feed_seen[b] = 1
                    nf = self.iv[K.FEED_N]
                    self.feed_t[nf] = 0.0
                    self.feed_p[nf] = p
                    self.feed_x[nf] = self.px[p]
                    self.feed_y[nf] = self.py[p]
                    self.feed_fx[nf] = self.px[p]
                    self.feed_fy[nf] = self.py[p]
                    self.iv[K.FEED_N] = nf + 1
        inner = w.radius - w.margin
        for p in infected_ids:
            if abs(int(self.px[p])) > inner or abs(int(self.py[p])) > inner:
                self.iv[K.CENSORED] = 1
                self.fv[K.CENSOR_T] = 0.0

    def _site(self, v) -> int:
        x = int(v[0])
        y = int(v[1]) if self.dim == 2 else 0
        return int(K.site_index(x, y, self.radius, self.dim))

    def _block_slot(self, v) -> int:
        L = self.config.block_feed_L
        h = L // 2
        zx = (int(v[0]) + h) // L - self.feed_zmin
        if self.dim == 1:
            return zx
        zy = (int(v[1]) + h) // L - self.feed_zmin
        return zx * self.feed_nzs + zy

    def _infect_at_start(self, p: int, infector: int) -> None:
        if self.state[p] != K.S:
            return
        s = self._site((self.px[p], self.py[p]))
        K._s_unlink(p, s, self.headS, self.nxt, self.prv)
        K._infect(p, infector, 0.0, s, self.px, self.py, self.state, self.iota, self.infby,
                  self.inf_list, self.inf_pos, self.iv, self.cntI, self.headI, self.nxtI, self.prvI,
                  self.probe_idx, self.p_first, self.p_last, self.p_present,
                  self.config.nu, int(self.params[4]), self.heal_key, self.hp_ptr, self.hp_val,
                  self.rng_state, self.ht, self.hid, self.heal)
        a = abs(int(self.px[p])) + abs(int(self.py[p]))
        self.iv[K.FRONT] = max(self.iv[K.FRONT], a)

    # -- views -----------------------------------------------------------
    @property
    def now(self) -> float:
        return float(self.fv[K.NOW])

    @property
    def censored(self) -> bool:
        return bool(self.iv[K.CENSORED])

    @property
    def censor_time(self) -> float:
        return float(self.fv[K.CENSOR_T])

    @property
    def extinction_time(self) -> float:
        return float(self.fv[K.EXTINCT_T])

    @property
    def counts(self) -> Tuple[int, int, int]:
        return int(self.iv[K.N_S]), int(self.iv[K.N_INF]), int(self.iv[K.N_R])

    @property
    def front(self) -> int:
        return int(self.iv[K.FRONT])

    def positions(self) -> np.ndarray:
        if self.dim == 1:
            return self.px.astype(np.int64)[:, None]
        return np.stack([self.px, self.py], axis=1).astype(np.int64)

    def infected_ids(self) -> np.ndarray:
        return np.sort(self.inf_list[: self.iv[K.N_INF]].astype(np.int64))

    def event_log(self) -> List[tuple]:
        if self.iv[K.LOG_OVERFLOW]:
            raise RuntimeError("event log overflowed its buffer")
        n = int(self.iv[K.LOG_N])
        kinds = {K.EV_JUMP: "jump", K.EV_INFECT: "infect", K.EV_HEAL: "heal"}
        out = []
        for i in range(n):
            pos = (int(self.logx[i]),) if self.dim == 1 else (int(self.logx[i]), int(self.logy[i]))
            out.append((float(self.logt[i]), kinds[int(self.logk[i])], int(self.logp[i]), pos, int(self.loga[i])))
        return out

    def block_feed(self) -> List[tuple]:
        """First infected entries per block: (time, particle, entry site, previous site)."""
        out = []
        for i in range(int(self.iv[K.FEED_N])):
            if self.dim == 1:
                x, f = (int(self.feed_x[i]),), (int(self.feed_fx[i]),)
            else:
                x = (int(self.feed_x[i]), int(self.feed_y[i]))
                f = (int(self.feed_fx[i]), int(self.feed_fy[i]))
            out.append((float(self.feed_t[i]), int(self.feed_p[i]), x, f))
        return out

    def audit_occupancy(self) -> None:
        """Rebuild the occupancy index from positions and compare with the incremental one."""
        nsites = self.headS.shape[0]
        s_sets = {}
        i_cnt = np.zeros(nsites, dtype=np.int64)
        for j in range(int(self.iv[K.N_ALIVE])):
            p = int(self.alive[j])
            s = self._site((self.px[p], self.py[p]))
            if self.state[p] == K.S:
                s_sets.setdefault(s, set()).add(p)
            elif self.state[p] == K.I:
                i_cnt[s] += 1
            else:
                raise AssertionError("removed particle in alive list")
        if not np.array_equal(i_cnt, self.cntI):
            raise AssertionError("infected counts disagree with positions")
        for s in np.nonzero(self.headS >= 0)[0]:
            got = set()
            q = int(self.headS[s])
            while q >= 0:
                got.add(q)
                q = int(self.nxt[q])
            if got != s_sets.get(int(s), set()):
                raise AssertionError(f"susceptible list at site {s} disagrees with positions")
        if sum(len(v) for v in s_sets.values()) != int(self.iv[K.N_S]):
            raise AssertionError("susceptible total disagrees")
        both = [s for s in s_sets if i_cnt[s] > 0]
        if both:
            raise AssertionError("susceptible and infected share a site")


def _initial_positions(config: EngineConfig, rng: RngStream) -> np.ndarray:
    """Poisson(mu) susceptibles per window site, sites in sorted (row-major) order."""
    w = config.window
    counts = rng.child("init").generator().poisson(config.mu, size=w.shape).ravel()
    grids = np.meshgrid(*[np.arange(-w.radius, w.radius + 1)] * w.dim, indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    pos = np.repeat(coords, counts, axis=0)
    if w.dim == 1:
        pos = np.concatenate([pos, np.zeros_like(pos)], axis=1)
    return pos


def init_state(config: EngineConfig, rng: RngStream) -> SimState:
    config.check_window()
    pos = _initial_positions(config, rng)
    origin = np.zeros((1, 2), dtype=pos.dtype)
    pos = np.concatenate([pos, origin], axis=0)
    return SimState(config, pos, [pos.shape[0] - 1], rng, log_capacity=_log_capacity(config, pos.shape[0]))


def _log_capacity(config: EngineConfig, n: int) -> int:
    if not config.record_log:
        return 0
    return int(4 * n * config.t_max + 1024)


def scripted_state(config: EngineConfig, positions: Sequence[Sequence[int]], infected: Sequence[int],
                   jumps: Sequence[tuple], healing_points: Optional[dict] = None,
                   rng: Optional[RngStream] = None) -> SimState:
    """Hand-specified initial condition with a fixed jump script; no randomness in the dynamics."""
    pos = np.array([list(p) + ([0] if len(p) == 1 else []) for p in positions], dtype=np.int64).reshape(-1, 2)
    hp = healing_points if healing_points is not None else {}
    cap = 4 * (len(jumps) + len(positions)) + 64
    cfg = config
    if not cfg.record_log:
        cfg = EngineConfig(**{**config.__dict__, "record_log": True})
    return SimState(cfg, pos, list(infected), rng or RngStream(0), scripted_jumps=list(jumps),
                    healing_points=hp, log_capacity=cap)


def advance_until(state: SimState, t: float) -> int:
    if t < state.now:
        raise ValueError("cannot advance backwards in time")
    return int(K.advance(
        float(t), state.params, state.heal_key, state.iv, state.fv, state.rng_state,
        state.px, state.py, state.state, state.iota, state.heal, state.infby,
        state.alive, state.alive_pos, state.inf_list, state.inf_pos,
        state.headS, state.nxt, state.prv, state.cntI, state.headI, state.nxtI, state.prvI,
        state.ht, state.hid, state.hp_ptr, state.hp_val,
        state.sj_t, state.sj_p, state.sj_d,
        state.probe_idx, state.p_first, state.p_last, state.p_present,
        state.logt, state.logk, state.logp, state.logx, state.logy, state.loga,
        state.feed_seen, state.feed_t, state.feed_p, state.feed_x, state.feed_y,
        state.feed_fx, state.feed_fy))


def observe_metrics(state: SimState, disk_radius: Optional[float] = None) -> MetricsSample:
    t = state.now
    rc = state.config.disk_c * t if disk_radius is None else disk_radius
    inner, s_in, i_in = K.observe(float(rc), state.iv, state.px, state.py, state.state,
                                  state.alive, state.inf_list)
    nS, nI, nR = state.counts
    return MetricsSample(t=t, n_S=nS, n_I=nI, n_R=nR, front=state.front, inner=float(inner),
                         s_in_disk=int(s_in), i_in_disk=int(i_in), disk_radius=float(rc))


def probe_durations(state: SimState) -> np.ndarray:
    """D_x per probe: last minus first infected presence (nan if never visited).

    A probe still occupied at the current time counts its presence up to now.
    """
    first = state.p_first.copy()
    last = np.where(state.p_present > 0, state.now, state.p_last)
    out = np.full(first.shape, np.nan)
    ok = np.isfinite(first)
    out[ok] = last[ok] - first[ok]
    return out


@dataclass
class TrajectoryReport:
    config: dict
    seed: int
    path: Tuple[int, ...]
    samples: List[MetricsSample]
    termination: str  # t_max | extinction | censored
    end_time: float
    censor_time: float
    extinction_time: float
    event_counts: dict
    probe_first: List[float]
    probe_last: List[float]
    probe_duration: List[float]
    hist_S: List[int] = field(default_factory=list)
    hist_I: List[int] = field(default_factory=list)
    block_feed: List[tuple] = field(default_factory=list)
    wall_time: float = 0.0
    engine: str = "direct"

    def footer(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "footer",
            "engine": self.engine,
            "config": self.config,
            "seed": self.seed,
            "path": list(self.path),
            "termination": self.termination,
            "end_time": self.end_time,
            "censor_time": self.censor_time,
            "extinction_time": self.extinction_time,
            "event_counts": self.event_counts,
            "probe_first": self.probe_first,
            "probe_last": self.probe_last,
            "probe_duration": self.probe_duration,
            "hist_S": self.hist_S,
            "hist_I": self.hist_I,
            "block_feed": [[t, p, list(x), list(f)] for t, p, x, f in self.block_feed],
            "wall_time": self.wall_time,
            "digest": self.digest(),
        }

    def digest(self) -> str:
        body = {
            "samples": [s.to_dict() for s in self.samples],
            "termination": self.termination,
            "end_time": self.end_time,
            "censor_time": self.censor_time,
            "extinction_time": self.extinction_time,
            "event_counts": self.event_counts,
            "probe_first": self.probe_first,
            "probe_last": self.probe_last,
            "seed": self.seed,
            "path": list(self.path),
            "config": self.config,
        }
        return digest(body)

    def to_jsonl(self) -> str:
        lines = [dumps({"kind": "sample", **s.to_dict()}) for s in self.samples]
        lines.append(dumps(self.footer()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "TrajectoryReport":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[-1].get("kind") != "footer":
            raise SchemaError("missing footer")
        f = rows[-1]
        if f.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(f"schema version {f.get('schema_version')} != {SCHEMA_VERSION}")
        samples = []
        for r in rows[:-1]:
            r = dict(r)
            r.pop("kind")
            r["inner"] = float(r["inner"])
            samples.append(MetricsSample(**r))
        rep = cls(
            config=f["config"], seed=f["seed"], path=tuple(f["path"]), samples=samples,
            termination=f["termination"], end_time=float(f["end_time"]),
            censor_time=float(f["censor_time"]), extinction_time=float(f["extinction_time"]),
            event_counts=f["event_counts"],
            probe_first=[float(v) for v in f["probe_first"]],
            probe_last=[float(v) for v in f["probe_last"]],
            probe_duration=[float(v) for v in f["probe_duration"]],
            hist_S=f["hist_S"], hist_I=f["hist_I"],
            block_feed=[(float(t), int(p), tuple(x), tuple(fr)) for t, p, x, fr in f["block_feed"]],
            wall_time=float(f["wall_time"]), engine=f.get("engine", "direct"),
        )
        if f.get("digest") != rep.digest():
            raise SchemaError("digest mismatch")
        return rep

    @property
    def final(self) -> MetricsSample:
        return self.samples[-1]


def _sample_times(t_max: float, cadence: float) -> List[float]:
    n = int(math.floor(t_max / cadence + 1e-9))
    ts = [k * cadence for k in range(1, n + 1)]
    if not ts or ts[-1] < t_max - 1e-12:
        ts.append(t_max)
    return ts


def finish_report(state: SimState, config: EngineConfig, seed: int, path, samples, cause, wall,
                  engine="direct") -> TrajectoryReport:
    if config.hist_bins:
        hs, hi = K.radial_histograms(int(config.hist_bins), state.iv, state.px, state.py,
                                     state.state, state.alive)
        hs, hi = hs.tolist(), hi.tolist()
    else:
        hs, hi = [], []
    ev = {"jumps": int(state.iv[K.N_JUMPS]), "infections": int(state.iv[K.N_INFECT]),
          "heals": int(state.iv[K.N_HEAL]), "particles": int(state.n)}
    dur = probe_durations(state)
    return TrajectoryReport(
        config=config.to_dict(), seed=seed, path=tuple(path), samples=samples, termination=cause,
        end_time=state.now, censor_time=state.censor_time, extinction_time=state.extinction_time,
        event_counts=ev,
        probe_first=state.p_first.tolist(), probe_last=state.p_last.tolist(),
        probe_duration=dur.tolist(), hist_S=hs, hist_I=hi,
        block_feed=state.block_feed(), wall_time=wall, engine=engine)


def run_trajectory(config: EngineConfig, seed: int, path: Sequence[int] = (), observers=()) -> TrajectoryReport:
    """Sample metrics at the configured cadence until t_max, extinction or censoring.

    `observers` are callables `f(state, sample)` invoked after each sample.
    """
    t0 = time.perf_counter()
    rng = RngStream(int(seed), tuple(path))
    state = init_state(config, rng)
    samples = [observe_metrics(state)]
    for f in observers:
        f(state, samples[-1])
    cause = "t_max"
    if state.censored:
        cause = "censored"
    else:
        for t in _sample_times(config.t_max, config.cadence):
            st = advance_until(state, t)
            if st == K.ST_CENSORED:
                cause = "censored"
                break
            samples.append(observe_metrics(state))
            for f in observers:
                f(state, samples[-1])
            if st == K.ST_EXTINCT:
                cause = "extinction"
                break
    if cause == "censored":
        samples.append(observe_metrics(state))
    return finish_report(state, config, int(seed), path, samples, cause, time.perf_counter() - t0)
