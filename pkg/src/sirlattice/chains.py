"""Active chains on recorded trajectories.

A chain on [s, t] is a partition s = p_0 < p_1 < ... < p_k = t and distinct
labels a_1..a_k such that a_1 sits at the start site at time s, the label
hands over from a_i to a_{i+1} at p_i only when the two meet there and were
apart just before, no healing point of a_i lies in [p_{i-1}, p_i], and every
label after the first was initially susceptible.

Chains upper-bound the infected population and, weighted by
exp(-nu d(Z(t), A) / 8), form the functional I_{u,A}(t).
"""
from __future__ import annotations

import bisect
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from .lattice import l1_distance, set_distance
from .serialization import SCHEMA_VERSION, SchemaError, dumps

Vertex = Tuple[int, ...]
LATTICE = "lattice"  # A = whole lattice


class GuardExceeded(RuntimeError):
    """Too many jump events for exhaustive enumeration."""


@dataclass
class Track:
    initial: Vertex
    times: List[float]           # strictly increasing jump times
    positions: List[Vertex]      # position right after each jump
    healing: List[float]         # sorted healing points on [0, T]
    infected: bool = False       # initial state

    def __post_init__(self):
        self.initial = tuple(int(c) for c in self.initial)
        self.times = [float(t) for t in self.times]
        self.positions = [tuple(int(c) for c in p) for p in self.positions]
        self.healing = sorted(float(h) for h in self.healing)
        if len(self.times) != len(self.positions):
            raise ValueError("times and positions differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("jump times must be strictly increasing")
        prev = self.initial
        for p in self.positions:
            if l1_distance(prev, p) != 1:
                raise ValueError("jumps must be nearest-neighbour")
            prev = p

    def at(self, t: float) -> Vertex:
        """Right-continuous position."""
        k = bisect.bisect_right(self.times, t)
        return self.initial if k == 0 else self.positions[k - 1]

    def before(self, t: float) -> Vertex:
        """Left limit at t."""
        k = bisect.bisect_left(self.times, t)
        return self.initial if k == 0 else self.positions[k - 1]

    def first_heal_at_or_after(self, t: float) -> float:
        k = bisect.bisect_left(self.healing, t)
        return self.healing[k] if k < len(self.healing) else math.inf

    def first_heal_after(self, t: float) -> float:
        k = bisect.bisect_right(self.healing, t)
        return self.healing[k] if k < len(self.healing) else math.inf


@dataclass
class TrajectoryArchive:
    horizon: float
    nu: float
    tracks: List[Track]

    def __post_init__(self):
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be finite and nonnegative")
        for tr in self.tracks:
            if tr.times and (tr.times[0] < 0 or tr.times[-1] > self.horizon):
                raise ValueError("jump outside the horizon")

    @property
    def dim(self) -> int:
        return len(self.tracks[0].initial) if self.tracks else 2

    def jump_times(self, s: float, t: float) -> List[float]:
        """Distinct jump times in [s, t]."""
        out = set()
        for tr in self.tracks:
            lo = bisect.bisect_left(tr.times, s)
            hi = bisect.bisect_right(tr.times, t)
            out.update(tr.times[lo:hi])
        return sorted(out)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "horizon": self.horizon,
            "nu": self.nu,
            "particles": [
                {"initial": list(tr.initial), "jumps": [[t, list(p)] for t, p in zip(tr.times, tr.positions)],
                 "healing": tr.healing, "state": "I" if tr.infected else "S"}
                for tr in self.tracks
            ],
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryArchive":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError("archive schema version mismatch")
        tracks = [Track(initial=tuple(p["initial"]), times=[j[0] for j in p["jumps"]],
                        positions=[tuple(j[1]) for j in p["jumps"]], healing=p["healing"],
                        infected=p["state"] == "I") for p in d["particles"]]
        return cls(horizon=float(d["horizon"]), nu=float(d["nu"]), tracks=tracks)

    @classmethod
    def from_json(cls, text: str) -> "TrajectoryArchive":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ActiveChain:
    partition: Tuple[float, ...]   # (p_0 = s, ..., p_k = t)
    labels: Tuple[int, ...]        # (a_1, ..., a_k)

    def end_label(self) -> int:
        return self.labels[-1]


def enumerate_active_chains(archive: TrajectoryArchive, u: Tuple[float, Sequence[int]], t: float,
                            guard: int = 20) -> List[ActiveChain]:
    """All active chains on [s, t] starting at u = (s, z), by depth-first search over jump times."""
    s, z = float(u[0]), tuple(int(c) for c in u[1])
    if not (0 <= s <= t <= archive.horizon):
        raise ValueError("need 0 <= s <= t <= horizon")
    events = archive.jump_times(s, t)
    if len(events) > guard:
        raise GuardExceeded(f"{len(events)} jump events on [{s}, {t}] exceed guard {guard}")
    tracks = archive.tracks
    starts = [a for a, tr in enumerate(tracks) if tr.at(s) == z]
    if s == t:
        return [ActiveChain((s, t), (a,)) for a in starts]
    # handoffs happen strictly inside (s, t)
    inner = [e for e in events if s < e < t]
    after = [[tr.at(e) for tr in tracks] for e in inner]
    before = [[tr.before(e) for tr in tracks] for e in inner]
    susceptible = [not tr.infected for tr in tracks]
    out: List[ActiveChain] = []

    def dfs(q: int, seg_start: float, used: frozenset, pis: Tuple[float, ...], labels: Tuple[int, ...], j0: int):
        h = tracks[q].first_heal_at_or_after(seg_start)
        if h > t:
            out.append(ActiveChain(pis + (t,), labels))
        for j in range(j0, len(inner)):
            e = inner[j]
            if e >= h:
                break
            here, prev = after[j][q], before[j][q]
            for r in range(len(tracks)):
                if r in used or not susceptible[r]:
                    continue
                if after[j][r] == here and before[j][r] != prev:
                    dfs(r, e, used | {r}, pis + (e,), labels + (r,), j + 1)

    for a in starts:
        dfs(a, s, frozenset([a]), (s,), (a,), 0)
    return out


def _pos_linear(tr: Track, t: float, left: bool = False) -> Vertex:
    # independent position lookup used by the validator
    p = tr.initial
    for tj, pj in zip(tr.times, tr.positions):
        if tj < t or (tj == t and not left):
            p = pj
        else:
            break
    return p


def validate_chain(archive: TrajectoryArchive, u: Tuple[float, Sequence[int]], t: float,
                   chain: ActiveChain) -> Optional[str]:
    """Return None if the chain satisfies every defining condition, else the first failure."""
    s, z = float(u[0]), tuple(int(c) for c in u[1])
    pis, labels = chain.partition, chain.labels
    k = len(labels)
    if len(pis) != k + 1:
        return "partition length"
    if pis[0] != s or pis[-1] != t:
        return "partition endpoints"
    if s == t:
        if k != 1:
            return "degenerate chain must have one label"
    elif any(b <= a for a, b in zip(pis, pis[1:])):
        return "partition not increasing"
    if len(set(labels)) != k:
        return "repeated label"
    tracks = archive.tracks
    if any(not (0 <= a < len(tracks)) for a in labels):
        return "unknown label"
    if _pos_linear(tracks[labels[0]], s) != z:
        return "first label not at start site"
    for i in range(1, k):
        if tracks[labels[i]].infected:
            return f"label {i + 1} not initially susceptible"
    for i in range(k - 1):
        p = pis[i + 1]
        a, b = tracks[labels[i]], tracks[labels[i + 1]]
        if _pos_linear(a, p) != _pos_linear(b, p):
            return f"no meeting at handoff {i + 1}"
        if _pos_linear(a, p, left=True) == _pos_linear(b, p, left=True):
            return f"left limits agree at handoff {i + 1}"
    if s < t:
        for i in range(k):
            lo, hi = pis[i], pis[i + 1]
            if any(lo <= h <= hi for h in tracks[labels[i]].healing):
                return f"healing inside segment {i + 1}"
    return None


def brute_force_chains(archive: TrajectoryArchive, u, t: float) -> Set[ActiveChain]:
    """Enumerate every label map on {s} and the jump times, keep those that encode valid chains."""
    s = float(u[0])
    if s == t:
        return set(enumerate_active_chains(archive, u, t, guard=10**9))
    inner = [e for e in archive.jump_times(s, t) if s < e < t]
    n = len(archive.tracks)
    found = set()
    for labels in itertools.product(range(n), repeat=len(inner) + 1):
        pis = [s]
        seq = [labels[0]]
        for e, lab in zip(inner, labels[1:]):
            if lab != seq[-1]:
                pis.append(e)
                seq.append(lab)
        ch = ActiveChain(tuple(pis) + (t,), tuple(seq))
        if validate_chain(archive, u, t, ch) is None:
            found.add(ch)
    return found


def chain_end(archive: TrajectoryArchive, chain: ActiveChain, t: float) -> Vertex:
    return archive.tracks[chain.end_label()].at(t)


def chain_functional_IuA(archive: TrajectoryArchive, u, A, t: float, guard: int = 20,
                         chains: Optional[List[ActiveChain]] = None) -> float:
    """Sum over chains of exp(-nu d(Z(t), A) / 8); A is a vertex set or LATTICE."""
    if chains is None:
        chains = enumerate_active_chains(archive, u, t, guard)
    if isinstance(A, str):
        if A != LATTICE:
            raise ValueError("A must be a vertex set or 'lattice'")
        return float(len(chains))
    A = [tuple(a) for a in A]
    total = 0.0
    for ch in chains:
        total += math.exp(-archive.nu * set_distance(chain_end(archive, ch, t), A) / 8.0)
    return total


def simulate_sir(archive: TrajectoryArchive, t: float) -> Dict[str, object]:
    """Run SIR on the recorded paths up to time t.

    Co-location with an infected particle infects; an infected particle heals at
    its first healing point after infection; at equal times healing precedes jumps.
    """
    tracks = archive.tracks
    n = len(tracks)
    state = ["I" if tr.infected else "S" for tr in tracks]
    iota = [0.0 if tr.infected else math.inf for tr in tracks]
    heal = [tr.first_heal_after(0.0) if tr.infected else math.inf for tr in tracks]
    infector = [-1] * n
    pos = [tr.initial for tr in tracks]

    def resolve(now):
        sites: Dict[Vertex, List[int]] = {}
        for a in range(n):
            if state[a] != "R":
                sites.setdefault(pos[a], []).append(a)
        for members in sites.values():
            inf = [a for a in members if state[a] == "I"]
            if not inf:
                continue
            for a in members:
                if state[a] == "S":
                    state[a] = "I"
                    iota[a] = now
                    heal[a] = tracks[a].first_heal_after(now)
                    infector[a] = min(inf)

    resolve(0.0)
    jumps = sorted((tj, a, pj) for a, tr in enumerate(tracks) for tj, pj in zip(tr.times, tr.positions) if tj <= t)
    for tj, group in itertools.groupby(jumps, key=lambda e: e[0]):
        for a in range(n):
            if state[a] == "I" and heal[a] <= tj:
                state[a] = "R"
        for _, a, pj in group:
            pos[a] = pj
        resolve(tj)
    for a in range(n):
        if state[a] == "I" and heal[a] <= t:
            state[a] = "R"
    return {"state": state, "iota": iota, "infector": infector,
            "n_infected": sum(1 for s_ in state if s_ == "I")}


@dataclass
class ChainBoundResult:
    ok: bool
    n_infected: int
    n_chains: int
    invalid_chains: int


def verify_chain_bound(archive: TrajectoryArchive, t: float, guard: int = 20,
                       origin: Optional[Sequence[int]] = None) -> ChainBoundResult:
    """Check |I_t| <= |C_{(0, origin)}(t)| and re-validate every enumerated chain."""
    z = tuple(origin) if origin is not None else (0,) * archive.dim
    chains = enumerate_active_chains(archive, (0.0, z), t, guard)
    bad = sum(1 for ch in chains if validate_chain(archive, (0.0, z), t, ch) is not None)
    ni = simulate_sir(archive, t)["n_infected"]
    return ChainBoundResult(ok=ni <= len(chains) and bad == 0, n_infected=ni, n_chains=len(chains),
                            invalid_chains=bad)


# -- random archives ---------------------------------------------------------

_DIRS2 = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _random_track(rng: np.random.Generator, start: Vertex, T: float, nu: float, infected: bool) -> Track:
    k = rng.poisson(T)
    times = np.sort(rng.uniform(0.0, T, size=k)).tolist()
    d = len(start)
    steps = rng.integers(0, 2 * d, size=k)
    p = tuple(start)
    pos = []
    for st in steps:
        if d == 1:
            p = (p[0] + (1 if st == 0 else -1),)
        else:
            dx, dy = _DIRS2[st]
            p = (p[0] + dx, p[1] + dy)
        pos.append(p)
    heal = np.sort(rng.uniform(0.0, T, size=rng.poisson(nu * T))).tolist()
    return Track(initial=tuple(start), times=times, positions=pos, healing=heal, infected=infected)


def random_archive(rng: np.random.Generator, T: float, nu: float, susceptible_sites: Iterable[Vertex],
                   origin: Vertex = (0, 0)) -> TrajectoryArchive:
    """Free random walks on Z^d for one infected at the origin plus the given susceptibles."""
    tracks = [_random_track(rng, tuple(origin), T, nu, True)]
    for v in susceptible_sites:
        tracks.append(_random_track(rng, tuple(v), T, nu, False))
    return TrajectoryArchive(horizon=T, nu=nu, tracks=tracks)


def poisson_archive(rng: np.random.Generator, T: float, nu: float, density: float, radius: int) -> TrajectoryArchive:
    """Initial susceptibles i.i.d. Poisson(density) per site of [-radius, radius]^2."""
    sites = []
    for x in range(-radius, radius + 1):
        for y in range(-radius, radius + 1):
            sites.extend([(x, y)] * int(rng.poisson(density)))
    return random_archive(rng, T, nu, sites)


def small_archive(rng: np.random.Generator, T: float, nu: float, max_particles: int, radius: int,
                  guard: int) -> Tuple[TrajectoryArchive, int]:
    """Archive with at most `max_particles` walkers and at most `guard` jumps; returns (archive, rejections)."""
    rejected = 0
    while True:
        k = int(rng.integers(0, max_particles))  # susceptibles besides the infected one
        sites = [tuple(int(c) for c in rng.integers(-radius, radius + 1, size=2)) for _ in range(k)]
        arch = random_archive(rng, T, nu, sites)
        if len(arch.jump_times(0.0, T)) <= guard:
            return arch, rejected
        rejected += 1


@dataclass
class DecayEstimate:
    nu: float
    A: str
    s: float
    mean0: float
    mean_s: float
    se_s: float
    bound: float
    n: int

    @property
    def ok(self) -> bool:
        return self.mean_s <= self.bound + 3 * self.se_s


def estimate_decay(nu: float, s_values: Sequence[float], n: int, seed: int, radius: int = 3,
                   guard: int = 400) -> List[DecayEstimate]:
    """Monte Carlo of E I_{u,A}(s) against E I_{u,A}(0) exp(-nu s / 2), u = (0, origin).

    Initial susceptibles are Poisson(nu/8) per site of a small box; walks are free on Z^2.
    """
    from .lattice import RngStream

    rng = RngStream(seed).child("decay", int(round(nu * 1000))).generator()
    T = max(s_values)
    A_sets = {LATTICE: LATTICE, "origin": [(0, 0)]}
    vals = {(a, s): np.empty(n) for a in A_sets for s in list(s_values) + [0.0]}
    u = (0.0, (0, 0))
    for i in range(n):
        arch = poisson_archive(rng, T, nu, nu / 8.0, radius)
        for s in [0.0] + list(s_values):
            chains = enumerate_active_chains(arch, u, s, guard)
            for name, A in A_sets.items():
                vals[(name, s)][i] = chain_functional_IuA(arch, u, A, s, chains=chains)
    out = []
    for name in A_sets:
        m0 = float(vals[(name, 0.0)].mean())
        for s in s_values:
            v = vals[(name, s)]
            out.append(DecayEstimate(nu=nu, A=name, s=float(s), mean0=m0, mean_s=float(v.mean()),
                                     se_s=float(v.std(ddof=1) / math.sqrt(n)),
                                     bound=m0 * math.exp(-nu * s / 2.0), n=n))
    return out
