"""Red/blue competing growth (SSP) on a finite vertex set of Z^2.

Red grows through clocks X_R in [0, red_cap]; blue seeds cannot be invaded
and, once reached, grow through clocks X_B in [0, blue_cap]. A blue vertex
rings a non-seed neighbour blue only along an edge with X_B == blue_cap,
otherwise red. On simultaneous rings with different colours, blue wins.

Times may be floats or Fractions; all arithmetic is exact on Fractions,
which the block coupling relies on.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from .serialization import SCHEMA_VERSION, SchemaError, dumps

Vertex = Tuple[int, int]
Edge = Tuple[Vertex, Vertex]
RED, BLUE = "R", "B"
_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def box(radius: int) -> frozenset:
    """Square window [-radius, radius]^2."""
    return frozenset((x, y) for x in range(-radius, radius + 1) for y in range(-radius, radius + 1))


def rectangle(x0: int, x1: int, y0: int, y1: int) -> frozenset:
    """Vertices with x0 <= x <= x1 and y0 <= y <= y1."""
    return frozenset((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))


def neighbours(v: Vertex) -> List[Vertex]:
    return [(v[0] + dx, v[1] + dy) for dx, dy in _STEPS]


@dataclass
class SspConfig:
    vertices: frozenset
    kappa: object
    seeds: frozenset = frozenset()
    origin: Vertex = (0, 0)
    x_red: Dict[Edge, object] = field(default_factory=dict)
    x_blue: Dict[Edge, object] = field(default_factory=dict)
    red_default: object = 1
    blue_default: object = None
    red_cap: object = 1
    blue_cap: object = None

    def __post_init__(self):
        self.vertices = frozenset(tuple(v) for v in self.vertices)
        self.seeds = frozenset(tuple(v) for v in self.seeds)
        self.origin = tuple(self.origin)
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.blue_cap is None:
            self.blue_cap = self.kappa
        if self.blue_default is None:
            self.blue_default = self.blue_cap
        if self.origin not in self.vertices:
            raise ValueError("origin must lie in the window")

    def red(self, u: Vertex, v: Vertex):
        return self.x_red.get((u, v), self.red_default)

    def blue(self, u: Vertex, v: Vertex):
        return self.x_blue.get((u, v), self.blue_default)

    def clock(self, colour: str, u: Vertex, v: Vertex):
        return self.red(u, v) if colour == RED else self.blue(u, v)

    def out_edges(self, u: Vertex) -> List[Vertex]:
        return [w for w in neighbours(u) if w in self.vertices]

    def boundary(self) -> Set[Vertex]:
        """Window vertices with a lattice neighbour outside the window."""
        return {v for v in self.vertices if any(w not in self.vertices for w in neighbours(v))}

    def to_dict(self) -> dict:
        enc = _num_out
        return {
            "schema_version": SCHEMA_VERSION,
            "vertices": sorted(list(v) for v in self.vertices),
            "kappa": enc(self.kappa), "origin": list(self.origin),
            "seeds": sorted(list(v) for v in self.seeds),
            "red_default": enc(self.red_default), "blue_default": enc(self.blue_default),
            "red_cap": enc(self.red_cap), "blue_cap": enc(self.blue_cap),
            "x_red": sorted([list(u), list(v), enc(x)] for (u, v), x in self.x_red.items() if x != self.red_default),
            "x_blue": sorted([list(u), list(v), enc(x)] for (u, v), x in self.x_blue.items() if x != self.blue_default),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SspConfig":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError("ssp config schema version mismatch")
        dec = _num_in
        return cls(
            vertices=frozenset(tuple(v) for v in d["vertices"]), kappa=dec(d["kappa"]),
            seeds=frozenset(tuple(v) for v in d["seeds"]), origin=tuple(d["origin"]),
            x_red={(tuple(u), tuple(v)): dec(x) for u, v, x in d["x_red"]},
            x_blue={(tuple(u), tuple(v)): dec(x) for u, v, x in d["x_blue"]},
            red_default=dec(d["red_default"]), blue_default=dec(d["blue_default"]),
            red_cap=dec(d["red_cap"]), blue_cap=dec(d["blue_cap"]),
        )


def _num_out(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return x


def _num_in(x):
    if isinstance(x, str):
        return Fraction(x)
    return x


@dataclass
class ConfigReport:
    ok: bool
    cycle: Optional[List[Vertex]] = None
    bad_edge: Optional[Tuple[str, Edge, object]] = None


def _zero_edge(cfg: SspConfig, u: Vertex, v: Vertex) -> bool:
    return min(cfg.red(u, v), cfg.blue(u, v)) == 0


def validate_config(cfg: SspConfig) -> ConfigReport:
    """Check clock ranges and look for a directed cycle of zero-clock edges."""
    for name, table, cap in (("red", cfg.x_red, cfg.red_cap), ("blue", cfg.x_blue, cfg.blue_cap)):
        for e, x in table.items():
            if not (0 <= x <= cap):
                return ConfigReport(False, bad_edge=(name, e, x))
    if not (0 <= cfg.red_default <= cfg.red_cap) or not (0 <= cfg.blue_default <= cfg.blue_cap):
        return ConfigReport(False, bad_edge=("default", None, None))
    # only explicitly stored edges can be zero unless a default is zero
    if cfg.red_default == 0 or cfg.blue_default == 0:
        cand = {(u, v) for u in cfg.vertices for v in cfg.out_edges(u)}
    else:
        cand = set(cfg.x_red) | set(cfg.x_blue)
    succ = defaultdict(list)
    for u, v in cand:
        if u in cfg.vertices and v in cfg.vertices and _zero_edge(cfg, u, v):
            succ[u].append(v)
    colour = {}
    for root in sorted(succ):
        if root in colour:
            continue
        stack = [(root, iter(succ[root]))]
        colour[root] = 1
        path = [root]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = 2
                stack.pop()
                path.pop()
            elif colour.get(nxt) == 1:
                i = path.index(nxt)
                return ConfigReport(False, cycle=path[i:] + [nxt])
            elif nxt not in colour:
                colour[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(succ[nxt])))
    return ConfigReport(True)


@dataclass
class SspState:
    T: Dict[Vertex, object]
    C: Dict[Vertex, str]
    parent: Dict[Vertex, Optional[Vertex]]
    boundary_flag: bool
    ties: int = 0

    def region_at(self, t) -> Tuple[Set[Vertex], Set[Vertex]]:
        red = {v for v, s in self.T.items() if s <= t and self.C[v] == RED}
        blue = {v for v, s in self.T.items() if s <= t and self.C[v] == BLUE}
        return red, blue

    @property
    def red_final(self) -> Set[Vertex]:
        return {v for v, c in self.C.items() if c == RED}

    @property
    def blue_final(self) -> Set[Vertex]:
        return {v for v, c in self.C.items() if c == BLUE}

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "vertices": sorted([list(v), _num_out(self.T[v]), self.C[v]] for v in self.T),
                "boundary_flag": self.boundary_flag, "ties": self.ties}


def region_at(state: SspState, t) -> Tuple[Set[Vertex], Set[Vertex]]:
    return state.region_at(t)


def _ring_colour(cfg: SspConfig, cu: str, u: Vertex, v: Vertex) -> str:
    if v in cfg.seeds:
        return BLUE
    if cu == RED:
        return RED
    return BLUE if cfg.blue(u, v) == cfg.blue_cap else RED


class SspAssignmentError(AssertionError):
    pass


def run_ssp(cfg: SspConfig) -> SspState:
    """Event-driven execution; vertices outside the window never activate."""
    T: Dict[Vertex, object] = {}
    C: Dict[Vertex, str] = {}
    parent: Dict[Vertex, Optional[Vertex]] = {}
    heap: list = []
    seq = itertools.count()
    ties = 0

    def activate(v, t, col, par):
        if v in T:
            raise SspAssignmentError(f"vertex {v} assigned twice")
        T[v], C[v], parent[v] = t, col, par

    o = cfg.origin
    activate(o, 0 * cfg.red_cap, BLUE if o in cfg.seeds else RED, None)
    pending = {o}
    t = T[o]
    rings: Dict[Vertex, List[Vertex]] = defaultdict(list)
    while True:
        # pending: vertices activated at time t whose outgoing rings are not yet scheduled
        _settle(cfg, t, pending, rings, T, C, activate, heap, seq)
        ties += sum(1 for v, us in rings.items() if len(us) > 1)
        rings = defaultdict(list)
        pending = set()
        if not heap:
            break
        t = heap[0][0]
        while heap and heap[0][0] == t:
            _, _, v, u = heapq.heappop(heap)
            if v not in T:
                rings[v].append(u)
    bset = cfg.boundary()
    flag = any(C[v] == BLUE and v in bset for v in T)
    return SspState(T=T, C=C, parent=parent, boundary_flag=flag, ties=ties)


def _settle(cfg, t, pending, rings, T, C, activate, heap, seq):
    """Resolve every activation at time t, following zero clocks in topological order."""
    # vertices reachable by zero edges from anything that could activate now
    sources = set(rings) | pending
    S = set(v for v in rings if v not in T)
    stack = list(sources)
    seen = set(sources)
    while stack:
        w = stack.pop()
        for v in cfg.out_edges(w):
            if v not in T and v not in seen and _zero_edge(cfg, w, v):
                seen.add(v)
                S.add(v)
                stack.append(v)
    # out-of-S activations at t (pending) ring first
    for u in sorted(pending):
        _emit(cfg, u, t, S, rings, T, C, heap, seq)
    indeg = {v: 0 for v in S}
    for w in S:
        for v in cfg.out_edges(w):
            if v in S and _zero_edge(cfg, w, v):
                indeg[v] += 1
    queue = sorted(v for v in S if indeg[v] == 0)
    done = 0
    while queue:
        v = queue.pop(0)
        done += 1
        src = rings.get(v)
        if src and v not in T:
            cols = [(_ring_colour(cfg, C[u], u, v), u) for u in src]
            blue = [u for c, u in cols if c == BLUE]
            col = BLUE if blue else RED
            par = min(blue) if blue else min(src)
            activate(v, t, col, par)
            _emit(cfg, v, t, S, rings, T, C, heap, seq)
        for w in cfg.out_edges(v):
            if w in S and _zero_edge(cfg, v, w):
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
    if done != len(S):
        raise SspAssignmentError("zero-clock cycle encountered")


def _emit(cfg, u, t, S, rings, T, C, heap, seq):
    for w in cfg.out_edges(u):
        if w in T:
            continue
        x = cfg.clock(C[u], u, w)
        if x == 0:
            rings[w].append(u)
        else:
            heapq.heappush(heap, (t + x, next(seq), w, u))


def audit_ssp(cfg: SspConfig, state: SspState) -> List[str]:
    """Re-derive every (T, C) from its in-neighbours; returns the list of violations."""
    bad = []
    T, C = state.T, state.C
    o = cfg.origin
    if T.get(o) != 0:
        bad.append("origin time")
    if C.get(o) != (BLUE if o in cfg.seeds else RED):
        bad.append("origin colour")
    for v in cfg.vertices:
        if v == o:
            continue
        cands = []
        for dx, dy in _STEPS:
            u = (v[0] - dx, v[1] - dy)
            if u in T:
                cands.append((T[u] + (cfg.red(u, v) if C[u] == RED else cfg.blue(u, v)), u))
        if v not in T:
            if cands:
                bad.append(f"{v} never activated despite ringing neighbour")
            continue
        if not cands:
            bad.append(f"{v} activated without a ringing neighbour")
            continue
        m = min(c for c, _ in cands)
        if T[v] != m:
            bad.append(f"{v} time {T[v]} != first ring {m}")
            continue
        cols = set()
        for c, u in cands:
            if c != m:
                continue
            if v in cfg.seeds:
                cols.add(BLUE)
            elif C[u] == RED:
                cols.add(RED)
            elif cfg.blue(u, v) == cfg.blue_cap:
                cols.add(BLUE)
            else:
                cols.add(RED)
        want = BLUE if BLUE in cols else RED
        if C[v] != want:
            bad.append(f"{v} colour {C[v]} != {want}")
    for v, u in state.parent.items():
        if u is None:
            continue
        x = cfg.clock(C[u], u, v)
        cap = cfg.red_cap if C[u] == RED else cfg.blue_cap
        if T[v] != T[u] + x or not (0 <= x <= cap):
            bad.append(f"parent edge {u}->{v} inconsistent")
    return bad


def sample_random_instance(vertices: frozenset, kappa: float, p: float, rng: np.random.Generator,
                           q: float = 0.5, origin: Vertex = (0, 0)) -> SspConfig:
    """X_R ~ U[0,1]; X_B = kappa w.p. q else U[0, kappa); seeds i.i.d. Bernoulli(p)."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    verts = sorted(vertices)
    edges = [(u, w) for u in verts for w in neighbours(u) if w in vertices]
    xr = rng.uniform(0.0, 1.0, size=len(edges))
    coin = rng.uniform(size=len(edges)) < q
    xb = np.where(coin, kappa, rng.uniform(0.0, kappa, size=len(edges)))
    # U[0, kappa) can round up to kappa in floating point
    xb = np.where(~coin & (xb >= kappa), np.nextafter(kappa, 0.0), xb)
    seeds = frozenset(v for v, b in zip(verts, rng.uniform(size=len(verts)) < p) if b)
    return SspConfig(vertices=vertices, kappa=kappa, seeds=seeds, origin=origin,
                     x_red=dict(zip(edges, xr.tolist())), x_blue=dict(zip(edges, xb.tolist())))


def red_cluster_reaches_edge(cfg: SspConfig, state: SspState) -> bool:
    """Whether the red cluster connected to the origin touches the window boundary."""
    if state.C.get(cfg.origin) != RED:
        return False
    bset = cfg.boundary()
    seen = {cfg.origin}
    stack = [cfg.origin]
    while stack:
        v = stack.pop()
        if v in bset:
            return True
        for w in cfg.out_edges(v):
            if w not in seen and state.C.get(w) == RED:
                seen.add(w)
                stack.append(w)
    return False


# -- rectangular fast path ---------------------------------------------------

@dataclass
class GridInstance:
    """Rectangle [x0, x0+nx) x [y0, y0+ny) with per-direction clock arrays (steps +x, -x, +y, -y)."""
    x0: int
    y0: int
    kappa: float
    xr: np.ndarray      # (nx, ny, 4)
    xb: np.ndarray      # (nx, ny, 4)
    seeds: np.ndarray   # (nx, ny) bool
    origin: Vertex = (0, 0)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.seeds.shape

    def index(self, v: Vertex) -> Tuple[int, int]:
        return v[0] - self.x0, v[1] - self.y0

    def vertex(self, i: int, j: int) -> Vertex:
        return i + self.x0, j + self.y0

    def vertices(self) -> frozenset:
        nx, ny = self.shape
        return rectangle(self.x0, self.x0 + nx - 1, self.y0, self.y0 + ny - 1)

    def seed_set(self) -> Set[Vertex]:
        return {self.vertex(int(i), int(j)) for i, j in zip(*np.nonzero(self.seeds))}

    def to_config(self) -> SspConfig:
        nx, ny = self.shape
        xr, xb = {}, {}
        for i in range(nx):
            for j in range(ny):
                u = self.vertex(i, j)
                for d, (dx, dy) in enumerate(_STEPS):
                    if 0 <= i + dx < nx and 0 <= j + dy < ny:
                        w = (u[0] + dx, u[1] + dy)
                        xr[(u, w)] = float(self.xr[i, j, d])
                        xb[(u, w)] = float(self.xb[i, j, d])
        return SspConfig(vertices=self.vertices(), kappa=self.kappa, seeds=frozenset(self.seed_set()),
                         origin=self.origin, x_red=xr, x_blue=xb)


@dataclass
class GridState:
    T: np.ndarray
    C: np.ndarray       # -1 unset, 0 red, 1 blue
    parent: np.ndarray  # flat parent index or -1
    boundary_flag: bool
    ties: int

    def blue_set(self, inst: GridInstance) -> Set[Vertex]:
        return {inst.vertex(int(i), int(j)) for i, j in zip(*np.nonzero(self.C == 1))}

    def red_set(self, inst: GridInstance) -> Set[Vertex]:
        return {inst.vertex(int(i), int(j)) for i, j in zip(*np.nonzero(self.C == 0))}


def sample_grid_instance(x0: int, x1: int, y0: int, y1: int, kappa: float, p: float, rng: np.random.Generator,
                         q: float = 0.5, origin: Vertex = (0, 0)) -> GridInstance:
    """Same laws as sample_random_instance, stored as arrays; clocks are strictly positive."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    nx, ny = x1 - x0 + 1, y1 - y0 + 1
    tiny = np.finfo(float).tiny
    xr = np.maximum(rng.uniform(0.0, 1.0, size=(nx, ny, 4)), tiny)
    coin = rng.uniform(size=(nx, ny, 4)) < q
    xb = np.minimum(np.maximum(rng.uniform(0.0, kappa, size=(nx, ny, 4)), tiny), np.nextafter(kappa, 0.0))
    xb = np.where(coin, kappa, xb)
    seeds = rng.uniform(size=(nx, ny)) < p
    return GridInstance(x0, y0, float(kappa), xr, xb, seeds, origin)


def run_ssp_grid(inst: GridInstance) -> GridState:
    from . import _ssp_kernel as K

    if not (np.all(inst.xr > 0) and np.all(inst.xb > 0)):
        raise ValueError("grid path needs strictly positive clocks; use run_ssp")
    if np.any(inst.xr > 1) or np.any(inst.xb > inst.kappa):
        raise ValueError("clock out of range")
    nx, ny = inst.shape
    T = np.full((nx, ny), np.inf)
    C = np.full((nx, ny), -1, dtype=np.int64)
    P = np.full((nx, ny), -1, dtype=np.int64)
    ox, oy = inst.index(inst.origin)
    ties = K.sweep(inst.xr, inst.xb, inst.seeds, inst.kappa, ox, oy, T, C, P)
    edge = np.zeros((nx, ny), dtype=bool)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    return GridState(T, C, P, bool(np.any(edge & (C == 1))), int(ties))


def audit_grid(inst: GridInstance, st: GridState) -> int:
    """Vectorised re-derivation of (T, C) from in-neighbours; returns the number of violations."""
    nx, ny = inst.shape
    T, C = st.T, st.C
    ring = np.full((4, nx, ny), np.inf)
    blue_ring = np.zeros((4, nx, ny), dtype=bool)
    for d, (dx, dy) in enumerate(_STEPS):
        # u = v - step; ring into v along direction d
        src = (slice(max(0, -dx), nx - max(0, dx)), slice(max(0, -dy), ny - max(0, dy)))
        dst = (slice(max(0, dx), nx - max(0, -dx)), slice(max(0, dy), ny - max(0, -dy)))
        cu = C[src]
        x = np.where(cu == 0, inst.xr[src + (d,)], inst.xb[src + (d,)])
        tt = np.where(cu >= 0, T[src] + x, np.inf)
        ring[(d,) + dst] = tt
        blue_ring[(d,) + dst] = (cu == 1) & (inst.xb[src + (d,)] == inst.kappa)
    first = ring.min(axis=0)
    hit = ring == first[None]
    want_blue = inst.seeds | np.any(hit & blue_ring & np.isfinite(first)[None], axis=0)
    want = np.where(np.isfinite(first), np.where(want_blue, 1, 0), -1)
    ox, oy = inst.index(inst.origin)
    first[ox, oy] = 0.0
    want[ox, oy] = 1 if inst.seeds[ox, oy] else 0
    bad = (T != first) | (C != want)
    return int(bad.sum())


def red_cluster_reaches_edge_grid(inst: GridInstance, st: GridState) -> bool:
    from scipy import ndimage

    lab, _ = ndimage.label(st.C == 0)
    ox, oy = inst.index(inst.origin)
    k = lab[ox, oy]
    if k == 0:
        return False
    comp = lab == k
    return bool(comp[0, :].any() or comp[-1, :].any() or comp[:, 0].any() or comp[:, -1].any())
