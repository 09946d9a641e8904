"""Lattice geometry on Z^d: distances, disks, annuli, blocks, hole filling, Poisson configurations."""
from __future__ import annotations

import itertools
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Sequence, Tuple

import numpy as np
from scipy import ndimage

Vertex = Tuple[int, ...]


class BoundaryWarning(UserWarning):
    """A set touches the window boundary, so window-relative results may be truncated."""


def l1_distance(x: Sequence[int], y: Sequence[int]) -> int:
    if len(x) != len(y):
        raise ValueError("dimension mismatch")
    return int(sum(abs(int(a) - int(b)) for a, b in zip(x, y)))


def linf_distance(x: Sequence[int], y: Sequence[int]) -> int:
    if len(x) != len(y):
        raise ValueError("dimension mismatch")
    return int(max(abs(int(a) - int(b)) for a, b in zip(x, y)))


def set_distance(x: Sequence[int], A: Iterable[Sequence[int]]) -> float:
    """L1 distance from x to a set; inf for the empty set."""
    best = float("inf")
    for a in A:
        d = l1_distance(x, a)
        if d < best:
            best = d
    return best


def _ball(center: Sequence[int], r: int) -> Iterator[Vertex]:
    d = len(center)
    if d == 1:
        for k in range(-r, r + 1):
            yield (center[0] + k,)
        return
    # recurse on first coordinate
    for k in range(-r, r + 1):
        for rest in _ball(center[1:], r - abs(k)):
            yield (center[0] + k,) + rest


def disk(center: Sequence[int], r: int) -> list:
    """Closed L1 ball, sorted lexicographically."""
    if r < 0:
        return []
    center = tuple(int(c) for c in center)
    return sorted(_ball(center, int(r)))


def annulus(center: Sequence[int], r1: int, r2: int) -> list:
    """{y : r1 <= |y - center|_1 <= r2}."""
    if r2 < r1:
        raise ValueError("inner radius exceeds outer radius")
    c = tuple(int(v) for v in center)
    return [y for y in disk(c, r2) if l1_distance(y, c) >= r1]


def dilate(A: Iterable[Sequence[int]], r: int) -> set:
    """D(A, r): union of L1 disks of radius r around A."""
    out: set = set()
    for a in A:
        out.update(disk(a, r))
    return out


def block_of(v: Sequence[int], L: int) -> Vertex:
    """Index z of the block zL + {-L/2, ..., L/2-1}^d containing v."""
    _check_L(L)
    h = L // 2
    return tuple((int(x) + h) // L for x in v)


def block_sites(z: Sequence[int], L: int) -> list:
    _check_L(L)
    h = L // 2
    ranges = [range(int(c) * L - h, int(c) * L + h) for c in z]
    return [tuple(p) for p in itertools.product(*ranges)]


def block_distance(z1: Sequence[int], z2: Sequence[int]) -> int:
    """L1 distance between block indices."""
    return l1_distance(z1, z2)


def _check_L(L: int) -> None:
    if L < 2 or L % 2:
        raise ValueError(f"block side must be even and >= 2, got {L}")


@dataclass(frozen=True)
class Window:
    """Box [-radius, radius]^d with a boundary band of width `margin`."""

    radius: int
    margin: int = 1
    dim: int = 2

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be positive")
        if not (0 <= self.margin < self.radius):
            raise ValueError("margin must satisfy 0 <= margin < radius")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.side,) * self.dim

    def contains(self, v: Sequence[int]) -> bool:
        return all(abs(int(x)) <= self.radius for x in v)

    def in_band(self, v: Sequence[int]) -> bool:
        return self.contains(v) and any(abs(int(x)) > self.radius - self.margin for x in v)

    def to_index(self, v: Sequence[int]) -> Tuple[int, ...]:
        return tuple(int(x) + self.radius for x in v)

    def from_index(self, idx: Sequence[int]) -> Vertex:
        return tuple(int(i) - self.radius for i in idx)

    def sites(self) -> list:
        r = self.radius
        return [tuple(p) for p in itertools.product(range(-r, r + 1), repeat=self.dim)]

    def mask(self, A: Iterable[Sequence[int]]) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for a in A:
            if self.contains(a):
                m[self.to_index(a)] = True
        return m

    def band_mask(self) -> np.ndarray:
        m = np.ones(self.shape, dtype=bool)
        inner = tuple(slice(self.margin, self.side - self.margin) for _ in range(self.dim))
        m[inner] = False
        return m


def fill_mask(mask: np.ndarray) -> np.ndarray:
    """A plus the components of its complement (4-connected) that avoid the array edge."""
    comp = ~mask
    lab, n = ndimage.label(comp)
    if n == 0:
        return mask.copy()
    edge = np.zeros(n + 1, dtype=bool)
    for ax in range(mask.ndim):
        for sl in (0, -1):
            idx = [slice(None)] * mask.ndim
            idx[ax] = sl
            edge[np.unique(lab[tuple(idx)])] = True
    edge[0] = True
    return mask | ~edge[lab]


def fill_bounded_components(A: Iterable[Sequence[int]], window: Window) -> set:
    """[A] relative to the window. Warns if A reaches the boundary band."""
    A = list(A)
    m = window.mask(A)
    if (m & window.band_mask()).any():
        warnings.warn("set touches the window boundary band", BoundaryWarning, stacklevel=2)
    filled = fill_mask(m)
    out = {window.from_index(i) for i in zip(*np.nonzero(filled))}
    out.update(tuple(int(x) for x in a) for a in A if not window.contains(a))
    return out


def sample_poisson_config(region: Iterable[Sequence[int]], mu: float, rng) -> Dict[Vertex, int]:
    """Independent Poisson(mu) counts on the region, drawn in sorted site order."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if isinstance(rng, RngStream):
        rng = rng.generator()
    sites = sorted(tuple(int(x) for x in v) for v in region)
    counts = rng.poisson(mu, size=len(sites))
    return {s: int(c) for s, c in zip(sites, counts)}


def _tag_int(tag) -> int:
    if isinstance(tag, int):
        return tag & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode())


@dataclass(frozen=True)
class RngStream:
    """Named, hierarchically derived random stream; children are reproducible and independent."""

    seed: int
    path: Tuple[int, ...] = field(default_factory=tuple)

    def child(self, tag, i: int = 0) -> "RngStream":
        return RngStream(self.seed, self.path + (_tag_int(tag), int(i)))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.seed), spawn_key=self.path)

    @property
    def key(self) -> int:
        """64-bit key for the in-kernel counter generator."""
        return int(self.seed_sequence().generate_state(1, dtype=np.uint64)[0])

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence())
