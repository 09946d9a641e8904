"""Numba SSP sweep on a rectangle with strictly positive clocks.

With positive clocks every ring at time t was scheduled before t, so a batch
pop of all rings at t resolves the tie rule without topological ordering.
"""
import numpy as np
from numba import njit

DX = np.array([1, -1, 0, 0], dtype=np.int64)
DY = np.array([0, 0, 1, -1], dtype=np.int64)
UNSET, RED, BLUE = -1, 0, 1


@njit(cache=True)
def _push(ht, hv, hc, n, t, v, c):
    i = n
    ht[i], hv[i], hc[i] = t, v, c
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] < ht[i] or (ht[p] == ht[i] and hv[p] <= hv[i]):
            break
        ht[p], ht[i] = ht[i], ht[p]
        hv[p], hv[i] = hv[i], hv[p]
        hc[p], hc[i] = hc[i], hc[p]
        i = p
    return n + 1


@njit(cache=True)
def _pop(ht, hv, hc, n):
    t, v, c = ht[0], hv[0], hc[0]
    n -= 1
    ht[0], hv[0], hc[0] = ht[n], hv[n], hc[n]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        m = l
        r = l + 1
        if r < n and (ht[r] < ht[l] or (ht[r] == ht[l] and hv[r] < hv[l])):
            m = r
        if ht[i] < ht[m] or (ht[i] == ht[m] and hv[i] <= hv[m]):
            break
        ht[i], ht[m] = ht[m], ht[i]
        hv[i], hv[m] = hv[m], hv[i]
        hc[i], hc[m] = hc[m], hc[i]
        i = m
    return t, v, c, n


@njit(cache=True)
def sweep(xr, xb, seeds, kappa, ox, oy, T, C, P):
    """xr, xb: (nx, ny, 4) clocks; seeds: (nx, ny) bool; fills T, C, P (parent flat index)."""
    nx, ny = seeds.shape
    N = nx * ny
    ht = np.empty(4 * N + 4, dtype=np.float64)
    hv = np.empty(4 * N + 4, dtype=np.int64)
    hc = np.empty(4 * N + 4, dtype=np.int64)  # parent * 2 + proposed colour
    batch = np.empty(N, dtype=np.int64)
    n = 0
    o = ox * ny + oy
    T[ox, oy] = 0.0
    C[ox, oy] = BLUE if seeds[ox, oy] else RED
    P[ox, oy] = -1
    nb = 1
    batch[0] = o
    t = 0.0
    ties = 0
    while True:
        for k in range(nb):
            u = batch[k]
            ux, uy = u // ny, u % ny
            cu = C[ux, uy]
            for d in range(4):
                vx, vy = ux + DX[d], uy + DY[d]
                if vx < 0 or vy < 0 or vx >= nx or vy >= ny or C[vx, vy] != UNSET:
                    continue
                if cu == RED:
                    x = xr[ux, uy, d]
                    col = BLUE if seeds[vx, vy] else RED
                else:
                    x = xb[ux, uy, d]
                    col = BLUE if (seeds[vx, vy] or x == kappa) else RED
                n = _push(ht, hv, hc, n, t + x, vx * ny + vy, u * 2 + col)
        if n == 0:
            break
        t = ht[0]
        nb = 0
        while n > 0 and ht[0] == t:
            _, v, pc, n = _pop(ht, hv, hc, n)
            vx, vy = v // ny, v % ny
            col = pc & 1
            if C[vx, vy] == UNSET:
                T[vx, vy] = t
                C[vx, vy] = col
                P[vx, vy] = pc >> 1
                batch[nb] = v
                nb += 1
            elif T[vx, vy] == t and col == BLUE and C[vx, vy] == RED:
                C[vx, vy] = BLUE
                P[vx, vy] = pc >> 1
                ties += 1
    return ties
