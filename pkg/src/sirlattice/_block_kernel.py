"""Numba kernels for the block-Poisson construction.

Every particle of a block process M_B owns keyed substreams (forward walk,
past walk, healing points), so its two-sided path is a pure function of
(root key, block, site, index) and never depends on reveal order.
"""
import numpy as np
from numba import njit

from .rng import exponential, poisson, randbelow, subkey

# particle int columns
PX, PY, PST, PBLK, PCAND, PINF = 0, 1, 2, 3, 4, 5
N_PI = 6
# particle float columns
OFF, OWNNEXT, NEXT, HEAL, IOTA, HOFF = 0, 1, 2, 3, 4, 5
N_PF = 6
# particle uint64 columns
RNG, HKEY = 0, 1
# candidate int columns
CBLK, CX0, CY0, CHX, CHY = 0, 1, 2, 3, 4
N_CI = 5
# candidate uint64 columns
CKEY, CSTATE = 0, 1
# block int columns
BCAUSE, BIGP, BIGX, BIGY, BIGSRC, BCS, BCE = 0, 1, 2, 3, 4, 5, 6
N_BI = 7
CAUSE_NONE, CAUSE_A, CAUSE_B, CAUSE_C = -1, 0, 1, 2

# iv slots
N_P, N_INF, N_S, N_R, HEAP_N, N_JUMPS, N_INFECT, N_HEAL, FRONT, CENSORED = range(10)
FEED_N, LOG_N, LOG_OVERFLOW, N_REVEAL, N_REJECT, N_SWITCH, N_SIMULT, N_COLOURED = range(10, 18)
N_IV = 20
# fv slots
NOW, CENSOR_T, EXTINCT_T = 0, 1, 2
N_FV = 4
# params
P_RADIUS, P_MARGIN, P_NU, P_XI, P_ALPHAL, P_L, P_ZMIN, P_NZ, P_LOG = range(9)
N_PARAMS = 9

# event classes, ordered for ties
EV_HEALING, EV_COLOUR, EV_REVEAL, EV_JUMP = 0, 1, 2, 3
SHIFT = 40
MASK = (1 << SHIFT) - 1

# log kinds
LG_JUMP, LG_INFECT, LG_HEAL, LG_REVEAL, LG_SWITCH, LG_COLOUR = 0, 1, 2, 3, 4, 5

S, I, R = 0, 1, 2
ST_REACHED, ST_EXTINCT, ST_CENSORED = 0, 1, 2

TAG_COUNT, TAG_IG_WALK, TAG_IG_HEAL = -1, -2, -3
STREAM_FWD, STREAM_PAST, STREAM_HEAL = 1, 2, 3


@njit(cache=True)
def block_key(root, bx, by):
    return subkey(root, bx, by, 0)


@njit(cache=True)
def particle_key(bkey, x, y, k):
    return subkey(bkey, x, y, k)


@njit(cache=True)
def stream(pkey, which):
    return subkey(pkey, which, 0, 0)


@njit(cache=True, inline="always")
def step(x, y, d, radius):
    """One lattice step with direction 0:+x 1:-x 2:+y 3:-y; rejected outside |.|_inf <= radius (radius < 0: none)."""
    x1, y1 = x, y
    if d == 0:
        x1 += 1
    elif d == 1:
        x1 -= 1
    elif d == 2:
        y1 += 1
    else:
        y1 -= 1
    if radius >= 0 and (abs(x1) > radius or abs(y1) > radius):
        return x, y
    return x1, y1


@njit(cache=True, inline="always")
def block_coord(v, L):
    return (v + L // 2) // L


@njit(cache=True)
def first_point_after(hkey, nu, t0):
    """First point after t0 of the keyed rate-nu Poisson process on [0, inf)."""
    if nu <= 0.0:
        return np.inf
    st = np.empty(1, dtype=np.uint64)
    st[0] = hkey
    t = 0.0
    while True:
        t += exponential(st, nu)
        if t > t0:
            return t


@njit(cache=True)
def sample_candidates(root, mu, xi, L, zmin, nz, radius, rc, ci, cf, cu, bi):
    """Fill candidate arrays block by block; returns the count or -1 when capacity is short."""
    h = L // 2
    cap = ci.shape[0]
    n = 0
    st = np.empty(1, dtype=np.uint64)
    fs = np.empty(1, dtype=np.uint64)
    for ix in range(nz):
        for iy in range(nz):
            bx = zmin + ix
            by = zmin + iy
            b = ix * nz + iy
            bi[b, BCS] = n
            bk = block_key(root, bx, by)
            lox, hix = bx * L - h, bx * L + h - 1
            loy, hiy = by * L - h, by * L + h - 1
            for x in range(max(lox - rc, -radius), min(hix + rc, radius) + 1):
                for y in range(max(loy - rc, -radius), min(hiy + rc, radius) + 1):
                    st[0] = subkey(bk, x, y, TAG_COUNT)
                    m = poisson(st, mu)
                    inside = lox <= x <= hix and loy <= y <= hiy
                    for k in range(m):
                        pk = particle_key(bk, x, y, k)
                        fs[0] = stream(pk, STREAM_FWD)
                        hit = 0.0
                        hx, hy = x, y
                        if not inside:
                            hit = -1.0
                            t = 0.0
                            while True:
                                t += exponential(fs, 1.0)
                                if t > xi:
                                    break
                                d = randbelow(fs, 4)
                                hx, hy = step(hx, hy, d, radius)
                                if lox <= hx <= hix and loy <= hy <= hiy:
                                    hit = t
                                    break
                            if hit < 0.0:
                                continue
                        if n >= cap:
                            return -1
                        ci[n, CBLK] = b
                        ci[n, CX0] = x
                        ci[n, CY0] = y
                        ci[n, CHX] = hx
                        ci[n, CHY] = hy
                        cf[n] = hit
                        cu[n, CKEY] = pk
                        cu[n, CSTATE] = fs[0]
                        n += 1
            bi[b, BCE] = n
    return n


@njit(cache=True, inline="always")
def _tau_at(x, y, bt, L, zmin, nz):
    ix = block_coord(x, L) - zmin
    iy = block_coord(y, L) - zmin
    if ix < 0 or iy < 0 or ix >= nz or iy >= nz:
        return np.inf
    return bt[ix * nz + iy, 0]


@njit(cache=True)
def reveal_ok(c, off, ci, cf, cu, bt, L, zmin, nz, radius):
    """True iff the shifted path a(s - off) sits in an uncoloured block at every s < off + hit."""
    pk = cu[c, CKEY]
    hit = cf[c]
    st = np.empty(1, dtype=np.uint64)
    x, y = ci[c, CX0], ci[c, CY0]
    if hit > 0.0:
        st[0] = stream(pk, STREAM_FWD)
        t = 0.0
        while True:
            tn = t + exponential(st, 1.0)
            end = tn if tn < hit else hit
            if _tau_at(x, y, bt, L, zmin, nz) < off + end:
                return False
            if tn >= hit:
                break
            d = randbelow(st, 4)
            x, y = step(x, y, d, radius)
            t = tn
    st[0] = stream(pk, STREAM_PAST)
    x, y = ci[c, CX0], ci[c, CY0]
    o = 0.0
    while off + o > 0.0:
        if _tau_at(x, y, bt, L, zmin, nz) < off + o:
            return False
        o -= exponential(st, 1.0)
        d = randbelow(st, 4)
        x, y = step(x, y, d, radius)
    return True


@njit(cache=True)
def heap_push(ht, hk, iv, t, k):
    n = iv[HEAP_N]
    if n >= ht.shape[0]:
        raise AssertionError("event heap overflow")
    ht[n] = t
    hk[n] = k
    iv[HEAP_N] = n + 1
    i = n
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] < ht[i] or (ht[p] == ht[i] and hk[p] <= hk[i]):
            break
        ht[p], ht[i] = ht[i], ht[p]
        hk[p], hk[i] = hk[i], hk[p]
        i = p


@njit(cache=True)
def heap_pop(ht, hk, iv):
    n = iv[HEAP_N] - 1
    t, k = ht[0], hk[0]
    ht[0], hk[0] = ht[n], hk[n]
    iv[HEAP_N] = n
    i = 0
    while True:
        lft = 2 * i + 1
        if lft >= n:
            break
        c = lft
        r = lft + 1
        if r < n and (ht[r] < ht[lft] or (ht[r] == ht[lft] and hk[r] < hk[lft])):
            c = r
        if ht[i] < ht[c] or (ht[i] == ht[c] and hk[i] <= hk[c]):
            break
        ht[c], ht[i] = ht[i], ht[c]
        hk[c], hk[i] = hk[i], hk[c]
        i = c
    return t, k


@njit(cache=True)
def _unlink(p, site, head, nxt, prv):
    a = prv[p]
    b = nxt[p]
    if a >= 0:
        nxt[a] = b
    else:
        head[site] = b
    if b >= 0:
        prv[b] = a
    nxt[p] = -1
    prv[p] = -1


@njit(cache=True)
def _link(p, site, head, nxt, prv):
    h = head[site]
    nxt[p] = h
    prv[p] = -1
    if h >= 0:
        prv[h] = p
    head[site] = p


@njit(cache=True)
def _log(lg_t, lg_i, iv, t, k, p, x, y, a):
    n = iv[LOG_N]
    if n >= lg_t.shape[0]:
        iv[LOG_OVERFLOW] = 1
        return
    lg_t[n] = t
    lg_i[n, 0] = k
    lg_i[n, 1] = p
    lg_i[n, 2] = x
    lg_i[n, 3] = y
    lg_i[n, 4] = a
    iv[LOG_N] = n + 1


@njit(cache=True, inline="always")
def site_of(x, y, radius):
    return (x + radius) * (2 * radius + 1) + (y + radius)


@njit(cache=True)
def _infect(p, by, t, params, iv, pi, pf, pu, headI, nxtI, prvI, cntI, ht, hk):
    radius = np.int64(params[P_RADIUS])
    pi[p, PST] = I
    pi[p, PINF] = by
    pf[p, IOTA] = t
    s = site_of(pi[p, PX], pi[p, PY], radius)
    _link(p, s, headI, nxtI, prvI)
    cntI[s] += 1
    iv[N_INF] += 1
    iv[N_S] -= 1
    iv[N_INFECT] += 1
    h = pf[p, HOFF] + first_point_after(pu[p, HKEY], params[P_NU], t - pf[p, HOFF])
    pf[p, HEAL] = h
    if h < np.inf:
        heap_push(ht, hk, iv, h, (EV_HEALING << SHIFT) | p)


@njit(cache=True)
def colour_block(b, t, cause, params, iv, bt, bi, ht, hk, cf, lg_t, lg_i):
    nz = np.int64(params[P_NZ])
    xi = params[P_XI]
    bt[b, 0] = t
    bi[b, BCAUSE] = cause
    iv[N_COLOURED] += 1
    if params[P_LOG] > 0.5:
        _log(lg_t, lg_i, iv, t, LG_COLOUR, b, 0, 0, cause)
    ix, iy = b // nz, b % nz
    for d in range(4):
        jx, jy = ix, iy
        if d == 0:
            jx += 1
        elif d == 1:
            jx -= 1
        elif d == 2:
            jy += 1
        else:
            jy -= 1
        if jx < 0 or jy < 0 or jx >= nz or jy >= nz:
            continue
        nb = jx * nz + jy
        if bt[nb, 0] == np.inf:
            if t + xi < bt[nb, 1]:
                bt[nb, 1] = t + xi
            heap_push(ht, hk, iv, t + xi, (EV_COLOUR << SHIFT) | nb)
    for c in range(bi[b, BCS], bi[b, BCE]):
        heap_push(ht, hk, iv, t + cf[c], (EV_REVEAL << SHIFT) | c)


@njit(cache=True)
def ignite(p, x, y, t, root, params, iv, pi, pf, pu, bt, bi, ht, hk, cf, lg_t, lg_i):
    """Rule (b) at the entry site plus rule (c) on U_x, then the ignition override of particle p."""
    L = np.int64(params[P_L])
    zmin = np.int64(params[P_ZMIN])
    nz = np.int64(params[P_NZ])
    aL = params[P_ALPHAL]
    h = L // 2
    bx, by = block_coord(x, L), block_coord(y, L)
    b = (bx - zmin) * nz + (by - zmin)
    if bt[b, 1] == t:
        # a rule (a) deadline lands on this very instant; resolved as rule (b)
        iv[N_SIMULT] += 1
    colour_block(b, t, CAUSE_B, params, iv, bt, bi, ht, hk, cf, lg_t, lg_i)
    bi[b, BIGP], bi[b, BIGX], bi[b, BIGY], bi[b, BIGSRC] = p, x, y, b
    for dx in range(-1, 2):
        for dy in range(-1, 2):
            cx, cy = bx + dx, by + dy
            ix, iy = cx - zmin, cy - zmin
            if ix < 0 or iy < 0 or ix >= nz or iy >= nz:
                continue
            nb = ix * nz + iy
            if bt[nb, 0] != np.inf:
                continue
            dxl = max(0, cx * L - h - x, x - (cx * L + h - 1))
            dyl = max(0, cy * L - h - y, y - (cy * L + h - 1))
            if max(dxl, dyl) <= aL:
                colour_block(nb, t, CAUSE_C, params, iv, bt, bi, ht, hk, cf, lg_t, lg_i)
                bi[nb, BIGP], bi[nb, BIGX], bi[nb, BIGY], bi[nb, BIGSRC] = p, x, y, b
    # future path x + W_{B_x,ig}(s - t) and healing t + W^h_{B_x,ig}
    bk = block_key(root, bx, by)
    pu[p, RNG] = subkey(bk, 0, 0, TAG_IG_WALK)
    pu[p, HKEY] = subkey(bk, 0, 0, TAG_IG_HEAL)
    pf[p, OFF] = t
    pf[p, HOFF] = t
    st = pu[p:p + 1, RNG]
    pf[p, OWNNEXT] = exponential(st, 1.0)
    pf[p, NEXT] = t + pf[p, OWNNEXT]
    heap_push(ht, hk, iv, pf[p, NEXT], (EV_JUMP << SHIFT) | p)
    if pi[p, PST] == I:
        hh = t + first_point_after(pu[p, HKEY], params[P_NU], 0.0)
        pf[p, HEAL] = hh
        if hh < np.inf:
            heap_push(ht, hk, iv, hh, (EV_HEALING << SHIFT) | p)
    iv[N_SWITCH] += 1
    if params[P_LOG] > 0.5:
        _log(lg_t, lg_i, iv, t, LG_SWITCH, p, x, y, b)


@njit(cache=True)
def advance(t_target, root, params, iv, fv, pi, pf, pu, ci, cf, cu, bt, bi,
            headS, nxtS, prvS, headI, nxtI, prvI, cntI, ht, hk,
            feed_seen, feed_t, feed_i, lg_t, lg_i):
    radius = np.int64(params[P_RADIUS])
    inner = radius - np.int64(params[P_MARGIN])
    L = np.int64(params[P_L])
    zmin = np.int64(params[P_ZMIN])
    nz = np.int64(params[P_NZ])
    do_log = params[P_LOG] > 0.5
    if iv[CENSORED]:
        return ST_CENSORED
    while True:
        if iv[N_INF] == 0:
            if fv[NOW] < t_target:
                fv[NOW] = t_target
            return ST_EXTINCT
        if iv[HEAP_N] == 0 or ht[0] > t_target:
            fv[NOW] = t_target
            return ST_REACHED
        t, key = heap_pop(ht, hk, iv)
        if t < fv[NOW]:
            raise AssertionError("event time inversion")
        fv[NOW] = t
        cls = key >> SHIFT
        idx = key & MASK
        if cls == EV_HEALING:
            p = idx
            if pi[p, PST] != I or pf[p, HEAL] != t:
                continue
            s = site_of(pi[p, PX], pi[p, PY], radius)
            _unlink(p, s, headI, nxtI, prvI)
            cntI[s] -= 1
            pi[p, PST] = R
            iv[N_INF] -= 1
            iv[N_R] += 1
            iv[N_HEAL] += 1
            if iv[N_INF] == 0:
                fv[EXTINCT_T] = t
            if do_log:
                _log(lg_t, lg_i, iv, t, LG_HEAL, p, pi[p, PX], pi[p, PY], -1)
        elif cls == EV_COLOUR:
            if bt[idx, 0] == np.inf:
                colour_block(idx, t, CAUSE_A, params, iv, bt, bi, ht, hk, cf, lg_t, lg_i)
        elif cls == EV_REVEAL:
            c = idx
            b = ci[c, CBLK]
            if not reveal_ok(c, bt[b, 0], ci, cf, cu, bt, L, zmin, nz, radius):
                iv[N_REJECT] += 1
                continue
            p = iv[N_P]
            iv[N_P] = p + 1
            iv[N_REVEAL] += 1
            iv[N_S] += 1
            x, y = ci[c, CHX], ci[c, CHY]
            pi[p, PX], pi[p, PY], pi[p, PST] = x, y, S
            pi[p, PBLK], pi[p, PCAND], pi[p, PINF] = b, c, -1
            pu[p, RNG] = cu[c, CSTATE]
            pu[p, HKEY] = stream(cu[c, CKEY], STREAM_HEAL)
            pf[p, OFF] = bt[b, 0]
            pf[p, HOFF] = bt[b, 0]
            st = pu[p:p + 1, RNG]
            pf[p, OWNNEXT] = cf[c] + exponential(st, 1.0)
            pf[p, NEXT] = pf[p, OFF] + pf[p, OWNNEXT]
            heap_push(ht, hk, iv, pf[p, NEXT], (EV_JUMP << SHIFT) | p)
            if do_log:
                _log(lg_t, lg_i, iv, t, LG_REVEAL, p, x, y, c)
            s = site_of(x, y, radius)
            if cntI[s] > 0:
                by = headI[s]
                _infect(p, by, t, params, iv, pi, pf, pu, headI, nxtI, prvI, cntI, ht, hk)
                if do_log:
                    _log(lg_t, lg_i, iv, t, LG_INFECT, p, x, y, by)
            else:
                _link(p, s, headS, nxtS, prvS)
        else:
            p = idx
            if pi[p, PST] == R or pf[p, NEXT] != t:
                continue
            st = pu[p:p + 1, RNG]
            d = randbelow(st, 4)
            pf[p, OWNNEXT] = pf[p, OWNNEXT] + exponential(st, 1.0)
            pf[p, NEXT] = pf[p, OFF] + pf[p, OWNNEXT]
            heap_push(ht, hk, iv, pf[p, NEXT], (EV_JUMP << SHIFT) | p)
            iv[N_JUMPS] += 1
            x0, y0 = pi[p, PX], pi[p, PY]
            x1, y1 = step(x0, y0, d, radius)
            if x1 == x0 and y1 == y0:
                continue
            s0 = site_of(x0, y0, radius)
            s1 = site_of(x1, y1, radius)
            pi[p, PX], pi[p, PY] = x1, y1
            if do_log:
                _log(lg_t, lg_i, iv, t, LG_JUMP, p, x1, y1, d)
            if pi[p, PST] == S:
                _unlink(p, s0, headS, nxtS, prvS)
                if cntI[s1] > 0:
                    by = headI[s1]
                    _infect(p, by, t, params, iv, pi, pf, pu, headI, nxtI, prvI, cntI, ht, hk)
                    if do_log:
                        _log(lg_t, lg_i, iv, t, LG_INFECT, p, x1, y1, by)
                else:
                    _link(p, s1, headS, nxtS, prvS)
                continue
            # infected mover
            _unlink(p, s0, headI, nxtI, prvI)
            cntI[s0] -= 1
            _link(p, s1, headI, nxtI, prvI)
            cntI[s1] += 1
            a1 = abs(x1) + abs(y1)
            if a1 > iv[FRONT]:
                iv[FRONT] = a1
            bx1, by1 = block_coord(x1, L), block_coord(y1, L)
            if bx1 != block_coord(x0, L) or by1 != block_coord(y0, L):
                b1 = (bx1 - zmin) * nz + (by1 - zmin)
                if feed_seen[b1] == 0:
                    feed_seen[b1] = 1
                    n = iv[FEED_N]
                    feed_t[n] = t
                    feed_i[n, 0] = p
                    feed_i[n, 1] = x1
                    feed_i[n, 2] = y1
                    feed_i[n, 3] = x0
                    feed_i[n, 4] = y0
                    iv[FEED_N] = n + 1
                if bt[b1, 0] == np.inf:
                    ignite(p, x1, y1, t, root, params, iv, pi, pf, pu, bt, bi, ht, hk, cf, lg_t, lg_i)
            q = headS[s1]
            while q >= 0:
                qn = nxtS[q]
                _unlink(q, s1, headS, nxtS, prvS)
                _infect(q, p, t, params, iv, pi, pf, pu, headI, nxtI, prvI, cntI, ht, hk)
                if do_log:
                    _log(lg_t, lg_i, iv, t, LG_INFECT, q, x1, y1, p)
                q = qn
            if abs(x1) > inner or abs(y1) > inner:
                iv[CENSORED] = 1
                fv[CENSOR_T] = t
                return ST_CENSORED


@njit(cache=True)
def observe(radius_c, iv, pi):
    """(inner infected radius, revealed susceptibles and infected with |x|_1 <= radius_c)."""
    inner = np.inf
    nI = 0
    nS = 0
    for p in range(iv[N_P]):
        a = abs(pi[p, PX]) + abs(pi[p, PY])
        if pi[p, PST] == I:
            if a < inner:
                inner = a
            if a <= radius_c:
                nI += 1
        elif pi[p, PST] == S and a <= radius_c:
            nS += 1
    return inner, nS, nI


@njit(cache=True, inline="always")
def dist_to_block(x, y, lox, hix, loy, hiy):
    return max(0, lox - x, x - hix) + max(0, loy - y, y - hiy)


@njit(cache=True)
def cone_status(pk, x0, y0, lox, hix, loy, hiy, L, xi, T_back, radius):
    """Principal test over own times [-T_back, 0]: 0 fails, 1 holds with slack >= L at the horizon, 2 holds without."""
    if dist_to_block(x0, y0, lox, hix, loy, hiy) > 0:
        return 0
    st = np.empty(1, dtype=np.uint64)
    st[0] = stream(pk, STREAM_PAST)
    x, y = x0, y0
    o = 0.0
    while True:
        o -= exponential(st, 1.0)
        if -o > T_back:
            break
        d = randbelow(st, 4)
        x, y = step(x, y, d, radius)
        if dist_to_block(x, y, lox, hix, loy, hiy) > L * np.floor(-o / (4.0 * xi)):
            return 0
    slack = L * np.floor(T_back / (4.0 * xi)) - dist_to_block(x, y, lox, hix, loy, hiy)
    return 1 if slack >= L else 2


@njit(cache=True)
def walk_segments(key, x0, y0, w, radius, seg_t, seg_x, seg_y, n0):
    """Append the path from (x0, y0) on [0, w] as (start time, x, y) rows from index n0; returns the end index or -1."""
    st = np.empty(1, dtype=np.uint64)
    st[0] = key
    n = n0
    cap = seg_t.shape[0]
    if n >= cap:
        return -1
    seg_t[n], seg_x[n], seg_y[n] = 0.0, x0, y0
    n += 1
    x, y = x0, y0
    t = 0.0
    while True:
        t += exponential(st, 1.0)
        if t > w:
            return n
        d = randbelow(st, 4)
        x1, y1 = step(x, y, d, radius)
        if x1 == x and y1 == y:
            continue
        x, y = x1, y1
        if n >= cap:
            return -1
        seg_t[n], seg_x[n], seg_y[n] = t, x, y
        n += 1


@njit(cache=True)
def block_particles(root, bx, by, mu, nu, L, xi, T_back, w_fwd, radius,
                    px0, py0, status, heal1, seg_ptr, seg_t, seg_x, seg_y):
    """Particles of M_B starting in B: principal status, first healing point and path on [0, w_fwd].

    Returns the particle count, or -1 when an output array is too small.
    """
    h = L // 2
    bk = block_key(root, bx, by)
    lox, hix = bx * L - h, bx * L + h - 1
    loy, hiy = by * L - h, by * L + h - 1
    st = np.empty(1, dtype=np.uint64)
    n = 0
    ns = 0
    seg_ptr[0] = 0
    for x in range(lox, hix + 1):
        for y in range(loy, hiy + 1):
            if radius >= 0 and (abs(x) > radius or abs(y) > radius):
                continue
            st[0] = subkey(bk, x, y, TAG_COUNT)
            m = poisson(st, mu)
            for k in range(m):
                if n >= px0.shape[0]:
                    return -1
                pk = particle_key(bk, x, y, k)
                px0[n], py0[n] = x, y
                status[n] = cone_status(pk, x, y, lox, hix, loy, hiy, L, xi, T_back, radius)
                heal1[n] = first_point_after(stream(pk, STREAM_HEAL), nu, 0.0)
                ns = walk_segments(stream(pk, STREAM_FWD), x, y, w_fwd, radius, seg_t, seg_x, seg_y, ns)
                if ns < 0:
                    return -1
                n += 1
                seg_ptr[n] = ns
    return n


@njit(cache=True)
def ignition_keys(root, bx, by, nu):
    """Walk key of W_{B,ig} and the first point of W^h_{B,ig}."""
    bk = block_key(root, bx, by)
    return subkey(bk, 0, 0, TAG_IG_WALK), first_point_after(subkey(bk, 0, 0, TAG_IG_HEAL), nu, 0.0)


@njit(cache=True)
def region_count(root, bx, by, mu, L, r):
    """Time-0 particle count of M_B over the sites within l-inf distance r of B."""
    h = L // 2
    bk = block_key(root, bx, by)
    st = np.empty(1, dtype=np.uint64)
    n = 0
    for x in range(bx * L - h - r, bx * L + h + r):
        for y in range(by * L - h - r, by * L + h + r):
            st[0] = subkey(bk, x, y, TAG_COUNT)
            n += poisson(st, mu)
    return n
