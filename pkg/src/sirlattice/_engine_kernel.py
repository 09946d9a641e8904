"""Numba kernel for the direct SIR simulation.

All state lives in flat arrays so it can be passed to jitted code. Scalars are
kept in two small vectors, `iv` (int64) and `fv` (float64), indexed by the
constants below.
"""
import numpy as np
from numba import njit

from .rng import exponential, mix64, randbelow, subkey, uniform

# iv slots
N_ALIVE = 0
N_INF = 1
N_S = 2
N_R = 3
HEAP_N = 4
N_JUMPS = 5
N_INFECT = 6
N_HEAL = 7
FRONT = 8
CENSORED = 9
SJ_IDX = 10
LOG_N = 11
FEED_N = 12
LOG_OVERFLOW = 13
N_IV = 16

# fv slots
NOW = 0
NEXT_JUMP = 1
CENSOR_T = 2
EXTINCT_T = 3
N_FV = 4

# status codes
ST_REACHED = 0
ST_EXTINCT = 1
ST_CENSORED = 2

# particle states
S, I, R = 0, 1, 2

# heal modes
HEAL_CLOCK = 0
HEAL_KEYED_POINTS = 1
HEAL_GIVEN_POINTS = 2

# log kinds
EV_JUMP = 0
EV_INFECT = 1
EV_HEAL = 2

TAG_HEAL = 7


@njit(cache=True)
def site_index(x, y, radius, dim):
    side = 2 * radius + 1
    if dim == 1:
        return x + radius
    return (x + radius) * side + (y + radius)


@njit(cache=True)
def heap_push(ht, hid, iv, t, pid):
    n = iv[HEAP_N]
    ht[n] = t
    hid[n] = pid
    iv[HEAP_N] = n + 1
    i = n
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] < ht[i] or (ht[p] == ht[i] and hid[p] <= hid[i]):
            break
        ht[p], ht[i] = ht[i], ht[p]
        hid[p], hid[i] = hid[i], hid[p]
        i = p


@njit(cache=True)
def heap_pop(ht, hid, iv):
    n = iv[HEAP_N] - 1
    t = ht[0]
    pid = hid[0]
    ht[0] = ht[n]
    hid[0] = hid[n]
    iv[HEAP_N] = n
    i = 0
    while True:
        lft = 2 * i + 1
        if lft >= n:
            break
        c = lft
        r = lft + 1
        if r < n and (ht[r] < ht[lft] or (ht[r] == ht[lft] and hid[r] < hid[lft])):
            c = r
        if ht[i] < ht[c] or (ht[i] == ht[c] and hid[i] <= hid[c]):
            break
        ht[c], ht[i] = ht[i], ht[c]
        hid[c], hid[i] = hid[i], hid[c]
        i = c
    return t, pid


@njit(cache=True)
def keyed_first_point_after(key, pid, nu, t0):
    """First point after t0 of particle pid's own rate-nu Poisson process on [0, inf)."""
    if nu <= 0.0:
        return np.inf
    st = np.empty(1, dtype=np.uint64)
    st[0] = subkey(key, TAG_HEAL, pid, 0)
    t = 0.0
    while True:
        t += exponential(st, nu)
        if t > t0:
            return t


@njit(cache=True)
def _s_unlink(p, site, headS, nxt, prv):
    a = prv[p]
    b = nxt[p]
    if a >= 0:
        nxt[a] = b
    else:
        headS[site] = b
    if b >= 0:
        prv[b] = a
    nxt[p] = -1
    prv[p] = -1


@njit(cache=True)
def _s_link(p, site, headS, nxt, prv):
    h = headS[site]
    nxt[p] = h
    prv[p] = -1
    if h >= 0:
        prv[h] = p
    headS[site] = p


@njit(cache=True)
def _log(logt, logk, logp, logx, logy, loga, iv, t, k, p, x, y, a):
    n = iv[LOG_N]
    if n >= logt.shape[0]:
        iv[LOG_OVERFLOW] = 1
        return
    logt[n] = t
    logk[n] = k
    logp[n] = p
    logx[n] = x
    logy[n] = y
    loga[n] = a
    iv[LOG_N] = n + 1


@njit(cache=True)
def _inf_arrive(p, site, t, cntI, headI, nxtI, prvI, probe_idx, p_first, p_last, p_present):
    _s_link(p, site, headI, nxtI, prvI)
    cntI[site] += 1
    if cntI[site] == 1:
        k = probe_idx[site]
        if k >= 0:
            if p_first[k] == np.inf:
                p_first[k] = t
            p_present[k] = 1


@njit(cache=True)
def _inf_leave(p, site, t, cntI, headI, nxtI, prvI, probe_idx, p_last, p_present):
    _s_unlink(p, site, headI, nxtI, prvI)
    cntI[site] -= 1
    if cntI[site] == 0:
        k = probe_idx[site]
        if k >= 0:
            p_last[k] = t
            p_present[k] = 0


@njit(cache=True)
def _schedule_heal(p, t, nu, heal_mode, key, hp_ptr, hp_val, rng, ht, hid, iv, heal):
    if heal_mode == HEAL_CLOCK:
        h = t + exponential(rng, nu)
    elif heal_mode == HEAL_KEYED_POINTS:
        h = keyed_first_point_after(key, p, nu, t)
    else:
        h = np.inf
        for j in range(hp_ptr[p], hp_ptr[p + 1]):
            if hp_val[j] > t:
                h = hp_val[j]
                break
    heal[p] = h
    if h < np.inf:
        heap_push(ht, hid, iv, h, p)


@njit(cache=True)
def _infect(p, infector, t, site, px, py, state, iota, infby, inf_list, inf_pos,
            iv, cntI, headI, nxtI, prvI, probe_idx, p_first, p_last, p_present,
            nu, heal_mode, key, hp_ptr, hp_val, rng, ht, hid, heal):
    state[p] = I
    iota[p] = t
    infby[p] = infector
    inf_pos[p] = iv[N_INF]
    inf_list[iv[N_INF]] = p
    iv[N_INF] += 1
    iv[N_S] -= 1
    iv[N_INFECT] += 1
    _inf_arrive(p, site, t, cntI, headI, nxtI, prvI, probe_idx, p_first, p_last, p_present)
    _schedule_heal(p, t, nu, heal_mode, key, hp_ptr, hp_val, rng, ht, hid, iv, heal)


@njit(cache=True)
def advance(t_target, params, key, iv, fv, rng,
            px, py, state, iota, heal, infby,
            alive, alive_pos, inf_list, inf_pos,
            headS, nxt, prv, cntI, headI, nxtI, prvI,
            ht, hid,
            hp_ptr, hp_val,
            sj_t, sj_p, sj_d,
            probe_idx, p_first, p_last, p_present,
            logt, logk, logp, logx, logy, loga,
            feed_seen, feed_t, feed_p, feed_x, feed_y, feed_fx, feed_fy):
    """Run events with time <= t_target. Returns a status code."""
    radius = np.int64(params[0])
    margin = np.int64(params[1])
    dim = np.int64(params[2])
    nu = params[3]
    heal_mode = np.int64(params[4])
    scripted = params[6] > 0.5
    do_log = params[7] > 0.5
    feedL = np.int64(params[8])
    zmin = np.int64(params[9])
    nzs = np.int64(params[10])
    inner = radius - margin
    ndir = 2 * dim
    side = 2 * radius + 1

    if iv[CENSORED]:
        return ST_CENSORED
    while True:
        if iv[N_INF] == 0:
            if fv[NOW] < t_target:
                fv[NOW] = t_target
            return ST_EXTINCT
        # next jump
        if scripted:
            k = iv[SJ_IDX]
            tj = sj_t[k] if k < sj_t.shape[0] else np.inf
        else:
            tj = fv[NEXT_JUMP]
            if tj < 0.0:
                tj = fv[NOW] + exponential(rng, float(iv[N_ALIVE]))
                fv[NEXT_JUMP] = tj
        th = ht[0] if iv[HEAP_N] > 0 else np.inf
        tn = tj if tj < th else th
        if tn > t_target:
            fv[NOW] = t_target
            return ST_REACHED
        if th <= tj:
            # healing: ties go to healing first
            t, p = heap_pop(ht, hid, iv)
            if t < fv[NOW]:
                raise AssertionError("event time inversion")
            fv[NOW] = t
            if state[p] != I or heal[p] != t:
                continue
            site = site_index(px[p], py[p], radius, dim)
            state[p] = R
            _inf_leave(p, site, t, cntI, headI, nxtI, prvI, probe_idx, p_last, p_present)
            # drop from infected list
            j = inf_pos[p]
            last = inf_list[iv[N_INF] - 1]
            inf_list[j] = last
            inf_pos[last] = j
            iv[N_INF] -= 1
            if iv[N_INF] == 0:
                fv[EXTINCT_T] = t
            # drop from alive list
            j = alive_pos[p]
            last = alive[iv[N_ALIVE] - 1]
            alive[j] = last
            alive_pos[last] = j
            iv[N_ALIVE] -= 1
            iv[N_R] += 1
            iv[N_HEAL] += 1
            if not scripted:
                fv[NEXT_JUMP] = -1.0  # total rate changed; memoryless resample
            if do_log:
                _log(logt, logk, logp, logx, logy, loga, iv, t, EV_HEAL, p, px[p], py[p], -1)
            continue
        # jump
        t = tj
        if t < fv[NOW]:
            raise AssertionError("event time inversion")
        fv[NOW] = t
        if scripted:
            k = iv[SJ_IDX]
            p = sj_p[k]
            dr = sj_d[k]
            iv[SJ_IDX] = k + 1
            if state[p] == R:
                continue
        else:
            fv[NEXT_JUMP] = -1.0
            p = alive[randbelow(rng, iv[N_ALIVE])]
            dr = randbelow(rng, ndir)
        iv[N_JUMPS] += 1
        x0 = px[p]
        y0 = py[p]
        x1 = x0
        y1 = y0
        if dr == 0:
            x1 += 1
        elif dr == 1:
            x1 -= 1
        elif dr == 2:
            y1 += 1
        else:
            y1 -= 1
        if x1 > radius or x1 < -radius or y1 > radius or y1 < -radius:
            continue  # rejected at the window edge
        s0 = site_index(x0, y0, radius, dim)
        s1 = site_index(x1, y1, radius, dim)
        px[p] = x1
        py[p] = y1
        if do_log:
            _log(logt, logk, logp, logx, logy, loga, iv, t, EV_JUMP, p, x1, y1, dr)
        if state[p] == S:
            _s_unlink(p, s0, headS, nxt, prv)
            if cntI[s1] > 0:
                inf_by = headI[s1]
                _infect(p, inf_by, t, s1, px, py, state, iota, infby, inf_list, inf_pos,
                        iv, cntI, headI, nxtI, prvI, probe_idx, p_first, p_last, p_present,
                        nu, heal_mode, key, hp_ptr, hp_val, rng, ht, hid, heal)
                if do_log:
                    _log(logt, logk, logp, logx, logy, loga, iv, t, EV_INFECT, p, x1, y1, inf_by)
            else:
                _s_link(p, s1, headS, nxt, prv)
            continue
        # infected mover
        _inf_leave(p, s0, t, cntI, headI, nxtI, prvI, probe_idx, p_last, p_present)
        _inf_arrive(p, s1, t, cntI, headI, nxtI, prvI, probe_idx, p_first, p_last, p_present)
        a1 = abs(x1) + abs(y1)
        if a1 > iv[FRONT]:
            iv[FRONT] = a1
        if feedL > 0:
            h = feedL // 2
            zx = (x1 + h) // feedL
            zy = (y1 + h) // feedL if dim == 2 else 0
            if zx != (x0 + h) // feedL or (dim == 2 and zy != (y0 + h) // feedL):
                b = (zx - zmin) * nzs + (zy - zmin if dim == 2 else 0)
                if feed_seen[b] == 0:
                    feed_seen[b] = 1
                    n = iv[FEED_N]
                    feed_t[n] = t
                    feed_p[n] = p
                    feed_x[n] = x1
                    feed_y[n] = y1
                    feed_fx[n] = x0
                    feed_fy[n] = y0
                    iv[FEED_N] = n + 1
        q = headS[s1]
        while q >= 0:
            qn = nxt[q]
            _s_unlink(q, s1, headS, nxt, prv)
            _infect(q, p, t, s1, px, py, state, iota, infby, inf_list, inf_pos,
                    iv, cntI, headI, nxtI, prvI, probe_idx, p_first, p_last, p_present,
                    nu, heal_mode, key, hp_ptr, hp_val, rng, ht, hid, heal)
            if do_log:
                _log(logt, logk, logp, logx, logy, loga, iv, t, EV_INFECT, q, x1, y1, p)
            q = qn
        if abs(x1) > inner or abs(y1) > inner:
            iv[CENSORED] = 1
            fv[CENSOR_T] = t
            return ST_CENSORED


@njit(cache=True)
def observe(radius_c, iv, px, py, state, alive, inf_list):
    """(inner radius, susceptibles with |x|_1 <= radius_c, infected with |x|_1 <= radius_c)."""
    inner = np.inf
    nI = 0
    for j in range(iv[N_INF]):
        p = inf_list[j]
        a = abs(px[p]) + abs(py[p])
        if a < inner:
            inner = a
        if a <= radius_c:
            nI += 1
    nS = 0
    for j in range(iv[N_ALIVE]):
        p = alive[j]
        if state[p] == S and abs(px[p]) + abs(py[p]) <= radius_c:
            nS += 1
    return inner, nS, nI


@njit(cache=True)
def radial_histograms(nbins, iv, px, py, state, alive):
    """Counts of susceptibles and infected by L1 radius (last bin collects the overflow)."""
    hs = np.zeros(nbins, dtype=np.int64)
    hi = np.zeros(nbins, dtype=np.int64)
    for j in range(iv[N_ALIVE]):
        p = alive[j]
        a = abs(px[p]) + abs(py[p])
        if a >= nbins:
            a = nbins - 1
        if state[p] == S:
            hs[a] += 1
        elif state[p] == I:
            hi[a] += 1
    return hs, hi
