"""Pure-Python walk kernels.

Reference implementation of the compiled ``_ckernels`` module: same
signatures, same random stream, same floating-point operations in the same
order, hence bit-identical outputs.  Used when the extension is not built
or when ``WALKLAB_PURE=1``.
"""

import math

import numpy as np

from .rng import INV_2_53, Xoshiro256, trajectory_seed

IMPLEMENTATION = "python"
LOG2E = 1.4426950408889634
LN2 = 0.6931471805599453
_LDEXP_CLAMP = 2000


def _draw(rng, prob, alias, K):
    x = ((rng.next_u64() >> 11) * INV_2_53) * K
    col = int(x)
    if x - col < prob[col]:
        return col
    return alias[col]


def _block(n_steps, window_count):
    return max(1, (n_steps + 1) // window_count)


def lattice_trajectory(dpos, prob, alias, n_steps, seed, targets, horizons, window_count, snap_every):
    K, d = dpos.shape
    T, H, W = len(targets), len(horizons), window_count
    dpos = [tuple(int(v) for v in row) for row in dpos]
    prob = [float(p) for p in prob]
    alias = [int(a) for a in alias]
    targs = [tuple(int(v) for v in row) for row in targets]
    horizons = [int(h) for h in horizons]
    rng = Xoshiro256(seed)
    tw = np.zeros((T, W), dtype=np.int64)
    th = np.zeros((T, H), dtype=np.int64)
    tlast = np.full(T, -1, dtype=np.int64)
    tcount = [0] * T
    series = np.zeros((n_steps // snap_every + 1, 3))
    pos = [0] * d
    mx = 0
    block = _block(n_steps, W)
    w, boundary = 0, block
    hptr = 0
    for t in range(n_steps + 1):
        if t:
            a = _draw(rng, prob, alias, K)
            step = dpos[a]
            for i in range(d):
                pos[i] += step[i]
            if pos[0] > mx:
                mx = pos[0]
            if t == boundary and w < W - 1:
                w += 1
                boundary += block
        tp = tuple(pos)
        for j in range(T):
            if tp == targs[j]:
                tw[j, w] += 1
                tcount[j] += 1
                tlast[j] = t
        while hptr < H and horizons[hptr] == t:
            for j in range(T):
                th[j, hptr] = tcount[j]
            hptr += 1
        if t % snap_every == 0:
            s = t // snap_every
            series[s, 0] = pos[0]
            series[s, 1] = 0.0
            series[s, 2] = mx
    return {
        "targ_windows": tw,
        "targ_horizons": th,
        "targ_last": tlast,
        "series": series,
        "final_pos": np.array(pos, dtype=np.int64),
        "final_max": mx,
    }


def wreath_trajectory(
    d, q, dpos, lptr, lsite, lval, prob, alias, n_steps, seed, coef,
    tpos, tlptr, tlsite, tlval, horizons, window_count, snap_every, ak_level, ak_t, jump,
):
    K = len(prob)
    P, T, H, W, J = len(coef), len(tpos), len(horizons), window_count, len(ak_level)
    dpos = [tuple(int(v) for v in row) for row in dpos]
    lptr = [int(v) for v in lptr]
    lsite = [tuple(int(v) for v in row) for row in lsite]
    lval = [int(v) for v in lval]
    prob = [float(p) for p in prob]
    alias = [int(a) for a in alias]
    coef = [float(c) for c in coef]
    horizons = [int(h) for h in horizons]
    ak_level = [int(v) for v in ak_level]
    ak_t = [int(v) for v in ak_t]
    targ_pos = [tuple(int(v) for v in row) for row in tpos]
    targ_lamps = []
    for j in range(T):
        targ_lamps.append(
            {tuple(int(v) for v in tlsite[i]): int(tlval[i]) for i in range(int(tlptr[j]), int(tlptr[j + 1]))}
        )
    rng = Xoshiro256(seed)

    pw = np.zeros((P, W), dtype=np.int64)
    ph = np.zeros((P, H), dtype=np.int64)
    plast = np.full(P, -1, dtype=np.int64)
    pcount = [0] * P
    tw = np.zeros((T, W), dtype=np.int64)
    th = np.zeros((T, H), dtype=np.int64)
    tlast = np.full(T, -1, dtype=np.int64)
    tcount = [0] * T
    S = n_steps // snap_every + 1
    series = np.zeros((S, 3))
    uflags = np.zeros((P, S), dtype=np.uint8)
    ak_nk = np.full(J, -1, dtype=np.int64)
    ak_ok = np.full(J, -1, dtype=np.int64)
    ak_start = [0] * J
    ak_due = [-1] * J

    lamps = {}
    cols = {}
    nonid = 0
    fr = 0
    pos = [0] * d
    mx = 0
    block = _block(n_steps, W)
    w, boundary = 0, block
    hptr = 0
    next_ak = 0
    for t in range(n_steps + 1):
        if t:
            a = _draw(rng, prob, alias, K)
            for li in range(lptr[a], lptr[a + 1]):
                site = tuple(p + s for p, s in zip(pos, lsite[li]))
                old = lamps.get(site, 0)
                new = old + lval[li]
                if q:
                    if new >= q:
                        new -= q
                lamps[site] = new
                c = site[0]
                if old == 0 and new != 0:
                    nonid += 1
                    cols[c] = cols.get(c, 0) + 1
                    if c > fr:
                        fr = c
                elif old != 0 and new == 0:
                    nonid -= 1
                    cols[c] -= 1
                    if c == fr and cols[c] == 0:
                        c -= 1
                        while c >= 1 and cols.get(c, 0) == 0:
                            c -= 1
                        fr = c if c >= 1 else 0
            step = dpos[a]
            for i in range(d):
                pos[i] += step[i]
            if pos[0] > mx:
                mx = pos[0]
            if t == boundary and w < W - 1:
                w += 1
                boundary += block
        x1 = pos[0]
        if x1 >= 1:
            lx = math.log(x1)
            gap = x1 - fr
            for p in range(P):
                if gap >= coef[p] * lx:
                    pw[p, w] += 1
                    pcount[p] += 1
                    plast[p] = t
        if T:
            tp = tuple(pos)
            for j in range(T):
                if tp == targ_pos[j] and nonid == len(targ_lamps[j]):
                    if all(lamps.get(s, 0) == v for s, v in targ_lamps[j].items()):
                        tw[j, w] += 1
                        tcount[j] += 1
                        tlast[j] = t
        while next_ak < J and x1 >= ak_level[next_ak]:
            ak_nk[next_ak] = t
            ak_start[next_ak] = x1
            ak_due[next_ak] = t + ak_t[next_ak]
            next_ak += 1
        for j in range(next_ak):
            if ak_due[j] == t:
                ak_ok[j] = 1 if x1 == ak_start[j] + ak_t[j] * jump else 0
        while hptr < H and horizons[hptr] == t:
            for p in range(P):
                ph[p, hptr] = pcount[p]
            for j in range(T):
                th[j, hptr] = tcount[j]
            hptr += 1
        if t % snap_every == 0:
            s = t // snap_every
            series[s, 0] = x1
            series[s, 1] = fr
            series[s, 2] = mx
            if mx > 1:
                lm = math.log(mx)
                for p in range(P):
                    if mx - fr >= coef[p] * lm:
                        uflags[p, s] = 1
    return {
        "pred_windows": pw,
        "pred_horizons": ph,
        "pred_last": plast,
        "targ_windows": tw,
        "targ_horizons": th,
        "targ_last": tlast,
        "series": series,
        "u_flags": uflags,
        "ak_nk": ak_nk,
        "ak_success": ak_ok,
        "final_pos": np.array(pos, dtype=np.int64),
        "final_max": mx,
        "final_fr": fr,
    }


def _scaled_add(sm, se, term, phi):
    tt = phi * LOG2E
    te = math.floor(tt)
    tm = term * (2.0 ** (tt - te))
    if sm == 0.0:
        sm, se = tm, te
    elif se >= te:
        sm = sm + math.ldexp(tm, max(te - se, -_LDEXP_CLAMP))
    else:
        sm = math.ldexp(sm, max(se - te, -_LDEXP_CLAMP)) + tm
        se = te
    mant, ex = math.frexp(sm)
    return mant, se + ex


def _log_scaled(sm, se):
    if sm == 0.0:
        return -math.inf
    return math.log(abs(sm)) + se * LN2


def polycyclic_trajectory(dk, ipy, log_lam, prob, alias, n_steps, seed, Cs, horizons, window_count, snap_every):
    K, m = dk.shape
    P, H, W = len(Cs), len(horizons), window_count
    dk = [tuple(int(v) for v in row) for row in dk]
    ipy = [float(v) for v in ipy]
    log_lam = [float(v) for v in log_lam]
    prob = [float(p) for p in prob]
    alias = [int(a) for a in alias]
    Cs = [float(c) for c in Cs]
    horizons = [int(h) for h in horizons]
    rng = Xoshiro256(seed)

    pw = np.zeros((P, W), dtype=np.int64)
    ph = np.zeros((P, H), dtype=np.int64)
    plast = np.full(P, -1, dtype=np.int64)
    pcount = [0] * P
    S = n_steps // snap_every + 1
    series = np.zeros((S, 3))
    uflags = np.zeros((P, S), dtype=np.uint8)
    k = [0] * m
    phi = 0.0
    sm, se = 0.0, 0
    mx = 0.0
    block = _block(n_steps, W)
    w, boundary = 0, block
    hptr = 0
    for t in range(n_steps + 1):
        if t:
            a = _draw(rng, prob, alias, K)
            if ipy[a] != 0.0:
                sm, se = _scaled_add(sm, se, ipy[a], phi)
            step = dk[a]
            phi = 0.0
            for i in range(m):
                k[i] += step[i]
                phi += k[i] * log_lam[i]
            if phi > mx:
                mx = phi
            if t == boundary and w < W - 1:
                w += 1
                boundary += block
        if phi > 1.0:
            lip = _log_scaled(sm, se)
            lphi = math.log(phi)
            for p in range(P):
                if phi - lip >= Cs[p] * lphi:
                    pw[p, w] += 1
                    pcount[p] += 1
                    plast[p] = t
        while hptr < H and horizons[hptr] == t:
            for p in range(P):
                ph[p, hptr] = pcount[p]
            hptr += 1
        if t % snap_every == 0:
            s = t // snap_every
            lip = _log_scaled(sm, se)
            series[s, 0] = phi
            series[s, 1] = lip
            series[s, 2] = mx
            if mx > 1.0:
                lm = math.log(mx)
                for p in range(P):
                    if mx - lip >= Cs[p] * lm:
                        uflags[p, s] = 1
    return {
        "pred_windows": pw,
        "pred_horizons": ph,
        "pred_last": plast,
        "series": series,
        "u_flags": uflags,
        "final_k": np.array(k, dtype=np.int64),
        "final_phi": phi,
        "final_max": mx,
        "final_logip": _log_scaled(sm, se),
        "final_ip_mantissa": sm,
        "final_ip_exponent": se,
    }


def lattice_endpoints(dpos, prob, alias, n_steps, n_walks, master_seed, radius):
    K, d = dpos.shape
    dpos = [tuple(int(v) for v in row) for row in dpos]
    prob = [float(p) for p in prob]
    alias = [int(a) for a in alias]
    B = 2 * radius + 1
    out = np.zeros(n_walks, dtype=np.int64)
    for i in range(n_walks):
        rng = Xoshiro256(trajectory_seed(master_seed, i))
        pos = [0] * d
        for _ in range(n_steps):
            step = dpos[_draw(rng, prob, alias, K)]
            for c in range(d):
                pos[c] += step[c]
        code = 0
        for c in range(d - 1, -1, -1):
            code = code * B + pos[c] + radius
        out[i] = code
    return out


def wreath_endpoints(d, q, dpos, lptr, lsite, lval, prob, alias, n_steps, n_walks, master_seed, radius):
    K = len(prob)
    dpos = [tuple(int(v) for v in row) for row in dpos]
    lptr = [int(v) for v in lptr]
    lsite = [tuple(int(v) for v in row) for row in lsite]
    lval = [int(v) for v in lval]
    prob = [float(p) for p in prob]
    alias = [int(a) for a in alias]
    B = 2 * radius + 1
    cells = B**d
    out = np.zeros(n_walks, dtype=np.int64)
    for i in range(n_walks):
        rng = Xoshiro256(trajectory_seed(master_seed, i))
        pos = [0] * d
        lamps = [0] * cells
        for _ in range(n_steps):
            a = _draw(rng, prob, alias, K)
            for li in range(lptr[a], lptr[a + 1]):
                idx = 0
                for c in range(d - 1, -1, -1):
                    idx = idx * B + pos[c] + lsite[li][c] + radius
                v = lamps[idx] + lval[li]
                lamps[idx] = v - q if v >= q else v
            for c in range(d):
                pos[c] += dpos[a][c]
        code = 0
        for idx in range(cells - 1, -1, -1):
            code = code * q + lamps[idx]
        pidx = 0
        for c in range(d - 1, -1, -1):
            pidx = pidx * B + pos[c] + radius
        out[i] = code * cells + pidx
    return out
