# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled walk kernels; mirror of ``_pykernels`` operation for operation."""

from libc.math cimport floor, frexp, ldexp, log, pow, INFINITY
from libc.stdint cimport int64_t, uint8_t, uint64_t
from libc.stdlib cimport calloc, free, malloc

import numpy as np

IMPLEMENTATION = "cython"

cdef double INV53 = 1.0 / 9007199254740992.0
cdef double LOG2E = 1.4426950408889634
cdef double LN2 = 0.6931471805599453
cdef int64_t LDEXP_CLAMP = 2000
cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef int64_t DENSE_MAX = 1 << 25
cdef int64_t EMPTY = -1


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Rng:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3


cdef inline void rng_seed(Rng* r, uint64_t seed) noexcept nogil:
    cdef uint64_t x = seed
    x += GOLDEN
    r.s0 = mix64(x)
    x += GOLDEN
    r.s1 = mix64(x)
    x += GOLDEN
    r.s2 = mix64(x)
    x += GOLDEN
    r.s3 = mix64(x)


cdef inline uint64_t rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t rng_next(Rng* r) noexcept nogil:
    cdef uint64_t result = rotl(r.s1 * 5, 7) * 9
    cdef uint64_t t = r.s1 << 17
    r.s2 ^= r.s0
    r.s3 ^= r.s1
    r.s1 ^= r.s2
    r.s0 ^= r.s3
    r.s2 ^= t
    r.s3 = rotl(r.s3, 45)
    return result


cdef inline int64_t draw(Rng* r, const double* prob, const int64_t* alias, int64_t K) noexcept nogil:
    cdef double x = ((<double>(rng_next(r) >> 11)) * INV53) * <double>K
    cdef int64_t col = <int64_t>x
    if x - <double>col < prob[col]:
        return col
    return alias[col]


def trajectory_seed(uint64_t master, uint64_t index):
    return mix64(master ^ (index * GOLDEN))


# ---------------------------------------------------------------------------
# lamp storage: dense array over the reachable box, or an open-addressing
# hash table when the box is too large


cdef struct LampStore:
    int dense
    int64_t* values
    int64_t* keys
    int64_t mask


cdef int store_init(LampStore* st, int64_t cells, int64_t max_sites) noexcept nogil:
    cdef int64_t cap = 16
    if cells <= DENSE_MAX:
        st.dense = 1
        st.values = <int64_t*>calloc(cells, sizeof(int64_t))
        st.keys = NULL
        return st.values != NULL
    st.dense = 0
    while cap < 2 * max_sites + 16:
        cap <<= 1
    st.mask = cap - 1
    st.values = <int64_t*>calloc(cap, sizeof(int64_t))
    st.keys = <int64_t*>malloc(cap * sizeof(int64_t))
    if st.values == NULL or st.keys == NULL:
        return 0
    cdef int64_t i
    for i in range(cap):
        st.keys[i] = EMPTY
    return 1


cdef void store_free(LampStore* st) noexcept nogil:
    free(st.values)
    if st.keys != NULL:
        free(st.keys)


cdef inline int64_t* store_slot(LampStore* st, int64_t key, int create) noexcept nogil:
    if st.dense:
        return &st.values[key]
    cdef int64_t h = <int64_t>(mix64(<uint64_t>key) & <uint64_t>st.mask)
    while True:
        if st.keys[h] == key:
            return &st.values[h]
        if st.keys[h] == EMPTY:
            if not create:
                return NULL
            st.keys[h] = key
            return &st.values[h]
        h = (h + 1) & st.mask


cdef inline uint64_t zobrist(int64_t cell, int64_t value) noexcept nogil:
    return mix64(<uint64_t>cell * GOLDEN ^ (<uint64_t>value * 0xD1B54A32D192ED03ULL))


# ---------------------------------------------------------------------------


def lattice_trajectory(const int64_t[:, ::1] dpos, const double[::1] prob, const int64_t[::1] alias,
                       int64_t n_steps, uint64_t seed, const int64_t[:, ::1] targets,
                       const int64_t[::1] horizons, int64_t window_count, int64_t snap_every):
    cdef int64_t K = dpos.shape[0], d = dpos.shape[1]
    cdef int64_t T = targets.shape[0], H = horizons.shape[0], W = window_count
    cdef int64_t S = n_steps // snap_every + 1
    tw_a = np.zeros((T, W), dtype=np.int64)
    th_a = np.zeros((T, H), dtype=np.int64)
    tlast_a = np.full(T, -1, dtype=np.int64)
    series_a = np.zeros((S, 3))
    pos_a = np.zeros(d, dtype=np.int64)
    tcount_a = np.zeros(T, dtype=np.int64)
    cdef int64_t[:, ::1] tw = tw_a
    cdef int64_t[:, ::1] th = th_a
    cdef int64_t[::1] tlast = tlast_a
    cdef double[:, ::1] series = series_a
    cdef int64_t[::1] pos = pos_a
    cdef int64_t[::1] tcount = tcount_a
    cdef Rng rng
    cdef int64_t t, a, i, j, s, mx = 0, hptr = 0, w = 0
    cdef int64_t block = (n_steps + 1) // W
    if block < 1:
        block = 1
    cdef int64_t boundary = block
    cdef bint same
    rng_seed(&rng, seed)
    with nogil:
        for t in range(n_steps + 1):
            if t:
                a = draw(&rng, &prob[0], &alias[0], K)
                for i in range(d):
                    pos[i] += dpos[a, i]
                if pos[0] > mx:
                    mx = pos[0]
                if t == boundary and w < W - 1:
                    w += 1
                    boundary += block
            for j in range(T):
                same = True
                for i in range(d):
                    if pos[i] != targets[j, i]:
                        same = False
                        break
                if same:
                    tw[j, w] += 1
                    tcount[j] += 1
                    tlast[j] = t
            while hptr < H and horizons[hptr] == t:
                for j in range(T):
                    th[j, hptr] = tcount[j]
                hptr += 1
            if t % snap_every == 0:
                s = t // snap_every
                series[s, 0] = <double>pos[0]
                series[s, 1] = 0.0
                series[s, 2] = <double>mx
    return {
        "targ_windows": tw_a,
        "targ_horizons": th_a,
        "targ_last": tlast_a,
        "series": series_a,
        "final_pos": pos_a,
        "final_max": mx,
    }


def wreath_trajectory(int64_t d, int64_t q, const int64_t[:, ::1] dpos, const int64_t[::1] lptr,
                      const int64_t[:, ::1] lsite, const int64_t[::1] lval, const double[::1] prob,
                      const int64_t[::1] alias, int64_t n_steps, uint64_t seed, const double[::1] coef,
                      const int64_t[:, ::1] tpos, const int64_t[::1] tlptr, const int64_t[:, ::1] tlsite,
                      const int64_t[::1] tlval, const int64_t[::1] horizons, int64_t window_count,
                      int64_t snap_every, const int64_t[::1] ak_level, const int64_t[::1] ak_t,
                      int64_t jump):
    cdef int64_t K = prob.shape[0]
    cdef int64_t P = coef.shape[0], T = tpos.shape[0], H = horizons.shape[0]
    cdef int64_t W = window_count, J = ak_level.shape[0]
    cdef int64_t S = n_steps // snap_every + 1
    cdef int64_t i, j, t, a, li, c, s, p

    # reachable box: every lamp the walk can touch lies within radius R
    cdef int64_t step_max = 0, site_max = 0, R, B, cells
    for a in range(K):
        for i in range(d):
            step_max = max(step_max, abs(dpos[a, i]))
    for li in range(lsite.shape[0]):
        for i in range(d):
            site_max = max(site_max, abs(lsite[li, i]))
    R = n_steps * step_max + site_max
    B = 2 * R + 1
    cells = 1
    dense_ok = True
    for i in range(d):
        if cells > (1 << 62) // B:
            dense_ok = False
            break
        cells *= B
    if not dense_ok:
        raise OverflowError("lamp box does not fit in 64-bit cell indices")
    cdef int64_t max_lamps = 0
    for a in range(K):
        max_lamps = max(max_lamps, lptr[a + 1] - lptr[a])

    pw_a = np.zeros((P, W), dtype=np.int64)
    ph_a = np.zeros((P, H), dtype=np.int64)
    plast_a = np.full(P, -1, dtype=np.int64)
    pcount_a = np.zeros(P, dtype=np.int64)
    tw_a = np.zeros((T, W), dtype=np.int64)
    th_a = np.zeros((T, H), dtype=np.int64)
    tlast_a = np.full(T, -1, dtype=np.int64)
    tcount_a = np.zeros(T, dtype=np.int64)
    series_a = np.zeros((S, 3))
    uflags_a = np.zeros((P, S), dtype=np.uint8)
    aknk_a = np.full(J, -1, dtype=np.int64)
    akok_a = np.full(J, -1, dtype=np.int64)
    akstart_a = np.zeros(J, dtype=np.int64)
    akdue_a = np.full(J, -1, dtype=np.int64)
    pos_a = np.zeros(d, dtype=np.int64)
    cols_a = np.zeros(B, dtype=np.int64)
    thash_a = np.zeros(T, dtype=np.uint64)
    tcell_a = np.zeros(T, dtype=np.int64)
    tn_a = np.zeros(T, dtype=np.int64)
    cdef int64_t[:, ::1] pw = pw_a
    cdef int64_t[:, ::1] ph = ph_a
    cdef int64_t[::1] plast = plast_a
    cdef int64_t[::1] pcount = pcount_a
    cdef int64_t[:, ::1] tw = tw_a
    cdef int64_t[:, ::1] th = th_a
    cdef int64_t[::1] tlast = tlast_a
    cdef int64_t[::1] tcount = tcount_a
    cdef double[:, ::1] series = series_a
    cdef uint8_t[:, ::1] uflags = uflags_a
    cdef int64_t[::1] ak_nk = aknk_a
    cdef int64_t[::1] ak_ok = akok_a
    cdef int64_t[::1] ak_start = akstart_a
    cdef int64_t[::1] ak_due = akdue_a
    cdef int64_t[::1] pos = pos_a
    cdef int64_t[::1] cols = cols_a
    cdef uint64_t[::1] thash = thash_a
    cdef int64_t[::1] tcell = tcell_a
    cdef int64_t[::1] tn = tn_a

    # target fingerprints; a target with a lamp outside the box can never match
    cdef int64_t cell, coord
    for j in range(T):
        tn[j] = tlptr[j + 1] - tlptr[j]
        ok = True
        for li in range(tlptr[j], tlptr[j + 1]):
            cell = 0
            for i in range(d - 1, -1, -1):
                coord = tlsite[li, i]
                if coord < -R or coord > R:
                    ok = False
                cell = cell * B + coord + R
            if ok:
                thash[j] ^= zobrist(cell, tlval[li])
        if not ok:
            tn[j] = -1

    cdef LampStore st
    if not store_init(&st, cells, n_steps * max_lamps + 1):
        raise MemoryError("lamp storage")
    cdef Rng rng
    rng_seed(&rng, seed)
    cdef int64_t nonid = 0, fr = 0, mx = 0, x1, old, new, gap, pcell
    cdef int64_t hptr = 0, w = 0, next_ak = 0
    cdef int64_t block = (n_steps + 1) // W
    if block < 1:
        block = 1
    cdef int64_t boundary = block
    cdef int64_t* slot
    cdef uint64_t hsh = 0
    cdef double lx, lm
    cdef bint same
    with nogil:
        for t in range(n_steps + 1):
            if t:
                a = draw(&rng, &prob[0], &alias[0], K)
                for li in range(lptr[a], lptr[a + 1]):
                    cell = 0
                    for i in range(d - 1, -1, -1):
                        cell = cell * B + pos[i] + lsite[li, i] + R
                    slot = store_slot(&st, cell, 1)
                    old = slot[0]
                    new = old + lval[li]
                    if q > 0 and new >= q:
                        new -= q
                    slot[0] = new
                    if old != 0:
                        hsh ^= zobrist(cell, old)
                    if new != 0:
                        hsh ^= zobrist(cell, new)
                    c = pos[0] + lsite[li, 0]
                    if old == 0 and new != 0:
                        nonid += 1
                        cols[c + R] += 1
                        if c > fr:
                            fr = c
                    elif old != 0 and new == 0:
                        nonid -= 1
                        cols[c + R] -= 1
                        if c == fr and cols[c + R] == 0:
                            c -= 1
                            while c >= 1 and cols[c + R] == 0:
                                c -= 1
                            fr = c if c >= 1 else 0
                for i in range(d):
                    pos[i] += dpos[a, i]
                if pos[0] > mx:
                    mx = pos[0]
                if t == boundary and w < W - 1:
                    w += 1
                    boundary += block
            x1 = pos[0]
            if x1 >= 1:
                lx = log(<double>x1)
                gap = x1 - fr
                for p in range(P):
                    if <double>gap >= coef[p] * lx:
                        pw[p, w] += 1
                        pcount[p] += 1
                        plast[p] = t
            if T > 0:
                for j in range(T):
                    if tn[j] != nonid or thash[j] != hsh:
                        continue
                    same = True
                    for i in range(d):
                        if pos[i] != tpos[j, i]:
                            same = False
                            break
                    if not same:
                        continue
                    for li in range(tlptr[j], tlptr[j + 1]):
                        cell = 0
                        for i in range(d - 1, -1, -1):
                            cell = cell * B + tlsite[li, i] + R
                        slot = store_slot(&st, cell, 0)
                        if slot == NULL or slot[0] != tlval[li]:
                            same = False
                            break
                    if same:
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
                series[s, 0] = <double>x1
                series[s, 1] = <double>fr
                series[s, 2] = <double>mx
                if mx > 1:
                    lm = log(<double>mx)
                    for p in range(P):
                        if <double>(mx - fr) >= coef[p] * lm:
                            uflags[p, s] = 1
    store_free(&st)
    return {
        "pred_windows": pw_a,
        "pred_horizons": ph_a,
        "pred_last": plast_a,
        "targ_windows": tw_a,
        "targ_horizons": th_a,
        "targ_last": tlast_a,
        "series": series_a,
        "u_flags": uflags_a,
        "ak_nk": aknk_a,
        "ak_success": akok_a,
        "final_pos": pos_a,
        "final_max": mx,
        "final_fr": fr,
    }


cdef inline void scaled_add(double* sm, int64_t* se, double term, double phi) noexcept nogil:
    cdef double tt = phi * LOG2E
    cdef double tef = floor(tt)
    cdef int64_t te = <int64_t>tef
    cdef double tm = term * pow(2.0, tt - tef)
    cdef int64_t shift
    cdef int ex
    if sm[0] == 0.0:
        sm[0] = tm
        se[0] = te
    elif se[0] >= te:
        shift = te - se[0]
        if shift < -LDEXP_CLAMP:
            shift = -LDEXP_CLAMP
        sm[0] = sm[0] + ldexp(tm, <int>shift)
    else:
        shift = se[0] - te
        if shift < -LDEXP_CLAMP:
            shift = -LDEXP_CLAMP
        sm[0] = ldexp(sm[0], <int>shift) + tm
        se[0] = te
    sm[0] = frexp(sm[0], &ex)
    se[0] += ex


cdef inline double log_scaled(double sm, int64_t se) noexcept nogil:
    if sm == 0.0:
        return -INFINITY
    return log(sm if sm > 0 else -sm) + <double>se * LN2


def polycyclic_trajectory(const int64_t[:, ::1] dk, const double[::1] ipy, const double[::1] log_lam,
                          const double[::1] prob, const int64_t[::1] alias, int64_t n_steps, uint64_t seed,
                          const double[::1] Cs, const int64_t[::1] horizons, int64_t window_count,
                          int64_t snap_every):
    cdef int64_t K = dk.shape[0], m = dk.shape[1]
    cdef int64_t P = Cs.shape[0], H = horizons.shape[0], W = window_count
    cdef int64_t S = n_steps // snap_every + 1
    pw_a = np.zeros((P, W), dtype=np.int64)
    ph_a = np.zeros((P, H), dtype=np.int64)
    plast_a = np.full(P, -1, dtype=np.int64)
    pcount_a = np.zeros(P, dtype=np.int64)
    series_a = np.zeros((S, 3))
    uflags_a = np.zeros((P, S), dtype=np.uint8)
    k_a = np.zeros(m, dtype=np.int64)
    cdef int64_t[:, ::1] pw = pw_a
    cdef int64_t[:, ::1] ph = ph_a
    cdef int64_t[::1] plast = plast_a
    cdef int64_t[::1] pcount = pcount_a
    cdef double[:, ::1] series = series_a
    cdef uint8_t[:, ::1] uflags = uflags_a
    cdef int64_t[::1] k = k_a
    cdef Rng rng
    rng_seed(&rng, seed)
    cdef int64_t t, a, i, p, s, hptr = 0, w = 0
    cdef int64_t block = (n_steps + 1) // W
    if block < 1:
        block = 1
    cdef int64_t boundary = block
    cdef double phi = 0.0, mx = 0.0, sm = 0.0, lip, lphi, lm
    cdef int64_t se = 0
    with nogil:
        for t in range(n_steps + 1):
            if t:
                a = draw(&rng, &prob[0], &alias[0], K)
                if ipy[a] != 0.0:
                    scaled_add(&sm, &se, ipy[a], phi)
                phi = 0.0
                for i in range(m):
                    k[i] += dk[a, i]
                    phi += <double>k[i] * log_lam[i]
                if phi > mx:
                    mx = phi
                if t == boundary and w < W - 1:
                    w += 1
                    boundary += block
            if phi > 1.0:
                lip = log_scaled(sm, se)
                lphi = log(phi)
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
                lip = log_scaled(sm, se)
                series[s, 0] = phi
                series[s, 1] = lip
                series[s, 2] = mx
                if mx > 1.0:
                    lm = log(mx)
                    for p in range(P):
                        if mx - lip >= Cs[p] * lm:
                            uflags[p, s] = 1
    return {
        "pred_windows": pw_a,
        "pred_horizons": ph_a,
        "pred_last": plast_a,
        "series": series_a,
        "u_flags": uflags_a,
        "final_k": k_a,
        "final_phi": phi,
        "final_max": mx,
        "final_logip": log_scaled(sm, se),
        "final_ip_mantissa": sm,
        "final_ip_exponent": se,
    }


def lattice_endpoints(const int64_t[:, ::1] dpos, const double[::1] prob, const int64_t[::1] alias,
                      int64_t n_steps, int64_t n_walks, uint64_t master_seed, int64_t radius):
    cdef int64_t K = dpos.shape[0], d = dpos.shape[1]
    cdef int64_t B = 2 * radius + 1
    out_a = np.zeros(n_walks, dtype=np.int64)
    pos_a = np.zeros(d, dtype=np.int64)
    cdef int64_t[::1] out = out_a
    cdef int64_t[::1] pos = pos_a
    cdef int64_t wi, n, a, c, code
    cdef Rng rng
    with nogil:
        for wi in range(n_walks):
            rng_seed(&rng, mix64(master_seed ^ (<uint64_t>wi * GOLDEN)))
            for c in range(d):
                pos[c] = 0
            for n in range(n_steps):
                a = draw(&rng, &prob[0], &alias[0], K)
                for c in range(d):
                    pos[c] += dpos[a, c]
            code = 0
            for c in range(d - 1, -1, -1):
                code = code * B + pos[c] + radius
            out[wi] = code
    return out_a


def wreath_endpoints(int64_t d, int64_t q, const int64_t[:, ::1] dpos, const int64_t[::1] lptr,
                     const int64_t[:, ::1] lsite, const int64_t[::1] lval, const double[::1] prob,
                     const int64_t[::1] alias, int64_t n_steps, int64_t n_walks, uint64_t master_seed,
                     int64_t radius):
    cdef int64_t K = prob.shape[0]
    cdef int64_t B = 2 * radius + 1
    cdef int64_t cells = 1
    cdef int64_t c
    for c in range(d):
        cells *= B
    out_a = np.zeros(n_walks, dtype=np.int64)
    pos_a = np.zeros(d, dtype=np.int64)
    lamps_a = np.zeros(cells, dtype=np.int64)
    cdef int64_t[::1] out = out_a
    cdef int64_t[::1] pos = pos_a
    cdef int64_t[::1] lamps = lamps_a
    cdef int64_t wi, n, a, li, idx, v, code, pidx
    cdef Rng rng
    with nogil:
        for wi in range(n_walks):
            rng_seed(&rng, mix64(master_seed ^ (<uint64_t>wi * GOLDEN)))
            for c in range(d):
                pos[c] = 0
            for idx in range(cells):
                lamps[idx] = 0
            for n in range(n_steps):
                a = draw(&rng, &prob[0], &alias[0], K)
                for li in range(lptr[a], lptr[a + 1]):
                    idx = 0
                    for c in range(d - 1, -1, -1):
                        idx = idx * B + pos[c] + lsite[li, c] + radius
                    v = lamps[idx] + lval[li]
                    lamps[idx] = v - q if v >= q else v
                for c in range(d):
                    pos[c] += dpos[a, c]
            code = 0
            for idx in range(cells - 1, -1, -1):
                code = code * q + lamps[idx]
            pidx = 0
            for c in range(d - 1, -1, -1):
                pidx = pidx * B + pos[c] + radius
            out[wi] = code * cells + pidx
    return out_a
