# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path kernels.

Random numbers come from Philox4x64-10 keyed by ``(seed, 0)``. Normal number
``m`` of path ``pid`` in stream ``tag`` is word ``m % 4`` of the block with
counter ``(m // 4, pid, tag, 0)``, passed through a 256-layer ziggurat. A
rejected ziggurat word continues on a private sub-stream with counter
``(m, pid, tag | 0x100, block)``. A path therefore owns its randomness: results
do not depend on chunking or thread scheduling, and a path that leaves the
domain stops drawing.

The numpy twin of each function lives in ``movbound._fallback`` and must stay
in step with this file.
"""
import numpy as np

from libc.math cimport sqrt, exp, expm1, log1p
from libc.stdint cimport uint64_t

cdef extern from *:
    ctypedef unsigned long long uint128_t "unsigned __int128"

cdef uint64_t PHILOX_M0 = 0xD2E7470EE14C6C93u
cdef uint64_t PHILOX_M1 = 0xCA5A826395121157u
cdef uint64_t PHILOX_W0 = 0x9E3779B97F4A7C15u
cdef uint64_t PHILOX_W1 = 0xBB67AE8584CAA73Bu

cdef double INV_2_53 = 1.0 / 9007199254740992.0

cdef uint64_t ZIG_K[256]
cdef double ZIG_W[256]
cdef double ZIG_F[256]
cdef double ZIG_R = 3.6541528853610088
cdef double ZIG_INV_R = 1.0 / 3.6541528853610088
cdef uint64_t MAG_MASK = 0x000FFFFFFFFFFFFFu

# above this exponent 1 - exp(-y) rounds to exactly 1.0
cdef double BRIDGE_NEGLIGIBLE = 40.0

cdef enum:
    TAG_INCREMENT = 0
    TAG_KILL = 1
    TAG_KILL_LATE = 2
    TAG_AUX = 0x100


def _load_tables():
    from ._ziggurat import ZIG_K as k, ZIG_W as w, ZIG_F as f, R
    cdef int i
    if R != ZIG_R:
        raise RuntimeError("ziggurat tables out of sync")
    for i in range(256):
        ZIG_K[i] = k[i]
        ZIG_W[i] = w[i]
        ZIG_F[i] = f[i]


_load_tables()


cdef inline void philox(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3,
                        uint64_t k0, uint64_t k1, uint64_t* out) noexcept nogil:
    cdef uint128_t p0, p1
    cdef uint64_t n0, n2
    cdef int r
    for r in range(10):
        p0 = <uint128_t>PHILOX_M0 * c0
        p1 = <uint128_t>PHILOX_M1 * c2
        n0 = <uint64_t>(p1 >> 64) ^ c1 ^ k0
        n2 = <uint64_t>(p0 >> 64) ^ c3 ^ k1
        c1 = <uint64_t>p1
        c3 = <uint64_t>p0
        c0 = n0
        c2 = n2
        k0 = k0 + PHILOX_W0
        k1 = k1 + PHILOX_W1
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline double to_unit(uint64_t r) noexcept nogil:
    # 53-bit uniform on [0, 1)
    return (r >> 11) * INV_2_53


cdef struct AuxStream:
    uint64_t m
    uint64_t pid
    uint64_t tag
    uint64_t k0
    uint64_t block
    int pos
    uint64_t w[4]


cdef inline uint64_t aux_next(AuxStream* a) noexcept nogil:
    if a.pos == 4:
        philox(a.m, a.pid, a.tag | TAG_AUX, a.block, a.k0, 0, a.w)
        a.block += 1
        a.pos = 0
    a.pos += 1
    return a.w[a.pos - 1]


cdef double zig_slow(uint64_t r, uint64_t m, uint64_t pid, uint64_t tag,
                     uint64_t k0) noexcept nogil:
    # rejection branch; extra words come from the normal's private sub-stream
    cdef AuxStream a
    cdef int idx
    cdef uint64_t rabs
    cdef bint neg
    cdef double x, xx, yy
    a.m = m
    a.pid = pid
    a.tag = tag
    a.k0 = k0
    a.block = 0
    a.pos = 4
    while True:
        idx = <int>(r & 0xFF)
        neg = (r >> 8) & 1
        rabs = (r >> 9) & MAG_MASK
        x = rabs * ZIG_W[idx]
        if neg:
            x = -x
        if rabs < ZIG_K[idx]:
            return x
        if idx == 0:
            while True:
                xx = -ZIG_INV_R * log1p(-to_unit(aux_next(&a)))
                yy = -log1p(-to_unit(aux_next(&a)))
                if yy + yy > xx * xx:
                    return -(ZIG_R + xx) if neg else ZIG_R + xx
        elif (ZIG_F[idx - 1] - ZIG_F[idx]) * to_unit(aux_next(&a)) + ZIG_F[idx] < exp(-0.5 * x * x):
            return x
        r = aux_next(&a)


cdef inline double zig(uint64_t r, uint64_t m, uint64_t pid, uint64_t tag,
                       uint64_t k0) noexcept nogil:
    cdef int idx = <int>(r & 0xFF)
    cdef uint64_t rabs = (r >> 9) & MAG_MASK
    if rabs < ZIG_K[idx]:
        if (r >> 8) & 1:
            return -(rabs * ZIG_W[idx])
        return rabs * ZIG_W[idx]
    return zig_slow(r, m, pid, tag, k0)


cdef inline void normal_quad(uint64_t j, uint64_t pid, uint64_t tag, uint64_t k0,
                             double* z) noexcept nogil:
    cdef uint64_t w[4]
    philox(j, pid, tag, 0, k0, 0, w)
    z[0] = zig(w[0], 4 * j, pid, tag, k0)
    z[1] = zig(w[1], 4 * j + 1, pid, tag, k0)
    z[2] = zig(w[2], 4 * j + 2, pid, tag, k0)
    z[3] = zig(w[3], 4 * j + 3, pid, tag, k0)


cdef inline double path_uniform(uint64_t pid, uint64_t tag, uint64_t k0) noexcept nogil:
    cdef uint64_t w[4]
    philox(0, pid, tag, 0, k0, 0, w)
    return to_unit(w[0])


def philox4x64(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3,
               uint64_t k0, uint64_t k1):
    """One Philox4x64-10 block, for known-answer tests."""
    cdef uint64_t w[4]
    philox(c0, c1, c2, c3, k0, k1, w)
    return (w[0], w[1], w[2], w[3])


def normal_from_word(uint64_t r, uint64_t m, uint64_t pid, uint64_t tag, uint64_t seed):
    """Ziggurat normal for one 64-bit word, exposed for testing."""
    return zig(r, m, pid, tag, seed)


def survival_paths(const double[::1] fvals, const double[::1] fpp, double dt,
                   uint64_t seed, uint64_t path_start, Py_ssize_t n_paths,
                   bint bridge, bint weights):
    """Simulate paths on the grid and report which stay below ``fvals``.

    Returns ``(alive, x_T, curvature)`` where ``curvature`` is the trapezoid
    sum ``dt * sum x_i fpp_i`` (only filled when ``weights`` is set; only
    meaningful for surviving paths).
    """
    cdef Py_ssize_t n = fvals.shape[0] - 1
    cdef double sdt = sqrt(dt)
    cdef double two_over_dt = 2.0 / dt
    alive_arr = np.zeros(n_paths, dtype=np.uint8)
    xT_arr = np.zeros(n_paths, dtype=np.float64)
    curv_arr = np.zeros(n_paths, dtype=np.float64)
    cdef unsigned char[::1] alive = alive_arr
    cdef double[::1] xT = xT_arr
    cdef double[::1] curv = curv_arr
    cdef Py_ssize_t p, i
    cdef uint64_t pid
    cdef double z[4]
    cdef double x, xn, g2, y, s, kill, acc
    cdef bint ok
    if weights and fpp.shape[0] != fvals.shape[0]:
        raise ValueError("fpp must have the same length as fvals")
    with nogil:
        for p in range(n_paths):
            pid = path_start + <uint64_t>p
            kill = path_uniform(pid, TAG_KILL, seed) if bridge else 0.0
            x = 0.0
            s = 1.0
            acc = 0.0
            ok = True
            for i in range(n):
                if (i & 3) == 0:
                    normal_quad(<uint64_t>(i >> 2), pid, TAG_INCREMENT, seed, z)
                xn = x + sdt * z[i & 3]
                g2 = fvals[i + 1] - xn
                if g2 < 0.0:
                    ok = False
                    break
                if bridge:
                    y = two_over_dt * (fvals[i] - x) * g2
                    if y < BRIDGE_NEGLIGIBLE:
                        s = s * -expm1(-y)
                        if s <= kill:
                            ok = False
                            break
                x = xn
                if weights:
                    if i + 1 == n:
                        acc = acc + 0.5 * x * fpp[i + 1]
                    else:
                        acc = acc + x * fpp[i + 1]
            if ok:
                alive[p] = 1
                xT[p] = x
                curv[p] = dt * acc
    return alive_arr, xT_arr, curv_arr


def first_passage(const double[::1] fvals, double dt,
                  uint64_t seed, uint64_t path_start, Py_ssize_t n_paths):
    """First grid crossing of ``x >= f``, refined by linear interpolation.

    Returns ``(tau, censored)``; censored paths get ``tau = n * dt``.
    """
    cdef Py_ssize_t n = fvals.shape[0] - 1
    cdef double sdt = sqrt(dt)
    tau_arr = np.empty(n_paths, dtype=np.float64)
    cens_arr = np.zeros(n_paths, dtype=np.uint8)
    cdef double[::1] tau = tau_arr
    cdef unsigned char[::1] cens = cens_arr
    cdef Py_ssize_t p, i
    cdef uint64_t pid
    cdef double z[4]
    cdef double x, xn, gap_prev, gap
    cdef bint hit
    with nogil:
        for p in range(n_paths):
            pid = path_start + <uint64_t>p
            x = 0.0
            hit = False
            for i in range(n):
                if (i & 3) == 0:
                    normal_quad(<uint64_t>(i >> 2), pid, TAG_INCREMENT, seed, z)
                xn = x + sdt * z[i & 3]
                gap = xn - fvals[i + 1]
                if gap >= 0.0:
                    gap_prev = x - fvals[i]
                    tau[p] = (i + (-gap_prev) / (gap - gap_prev)) * dt
                    hit = True
                    break
                x = xn
            if not hit:
                tau[p] = n * dt
                cens[p] = 1
    return tau_arr, cens_arr


def window_survival(const double[::1] fvals, double dt, Py_ssize_t split,
                    uint64_t seed, uint64_t path_start, Py_ssize_t n_paths,
                    bint bridge):
    """Survival on ``[0, t_split]`` and on ``[t_split, T]`` for the same paths.

    Each window has its own bridge-kill uniform, so the joint indicator
    ``early & late`` has the law of survival on the whole horizon.
    """
    cdef Py_ssize_t n = fvals.shape[0] - 1
    cdef double sdt = sqrt(dt)
    cdef double two_over_dt = 2.0 / dt
    early_arr = np.zeros(n_paths, dtype=np.uint8)
    late_arr = np.zeros(n_paths, dtype=np.uint8)
    cdef unsigned char[::1] early = early_arr
    cdef unsigned char[::1] late = late_arr
    cdef Py_ssize_t p, i
    cdef uint64_t pid
    cdef double z[4]
    cdef double x, xn, g1, g2, y, s_early, s_late, kill_early, kill_late
    cdef bint ok_early, ok_late
    if not 0 <= split <= n:
        raise ValueError("split index outside the grid")
    with nogil:
        for p in range(n_paths):
            pid = path_start + <uint64_t>p
            if bridge:
                kill_early = path_uniform(pid, TAG_KILL, seed)
                kill_late = path_uniform(pid, TAG_KILL_LATE, seed)
            else:
                kill_early = 0.0
                kill_late = 0.0
            x = 0.0
            s_early = 1.0
            s_late = 1.0
            ok_early = True
            ok_late = fvals[split] >= 0.0 if split == 0 else True
            for i in range(n):
                if (i & 3) == 0:
                    normal_quad(<uint64_t>(i >> 2), pid, TAG_INCREMENT, seed, z)
                xn = x + sdt * z[i & 3]
                g1 = fvals[i] - x
                g2 = fvals[i + 1] - xn
                if i < split:
                    if ok_early:
                        if g2 < 0.0:
                            ok_early = False
                        elif bridge:
                            y = two_over_dt * g1 * g2
                            if y < BRIDGE_NEGLIGIBLE:
                                s_early = s_early * -expm1(-y)
                                if s_early <= kill_early:
                                    ok_early = False
                    if i + 1 == split and g2 < 0.0:
                        ok_late = False
                else:
                    if g2 < 0.0:
                        ok_late = False
                    elif bridge:
                        y = two_over_dt * g1 * g2
                        if y < BRIDGE_NEGLIGIBLE:
                            s_late = s_late * -expm1(-y)
                            if s_late <= kill_late:
                                ok_late = False
                    if not ok_late:
                        break
                x = xn
            early[p] = ok_early
            late[p] = ok_late
    return early_arr, late_arr


def normal_block(uint64_t seed, uint64_t path_start, Py_ssize_t n_paths,
                 Py_ssize_t width, uint64_t tag):
    """``(n_paths, width)`` standard normals, row ``p`` from path ``path_start + p``."""
    out_arr = np.empty((n_paths, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, j
    cdef uint64_t pid
    cdef double z[4]
    with nogil:
        for p in range(n_paths):
            pid = path_start + <uint64_t>p
            for j in range(width):
                if (j & 3) == 0:
                    normal_quad(<uint64_t>(j >> 2), pid, tag, seed, z)
                out[p, j] = z[j & 3]
    return out_arr
