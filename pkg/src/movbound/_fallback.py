"""Pure numpy versions of the path kernels in ``_kernels.pyx``.

The random streams are identical: same Philox counters, same ziggurat
tables and rejection sub-streams, so the normals agree bit for bit. The bridge
factor uses numpy's ``expm1`` rather than libm's, so survival decisions can
differ from the compiled kernels when a product lands within an ulp of its
kill uniform.
Paths are vectorised within a chunk and the active set is compacted as paths
leave the domain.
"""
from __future__ import annotations

import math

import numpy as np

from ._ziggurat import R as ZIG_R, ZIG_F, ZIG_K, ZIG_W

TAG_INCREMENT = 0
TAG_KILL = 1
TAG_KILL_LATE = 2
TAG_NORMAL_BLOCK = 3
TAG_AUX = 0x100

_M0 = 0xD2E7470EE14C6C93
_M1 = 0xCA5A826395121157
_W0 = 0x9E3779B97F4A7C15
_W1 = 0xBB67AE8584CAA73B
_U64 = 0xFFFFFFFFFFFFFFFF
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_INV_2_53 = 1.0 / 9007199254740992.0
_BRIDGE_NEGLIGIBLE = 40.0
_MAG_MASK = 0x000FFFFFFFFFFFFF
_ZIG_INV_R = 1.0 / ZIG_R


def _mulhilo(a: int, b):
    """High and low 64-bit halves of ``a * b`` for a constant ``a``."""
    b = np.asarray(b, dtype=np.uint64)
    a_lo, a_hi = np.uint64(a & 0xFFFFFFFF), np.uint64(a >> 32)
    b_lo, b_hi = b & _LO32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = a_hi * b_hi + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    lo = (mid << _S32) | (ll & _LO32)
    return hi, lo


def _philox(c0, c1, c2, c3, k0: int, k1: int):
    """Vectorised Philox4x64-10 over uint64 counter arrays."""
    c0, c1, c2, c3 = np.broadcast_arrays(*(np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3)))
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ np.uint64(k0), lo1, hi0 ^ c3 ^ np.uint64(k1), lo0
        k0 = (k0 + _W0) & _U64
        k1 = (k1 + _W1) & _U64
    return c0, c1, c2, c3


def philox4x64(c0, c1, c2, c3, k0, k1):
    """One Philox4x64-10 block, for known-answer tests."""
    return tuple(int(w) for w in _philox(c0, c1, c2, c3, k0, k1))


def _unit(words):
    return (np.asarray(words, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * _INV_2_53


def _aux_words(m: int, pid: int, tag: int, k0: int):
    """Private sub-stream of 64-bit words for a rejected ziggurat draw."""
    block = 0
    while True:
        yield from philox4x64(m, pid, tag | TAG_AUX, block, k0, 0)
        block += 1


def _zig_slow(r: int, m: int, pid: int, tag: int, k0: int) -> float:
    aux = _aux_words(m, pid, tag, k0)

    def unit():
        return (next(aux) >> 11) * _INV_2_53

    while True:
        idx = r & 0xFF
        neg = (r >> 8) & 1
        rabs = (r >> 9) & _MAG_MASK
        x = rabs * float(ZIG_W[idx])
        if neg:
            x = -x
        if rabs < int(ZIG_K[idx]):
            return x
        if idx == 0:
            while True:
                xx = -_ZIG_INV_R * math.log1p(-unit())
                yy = -math.log1p(-unit())
                if yy + yy > xx * xx:
                    return -(ZIG_R + xx) if neg else ZIG_R + xx
        elif (float(ZIG_F[idx - 1]) - float(ZIG_F[idx])) * unit() + float(ZIG_F[idx]) < math.exp(-0.5 * x * x):
            return x
        r = next(aux)


def ziggurat(words, m, pids, tag: int, seed: int):
    """Normals from 64-bit words; ``m`` and ``pids`` locate each draw's sub-stream."""
    words = np.asarray(words, dtype=np.uint64)
    idx = (words & np.uint64(0xFF)).astype(np.intp)
    rabs = (words >> np.uint64(9)) & np.uint64(_MAG_MASK)
    out = rabs.astype(np.float64) * ZIG_W[idx]
    out = np.where((words >> np.uint64(8)) & np.uint64(1), -out, out)
    slow = np.nonzero(rabs >= ZIG_K[idx])[0]
    if slow.size:
        m = np.broadcast_to(np.asarray(m, dtype=np.uint64), words.shape)
        pids = np.broadcast_to(np.asarray(pids, dtype=np.uint64), words.shape)
        for i in slow:
            out[i] = _zig_slow(int(words[i]), int(m[i]), int(pids[i]), tag, seed)
    return out


def normal_from_word(r, m, pid, tag, seed):
    return float(ziggurat(np.array([r], dtype=np.uint64), m, pid, tag, seed)[0])


def _bridge_factor(g1, g2, two_over_dt):
    """``1 - exp(-2 g1 g2 / dt)``, exactly 1.0 once the exponent passes 40."""
    y = two_over_dt * g1 * g2
    return np.where(y < _BRIDGE_NEGLIGIBLE, -np.expm1(-np.minimum(y, _BRIDGE_NEGLIGIBLE)), 1.0)


def _normal_quad(j: int, pids, tag: int, seed: int):
    w = _philox(np.uint64(j), pids, np.uint64(tag), np.uint64(0), seed, 0)
    return [ziggurat(w[q], 4 * j + q, pids, tag, seed) for q in range(4)]


def _path_uniform(pids, tag: int, seed: int):
    w = _philox(np.uint64(0), pids, np.uint64(tag), np.uint64(0), seed, 0)
    return _unit(w[0])


def _path_ids(path_start: int, n_paths: int):
    return np.uint64(path_start) + np.arange(n_paths, dtype=np.uint64)


class _Quads:
    """Per-path normals drawn four at a time, compacted with the active set."""

    def __init__(self, pids, tag, seed):
        self.pids, self.tag, self.seed = pids, tag, seed
        self.buf = None

    def draw(self, i):
        if i % 4 == 0:
            self.buf = _normal_quad(i >> 2, self.pids, self.tag, self.seed)
        return self.buf[i % 4]

    def keep(self, mask):
        self.pids = self.pids[mask]
        self.buf = [b[mask] for b in self.buf]


@np.errstate(over="ignore", invalid="ignore")
def survival_paths(fvals, fpp, dt, seed, path_start, n_paths, bridge, weights):
    fvals = np.asarray(fvals, dtype=float)
    n = fvals.shape[0] - 1
    if weights and len(fpp) != fvals.shape[0]:
        raise ValueError("fpp must have the same length as fvals")
    sdt = np.sqrt(dt)
    pids = _path_ids(path_start, n_paths)
    alive = np.zeros(n_paths, np.uint8)
    xT = np.zeros(n_paths)
    curv = np.zeros(n_paths)

    idx = np.arange(n_paths)
    x = np.zeros(n_paths)
    s = np.ones(n_paths)
    acc = np.zeros(n_paths)
    kill = _path_uniform(pids, TAG_KILL, seed) if bridge else np.zeros(n_paths)
    normals = _Quads(pids, TAG_INCREMENT, seed)
    for i in range(n):
        if idx.size == 0:
            break
        xn = x + sdt * normals.draw(i)
        g2 = fvals[i + 1] - xn
        ok = g2 >= 0.0
        if bridge:
            s = s * _bridge_factor(fvals[i] - x, g2, 2.0 / dt)
            ok &= s > kill
        x = xn
        if weights:
            scale = 0.5 if i + 1 == n else 1.0
            acc = acc + scale * x * fpp[i + 1]
        if not ok.all():
            idx, x, s, acc, kill = (a[ok] for a in (idx, x, s, acc, kill))
            normals.keep(ok)
    alive[idx] = 1
    xT[idx] = x
    curv[idx] = dt * acc
    return alive, xT, curv


def first_passage(fvals, dt, seed, path_start, n_paths):
    fvals = np.asarray(fvals, dtype=float)
    n = fvals.shape[0] - 1
    sdt = np.sqrt(dt)
    pids = _path_ids(path_start, n_paths)
    tau = np.full(n_paths, n * dt)
    cens = np.ones(n_paths, np.uint8)

    idx = np.arange(n_paths)
    x = np.zeros(n_paths)
    normals = _Quads(pids, TAG_INCREMENT, seed)
    for i in range(n):
        if idx.size == 0:
            break
        xn = x + sdt * normals.draw(i)
        gap = xn - fvals[i + 1]
        hit = gap >= 0.0
        if hit.any():
            gap_prev = x[hit] - fvals[i]
            tau[idx[hit]] = (i + (-gap_prev) / (gap[hit] - gap_prev)) * dt
            cens[idx[hit]] = 0
            keep = ~hit
            idx, xn = idx[keep], xn[keep]
            normals.keep(keep)
        x = xn
    return tau, cens


@np.errstate(over="ignore", invalid="ignore")
def window_survival(fvals, dt, split, seed, path_start, n_paths, bridge):
    fvals = np.asarray(fvals, dtype=float)
    n = fvals.shape[0] - 1
    if not 0 <= split <= n:
        raise ValueError("split index outside the grid")
    sdt = np.sqrt(dt)
    pids = _path_ids(path_start, n_paths)
    early = np.ones(n_paths, bool)
    late = np.full(n_paths, True if split > 0 else bool(fvals[0] >= 0.0))
    if bridge:
        kill_early = _path_uniform(pids, TAG_KILL, seed)
        kill_late = _path_uniform(pids, TAG_KILL_LATE, seed)
    else:
        kill_early = kill_late = np.zeros(n_paths)
    s_early = np.ones(n_paths)
    s_late = np.ones(n_paths)

    idx = np.arange(n_paths)
    x = np.zeros(n_paths)
    normals = _Quads(pids, TAG_INCREMENT, seed)
    for i in range(n):
        if idx.size == 0:
            break
        xn = x + sdt * normals.draw(i)
        g1 = fvals[i] - x
        g2 = fvals[i + 1] - xn
        if i < split:
            e = early[idx]
            e &= g2 >= 0.0
            if bridge:
                s_early[idx] = np.where(e, s_early[idx] * _bridge_factor(g1, g2, 2.0 / dt), s_early[idx])
                e &= s_early[idx] > kill_early[idx]
            early[idx] = e
            if i + 1 == split:
                late[idx] &= g2 >= 0.0
        else:
            alive = late[idx] & (g2 >= 0.0)
            if bridge:
                s_late[idx] = s_late[idx] * _bridge_factor(g1, g2, 2.0 / dt)
                alive &= s_late[idx] > kill_late[idx]
            late[idx] = alive
            if not alive.all():
                idx, xn = idx[alive], xn[alive]
                normals.keep(alive)
        x = xn
    return early.astype(np.uint8), late.astype(np.uint8)


def normal_block(seed, path_start, n_paths, width, tag):
    pids = _path_ids(path_start, n_paths)
    out = np.empty((n_paths, width))
    for j in range(0, width, 4):
        quad = _normal_quad(j >> 2, pids, tag, seed)
        for q in range(min(4, width - j)):
            out[:, j + q] = quad[q]
    return out
