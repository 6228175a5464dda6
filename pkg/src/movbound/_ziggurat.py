"""Tables for the 256-layer ziggurat normal sampler (Marsaglia & Tsang 2000).

A 64-bit word ``r`` is split into an 8-bit layer index, one sign bit and a
52-bit magnitude ``rabs``; the fast path returns ``rabs * W[idx]`` whenever
``rabs < K[idx]``. Layer 0 is the base strip and hands over to the exact tail
sampler beyond ``R``.
"""
import math

import numpy as np

LAYERS = 256
R = 3.6541528853610088
BITS = 52
SCALE = float(2**BITS)


def _pdf(x):
    return math.exp(-0.5 * x * x)


def build_tables():
    # area of every layer: base rectangle plus the tail beyond R
    v = R * _pdf(R) + math.sqrt(math.pi / 2.0) * math.erfc(R / math.sqrt(2.0))
    k = np.zeros(LAYERS, dtype=np.uint64)
    w = np.zeros(LAYERS)
    f = np.zeros(LAYERS)
    dn = tn = R
    q = v / _pdf(dn)
    k[0] = int(dn / q * SCALE)
    k[1] = 0
    w[0] = q / SCALE
    w[LAYERS - 1] = dn / SCALE
    f[0] = 1.0
    f[LAYERS - 1] = _pdf(dn)
    for i in range(LAYERS - 2, 0, -1):
        dn = math.sqrt(-2.0 * math.log(v / dn + _pdf(dn)))
        k[i + 1] = int(dn / tn * SCALE)
        tn = dn
        f[i] = _pdf(dn)
        w[i] = dn / SCALE
    return k, w, f


ZIG_K, ZIG_W, ZIG_F = build_tables()
