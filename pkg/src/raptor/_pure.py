"""Pure-numpy fallbacks for the compiled kernels.

Expression trees mirror `_kernels.pyx` exactly so both backends produce
bit-identical arrays.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# output planes per gather batch; bounds temp memory for large volumes
_RESAMPLE_CHUNK = 16


def mix64_block(seed, start, n):
    """Outputs i = start .. start+n-1 of the splitmix64 counter stream."""
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    c0 = np.uint64(int(start) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        z = s + (c0 + np.uint64(1) + np.arange(n, dtype=np.uint64)) * _GOLDEN
        z ^= z >> np.uint64(30)
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
    return z


def _axis_table(source, target):
    if target > 1 and source > 1:
        scale = (source - 1) / (target - 1)
    else:
        scale = 0.0
    pos = np.arange(target, dtype=np.float64) * scale
    lo = np.clip(np.floor(pos).astype(np.intp), 0, max(source - 2, 0))
    hi = np.minimum(lo + 1, source - 1)
    return lo, hi, pos - lo


def resample_trilinear(src, target):
    """Trilinear align-corners resampling of a cubic f32 volume."""
    v = np.ascontiguousarray(src, dtype=np.float32)
    s = v.shape[0]
    x0, x1, fx = _axis_table(s, target)
    y0, y1, fy = _axis_table(s, target)
    z0, z1, fz = _axis_table(s, target)

    out = np.empty((target, target, target), dtype=np.float32)
    wy0 = (1.0 - fy)[:, None]
    wy1 = fy[:, None]
    wz0 = (1.0 - fz)[None, :]
    wz1 = fz[None, :]
    yy0 = y0[:, None]
    yy1 = y1[:, None]
    zz0 = z0[None, :]
    zz1 = z1[None, :]
    for lo_i in range(0, target, _RESAMPLE_CHUNK):
        hi_i = min(lo_i + _RESAMPLE_CHUNK, target)
        sl = slice(lo_i, hi_i)
        a0 = v[x0[sl]]
        a1 = v[x1[sl]]
        c00 = a0[:, yy0, zz0] * wz0 + a0[:, yy0, zz1] * wz1
        c01 = a0[:, yy1, zz0] * wz0 + a0[:, yy1, zz1] * wz1
        c10 = a1[:, yy0, zz0] * wz0 + a1[:, yy0, zz1] * wz1
        c11 = a1[:, yy1, zz0] * wz0 + a1[:, yy1, zz1] * wz1
        c0 = c00 * wy0 + c01 * wy1
        c1 = c10 * wy0 + c11 * wy1
        wx0 = (1.0 - fx[sl])[:, None, None]
        wx1 = fx[sl][:, None, None]
        out[sl] = c0 * wx0 + c1 * wx1
    return out


def mean_pool_seq(tokens):
    """Mean over the leading axis, accumulated in f64 in ascending order."""
    t = np.ascontiguousarray(tokens, dtype=np.float32)
    acc = np.zeros(t.shape[1:], dtype=np.float64)
    for i in range(t.shape[0]):
        acc += t[i]
    return np.divide(acc, t.shape[0]).astype(np.float32)
