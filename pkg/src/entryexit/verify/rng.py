"""Counter-based normal variates for reproducible parallel simulation.

Philox4x32-10 maps (counter, key) to four 32-bit words with no state, so
path ``i`` always receives the same numbers no matter which worker runs it
or in which order. The key is the 64-bit seed; the 128-bit counter holds
the stream index in its upper half and a block index in its lower half.
Each block gives two 64-bit words, turned into normals by a 256-layer
ziggurat (same layout and acceptance logic as numpy's
``Generator.standard_normal``).
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_S32 = np.uint64(32)


@nb.njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten rounds of Philox4x32; all arguments are uint64 holding 32-bit words."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


# ---------------------------------------------------------------- ziggurat
ZIG_R = 3.6541528853610087963519472518
ZIG_INV_R = 1.0 / ZIG_R


def _ziggurat_tables(n: int = 256, r: float = ZIG_R):
    from scipy.special import erfc

    f = lambda x: math.exp(-0.5 * x * x)  # noqa: E731
    area = r * f(r) + math.sqrt(math.pi / 2.0) * erfc(r / math.sqrt(2.0))
    m = float(2**52)
    ki = np.zeros(n, dtype=np.uint64)
    wi = np.zeros(n)
    fi = np.zeros(n)
    q = area / f(r)
    ki[0] = np.uint64(r / q * m)
    wi[0] = q / m
    wi[n - 1] = r / m
    fi[0] = 1.0
    fi[n - 1] = f(r)
    dn = tn = r
    for i in range(n - 2, 0, -1):
        dn = math.sqrt(-2.0 * math.log(area / dn + f(dn)))
        ki[i + 1] = np.uint64(dn / tn * m)
        tn = dn
        fi[i] = f(dn)
        wi[i] = dn / m
    return ki, wi, fi


ZIG_KI, ZIG_WI, ZIG_FI = _ziggurat_tables()
_MASK52 = np.uint64(0x000FFFFFFFFFFFFF)
_ONE = np.uint64(1)
_S1 = np.uint64(1)
_S8 = np.uint64(8)
_S11 = np.uint64(11)
_FF = np.uint64(0xFF)
_TO_UNIT = 1.0 / 9007199254740992.0


@nb.njit(cache=True)
def _word(b, cached, have, s0, s1, k0, k1):
    # one Philox block gives two 64-bit words; the second is cached
    if have:
        return cached, b, cached, False
    x0, x1, x2, x3 = philox4x32(b & _MASK32, b >> _S32, s0, s1, k0, k1)
    return (x0 << _S32) | x1, b + _ONE, (x2 << _S32) | x3, True


@nb.njit(cache=True)
def fill_normals(out, lo, hi, s0, s1, k0, k1, b0, cached0, have0, ki, wi, fi):
    """Write standard normals into ``out[lo:hi]`` and return the new stream state.

    State is ``(b, cached, have)``: next block index plus a possibly cached
    word. Starting from ``(0, 0, False)`` and calling repeatedly yields the
    same sequence regardless of how the range is chunked.
    """
    b = np.uint64(b0)
    cached = np.uint64(cached0)
    have = bool(have0)
    i = lo
    while i < hi:
        r, b, cached, have = _word(b, cached, have, s0, s1, k0, k1)
        idx = np.intp(r & _FF)
        r = r >> _S8
        rabs = (r >> _S1) & _MASK52
        x = np.float64(rabs) * wi[idx]
        if r & _ONE:
            x = -x
        if rabs < ki[idx]:
            out[i] = x
            i += 1
            continue
        if idx == 0:
            while True:
                u, b, cached, have = _word(b, cached, have, s0, s1, k0, k1)
                v, b, cached, have = _word(b, cached, have, s0, s1, k0, k1)
                xx = -ZIG_INV_R * math.log1p(-np.float64(u >> _S11) * _TO_UNIT)
                yy = -math.log1p(-np.float64(v >> _S11) * _TO_UNIT)
                if yy + yy > xx * xx:
                    break
            out[i] = -(ZIG_R + xx) if (rabs >> _S8) & _ONE else ZIG_R + xx
            i += 1
            continue
        u, b, cached, have = _word(b, cached, have, s0, s1, k0, k1)
        if (fi[idx - 1] - fi[idx]) * (np.float64(u >> _S11) * _TO_UNIT) + fi[idx] < math.exp(-0.5 * x * x):
            out[i] = x
            i += 1
    return b, cached, have


def split_seed(seed: int) -> tuple[np.uint64, np.uint64]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def split_stream(stream: int) -> tuple[np.uint64, np.uint64]:
    return split_seed(stream)


def stream_normals(seed: int, stream: int, n: int, chunk: int | None = None) -> np.ndarray:
    """First ``n`` normals of stream ``stream``; the same numbers the simulator uses."""
    k0, k1 = split_seed(seed)
    s0, s1 = split_stream(stream)
    out = np.empty(n)
    state = (np.uint64(0), np.uint64(0), False)
    step = n if chunk is None else chunk
    for lo in range(0, n, max(step, 1)):
        b, cached, have = fill_normals(out, lo, min(lo + step, n), s0, s1, k0, k1, *state, ZIG_KI, ZIG_WI, ZIG_FI)
        state = (np.uint64(b), np.uint64(cached), bool(have))
    return out


@nb.njit(cache=True)
def _fill_from_words(out, words, ki, wi, fi):
    # replays a fixed word sequence through the ziggurat; used to compare with numpy
    pos = 0
    for i in range(out.shape[0]):
        while True:
            r = words[pos]
            pos += 1
            idx = np.intp(r & _FF)
            r = r >> _S8
            sign = r & _ONE
            rabs = (r >> _S1) & _MASK52
            x = np.float64(rabs) * wi[idx]
            if sign:
                x = -x
            if rabs < ki[idx]:
                out[i] = x
                break
            if idx == 0:
                done = False
                while True:
                    xx = -ZIG_INV_R * math.log1p(-((words[pos] >> _S11) * (1.0 / 9007199254740992.0)))
                    yy = -math.log1p(-((words[pos + 1] >> _S11) * (1.0 / 9007199254740992.0)))
                    pos += 2
                    if yy + yy > xx * xx:
                        out[i] = -(ZIG_R + xx) if (rabs >> _S8) & _ONE else ZIG_R + xx
                        done = True
                        break
                if done:
                    break
            else:
                u = (words[pos] >> _S11) * (1.0 / 9007199254740992.0)
                pos += 1
                if (fi[idx - 1] - fi[idx]) * u + fi[idx] < math.exp(-0.5 * x * x):
                    out[i] = x
                    break
    return pos


def normals_from_words(words: np.ndarray, n: int) -> np.ndarray:
    """Ziggurat normals consuming the given 64-bit words in order."""
    out = np.empty(n)
    _fill_from_words(out, np.ascontiguousarray(words, dtype=np.uint64), ZIG_KI, ZIG_WI, ZIG_FI)
    return out


@nb.njit(cache=True)
def _philox_py(c0, c1, c2, c3, k0, k1):
    return philox4x32(c0, c1, c2, c3, k0, k1)


def philox_block(counter, key) -> tuple[int, int, int, int]:
    """Raw Philox4x32-10 output for a 4-word counter and 2-word key."""
    c = [np.uint64(x) for x in counter]
    k = [np.uint64(x) for x in key]
    return tuple(int(x) for x in _philox_py(c[0], c[1], c[2], c[3], k[0], k[1]))
