"""Low-level counter-based random stream primitives (numba-compiled).

All randomness in the package flows through these generators so that the
pure-Python orchestration code and the hot kernels consume bit-identical
streams. A substream is a 64-bit key; the j-th raw value of the stream is

    value(key, j) = finalize(key + (j + 1) * GOLDEN)   (mod 2**64)

which is the splitmix64 sequence with initial state ``key``. Because values
are indexed by a counter, any prefix of a stream can be regenerated exactly,
which is what gives window-consistent noise fields.
"""

import math

import numpy as np
from numba import njit

U64_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
U64_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)

# 2**-53; raw >> 11 leaves 53 bits, so uniforms live in [0, 1).
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    """splitmix64 finalizer (bijective on uint64)."""
    z = (z ^ (z >> _S30)) * U64_MIX1
    z = (z ^ (z >> _S27)) * U64_MIX2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def stream_value(key, index):
    """Raw uint64 value at counter ``index`` of the substream ``key``."""
    return mix64(key + (np.uint64(index) + _ONE) * U64_GOLDEN)


@njit(cache=True, inline="always")
def stream_uniform(key, index):
    """Uniform in [0, 1) at counter ``index``."""
    return (stream_value(key, index) >> _S11) * _INV53


@njit(cache=True)
def gen_event_times(key, rate, t_max):
    """Poisson event times on (0, t_max] at ``rate``, one value per counter slot.

    Gap j uses counter index j. Returns a strictly increasing float64 array
    (ties have probability ~2**-53 per draw and are excluded upstream).
    """
    if rate <= 0.0 or t_max <= 0.0:
        return np.empty(0, dtype=np.float64)
    cap = int(rate * t_max + 10.0 * math.sqrt(rate * t_max + 1.0)) + 16
    out = np.empty(cap, dtype=np.float64)
    t = 0.0
    n = 0
    j = 0
    while True:
        u = stream_uniform(key, j)
        j += 1
        t += -math.log1p(-u) / rate
        if t > t_max:
            break
        if n == cap:
            cap *= 2
            grown = np.empty(cap, dtype=np.float64)
            grown[:n] = out[:n]
            out = grown
        out[n] = t
        n += 1
    return out[:n].copy()


@njit(cache=True)
def gen_marked_events(key, rate, mark_scale, t_max):
    """Marked Poisson events: gap j at counter 2j, mark j at counter 2j + 1.

    Marks are uniform on [0, mark_scale). Returns (times, marks).
    """
    if rate <= 0.0 or t_max <= 0.0:
        return np.empty(0, dtype=np.float64), np.empty(0, dtype=np.float64)
    cap = int(rate * t_max + 10.0 * math.sqrt(rate * t_max + 1.0)) + 16
    times = np.empty(cap, dtype=np.float64)
    marks = np.empty(cap, dtype=np.float64)
    t = 0.0
    n = 0
    j = 0
    while True:
        u = stream_uniform(key, 2 * j)
        t += -math.log1p(-u) / rate
        if t > t_max:
            break
        if n == cap:
            cap *= 2
            grown_t = np.empty(cap, dtype=np.float64)
            grown_t[:n] = times[:n]
            times = grown_t
            grown_m = np.empty(cap, dtype=np.float64)
            grown_m[:n] = marks[:n]
            marks = grown_m
        times[n] = t
        marks[n] = stream_uniform(key, 2 * j + 1) * mark_scale
        n += 1
        j += 1
    return times[:n].copy(), marks[:n].copy()
