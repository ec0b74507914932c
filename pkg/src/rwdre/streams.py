"""Seeded substream derivation and Poisson time queries.

Substream keys are derived from (master seed, site, kind, replica) by a
fixed absorb chain over the splitmix64 finalizer:

    h = mix64(master)
    h = mix64(h ^ u64(site))      # two's complement for negative sites
    h = mix64(h ^ u64(kind))
    h = mix64(h ^ u64(replica))

The chain is injective per absorbed word given the previous state, so
distinct ids scatter to independent-looking 64-bit keys. All value draws are
counter-indexed (see rwdre._bits), making every query a pure function of
(master, id, query).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _bits

MASK64 = 0xFFFFFFFFFFFFFFFF


class StreamKind(IntEnum):
    WALK_MARK = 1
    ENV_CLOCK_RIGHT = 2
    ENV_CLOCK_LEFT = 3
    ENV_CLOCK_SITE = 4
    INITIAL_LAW = 5


@dataclass(frozen=True)
class StreamId:
    site: int
    kind: StreamKind
    replica: int = 0

    def __post_init__(self):
        if self.replica < 0:
            raise ValueError("replica must be non-negative")


def _mix64_np(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _bits.U64_MIX1
        z = (z ^ (z >> np.uint64(27))) * _bits.U64_MIX2
        return z ^ (z >> np.uint64(31))


def derive_key(master: int, site: int, kind: int, replica: int) -> np.uint64:
    """64-bit substream key for one StreamId."""
    h = _mix64_np(np.uint64(master & MASK64))
    h = _mix64_np(h ^ np.uint64(site & MASK64))
    h = _mix64_np(h ^ np.uint64(int(kind) & MASK64))
    h = _mix64_np(h ^ np.uint64(replica & MASK64))
    return np.uint64(h)


def derive_keys(master: int, sites: np.ndarray, kind: int, replica: int) -> np.ndarray:
    """Vectorized derive_key over an int64 array of sites."""
    with np.errstate(over="ignore"):
        h0 = _mix64_np(np.uint64(master & MASK64))
        h = _mix64_np(h0 ^ sites.astype(np.int64).view(np.uint64))
        h = _mix64_np(h ^ np.uint64(int(kind) & MASK64))
        h = _mix64_np(h ^ np.uint64(replica & MASK64))
    return h


class SubStream:
    """Counter-indexed substream. All queries replay from index 0."""

    def __init__(self, key: np.uint64):
        self.key = np.uint64(key)

    def value_at(self, index: int) -> int:
        return int(_bits.stream_value(self.key, index))

    def uniform_at(self, index: int) -> float:
        return float(_bits.stream_uniform(self.key, index))

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        idx = np.arange(start, start + count, dtype=np.int64)
        with np.errstate(over="ignore"):
            raw = _mix64_np(self.key + (idx.view(np.uint64) + np.uint64(1)) * _bits.U64_GOLDEN)
        return (raw >> np.uint64(11)) * (1.0 / 9007199254740992.0)


def derive_stream(master: int, stream_id: StreamId) -> SubStream:
    return SubStream(derive_key(master, stream_id.site, stream_id.kind, stream_id.replica))


_GOLDEN_INT = 0x9E3779B97F4A7C15
_MIX1_INT = 0xBF58476D1CE4E5B9
_MIX2_INT = 0x94D049BB133111EB


def py_stream_uniform(key: int, index: int) -> float:
    """Pure-Python twin of _bits.stream_uniform (bit-identical, no dispatch cost)."""
    z = (int(key) + (index + 1) * _GOLDEN_INT) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1_INT) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2_INT) & MASK64
    z = z ^ (z >> 31)
    return (z >> 11) * (1.0 / 9007199254740992.0)


def first_uniforms(keys: np.ndarray) -> np.ndarray:
    """Vectorized uniform at counter 0 for an array of substream keys."""
    with np.errstate(over="ignore"):
        raw = _mix64_np(keys + _bits.U64_GOLDEN)
    return (raw >> np.uint64(11)) * (1.0 / 9007199254740992.0)


def poisson_times(stream: SubStream, rate: float, t0: float, t1: float) -> np.ndarray:
    """Sorted event times in (t0, t1] of the rate-``rate`` process on the stream.

    The process is materialized from t = 0, so overlapping queries agree on
    their intersection.
    """
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if t0 > t1:
        raise ValueError("t0 must not exceed t1")
    if rate == 0 or t1 <= 0:
        return np.empty(0, dtype=np.float64)
    times = _bits.gen_event_times(stream.key, rate, t1)
    return times[times > t0]
