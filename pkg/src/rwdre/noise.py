"""The marked space-time Poisson field driving the random walks.

Each site carries an independent rate-``Lambda`` marked Poisson process on
(0, inf), realized lazily from t = 0 out of the site's WALK_MARK substream.
Marks are uniform on [0, Lambda). Because site sequences are deterministic
functions of (master, site, replica), overlapping window queries agree on
their intersection and replicas are independent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _bits
from .streams import StreamKind, derive_key


@dataclass(frozen=True)
class SpaceTimeWindow:
    """Half-open site range [x_min, x_max) times [t_min, t_max)."""

    x_min: int
    x_max: int
    t_min: float
    t_max: float

    def __post_init__(self):
        if self.x_min > self.x_max:
            raise ValueError("x_min must not exceed x_max")
        if not (0.0 <= self.t_min < self.t_max):
            raise ValueError("need 0 <= t_min < t_max")

    def contains_site(self, x: int) -> bool:
        return self.x_min <= x < self.x_max


@dataclass(frozen=True)
class MarkedPoint:
    site: int
    time: float
    mark: float


class NoiseField:
    """Lazily realized marked Poisson field for one (master, replica) pair."""

    def __init__(self, master: int, lam_bound: float, replica: int = 0):
        if lam_bound < 1.0:
            raise ValueError("Lambda must be at least 1")
        self.master = int(master)
        self.lam_bound = float(lam_bound)
        self.replica = int(replica)
        self._cache: dict[int, tuple[float, np.ndarray, np.ndarray]] = {}

    def site_key(self, site: int) -> np.uint64:
        return derive_key(self.master, site, StreamKind.WALK_MARK, self.replica)

    def site_events(self, site: int, t_max: float) -> tuple[np.ndarray, np.ndarray]:
        """(times, marks) of all events at ``site`` in (0, t_max]."""
        cached = self._cache.get(site)
        if cached is not None and cached[0] >= t_max:
            upto, times, marks = cached
            if upto == t_max:
                return times, marks
            n = int(np.searchsorted(times, t_max, side="right"))
            return times[:n], marks[:n]
        times, marks = _bits.gen_marked_events(self.site_key(site), self.lam_bound, self.lam_bound, t_max)
        if times.size > 1 and np.any(np.diff(times) <= 0.0):
            raise AssertionError(f"duplicate event times at site {site}")
        self._cache[site] = (t_max, times, marks)
        return times, marks

    def points_in(self, window: SpaceTimeWindow) -> list[MarkedPoint]:
        out = []
        for x in range(window.x_min, window.x_max):
            times, marks = self.site_events(x, window.t_max)
            lo = int(np.searchsorted(times, window.t_min, side="right"))
            for i in range(lo, times.size):
                out.append(MarkedPoint(x, float(times[i]), float(marks[i])))
        return out


def marked_points_in(master: int, replica: int, window: SpaceTimeWindow, lam: float) -> list[MarkedPoint]:
    """All marked points of the field in the window (per-site rate ``lam``)."""
    return NoiseField(master, lam, replica).points_in(window)


class ExplicitNoise:
    """Hand-built realization: a fixed list of marked points.

    Useful for constructed fixtures; walks driven by it go through the
    pure-Python runner instead of the kernels.
    """

    def __init__(self, points: list[MarkedPoint], lam_bound: float = 1.0):
        self.lam_bound = float(lam_bound)
        self._by_site: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        grouped: dict[int, list[MarkedPoint]] = {}
        for p in points:
            if p.time <= 0:
                raise ValueError("point times must be positive")
            grouped.setdefault(p.site, []).append(p)
        for site, pts in grouped.items():
            pts.sort(key=lambda p: p.time)
            times = np.array([p.time for p in pts])
            if times.size > 1 and np.any(np.diff(times) <= 0):
                raise ValueError(f"duplicate point times at site {site}")
            self._by_site[site] = (times, np.array([p.mark for p in pts]))

    def site_events(self, site: int, t_max: float) -> tuple[np.ndarray, np.ndarray]:
        times, marks = self._by_site.get(site, (np.empty(0), np.empty(0)))
        n = int(np.searchsorted(times, t_max, side="right"))
        return times[:n], marks[:n]

    def points_in(self, window: SpaceTimeWindow) -> list[MarkedPoint]:
        out = []
        for x in range(window.x_min, window.x_max):
            times, marks = self.site_events(x, window.t_max)
            lo = int(np.searchsorted(times, window.t_min, side="right"))
            out.extend(MarkedPoint(x, float(t), float(m)) for t, m in zip(times[lo:], marks[lo:]))
        return out
