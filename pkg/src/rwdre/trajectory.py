"""Occupancy configurations and queryable environment trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import SpaceTimeWindow


class WindowError(Exception):
    """Raised when a trajectory is queried outside its declared window."""


@dataclass
class OccupancyConfig:
    """Occupation counts over the contiguous site range [lo, lo + len)."""

    lo: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if np.any(self.values < 0):
            raise ValueError("occupancies must be non-negative")

    @property
    def hi(self) -> int:
        return self.lo + len(self.values)

    def covers(self, x_min: int, x_max: int) -> bool:
        return self.lo <= x_min and x_max <= self.hi

    def value_at(self, x: int) -> int:
        if not self.lo <= x < self.hi:
            raise WindowError(f"site {x} outside configuration range [{self.lo}, {self.hi})")
        return int(self.values[x - self.lo])


class EnvTrajectory:
    """Piecewise-constant occupation record over a buffered domain.

    Events are stored for the whole simulated domain but queries are only
    allowed inside ``window`` (and time range [t_min, t_max]); the buffer
    exists to shield the window from the frozen-boundary truncation.
    For ASEP runs with classes, stored occupation values are class-resolved
    (0 empty, else class label) and ``occupancy`` collapses them to {0, 1}.
    """

    def __init__(
        self,
        window: SpaceTimeWindow,
        initial: OccupancyConfig,
        times: np.ndarray,
        sites: np.ndarray,
        old_vals: np.ndarray,
        new_vals: np.ndarray,
        mover_class: np.ndarray | None = None,
        binary: bool = False,
        flux: list | None = None,
        has_classes: bool = False,
    ):
        if not initial.covers(window.x_min, window.x_max):
            raise ValueError("initial configuration does not cover the window")
        self.window = window
        self.initial = initial
        self.times = np.asarray(times, dtype=np.float64)
        self.sites = np.asarray(sites, dtype=np.int64)
        self.old_vals = np.asarray(old_vals, dtype=np.int64)
        self.new_vals = np.asarray(new_vals, dtype=np.int64)
        if mover_class is None:
            mover_class = np.zeros(len(self.times), dtype=np.int64)
        self.mover_class = np.asarray(mover_class, dtype=np.int64)
        self.binary = binary
        self.has_classes = has_classes
        self.flux = flux or []
        self.buffer_width = min(window.x_min - initial.lo, initial.hi - window.x_max)
        self._csr = None

    @property
    def t_max(self) -> float:
        return self.window.t_max

    def _build_csr(self):
        from .kernels import stable_order_by_key

        m = len(self.initial.values)
        order, ptr = stable_order_by_key(self.sites, self.initial.lo, m)
        self._csr = (ptr, self.times[order], self.new_vals[order])

    def kernel_args(self):
        """(const_occ, lo, init, ptr, times, vals, win_xmin, win_xmax, t_max)."""
        if self._csr is None:
            self._build_csr()
        ptr, times, vals = self._csr
        return (
            np.int64(-1),
            np.int64(self.initial.lo),
            self.initial.values,
            ptr,
            times,
            vals,
            np.int64(self.window.x_min),
            np.int64(self.window.x_max),
            np.float64(self.t_max),
        )

    def _check_query(self, x: int, t: float):
        if not self.window.contains_site(x):
            raise WindowError(f"site {x} outside window [{self.window.x_min}, {self.window.x_max})")
        if not 0.0 <= t <= self.t_max:
            raise WindowError(f"time {t} outside [0, {self.t_max}]")

    def _raw_at(self, x: int, t: float, side: str) -> int:
        if self._csr is None:
            self._build_csr()
        ptr, times, vals = self._csr
        xi = x - self.initial.lo
        lo, hi = ptr[xi], ptr[xi + 1]
        i = int(np.searchsorted(times[lo:hi], t, side=side))
        if i == 0:
            return int(self.initial.values[xi])
        return int(vals[lo + i - 1])

    def occupancy(self, x: int, t: float) -> int:
        """State at time t (cadlag: includes events at exactly t)."""
        self._check_query(x, t)
        v = self._raw_at(x, t, "right")
        return min(v, 1) if self.binary else v

    def occupancy_before(self, x: int, t: float) -> int:
        """State immediately before time t."""
        self._check_query(x, t)
        v = self._raw_at(x, t, "left")
        return min(v, 1) if self.binary else v

    def occupancy_class(self, x: int, t: float) -> int:
        """Class-resolved state at time t (0 empty, else class label)."""
        self._check_query(x, t)
        return self._raw_at(x, t, "right")

    def window_count(self, t: float) -> int:
        """Number of particles inside the window at time t (binary view for ASEP)."""
        total = 0
        for x in range(self.window.x_min, self.window.x_max):
            total += self.occupancy(x, t)
        return total


@dataclass
class ParticleTrack:
    """Path of one labeled ASEP particle (piecewise constant, cadlag)."""

    label: int
    cls: int
    times: np.ndarray
    positions: np.ndarray

    def position(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right"))
        return int(self.positions[i - 1])

    def stays_in(self, lo: float, hi: float, until: float) -> bool:
        """True when the path remains in the open interval (lo, hi) on [0, until]."""
        n = int(np.searchsorted(self.times, until, side="right"))
        seg = self.positions[:max(n, 1)]
        return bool(np.all((seg > lo) & (seg < hi)))


@dataclass
class AsepResult:
    """Trajectory plus labeled particle paths from one ASEP run."""

    trajectory: EnvTrajectory
    particles: list = field(default_factory=list)
    exited: list = field(default_factory=list)
