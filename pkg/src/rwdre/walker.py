"""Random walks built from the environment and the marked noise field.

A walk sits at a site until the site's next marked point; the mark u decides
the move by thinning against the rates evaluated at the environment state
just before the mark time: u <= alpha means a right jump, alpha < u <=
alpha + beta a left jump, anything else is discarded.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .noise import NoiseField, SpaceTimeWindow
from .streams import StreamKind, derive_keys
from .trajectory import WindowError


class CoverageError(Exception):
    """The walk's cone left the region covered by the environment."""


class RateBoundError(Exception):
    """alpha + beta exceeded the declared Lambda at an observed state."""


@dataclass
class RateModel:
    """Jump-rate tables indexed by occupation value (constant-extended)."""

    alpha: np.ndarray
    beta: np.ndarray
    lam_bound: float
    declared_drift_inf: float | None = None

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta tables must have equal length")
        if np.any(self.alpha < 0) or np.any(self.beta < 0):
            raise ValueError("rates must be non-negative")
        if self.lam_bound < 1.0:
            raise ValueError("Lambda must be at least 1")
        worst = float(np.max(self.alpha + self.beta))
        if worst > self.lam_bound + 1e-12:
            k = int(np.argmax(self.alpha + self.beta))
            raise RateBoundError(
                f"alpha+beta = {worst:.6g} exceeds Lambda = {self.lam_bound:.6g} at occupation {k}"
            )

    @classmethod
    def constant(cls, alpha: float, beta: float, lam_bound: float | None = None) -> "RateModel":
        lam = lam_bound if lam_bound is not None else max(1.0, alpha + beta)
        return cls(np.array([alpha]), np.array([beta]), lam)

    @property
    def lam(self) -> float:
        """lambda = 2 * Lambda, the total-noise rate per site pair of directions."""
        return 2.0 * self.lam_bound

    def alpha_at(self, occ: int) -> float:
        return float(self.alpha[min(occ, len(self.alpha) - 1)])

    def beta_at(self, occ: int) -> float:
        return float(self.beta[min(occ, len(self.beta) - 1)])

    def drift_values(self, probe_occupations) -> np.ndarray:
        return np.array([self.alpha_at(k) - self.beta_at(k) for k in probe_occupations])


@dataclass(frozen=True)
class StartPoint:
    x0: int
    t0: float = 0.0

    def __post_init__(self):
        if self.t0 < 0:
            raise ValueError("start time must be non-negative")


class WalkPath:
    """Cadlag nearest-neighbor path: jumps are (relative time, sign) pairs."""

    def __init__(self, start: StartPoint, jumps: list[tuple[float, int]], horizon: float):
        self.start = start
        self.jumps = jumps
        self.horizon = horizon
        self._times = [j[0] for j in jumps]
        self._pos = np.cumsum([start.x0] + [j[1] for j in jumps])

    def position(self, t: float) -> int:
        """Position after all jumps at relative times <= t."""
        i = bisect.bisect_right(self._times, t)
        return int(self._pos[i])

    def displacement(self, t: float | None = None) -> int:
        return self.position(self.horizon if t is None else t) - self.start.x0

    def max_excursion(self) -> int:
        return int(np.max(np.abs(self._pos - self.start.x0)))

    def positions(self) -> np.ndarray:
        return self._pos.copy()


def run_walk(y: StartPoint, horizon: float, env, noise: NoiseField, rate_model: RateModel) -> WalkPath:
    """Reference single-walk runner (the kernels must agree with it bitwise)."""
    x = y.x0
    t = y.t0
    t_end = y.t0 + horizon
    jumps: list[tuple[float, int]] = []
    while True:
        times, marks = noise.site_events(x, t_end)
        i = int(np.searchsorted(times, t, side="right"))
        if i >= len(times):
            break
        t_evt = float(times[i])
        try:
            occ = env.occupancy_before(x, t_evt)
        except WindowError as exc:
            raise CoverageError(str(exc)) from exc
        a = rate_model.alpha_at(occ)
        b = rate_model.beta_at(occ)
        if a + b > rate_model.lam_bound * (1.0 + 1e-12):
            raise RateBoundError(f"alpha+beta = {a + b:.6g} > Lambda at occupation {occ}")
        u = float(marks[i])
        if u <= a:
            x += 1
            jumps.append((t_evt - y.t0, 1))
        elif u <= a + b:
            x -= 1
            jumps.append((t_evt - y.t0, -1))
        t = t_evt
    return WalkPath(y, jumps, horizon)


def run_family(ys: list[StartPoint], horizon: float, env, noise: NoiseField, rate_model: RateModel) -> list[WalkPath]:
    """Walks from several starts on one shared (env, noise) realization."""
    return [run_walk(y, horizon, env, noise, rate_model) for y in ys]


def dominating_count(y: StartPoint, t: float, noise: NoiseField) -> int:
    """N^y_t: jump count of the two extremal walks on the same noise.

    The always-right and always-left walks bound any thinned walk, so their
    total jump count dominates sup_{s<=t} |X^y_s - x0|.
    """
    lam_bound = noise.lam_bound
    extremal_right = RateModel.constant(lam_bound, 0.0, lam_bound)
    extremal_left = RateModel.constant(0.0, lam_bound, lam_bound)
    env = _AnyOcc()
    up = run_walk(y, t, env, noise, extremal_right)
    down = run_walk(y, t, env, noise, extremal_left)
    return up.displacement() - down.displacement()


class _AnyOcc:
    """Environment stub for env-independent runs."""

    t_max = math.inf

    def occupancy_before(self, x, t):
        return 0


def thin_rates(noise: NoiseField, env, rate_model: RateModel, window: SpaceTimeWindow):
    """Partition the field's points in the window into (Pi_alpha, Pi_beta)."""
    pts_alpha = []
    pts_beta = []
    for pt in noise.points_in(window):
        try:
            occ = env.occupancy_before(pt.site, pt.time)
        except WindowError as exc:
            raise CoverageError(str(exc)) from exc
        a = rate_model.alpha_at(occ)
        b = rate_model.beta_at(occ)
        if a + b > rate_model.lam_bound * (1.0 + 1e-12):
            raise RateBoundError(f"alpha+beta = {a + b:.6g} > Lambda at occupation {occ}")
        if pt.mark <= a:
            pts_alpha.append(pt)
        elif pt.mark <= a + b:
            pts_beta.append(pt)
    return pts_alpha, pts_beta


def reach_bound(rate: float, horizon: float, margin: float = 7.0) -> int:
    """One-sided jump-count bound: Poisson(rate * horizon) upper quantile."""
    mean = rate * horizon
    return int(math.ceil(mean + margin * math.sqrt(mean + 1.0))) + 8


def cone_bounds(starts_lo: int, starts_hi: int, horizon: float, rate_model: RateModel, widen: int = 0) -> tuple[int, int]:
    """Site range the family will stay inside with overwhelming probability."""
    right = reach_bound(float(np.max(rate_model.alpha)), horizon) + widen
    left = reach_bound(float(np.max(rate_model.beta)), horizon) + widen
    return starts_lo - left, starts_hi + right


def _family_extremes_python(starts_x, t0, horizon, env, noise, rate_model, checkpoints):
    """Reference family runner for noise objects without derived keys."""
    n = len(starts_x)
    ncp = len(checkpoints)
    pos_cp = np.empty((n, ncp), dtype=np.int64)
    max_pos = np.empty(n, dtype=np.int64)
    min_pos = np.empty(n, dtype=np.int64)
    for i, x0 in enumerate(starts_x):
        path = run_walk(StartPoint(int(x0), t0), horizon, env, noise, rate_model)
        for j, cp in enumerate(checkpoints):
            pos_cp[i, j] = path.position(cp)
        pos = path.positions()
        max_pos[i] = int(np.max(pos))
        min_pos[i] = int(np.min(pos))
    return pos_cp, max_pos, min_pos


def family_extremes(
    starts_x: np.ndarray,
    t0: float,
    horizon: float,
    env,
    noise,
    rate_model: RateModel,
    checkpoints: np.ndarray | None = None,
):
    """Family run: positions at relative checkpoints plus max/min sites.

    Kernel-backed for NoiseField noise; hand-built noise (ExplicitNoise or
    anything exposing site_events) runs through the pure-Python walker.
    Returns (pos_cp, max_pos, min_pos). Raises CoverageError when a walk
    leaves the environment's window or time range, RateBoundError on a rate
    violation. Cone sizing retries internally (same noise, wider buffers).
    """
    starts_x = np.asarray(starts_x, dtype=np.int64)
    if checkpoints is None:
        checkpoints = np.array([horizon], dtype=np.float64)
    checkpoints = np.asarray(checkpoints, dtype=np.float64)
    if not isinstance(noise, NoiseField):
        return _family_extremes_python(starts_x, t0, horizon, env, noise, rate_model, checkpoints)
    env_args = env.kernel_args()
    widen = 0
    for _ in range(4):
        c_lo, c_hi = cone_bounds(int(starts_x.min()), int(starts_x.max()), horizon, rate_model, widen)
        sites = np.arange(c_lo, c_hi + 1, dtype=np.int64)
        keys = derive_keys(noise.master, sites, StreamKind.WALK_MARK, noise.replica)
        pos_cp, max_pos, min_pos, status = kernels.run_family_kernel(
            starts_x,
            float(t0),
            float(horizon),
            rate_model.alpha,
            rate_model.beta,
            float(rate_model.lam_bound),
            keys,
            np.int64(c_lo),
            *env_args,
            checkpoints,
        )
        if status == kernels.STATUS_OK:
            return pos_cp, max_pos, min_pos
        if status == kernels.STATUS_CONE_ESCAPE:
            widen = 2 * (widen + 64)
            continue
        if status == kernels.STATUS_RATE_BOUND:
            raise RateBoundError("alpha+beta exceeded Lambda during kernel run")
        raise CoverageError(
            "walk left the environment window; widen the simulated region"
        )
    raise CoverageError("cone sizing failed to stabilize after retries")
