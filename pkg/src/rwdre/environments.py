"""Dynamic environments: zero-range process, exclusion process, baselines.

Zero-range evolution is an exact next-reaction simulation on a finite
buffered domain with frozen outside sites; exclusion runs through the event
kernel with per-particle clocks. Both draw every random number from
counter-based substreams keyed by (master, site, kind, replica), so a run
is a pure function of its arguments.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .noise import SpaceTimeWindow
from .streams import StreamKind, derive_key, derive_keys, first_uniforms, py_stream_uniform
from .trajectory import AsepResult, EnvTrajectory, OccupancyConfig, ParticleTrack


class ValidationError(ValueError):
    """Parameter record violates a model invariant."""


class NumericalError(RuntimeError):
    """An iterative numeric routine failed to converge."""


PMF_TAIL = 1e-12
SERIES_MAX_TERMS = 100_000


@dataclass
class RateFunction:
    """Zero-range rate function g, tabulated on 0..k_max.

    Beyond the table, g grows linearly with slope gamma_plus (this keeps the
    upper increment bound; it is the documented extrapolation for
    configurations that exceed the tabulated range).
    """

    values: np.ndarray
    gamma_minus: float
    gamma_plus: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.values) < 2:
            raise ValidationError("g must be tabulated on at least {0, 1}")
        if self.values[0] != 0.0:
            raise ValidationError("g(0) must be 0")
        if not (0.0 < self.gamma_minus <= self.gamma_plus):
            raise ValidationError("need 0 < Gamma_minus <= Gamma_plus")
        incr = np.diff(self.values)
        bad = np.nonzero((incr < self.gamma_minus - 1e-12) | (incr > self.gamma_plus + 1e-12))[0]
        if bad.size:
            k = int(bad[0]) + 1
            raise ValidationError(
                f"increment bound violated at k={k}: g(k)-g(k-1)={incr[k - 1]:.6g} "
                f"outside [{self.gamma_minus:.6g}, {self.gamma_plus:.6g}]"
            )

    @property
    def k_max(self) -> int:
        return len(self.values) - 1

    def __call__(self, k: int) -> float:
        if k <= self.k_max:
            return float(self.values[k])
        return float(self.values[-1] + self.gamma_plus * (k - self.k_max))

    @classmethod
    def linear(cls, slope: float = 1.0, k_max: int = 60) -> "RateFunction":
        return cls(slope * np.arange(k_max + 1, dtype=np.float64), slope, slope)


def zr_partition(phi: float, g: RateFunction, tol: float = 1e-14) -> float:
    """Normalizer Z(phi) = sum_k phi^k / g(k)! of the single-site law."""
    if phi < 0:
        raise ValidationError("phi must be non-negative")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    z = 1.0
    term = 1.0
    for k in range(1, SERIES_MAX_TERMS):
        term *= phi / g(k)
        z += term
        if term < tol * z:
            return z
    raise NumericalError("partition series did not converge")


def zr_density(phi: float, g: RateFunction, tol: float = 1e-14) -> float:
    """Mean particles per site R(phi) under the fugacity-phi marginal."""
    if phi < 0:
        raise ValidationError("phi must be non-negative")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if phi == 0.0:
        return 0.0
    z = 1.0
    s = 0.0
    term = 1.0
    for k in range(1, SERIES_MAX_TERMS):
        term *= phi / g(k)
        z += term
        s += k * term
        if k * term < tol * max(s, 1.0) and term < tol * z:
            return s / z
    raise NumericalError("density series did not converge")


def zr_fugacity(rho: float, g: RateFunction, tol: float = 1e-10) -> float:
    """Invert the density map: phi with |R(phi) - rho| <= tol (bisection)."""
    if rho <= 0:
        raise ValidationError("rho must be positive")
    hi = max(rho * g(1), 1e-12)
    for _ in range(200):
        if zr_density(hi, g) >= rho:
            break
        hi *= 2.0
    else:
        raise NumericalError("failed to bracket the target density")
    lo = 0.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        r = zr_density(mid, g)
        if abs(r - rho) <= tol:
            return mid
        if r < rho:
            lo = mid
        else:
            hi = mid
    raise NumericalError("fugacity bisection did not converge")


def zr_pmf(phi: float, g: RateFunction) -> np.ndarray:
    """Single-site pmf, truncated when the remaining tail mass is < 1e-12."""
    terms = [1.0]
    term = 1.0
    for k in range(1, SERIES_MAX_TERMS):
        term *= phi / g(k)
        terms.append(term)
        # geometric tail bound: ratio of successive terms is decreasing
        ratio = phi / g(k + 1)
        if ratio < 1.0 and term * ratio / (1.0 - ratio) < PMF_TAIL * sum(terms):
            break
    else:
        raise NumericalError("pmf truncation did not converge")
    p = np.array(terms)
    return p / p.sum()


@dataclass
class ZrParams:
    """Zero-range model parameters; the fugacity is derived from rho."""

    g: RateFunction
    rho: float
    tol: float = 1e-10
    phi: float = field(init=False)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValidationError("rho must be positive")
        self.phi = zr_fugacity(self.rho, self.g, self.tol)

    @property
    def gamma_minus(self) -> float:
        return self.g.gamma_minus

    @property
    def gamma_plus(self) -> float:
        return self.g.gamma_plus


@dataclass
class AsepParams:
    p: float
    rho: float
    class_regions: "ClassRegions | None" = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError("p must lie in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ValidationError("rho must lie in [0, 1]")


def _site_uniforms(master: int, lo: int, hi: int, replica: int) -> np.ndarray:
    """First INITIAL_LAW uniform of every site in [lo, hi)."""
    sites = np.arange(lo, hi, dtype=np.int64)
    keys = derive_keys(master, sites, StreamKind.INITIAL_LAW, replica)
    return first_uniforms(keys)


def zr_sample_initial(params: ZrParams, site_range: tuple[int, int], master: int, replica: int = 0) -> OccupancyConfig:
    """Product sample of the invariant single-site law (inverse CDF per site)."""
    lo, hi = site_range
    pmf = zr_pmf(params.phi, params.g)
    cdf = np.cumsum(pmf)
    u = _site_uniforms(master, lo, hi, replica)
    vals = np.searchsorted(cdf, u, side="right")
    return OccupancyConfig(lo, vals)


def asep_sample_initial(params: AsepParams, site_range: tuple[int, int], master: int, replica: int = 0) -> OccupancyConfig:
    """Bernoulli(rho) product sample."""
    lo, hi = site_range
    u = _site_uniforms(master, lo, hi, replica)
    return OccupancyConfig(lo, (u < params.rho).astype(np.int64))


def default_buffer_width(horizon: float, params=None, initial: OccupancyConfig | None = None) -> int:
    """Default frozen-boundary shield: ceil(4 * horizon * rate scale).

    For zero-range the rate scale is max(1, Gamma_plus * rho_hat + g(1));
    exclusion and constant rates are at most 1 per direction.
    """
    scale = 1.0
    if isinstance(params, ZrParams):
        rho_hat = params.rho if initial is None else float(np.mean(initial.values))
        scale = max(1.0, params.gamma_plus * rho_hat + params.g(1))
    return int(math.ceil(4.0 * horizon * scale)) + 1


def zr_evolve(
    initial: OccupancyConfig,
    params: ZrParams,
    horizon: float,
    window: SpaceTimeWindow,
    master: int,
    replica: int = 0,
    min_buffer: int = 1,
) -> EnvTrajectory:
    """Next-reaction zero-range run on the domain of ``initial``.

    Each site fires at rate g(occupation); on a firing one particle moves to
    a uniform neighbor. Sites outside the domain are frozen: they never fire
    and particles jumping onto them are absorbed (recorded as flux). On every
    occupation change only the affected sites' next firing times are redrawn,
    which is exact by memorylessness.
    """
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    if len(initial.values) == 0:
        raise ValidationError("empty domain")
    if not initial.covers(window.x_min, window.x_max):
        raise ValidationError("initial configuration does not cover the window")
    buf = min(window.x_min - initial.lo, initial.hi - window.x_max)
    if buf < min_buffer:
        raise ValidationError(f"buffer {buf} narrower than configured minimum {min_buffer}")

    lo = initial.lo
    m = len(initial.values)
    occ = initial.values.copy()
    keys = [int(derive_key(master, lo + i, StreamKind.ENV_CLOCK_SITE, replica)) for i in range(m)]
    counters = [0] * m
    epochs = [0] * m

    def draw(i: int) -> float:
        u = py_stream_uniform(keys[i], counters[i])
        counters[i] += 1
        return u

    heap: list[tuple[float, int, int]] = []

    def schedule(i: int, now: float):
        epochs[i] += 1
        k = int(occ[i])
        if k <= 0:
            return
        rate = params.g(k)
        if rate <= 0.0:
            return
        gap = -math.log1p(-draw(i)) / rate
        heapq.heappush(heap, (now + gap, i, epochs[i]))

    for i in range(m):
        schedule(i, 0.0)

    rec_t, rec_x, rec_old, rec_new = [], [], [], []
    flux = []
    while heap:
        t, i, tok = heapq.heappop(heap)
        if tok != epochs[i]:
            continue
        if t > horizon:
            break
        k = int(occ[i])
        step = 1 if draw(i) < 0.5 else -1
        j = i + step
        occ[i] = k - 1
        rec_t.append(t)
        rec_x.append(lo + i)
        rec_old.append(k)
        rec_new.append(k - 1)
        if 0 <= j < m:
            kj = int(occ[j])
            occ[j] = kj + 1
            rec_t.append(t)
            rec_x.append(lo + j)
            rec_old.append(kj)
            rec_new.append(kj + 1)
            schedule(j, t)
        else:
            flux.append((t, lo + i, lo + j))
        schedule(i, t)

    return EnvTrajectory(
        window,
        initial,
        np.array(rec_t),
        np.array(rec_x, dtype=np.int64),
        np.array(rec_old, dtype=np.int64),
        np.array(rec_new, dtype=np.int64),
        flux=flux,
    )


@dataclass(frozen=True)
class ClassRegions:
    """Initial-position class assignment for exclusion decoupling runs.

    Particles starting in [3*delta, inf) are first class, (-inf, delta)
    second class and [delta, 3*delta) third class, with delta = 2 * eps * dH.
    """

    delta: float

    def class_of(self, x: int) -> int:
        if x >= 3.0 * self.delta:
            return 1
        if x < self.delta:
            return 2
        return 3

    def intervals(self) -> list[tuple[float, float, int]]:
        d = self.delta
        return [(-math.inf, d, 2), (d, 3.0 * d, 3), (3.0 * d, math.inf, 1)]


def asep_assign_classes(d_h: float, epsilon: float) -> ClassRegions:
    if d_h <= 0:
        raise ValidationError("d_h must be positive")
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    return ClassRegions(delta=2.0 * epsilon * d_h)


def asep_evolve(
    initial: OccupancyConfig,
    params: AsepParams,
    horizon: float,
    window: SpaceTimeWindow,
    master: int,
    replica: int = 0,
    classes: ClassRegions | None = None,
    min_buffer: int = 1,
    collect_tracks: bool = True,
) -> AsepResult:
    """Exclusion run with per-particle clocks and optional higher classes.

    A particle's right (left) clock ring moves it iff the target holds no
    particle of class <= its own; a strictly higher-class target swaps. Jumps
    out of the domain absorb the particle (flux record); the buffer shields
    the window from this truncation.
    """
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    if np.any(initial.values > 1):
        raise ValidationError("exclusion initial configuration must be {0,1}-valued")
    if not initial.covers(window.x_min, window.x_max):
        raise ValidationError("initial configuration does not cover the window")
    buf = min(window.x_min - initial.lo, initial.hi - window.x_max)
    if buf < min_buffer:
        raise ValidationError(f"buffer {buf} narrower than configured minimum {min_buffer}")

    classes = classes if classes is not None else params.class_regions
    lo = initial.lo
    occupied = np.nonzero(initial.values)[0]
    start_sites = occupied + lo
    if classes is None:
        p_class = np.ones(len(occupied), dtype=np.int64)
    else:
        p_class = np.array([classes.class_of(int(s)) for s in start_sites], dtype=np.int64)
        if np.any(p_class <= 0):
            raise ValidationError("class labels must be positive integers")

    keys_r = derive_keys(master, start_sites, StreamKind.ENV_CLOCK_RIGHT, replica)
    keys_l = derive_keys(master, start_sites, StreamKind.ENV_CLOCK_LEFT, replica)
    times, part, dirs = kernels.gen_asep_rings(keys_r, keys_l, float(params.p), float(horizon))
    # stable sort: float-equal ring times resolve in generation order, which
    # is ascending owner site (right clock before left within a particle)
    order = np.argsort(times, kind="stable")

    occ_class = np.zeros(len(initial.values), dtype=np.int64)
    occ_class[occupied] = p_class
    p_pos = occupied.copy()
    (
        rec_t,
        rec_site,
        rec_old,
        rec_new,
        rec_mover,
        path_t,
        path_p,
        path_x,
        exit_t,
        exit_i,
    ) = kernels.asep_kernel(occ_class, p_pos, p_class, times[order], part[order], dirs[order])

    traj = EnvTrajectory(
        window,
        initial,
        rec_t,
        rec_site + lo,
        rec_old,
        rec_new,
        mover_class=rec_mover,
        binary=True,
        has_classes=classes is not None,
        flux=[(float(t), int(start_sites[i])) for t, i in zip(exit_t, exit_i)],
    )

    particles = []
    if collect_tracks:
        order_p, ptr = kernels.stable_order_by_key(path_p, 0, len(occupied))
        for i in range(len(occupied)):
            sl = order_p[ptr[i] : ptr[i + 1]]
            tms = np.concatenate(([0.0], path_t[sl]))
            xs = np.concatenate(([start_sites[i]], path_x[sl] + lo))
            particles.append(ParticleTrack(int(start_sites[i]), int(p_class[i]), tms, xs))
    exited = [int(start_sites[i]) for i in exit_i]
    return AsepResult(traj, particles, exited)


@dataclass
class ClassEventRecord:
    g1: bool
    g2: bool
    g3: bool
    g23: bool

    @property
    def all_hold(self) -> bool:
        return self.g1 and self.g2 and self.g3 and self.g23


def asep_class_events(result: AsepResult, d_h: float, d_v: float, s: float, delta: float) -> ClassEventRecord:
    """Containment events for the three particle classes.

    G1: first class stays in (2*delta, inf) until s; G2: second class stays
    in (-inf, 2*delta) until s; G3: third class stays in (0, inf) until s;
    G23: second and third class stay in (-inf, d_h) until d_v + 2s.
    """
    tracks = result.particles
    if any(tr.cls not in (1, 2, 3) for tr in tracks):
        raise ValueError("trajectory was not simulated with class labels")
    if tracks and all(tr.cls == 1 for tr in tracks) and delta > 0:
        # a legitimate all-first-class run only happens when nothing starts left of 3*delta
        if any(tr.positions[0] < 3.0 * delta for tr in tracks):
            raise ValueError("trajectory was not simulated with class labels")
    g1 = all(tr.stays_in(2.0 * delta, math.inf, s) for tr in tracks if tr.cls == 1)
    g2 = all(tr.stays_in(-math.inf, 2.0 * delta, s) for tr in tracks if tr.cls == 2)
    g3 = all(tr.stays_in(0.0, math.inf, s) for tr in tracks if tr.cls == 3)
    g23 = all(tr.stays_in(-math.inf, d_h, d_v + 2.0 * s) for tr in tracks if tr.cls in (2, 3))
    return ClassEventRecord(g1, g2, g3, g23)


class ConstantEnvironment:
    """Trivial baseline: every site holds the same frozen value forever."""

    window = None
    binary = False

    def __init__(self, value: int = 0):
        if value < 0:
            raise ValidationError("occupancy value must be non-negative")
        self.value = int(value)

    @property
    def t_max(self) -> float:
        return math.inf

    def occupancy(self, x: int, t: float) -> int:
        return self.value

    def occupancy_before(self, x: int, t: float) -> int:
        return self.value

    def kernel_args(self):
        empty_i = np.empty(0, dtype=np.int64)
        empty_f = np.empty(0, dtype=np.float64)
        return (
            np.int64(self.value),
            np.int64(0),
            empty_i,
            np.zeros(1, dtype=np.int64),
            empty_f,
            empty_i,
            np.int64(0),
            np.int64(0),
            np.float64(np.inf),
        )
