"""Box-crossing events, speed brackets, traps, threats and decoupling gaps.

Estimation conventions: replicas are indexed Monte Carlo worlds (replica i
uses substreams keyed by i), estimates carry Wilson 95% intervals, and all
per-replica reductions are folded in replica order so results do not depend
on scheduling.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boxes import (
    BoxIndex,
    Region,
    ScaleSequence,
    box_bounds,
    children as box_children,
    corner_set,
    interval_bounds,
    lattice_starts,
    region_distances,
)
from .environments import (
    AsepParams,
    ConstantEnvironment,
    ZrParams,
    asep_evolve,
    asep_sample_initial,
    default_buffer_width,
    zr_evolve,
    zr_sample_initial,
)
from .noise import NoiseField, SpaceTimeWindow
from .walker import CoverageError, RateModel, StartPoint, cone_bounds, family_extremes

Z95 = 1.959963984540054


class TrichotomyViolation(AssertionError):
    """classify_cascading could not place a realization in any case."""


class DichotomyViolation(AssertionError):
    """A threatened start produced neither a speedup nor a delay."""


class InconsistencyError(ValueError):
    """A declared model constant contradicts probed values."""


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float, float]:
    """(p_hat, ci_low, ci_high): Wilson score interval at confidence z."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom
    # clamping keeps ci_low <= p_hat <= ci_high at the 0/n endpoints
    return phat, min(max(0.0, center - half), phat), max(min(1.0, center + half), phat)


@dataclass
class Estimate:
    p_hat: float
    ci_low: float
    ci_high: float
    n: int
    seed: int

    @classmethod
    def from_counts(cls, successes: int, n: int, seed: int) -> "Estimate":
        p, lo, hi = wilson_interval(successes, n)
        return cls(p, lo, hi, n, seed)


def merge_counts(parts) -> tuple[int, int]:
    """Associative, commutative fold of (successes, trials) pairs."""
    s = 0
    n = 0
    for ps, pn in parts:
        s += ps
        n += pn
    return s, n


def thread_count() -> int:
    env = os.environ.get("RWDRE_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def replica_map(fn, n: int, threads: int | None = None) -> list:
    """fn(replica) for replica in range(n), results ordered by replica index."""
    workers = threads if threads is not None else thread_count()
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    out = [None] * n
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for i, res in zip(range(n), pool.map(fn, range(n))):
            out[i] = res
    return out


# ---------------------------------------------------------------------------
# assumption parameter records


@dataclass(frozen=True)
class DecouplingParams:
    v_circ: float
    kappa_circ: float
    c_circ: float
    c2: float
    c3: float
    gamma_circ: float

    def __post_init__(self):
        if min(self.v_circ, self.kappa_circ, self.c_circ, self.c2, self.c3) <= 0:
            raise ValueError("decoupling constants must be positive")
        if self.gamma_circ <= 1.0:
            raise ValueError("gamma_circ must exceed 1")

    def bound(self, dist_h: float) -> float:
        logp = max(math.log(max(dist_h, 1.0)), 0.0)
        return self.c_circ * math.exp(-self.kappa_circ * logp**self.gamma_circ)


@dataclass(frozen=True)
class BallisticityParams:
    v_star: float
    kappa_star: float
    c_star: float
    gamma_star: float

    def __post_init__(self):
        if min(self.v_star, self.kappa_star, self.c_star) <= 0:
            raise ValueError("ballisticity constants must be positive")
        if self.gamma_star <= 1.0:
            raise ValueError("gamma_star must exceed 1")

    def bound(self, t: float) -> float:
        logp = math.log(max(t, 1.0))
        return self.c_star * math.exp(-self.kappa_star * logp**self.gamma_star)


@dataclass(frozen=True)
class DecayParams:
    kappa: float
    gamma: float


def derived_decay_params(circ: DecouplingParams, star: BallisticityParams) -> DecayParams:
    """kappa = min(kappa_circ, kappa_star)/9, gamma = min(gamma_circ, gamma_star)."""
    return DecayParams(
        kappa=min(circ.kappa_circ, star.kappa_star) / 9.0,
        gamma=min(circ.gamma_circ, star.gamma_star),
    )


@dataclass(frozen=True)
class TrapParams:
    K: float
    r: int
    v_minus: float
    v_plus: float
    theta: float = -1.0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.r < 1:
            raise ValueError("r must be a positive integer")
        if self.theta < 0:
            object.__setattr__(self, "theta", (self.v_plus - self.v_minus) / 6.0)
        if self.theta <= 0:
            raise ValueError("theta must be positive (v_plus must exceed v_minus)")
        lo, hi = self.theta * self.K, 2.0 * self.theta * self.K
        if math.ceil(lo) > math.floor(hi):
            warnings.warn(f"[{lo:.4g}, {hi:.4g}] contains no lattice offset; traps will scan nothing")


# ---------------------------------------------------------------------------
# realizations


@dataclass
class Realization:
    """One Monte Carlo world: environment, noise field and rate model."""

    env: object
    noise: NoiseField
    rate_model: RateModel
    master: int
    replica: int


@dataclass
class EnvironmentSpec:
    """Recipe for building the environment of a replica."""

    kind: str  # 'constant' | 'zero_range' | 'asep'
    value: int = 0
    zr: ZrParams | None = None
    asep: AsepParams | None = None
    buffer_width: int | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "zero_range", "asep"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.kind == "zero_range" and self.zr is None:
            raise ValueError("zero_range spec needs ZrParams")
        if self.kind == "asep" and self.asep is None:
            raise ValueError("asep spec needs AsepParams")

    @property
    def params(self):
        return {"constant": None, "zero_range": self.zr, "asep": self.asep}[self.kind]


class RealizationFactory:
    """Builds per-replica realizations with windows sized for the walks."""

    def __init__(self, master: int, rate_model: RateModel, env_spec: EnvironmentSpec):
        self.master = int(master)
        self.rate_model = rate_model
        self.env_spec = env_spec

    def make(self, replica: int, x_lo: int, x_hi: int, t_hi: float) -> Realization:
        noise = NoiseField(self.master, self.rate_model.lam_bound, replica)
        spec = self.env_spec
        if spec.kind == "constant":
            env = ConstantEnvironment(spec.value)
            return Realization(env, noise, self.rate_model, self.master, replica)
        window = SpaceTimeWindow(x_lo, x_hi, 0.0, float(t_hi))
        buf = spec.buffer_width
        if buf is None:
            buf = default_buffer_width(t_hi, spec.params)
        dom = (x_lo - buf, x_hi + buf)
        if spec.kind == "zero_range":
            initial = zr_sample_initial(spec.zr, dom, self.master, replica)
            env = zr_evolve(initial, spec.zr, t_hi, window, self.master, replica)
        else:
            initial = asep_sample_initial(spec.asep, dom, self.master, replica)
            env = asep_evolve(
                initial, spec.asep, t_hi, window, self.master, replica, collect_tracks=False
            ).trajectory
        return Realization(env, noise, self.rate_model, self.master, replica)


def _family_run(factory: RealizationFactory, replica: int, starts_x: np.ndarray, t0: float, horizon: float, checkpoints=None):
    """Family run with environment-coverage retries (doubled margins)."""
    starts_x = np.asarray(starts_x, dtype=np.int64)
    widen = 0
    for _ in range(4):
        c_lo, c_hi = cone_bounds(int(starts_x.min()), int(starts_x.max()), horizon, factory.rate_model, widen)
        real = factory.make(replica, c_lo, c_hi + 1, t0 + horizon)
        try:
            return family_extremes(starts_x, t0, horizon, real.env, real.noise, real.rate_model, checkpoints)
        except CoverageError:
            widen = 2 * (widen + 64)
    raise CoverageError("environment window failed to cover the walks after retries")


# ---------------------------------------------------------------------------
# box events


def family_displacements(realization: Realization, w: tuple[float, float], horizon: float):
    """Displacements at `horizon` of every lattice start in I_H(w)."""
    wx, wt = w
    lam_h = realization.rate_model.lam * horizon
    starts = np.array(list(lattice_starts(wx, wx + lam_h)), dtype=np.int64)
    if starts.size == 0:
        return starts, np.empty(0, dtype=np.int64)
    pos_cp, _, _ = family_extremes(starts, wt, horizon, realization.env, realization.noise, realization.rate_model)
    return starts, pos_cp[:, -1] - starts


def event_A(H: float, w: tuple[float, float], v: float, realization: Realization) -> bool:
    """Some start in I_H(w) attains average speed >= v over time H."""
    _, disp = family_displacements(realization, w, H)
    return bool(disp.size) and bool(np.max(disp) >= v * H)


def event_Atilde(H: float, w: tuple[float, float], v: float, realization: Realization) -> bool:
    """Some start in I_H(w) attains average speed <= v over time H."""
    _, disp = family_displacements(realization, w, H)
    return bool(disp.size) and bool(np.min(disp) <= v * H)


@dataclass
class DRecord:
    dhat: bool
    dbar: bool

    @property
    def d(self) -> bool:
        return self.dhat and self.dbar


def _corner_runs(m: BoxIndex, scales: ScaleSequence, realization: Realization):
    """Corner walks of B_m per child time level: (starts, child scale, levels).

    levels[j] = (t_j, displacements, excursions), one entry per corner site.
    """
    lam = realization.rate_model.lam
    sites, child, times = corner_set(m, scales, lam)
    starts = np.array(list(sites), dtype=np.int64)
    levels = []
    for t_j in times:
        pos_cp, max_pos, min_pos = family_extremes(
            starts, t_j, child, realization.env, realization.noise, realization.rate_model
        )
        disp = pos_cp[:, -1] - starts
        exc = np.maximum(max_pos - starts, starts - min_pos)
        levels.append((t_j, disp, exc))
    return starts, child, levels


def event_D(m: BoxIndex, scales: ScaleSequence, realization: Realization, v_star: float) -> DRecord:
    """Corner-set control events of B_m.

    dhat: every corner walk stays within 4*lam*(child scale) of its start
    over a child-scale time; dbar: every corner walk displaces more than
    v_star * (child scale).
    """
    lam = realization.rate_model.lam
    _, child, levels = _corner_runs(m, scales, realization)
    dhat = all(bool(np.all(exc <= 4.0 * lam * child)) for _, _, exc in levels)
    dbar = all(bool(np.all(disp > v_star * child)) for _, disp, _ in levels)
    return DRecord(dhat, dbar)


@dataclass(frozen=True)
class CascadeParams:
    decoupling: DecouplingParams
    v_star: float


@dataclass
class CascadeOutcome:
    case: str  # 'a' | 'b' | 'c'
    witness: dict


def _child_crossings(m, scales, lam, corner_starts, levels, threshold):
    """Per child of m: does some start in its bottom interval displace >= threshold."""
    flags = []
    lo = int(corner_starts[0])
    by_time = {round(t_j, 9): disp for t_j, disp, _ in levels}
    for kid in box_children(m, scales, lam):
        x0, x1, t_j = interval_bounds(kid, scales, lam)
        disp = by_time[round(t_j, 9)]
        i0 = max(int(math.ceil(x0)) - lo, 0)
        i1 = min(int(math.ceil(x1)) - lo, len(corner_starts))
        if i0 >= i1:
            flags.append((kid, False))
        else:
            flags.append((kid, bool(np.max(disp[i0:i1]) >= threshold)))
    return flags


def classify_cascading(
    m: BoxIndex,
    scales: ScaleSequence,
    realization: Realization,
    v_min: float,
    v_max: float,
    params: CascadeParams,
) -> CascadeOutcome:
    """Per-realization trichotomy behind the scale recursion.

    Case a: the crossing event at the interpolated speed (jointly with the
    corner control event) fails. Case b: some child crosses at v_max.
    Case c: two v_min-slow children sit at lateral-decoupling distance
    (the lexicographically first such pair is returned). Anything else is a
    hard invariant violation.
    """
    if not 0.0 < v_min < v_max:
        raise ValueError("need 0 < v_min < v_max")
    if m.k < 1:
        raise ValueError("classification needs a box at level >= 1")
    lam = realization.rate_model.lam
    ell = scales.ell(m.k - 1)
    parent = m.h * scales.L(m.k)
    vbar = v_min + (v_max - v_min) / math.sqrt(ell)

    a_parent = event_A(parent, m.w, vbar, realization)
    starts, child, levels = _corner_runs(m, scales, realization)
    dhat = all(bool(np.all(exc <= 4.0 * lam * child)) for _, _, exc in levels)
    dbar = all(bool(np.all(disp > params.v_star * child)) for _, disp, _ in levels)
    if not (a_parent and dhat and dbar):
        return CascadeOutcome("a", {"A": a_parent, "Dhat": dhat, "Dbar": dbar, "vbar": vbar})

    for kid, crosses in _child_crossings(m, scales, lam, starts, levels, v_max * child):
        if crosses:
            return CascadeOutcome("b", {"child": kid})

    slow = [kid for kid, crosses in _child_crossings(m, scales, lam, starts, levels, v_min * child) if crosses]
    dec = params.decoupling
    for i1 in range(len(slow)):
        for i2 in range(i1 + 1, len(slow)):
            m1, m2 = slow[i1], slow[i2]
            b1 = Region(*box_bounds(m1, scales, lam))
            b2 = Region(*box_bounds(m2, scales, lam))
            d_h, d_v = region_distances(b1, b2)
            threshold = max(dec.v_circ * d_v + dec.c2 * child + dec.c3, lam * child)
            if d_h >= threshold:
                return CascadeOutcome(
                    "c", {"pair": (m1, m2), "dist_h": d_h, "dist_v": d_v, "threshold": threshold}
                )
    raise TrichotomyViolation(f"no case matched for box {m} ({len(slow)} slow children)")


# ---------------------------------------------------------------------------
# crossing-probability estimation


def _extreme_displacements(factory: RealizationFactory, H: float, n: int, w=(0.0, 0.0), threads=None):
    """(max, min) displacement over the I_H(w) family, one pair per replica."""
    wx, wt = w
    lam_h = factory.rate_model.lam * H
    starts = np.array(list(lattice_starts(wx, wx + lam_h)), dtype=np.int64)

    def one(replica: int):
        pos_cp, _, _ = _family_run(factory, replica, starts, wt, H)
        disp = pos_cp[:, -1] - starts
        return int(np.max(disp)), int(np.min(disp))

    pairs = replica_map(one, n, threads)
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def estimate_pH(H: float, v: float, n: int, factory: RealizationFactory, w=(0.0, 0.0), threads=None) -> Estimate:
    """Monte Carlo estimate of the box-crossing probability p_H(v) at w."""
    if n < 30:
        raise ValueError("need n >= 30 replicas")
    maxd, _ = _extreme_displacements(factory, H, n, w, threads)
    return Estimate.from_counts(int(np.sum(maxd >= v * H)), n, factory.master)


def estimate_ptildeH(H: float, v: float, n: int, factory: RealizationFactory, w=(0.0, 0.0), threads=None) -> Estimate:
    """Monte Carlo estimate of the reversed crossing probability at w."""
    if n < 30:
        raise ValueError("need n >= 30 replicas")
    _, mind = _extreme_displacements(factory, H, n, w, threads)
    return Estimate.from_counts(int(np.sum(mind <= v * H)), n, factory.master)


@dataclass
class CurvePoint:
    H: float
    v: float
    estimate: Estimate


@dataclass
class BracketReport:
    v_minus_hat: float | None
    v_plus_hat: float | None
    status: str  # 'ok' | 'inconclusive'
    per_h: dict  # H -> (v_minus_hat, v_plus_hat)
    p_curve: list  # CurvePoint rows for p_H
    ptilde_curve: list  # CurvePoint rows for ptilde_H


def estimate_speed_bracket(
    H_list, v_grid, n: int, factory: RealizationFactory, w=(0.0, 0.0), threads=None
) -> BracketReport:
    """Bracket [v_-, v_+] from the 0.5-crossings of the p and ptilde curves.

    For each H the whole curve over v_grid comes from one family run per
    replica (the events are thresholds of the same max/min displacement).
    The reported bracket uses the largest H; the 0.5 level is the finite-size
    crossing statistic, flagged in the report rather than proven.
    """
    v_grid = sorted(v_grid)
    H_list = list(H_list)
    if H_list != sorted(H_list):
        raise ValueError("H_list must be increasing")
    p_curve: list[CurvePoint] = []
    pt_curve: list[CurvePoint] = []
    per_h = {}
    for H in H_list:
        maxd, mind = _extreme_displacements(factory, H, n, w, threads)
        v_plus_hat = None
        v_minus_hat = None
        for v in v_grid:
            est_p = Estimate.from_counts(int(np.sum(maxd >= v * H)), n, factory.master)
            est_pt = Estimate.from_counts(int(np.sum(mind <= v * H)), n, factory.master)
            p_curve.append(CurvePoint(H, v, est_p))
            pt_curve.append(CurvePoint(H, v, est_pt))
            if v_plus_hat is None and est_p.ci_high < 0.5:
                v_plus_hat = v
            if est_pt.ci_high < 0.5:
                v_minus_hat = v
        per_h[H] = (v_minus_hat, v_plus_hat)
    vm, vp = per_h[H_list[-1]]
    status = "ok" if (vm is not None and vp is not None) else "inconclusive"
    return BracketReport(vm, vp, status, per_h, p_curve, pt_curve)


# ---------------------------------------------------------------------------
# traps, threats and the dichotomy


def _trap_starts(w: tuple[float, float], K: float, theta: float) -> np.ndarray:
    wx, _ = w
    lo, hi = wx + theta * K, wx + 2.0 * theta * K
    return np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=np.int64)


def is_trapped(w: tuple[float, float], K: float, theta: float, v_minus: float, realization: Realization) -> bool:
    """Some start in w + [theta K, 2 theta K] x {0} is (v_- + theta)-slow over K."""
    starts = _trap_starts(w, K, theta)
    if starts.size == 0:
        warnings.warn("trap scan interval contains no lattice point")
        return False
    pos_cp, _, _ = family_extremes(starts, w[1], K, realization.env, realization.noise, realization.rate_model)
    disp = pos_cp[:, -1] - starts
    return bool(np.min(disp) <= (v_minus + theta) * K)


def is_threatened(
    w: tuple[float, float], K: float, r: int, v_plus: float, theta: float, v_minus: float, realization: Realization
) -> tuple[bool, int | None]:
    """Scan the r anchors along slope v_plus; returns (flag, first trapped j)."""
    wx, wt = w
    for j in range(r):
        anchor = (wx + j * K * v_plus, wt + j * K)
        if is_trapped(anchor, K, theta, v_minus, realization):
            return True, j
    return False, None


SPEEDUP = "speedup"
DELAY = "delay"
NOT_THREATENED = "notThreatened"


def verify_threat_dichotomy(
    y: StartPoint,
    K: float,
    r: int,
    v_plus: float,
    theta: float,
    realization: Realization,
    v_minus: float | None = None,
) -> str:
    """Check the forced speedup-or-delay alternative at a threatened start.

    v_minus defaults to v_plus - 6*theta, the derivation the trap scale comes
    from. A threatened start that shows neither outcome raises
    DichotomyViolation (it would contradict the monotone coupling).
    """
    if v_minus is None:
        v_minus = v_plus - 6.0 * theta
    threatened, _ = is_threatened((y.x0, y.t0), K, r, v_plus, theta, v_minus, realization)
    if not threatened:
        return NOT_THREATENED
    checkpoints = np.array([(j + 1) * K for j in range(r)], dtype=np.float64)
    pos_cp, _, _ = family_extremes(
        np.array([y.x0], dtype=np.int64),
        y.t0,
        r * K,
        realization.env,
        realization.noise,
        realization.rate_model,
        checkpoints,
    )
    pos = np.concatenate(([y.x0], pos_cp[0]))
    slabs = np.diff(pos)
    if bool(np.any(slabs >= (v_plus + theta / (2.0 * r)) * K)):
        return SPEEDUP
    if pos[-1] - y.x0 <= (v_plus - theta / (2.0 * r)) * r * K:
        return DELAY
    raise DichotomyViolation(f"threatened start {y} shows neither speedup nor delay")


# ---------------------------------------------------------------------------
# decoupling gap


@dataclass(frozen=True)
class BoxFunctional:
    """[0,1]-valued functional with declared support; the catalog covers
    occupation-threshold, jump-count and noise-count indicators."""

    kind: str  # 'occupation' | 'jump_count' | 'noise_count'
    support: Region
    threshold: float
    t_eval: float | None = None  # occupation indicators evaluate at one time

    def __post_init__(self):
        if self.kind not in ("occupation", "jump_count", "noise_count"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "occupation":
            t = self.t_eval if self.t_eval is not None else self.support.t1
            if not self.support.t0 <= t <= self.support.t1:
                raise ValueError("evaluation time outside the support box")
        if math.isinf(self.support.x0) or math.isinf(self.support.x1):
            raise ValueError("functional support must be a finite box")

    def sites(self) -> range:
        return range(math.ceil(self.support.x0), math.ceil(self.support.x1))

    def evaluate(self, env, noise: NoiseField) -> float:
        if self.kind == "occupation":
            t = self.t_eval if self.t_eval is not None else self.support.t1
            total = sum(env.occupancy(x, t) for x in self.sites())
            return 1.0 if total >= self.threshold else 0.0
        if self.kind == "jump_count":
            s = self.support
            mask = (
                (env.times >= s.t0)
                & (env.times <= s.t1)
                & (env.sites >= math.ceil(s.x0))
                & (env.sites < math.ceil(s.x1))
            )
            return 1.0 if int(np.count_nonzero(mask)) >= self.threshold else 0.0
        s = self.support
        count = 0
        for x in self.sites():
            times, _ = noise.site_events(x, s.t1)
            count += int(np.searchsorted(times, s.t1, side="right") - np.searchsorted(times, s.t0, side="right"))
        return 1.0 if count >= self.threshold else 0.0


def _support_inside(support: Region, box: Region) -> bool:
    return (
        support.x0 >= box.x0
        and support.x1 <= box.x1
        and support.t0 >= box.t0
        and support.t1 <= box.t1
    )


@dataclass
class GapResult:
    gap_hat: float
    stderr: float
    bound: float
    dist_h: float
    dist_v: float
    s: float
    mean_f1: float
    mean_f2: float
    n: int
    seed: int


def decoupling_gap(
    factory: RealizationFactory,
    b1: Region,
    b2: Region,
    f1: BoxFunctional,
    f2: BoxFunctional,
    n: int,
    params: DecouplingParams,
    threads=None,
) -> GapResult:
    """Monte Carlo E[f1 f2] - E[f1] E[f2] with jackknife error and the
    configured decay bound at the boxes' horizontal distance."""
    if not _support_inside(f1.support, b1):
        raise ValueError("f1 support exceeds its box")
    if not _support_inside(f2.support, b2):
        raise ValueError("f2 support exceeds its box")
    d_h, d_v = region_distances(b1, b2)
    s = max(b1.height, b2.height)
    x_lo = min(f1.support.x0, f2.support.x0)
    x_hi = max(f1.support.x1, f2.support.x1)
    t_hi = max(f1.support.t1, f2.support.t1, 1e-9)

    def one(replica: int):
        real = factory.make(replica, math.floor(x_lo), math.ceil(x_hi), t_hi)
        return f1.evaluate(real.env, real.noise), f2.evaluate(real.env, real.noise)

    vals = replica_map(one, n, threads)
    a = np.array([v[0] for v in vals])
    b = np.array([v[1] for v in vals])
    gap = float(np.mean(a * b) - np.mean(a) * np.mean(b))
    # leave-one-out jackknife
    s_ab, s_a, s_b = np.sum(a * b), np.sum(a), np.sum(b)
    loo = (s_ab - a * b) / (n - 1) - (s_a - a) * (s_b - b) / (n - 1) ** 2
    stderr = float(math.sqrt((n - 1) / n * np.sum((loo - np.mean(loo)) ** 2)))
    return GapResult(
        gap, stderr, params.bound(d_h), d_h, d_v, s, float(np.mean(a)), float(np.mean(b)), n, factory.master
    )


# ---------------------------------------------------------------------------
# ballisticity and LLN curves


def _single_walk_positions(factory: RealizationFactory, t_grid: np.ndarray, n: int, threads=None) -> np.ndarray:
    """X_t at the grid times for n replicas of the walk from the origin."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    horizon = float(t_grid[-1])
    starts = np.array([0], dtype=np.int64)

    def one(replica: int):
        pos_cp, _, _ = _family_run(factory, replica, starts, 0.0, horizon, t_grid)
        return pos_cp[0]

    rows = replica_map(one, n, threads)
    return np.stack(rows)


@dataclass
class BallisticityRow:
    t: float
    p_hat: float
    bound: float


def ballisticity_curve(
    factory: RealizationFactory,
    v_star: float,
    t_grid,
    n: int,
    params: BallisticityParams | None = None,
    threads=None,
) -> list[BallisticityRow]:
    """Empirical lower-deviation curve P(X_t <= v_star t) with bound overlay."""
    t_grid = np.asarray(sorted(t_grid), dtype=np.float64)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    pos = _single_walk_positions(factory, t_grid, n, threads)
    rows = []
    for j, t in enumerate(t_grid):
        p_hat = float(np.mean(pos[:, j] <= v_star * t))
        bound = params.bound(float(t)) if params is not None else float("nan")
        rows.append(BallisticityRow(float(t), p_hat, bound))
    return rows


@dataclass
class LlnRow:
    t: float
    mean_speed: float
    sd: float
    dev_prob: float


def lln_curve(
    factory: RealizationFactory,
    t_grid,
    n: int,
    epsilon: float = 0.1,
    threads=None,
) -> tuple[list[LlnRow], float]:
    """Mean X_t/t with spread and deviation probabilities; v_hat from the
    largest grid time."""
    t_grid = np.asarray(sorted(t_grid), dtype=np.float64)
    if t_grid[0] <= 0:
        raise ValueError("t_grid times must be positive")
    pos = _single_walk_positions(factory, t_grid, n, threads)
    speeds = pos / t_grid[None, :]
    v_hat = float(np.mean(speeds[:, -1]))
    rows = []
    for j, t in enumerate(t_grid):
        col = speeds[:, j]
        rows.append(
            LlnRow(
                float(t),
                float(np.mean(col)),
                float(np.std(col, ddof=1)),
                float(np.mean(np.abs(col - v_hat) >= epsilon)),
            )
        )
    return rows, v_hat
