"""Poisson concentration, non-nestling drift margins and deviation decay.

The Chernoff bound exp(2*lam - u) is checked against an exact series tail;
the drift-centered walk M_t = X_t - t*u is probed for monotone decay of
P(M_t <= -eps*t) with an informational slope fit of log(-log p) vs log t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import Estimate, InconsistencyError, RealizationFactory, _single_walk_positions
from .walker import RateModel


def poisson_chernoff(lambda_param: float, u: float) -> float:
    """Upper bound exp(2*lambda - u) for P[Poisson(lambda) >= u]."""
    if lambda_param <= 0 or u <= 0:
        raise ValueError("lambda and u must be positive")
    return math.exp(2.0 * lambda_param - u)


def exact_poisson_tail(lambda_param: float, u: float) -> float:
    """P[Poisson(lambda) >= u] by direct series summation.

    Sums k from ceil(u) upward until a term drops below 1e-16 of the
    partial sum.
    """
    if lambda_param <= 0 or u <= 0:
        raise ValueError("lambda and u must be positive")
    k0 = math.ceil(u)
    term = math.exp(-lambda_param)
    for k in range(k0):
        term *= lambda_param / (k + 1)
    # term now holds P(N = k0)
    tail = 0.0
    k = k0
    while True:
        tail += term
        k += 1
        term *= lambda_param / k
        if term < 1e-16 * max(tail, 1e-300):
            break
    return min(tail, 1.0)


def drift_margin(rate_model: RateModel, probe_occupations) -> float:
    """min over probes of alpha - beta, validated against the declared inf."""
    probes = list(probe_occupations)
    if not probes:
        raise ValueError("probe set must be nonempty")
    margin = float(np.min(rate_model.drift_values(probes)))
    declared = rate_model.declared_drift_inf
    if declared is not None and margin < declared - 1e-12:
        raise InconsistencyError(
            f"probed drift margin {margin:.6g} is below the declared inf {declared:.6g}"
        )
    return margin


def non_nestling(rate_model: RateModel, probe_occupations, v_circ: float) -> bool:
    """True when every probed local drift exceeds v_circ."""
    return drift_margin(rate_model, probe_occupations) > v_circ


@dataclass
class DeviationFit:
    t_grid: np.ndarray
    p_hats: list[Estimate]
    epsilon: float
    slope_estimate: float | None
    monotone_decay: bool
    status: str  # 'ok' | 'inconclusive'


def submartingale_deviation_fit(
    factory: RealizationFactory,
    u_drift: float,
    epsilon: float,
    t_grid,
    n: int,
    probe_occupations=(0, 1),
    threads=None,
) -> DeviationFit:
    """Estimate P(X_t - t*u <= -eps*t) over the grid and fit the decay shape.

    Requires the drift margin to exceed u_drift (the centering must leave a
    submartingale). The slope of log(-log p) against log t is reported for
    the points with p strictly inside (0, 1); all-degenerate grids return an
    inconclusive status instead of a fit.
    """
    t_grid = np.asarray(sorted(t_grid), dtype=np.float64)
    if t_grid[0] <= 0:
        raise ValueError("t_grid times must be positive")
    if len(t_grid) < 4 or t_grid[-1] < 10.0 * t_grid[0]:
        raise ValueError("t_grid needs >= 4 points spanning a decade")
    margin = drift_margin(factory.rate_model, probe_occupations)
    if margin <= u_drift:
        raise InconsistencyError(
            f"drift margin {margin:.6g} does not exceed the centering u = {u_drift:.6g}"
        )
    pos = _single_walk_positions(factory, t_grid, n, threads)
    estimates = []
    for j, t in enumerate(t_grid):
        hits = int(np.sum(pos[:, j] - t * u_drift <= -epsilon * t))
        estimates.append(Estimate.from_counts(hits, n, factory.master))
    ps = np.array([e.p_hat for e in estimates])
    interior = (ps > 0.0) & (ps < 1.0)
    if int(np.sum(interior)) >= 2:
        x = np.log(t_grid[interior])
        y = np.log(-np.log(ps[interior]))
        slope = float(np.polyfit(x, y, 1)[0])
        status = "ok"
    else:
        slope = None
        status = "inconclusive"
    monotone = bool(np.all(np.diff(ps) <= 1e-12))
    return DeviationFit(t_grid, estimates, epsilon, slope, monotone, status)
