"""Chernoff bound vs exact tail, drift margins, deviation decay shape."""

import math

import numpy as np
import pytest

from rwdre.deviation import (
    drift_margin,
    exact_poisson_tail,
    non_nestling,
    poisson_chernoff,
    submartingale_deviation_fit,
)
from rwdre.estimators import EnvironmentSpec, InconsistencyError, RealizationFactory
from rwdre.walker import RateModel


class TestChernoff:
    def test_formula_value(self):
        assert poisson_chernoff(1.0, 3.0) == pytest.approx(math.exp(-1.0))

    def test_exact_tail_examples(self):
        assert exact_poisson_tail(1.0, 1.0) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-12)
        # P(N >= 3) for N ~ Poisson(1): 1 - e^-1 (1 + 1 + 1/2)
        assert exact_poisson_tail(1.0, 3.0) == pytest.approx(1.0 - math.exp(-1.0) * 2.5, abs=1e-12)

    def test_tail_below_bound_on_grid(self):
        # the full 80-point grid of the acceptance criterion
        for lam in (0.5, 1.0, 2.0, 5.0):
            for u in range(1, 21):
                assert exact_poisson_tail(lam, float(u)) <= poisson_chernoff(lam, float(u))

    def test_trivial_regime(self):
        assert poisson_chernoff(2.0, 3.0) >= 1.0  # u <= 2*lam: bound exceeds 1

    def test_tail_complement_of_empty(self):
        lam = 1.7
        assert exact_poisson_tail(lam, 1e-9) == pytest.approx(1.0 - math.exp(-lam), abs=1e-12)

    def test_positivity_validated(self):
        with pytest.raises(ValueError):
            poisson_chernoff(0.0, 1.0)
        with pytest.raises(ValueError):
            exact_poisson_tail(1.0, 0.0)

    def test_against_scipy(self):
        from scipy import stats

        for lam in (0.5, 2.0, 7.3):
            for u in (1.0, 2.5, 10.0):
                assert exact_poisson_tail(lam, u) == pytest.approx(
                    float(stats.poisson.sf(math.ceil(u) - 1, lam)), rel=1e-10
                )


class TestDriftMargin:
    def test_constant_rates(self):
        rm = RateModel.constant(2.5, 0.5, 3.0)
        assert drift_margin(rm, [0]) == pytest.approx(2.0)

    def test_occupation_dependent(self):
        rm = RateModel(np.array([3.0, 2.0]), np.array([0.5, 0.5]), 4.0)
        assert drift_margin(rm, [0, 1]) == pytest.approx(1.5)

    def test_non_nestling_check_reports_false(self):
        rm = RateModel.constant(1.0, 0.5, 2.0)
        assert non_nestling(rm, [0], v_circ=0.8) is False
        assert non_nestling(rm, [0], v_circ=0.2) is True

    def test_declared_inf_consistency(self):
        rm = RateModel(np.array([3.0, 2.0]), np.array([0.5, 0.5]), 4.0, declared_drift_inf=1.8)
        with pytest.raises(InconsistencyError):
            drift_margin(rm, [0, 1])

    def test_empty_probe_set_rejected(self):
        with pytest.raises(ValueError):
            drift_margin(RateModel.constant(1.0, 0.0, 1.0), [])


class TestDeviationFit:
    FAC = RealizationFactory(
        81, RateModel.constant(2.5, 0.5, 3.0), EnvironmentSpec("constant")
    )

    def test_monotone_decay_non_nestling(self):
        fit = submartingale_deviation_fit(
            self.FAC, u_drift=1.8, epsilon=0.2, t_grid=[5.0, 12.0, 25.0, 50.0], n=3000,
            probe_occupations=[0], threads=2,
        )
        ps = [e.p_hat for e in fit.p_hats]
        assert all(a >= b for a, b in zip(ps, ps[1:]))
        assert fit.status in ("ok", "inconclusive")

    def test_huge_epsilon_gives_zero(self):
        fit = submartingale_deviation_fit(
            self.FAC, u_drift=1.8, epsilon=12.0, t_grid=[5.0, 10.0, 25.0, 60.0], n=100,
            probe_occupations=[0],
        )
        assert all(e.p_hat == 0.0 for e in fit.p_hats)
        assert fit.status == "inconclusive" and fit.slope_estimate is None

    def test_zero_time_rejected(self):
        with pytest.raises(ValueError):
            submartingale_deviation_fit(
                self.FAC, 1.8, 0.2, [0.0, 10.0, 20.0, 40.0], 50, probe_occupations=[0]
            )

    def test_drift_below_centering_rejected(self):
        with pytest.raises(InconsistencyError):
            submartingale_deviation_fit(
                self.FAC, 2.5, 0.2, [5.0, 12.0, 25.0, 50.0], 50, probe_occupations=[0]
            )

    def test_grid_span_validated(self):
        with pytest.raises(ValueError):
            submartingale_deviation_fit(
                self.FAC, 1.8, 0.2, [10.0, 20.0, 30.0, 40.0], 50, probe_occupations=[0]
            )

    def test_submartingale_increment_sign(self):
        # sample mean of M_{t+s} - M_t is non-negative up to noise when u < drift
        n, t, s, u = 2500, 10.0, 5.0, 1.8
        from rwdre.estimators import _single_walk_positions

        pos = _single_walk_positions(self.FAC, np.array([t, t + s]), n, threads=2)
        incr = (pos[:, 1] - u * (t + s)) - (pos[:, 0] - u * t)
        se = incr.std(ddof=1) / n**0.5
        assert incr.mean() >= -3.0 * se
