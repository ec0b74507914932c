"""Crossing events, cascading trichotomy, traps/threats, gaps, curves."""

import math

import numpy as np
import pytest

from rwdre.boxes import BoxIndex, Region, box_bounds, build_scales, children, interval_bounds, lattice_starts
from rwdre.deviation import exact_poisson_tail
from rwdre.environments import AsepParams, ConstantEnvironment
from rwdre.estimators import (
    BallisticityParams,
    BoxFunctional,
    CascadeParams,
    DecouplingParams,
    DELAY,
    NOT_THREATENED,
    EnvironmentSpec,
    Estimate,
    Realization,
    RealizationFactory,
    TrapParams,
    ballisticity_curve,
    classify_cascading,
    decoupling_gap,
    derived_decay_params,
    estimate_pH,
    estimate_speed_bracket,
    event_A,
    event_Atilde,
    event_D,
    is_threatened,
    is_trapped,
    lln_curve,
    merge_counts,
    verify_threat_dichotomy,
    wilson_interval,
)
from rwdre.noise import ExplicitNoise, MarkedPoint, NoiseField
from rwdre.walker import RateModel, StartPoint, run_walk

ENV0 = ConstantEnvironment(0)


def const_realization(alpha, beta, lam, master, replica, empty=False):
    rm = RateModel.constant(alpha, beta, lam)
    noise = ExplicitNoise([], lam_bound=lam) if empty else NoiseField(master, lam, replica)
    return Realization(ENV0, noise, rm, master, replica)


class TestWilson:
    def test_zero_successes_upper(self):
        p, lo, hi = wilson_interval(0, 100)
        assert p == 0.0 and lo == 0.0
        assert hi == pytest.approx(0.03699, abs=2e-4)

    def test_brackets_estimate(self):
        p, lo, hi = wilson_interval(37, 120)
        assert lo <= p <= hi

    def test_merge_counts_fold(self):
        parts = [(3, 10), (0, 5), (7, 15)]
        assert merge_counts(parts) == (10, 30)
        assert merge_counts(reversed(parts)) == (10, 30)


class TestEventA:
    def test_empty_noise_threshold_zero(self):
        real = const_realization(0.8, 0.2, 1.0, 1, 0, empty=True)
        assert event_A(20.0, (0.0, 0.0), 0.0, real) is True
        assert event_A(20.0, (0.0, 0.0), 0.1, real) is False

    def test_monotone_in_v(self):
        real = const_realization(0.8, 0.2, 1.0, 5, 3)
        vals = [event_A(30.0, (0.0, 0.0), v, real) for v in (-0.5, 0.0, 0.4, 0.8, 1.5)]
        assert vals == sorted(vals, reverse=True)

    def test_atilde_monotone_opposite(self):
        real = const_realization(0.8, 0.2, 1.0, 5, 3)
        vals = [event_Atilde(30.0, (0.0, 0.0), v, real) for v in (-0.5, 0.0, 0.4, 0.8, 1.5)]
        assert vals == sorted(vals)

    def test_high_crossing_probability(self):
        # alpha 0.8 beta 0.2, H=200, v=0.3: crossing is near-certain
        rm = RateModel.constant(0.8, 0.2, 1.0)
        fac = RealizationFactory(7, rm, EnvironmentSpec("constant"))
        est = estimate_pH(200.0, 0.3, 1000, fac, threads=2)
        assert est.p_hat >= 0.99


class TestEstimatePH:
    FAC = None

    @classmethod
    def factory(cls):
        if cls.FAC is None:
            cls.FAC = RealizationFactory(9, RateModel.constant(0.8, 0.2, 1.0), EnvironmentSpec("constant"))
        return cls.FAC

    def test_extreme_low_speed_always_crossed(self):
        est = estimate_pH(50.0, -3.5, 100, self.factory())
        assert est.p_hat == 1.0

    def test_extreme_high_speed_never_crossed(self):
        est = estimate_pH(50.0, 3.5, 100, self.factory())
        assert est.p_hat == 0.0
        assert est.ci_high == pytest.approx(0.03699, abs=2e-4)

    def test_minimum_replicas(self):
        with pytest.raises(ValueError):
            estimate_pH(10.0, 0.0, 10, self.factory())

    def test_monotone_on_matched_seeds(self):
        ests = [estimate_pH(40.0, v, 60, self.factory()) for v in (0.2, 0.5, 0.8)]
        assert ests[0].p_hat >= ests[1].p_hat >= ests[2].p_hat


class TestSpeedBracket:
    def test_drifting_model_brackets_its_speed(self):
        rm = RateModel.constant(0.8, 0.2, 1.0)
        fac = RealizationFactory(21, rm, EnvironmentSpec("constant"))
        rep = estimate_speed_bracket([40.0, 120.0], np.arange(-0.4, 1.7, 0.1), 200, fac, threads=2)
        assert rep.status == "ok"
        assert rep.v_minus_hat <= 0.6 <= rep.v_plus_hat
        w40 = rep.per_h[40.0][1] - rep.per_h[40.0][0]
        w120 = rep.per_h[120.0][1] - rep.per_h[120.0][0]
        assert w120 <= w40

    def test_symmetric_model_brackets_zero(self):
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(22, rm, EnvironmentSpec("constant"))
        rep = estimate_speed_bracket([60.0], np.arange(-1.2, 1.3, 0.1), 150, fac, threads=2)
        assert rep.v_minus_hat <= 0.0 <= rep.v_plus_hat

    def test_bracket_within_domination_range(self):
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(23, rm, EnvironmentSpec("constant"))
        grid = np.arange(-2.5, 2.6, 0.25)
        rep = estimate_speed_bracket([50.0], grid, 100, fac, threads=2)
        lam = rm.lam
        assert -lam - 0.25 <= rep.v_minus_hat and rep.v_plus_hat <= lam + 0.25

    def test_inconclusive_status_on_short_grid(self):
        rm = RateModel.constant(0.8, 0.2, 1.0)
        fac = RealizationFactory(24, rm, EnvironmentSpec("constant"))
        rep = estimate_speed_bracket([40.0], [0.55, 0.65], 60, fac)
        assert rep.status == "inconclusive"


def desk_scales():
    with pytest.warns(UserWarning):
        return build_scales(10, 0.5, 1.25, 1, strict=False)


class TestEventD:
    def test_empty_noise(self):
        scales = desk_scales()
        real = const_realization(1.0, 0.0, 1.0, 1, 0, empty=True)
        rec = event_D(BoxIndex(1.0, 1, (0.0, 0.0)), scales, real, v_star=0.5)
        assert rec.dhat is True and rec.dbar is False and rec.d is False

    def test_dhat_failure_matches_direct_excursion(self):
        # a 90-step sprint from one corner breaks the 4*lam*child bound (80)
        scales = desk_scales()
        rm = RateModel.constant(1.0, 0.0, 1.0)
        pts = [MarkedPoint(j, (j + 1) * 10.0 / 91.0, 0.5) for j in range(90)]
        noise = ExplicitNoise(pts, lam_bound=1.0)
        real = Realization(ENV0, noise, rm, 1, 0)
        rec = event_D(BoxIndex(1.0, 1, (0.0, 0.0)), scales, real, v_star=-1.0)
        assert rec.dhat is False
        direct = run_walk(StartPoint(0, 0.0), 10.0, ENV0, noise, rm)
        assert direct.max_excursion() > 4 * rm.lam * 10

    def test_non_nestling_event_probability(self):
        # alpha 2.5, beta 0.5, v_star 1.5: P(D) is high once the per-corner
        # exact Skellam tail times the corner count is small; that needs a
        # child scale around 320, where the union-bound expectation of corner
        # failures drops below 0.1 (the MC replica count is reduced to fit
        # the test budget, the margin makes the 0.9 level safe)
        from scipy import stats

        with pytest.warns(UserWarning):  # stagnating scales: ell = 1
            scales = build_scales(320, 0.05, 1.25, 1, strict=False)
        rm = RateModel.constant(2.5, 0.5, 3.0)
        m = BoxIndex(1.0, 1, (0.0, 0.0))
        child = float(scales.L(0))
        corners = 9 * rm.lam * child * scales.ell(0)
        p_corner = float(stats.skellam.cdf(math.floor(1.5 * child), 2.5 * child, 0.5 * child))
        assert corners * p_corner < 0.1, "configuration too small for the 0.9 level"
        n, good = 80, 0
        for rep in range(n):
            real = Realization(ENV0, NoiseField(401, 3.0, rep), rm, 401, rep)
            good += event_D(m, scales, real, v_star=1.5).d
        assert good / n >= 0.9


class TestCascading:
    DEC = DecouplingParams(v_circ=0.01, kappa_circ=1.0, c_circ=1.0, c2=0.1, c3=0.1, gamma_circ=1.5)

    def test_empty_noise_is_case_a(self):
        scales = desk_scales()
        real = const_realization(1.0, 0.0, 1.0, 1, 0, empty=True)
        out = classify_cascading(
            BoxIndex(1.0, 1, (0.0, 0.0)), scales, real, 0.2, 0.5, CascadeParams(self.DEC, v_star=0.2)
        )
        assert out.case == "a"

    def test_classification_never_fails_mc(self):
        # fast drift: case b dominates, case a from corner slowdowns; no violations
        scales = desk_scales()
        rm = RateModel.constant(1.0, 0.0, 1.0)
        params = CascadeParams(self.DEC, v_star=0.0)
        m = BoxIndex(1.0, 1, (0.0, 0.0))
        seen = {}
        for rep in range(150):
            real = Realization(ENV0, NoiseField(33, 1.0, rep), rm, 33, rep)
            out = classify_cascading(m, scales, real, 0.2, 0.45, params)
            seen[out.case] = seen.get(out.case, 0) + 1
        assert seen.get("b", 0) > 0
        assert set(seen) <= {"a", "b", "c"}

    def build_case_c_fixture(self):
        # staircase witness: 60 right jumps per child-scale slab from the
        # origin (parent crossing, corner-safe), plus a far-away slow walk
        pts = []
        for s in range(3):
            for j in range(60):
                site = 60 * s + j
                t = 10.0 * s + (j + 1) * 10.0 / 61.0
                pts.append(MarkedPoint(site, t, 0.5))
        pts.append(MarkedPoint(240, 1.0, 0.5))
        pts.append(MarkedPoint(241, 2.0, 0.5))
        return ExplicitNoise(pts, lam_bound=1.0)

    def test_constructed_case_c(self):
        scales = desk_scales()
        rm = RateModel.constant(1.0, 0.0, 1.0)
        noise = self.build_case_c_fixture()
        real = Realization(ENV0, noise, rm, 1, 0)
        m = BoxIndex(1.0, 1, (0.0, 0.0))
        v_min, v_max = 0.1, 10.0
        out = classify_cascading(m, scales, real, v_min, v_max, CascadeParams(self.DEC, v_star=-1.0))
        assert out.case == "c"
        m1, m2 = out.witness["pair"]
        assert m1.w == (0.0, 0.0)
        assert m2.w == (240.0, 0.0)

        # brute-force re-evaluation of every child event with the reference walker
        lam = rm.lam
        child = 10.0
        slow_brute = []
        for kid in children(m, scales, lam):
            x0, x1, t_j = interval_bounds(kid, scales, lam)
            disps = [
                run_walk(StartPoint(x, t_j), child, ENV0, noise, rm).displacement()
                for x in lattice_starts(x0, x1)
            ]
            assert max(disps, default=0) < v_max * child  # case b indeed fails
            if disps and max(disps) >= v_min * child:
                slow_brute.append(kid)
        assert m1 in slow_brute and m2 in slow_brute
        # returned pair is the first separated pair in child order
        first = None
        for i1 in range(len(slow_brute)):
            for i2 in range(i1 + 1, len(slow_brute)):
                b1 = Region(*box_bounds(slow_brute[i1], scales, lam))
                b2 = Region(*box_bounds(slow_brute[i2], scales, lam))
                d_h = max(b1.x0 - b2.x1, b2.x0 - b1.x1, 0.0)
                d_v = max(b1.t0 - b2.t1, b2.t0 - b1.t1, 0.0)
                if d_h >= max(self.DEC.v_circ * d_v + self.DEC.c2 * child + self.DEC.c3, lam * child):
                    first = (slow_brute[i1], slow_brute[i2])
                    break
            if first:
                break
        assert first == (m1, m2)


class TestTraps:
    def test_empty_noise_trapped(self):
        real = const_realization(1.0, 0.0, 1.0, 1, 0, empty=True)
        assert is_trapped((0.0, 0.0), 20.0, 0.1, 0.5, real) is True

    def test_empty_scan_interval_warns(self):
        real = const_realization(1.0, 0.0, 1.0, 1, 0, empty=True)
        with pytest.warns(UserWarning):
            assert is_trapped((0.45, 0.0), 2.0, 0.05, 0.5, real) is False

    def test_trap_params_theta_derivation(self):
        tp = TrapParams(K=20.0, r=3, v_minus=0.2, v_plus=0.8)
        assert tp.theta == pytest.approx(0.1)

    def test_threshold_relaxation_never_untraps(self):
        # larger theta with the same scan interval relaxes the displacement bar
        for rep in range(40):
            real = const_realization(0.6, 0.4, 1.0, 44, rep)
            starts = np.arange(2, 5)
            from rwdre.walker import family_extremes

            pos, _, _ = family_extremes(starts, 0.0, 20.0, ENV0, real.noise, real.rate_model)
            disp = pos[:, -1] - starts
            assert (disp.min() <= (0.5 + 0.1) * 20) <= (disp.min() <= (0.5 + 0.2) * 20)

    def test_trap_probability_oracle_band(self):
        # alpha = Lambda = 1, beta = 0, K=20, theta=0.1, v_minus=0.5: each start
        # is slow with P(Poisson(20) <= 12); shared noise couples the three
        # starts positively, so the trap probability sits between the single-
        # start value and the independent-scan value (frozen MC: 0.070).
        p_single = 1.0 - exact_poisson_tail(20.0, 13.0)
        assert p_single == pytest.approx(0.0390, abs=2e-4)
        independent = 1.0 - (1.0 - p_single) ** 3
        assert independent == pytest.approx(0.1125, abs=3e-4)
        rm = RateModel.constant(1.0, 0.0, 1.0)
        n, hits = 1500, 0
        for rep in range(n):
            real = Realization(ENV0, NoiseField(301, 1.0, rep), rm, 301, rep)
            hits += is_trapped((0.0, 0.0), 20.0, 0.1, 0.5, real)
        p_mc = hits / n
        se = (p_mc * (1 - p_mc) / n) ** 0.5
        assert p_single - 3 * se <= p_mc <= independent + 3 * se
        assert p_mc == pytest.approx(0.070, abs=4 * se)


class TestThreatened:
    def test_r_one_equals_trapped(self):
        for rep in range(30):
            real = const_realization(0.7, 0.3, 1.0, 51, rep)
            flag, j = is_threatened((0.0, 0.0), 20.0, 1, 0.8, 0.1, 0.2, real)
            assert flag == is_trapped((0.0, 0.0), 20.0, 0.1, 0.2, real)
            assert j in (0, None)

    def test_empty_noise_threatened_at_zero(self):
        real = const_realization(1.0, 0.0, 1.0, 1, 0, empty=True)
        flag, j = is_threatened((0.0, 0.0), 20.0, 3, 0.8, 0.1, 0.2, real)
        assert flag and j == 0

    def test_monotone_in_r_matched_seeds(self):
        # anchor sets are nested, so the event is monotone per realization
        for rep in range(40):
            real = const_realization(0.6, 0.4, 1.0, 52, rep)
            f1, _ = is_threatened((0.0, 0.0), 15.0, 1, 0.9, 0.1, 0.3, real)
            f3, _ = is_threatened((0.0, 0.0), 15.0, 3, 0.9, 0.1, 0.3, real)
            assert f3 >= f1


class TestDichotomy:
    def test_empty_noise_delay(self):
        real = const_realization(1.0, 0.0, 1.0, 1, 0, empty=True)
        out = verify_threat_dichotomy(StartPoint(0, 0.0), 20.0, 2, 0.8, 0.1, real)
        assert out == DELAY

    def test_not_threatened_fixture(self):
        # v_minus so low that no start can be slow enough to trap
        real = const_realization(1.0, 0.0, 1.0, 2, 0, empty=False)
        out = verify_threat_dichotomy(StartPoint(0, 0.0), 20.0, 2, 11.8, 0.3, real, v_minus=-2.0 - 1.0)
        assert out == NOT_THREATENED

    def test_never_a_fourth_state_mc(self):
        rm = RateModel.constant(0.6, 0.4, 1.0)
        outcomes = set()
        for rep in range(120):
            real = Realization(ENV0, NoiseField(53, 1.0, rep), rm, 53, rep)
            outcomes.add(verify_threat_dichotomy(StartPoint(0, 0.0), 12.0, 3, 0.5, 0.05, real))
        assert outcomes <= {DELAY, NOT_THREATENED, "speedup"}


class TestDerivedDecay:
    def test_substitution(self):
        circ = DecouplingParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.25)
        star = BallisticityParams(1.0, 0.9, 1.0, 2.0)
        out = derived_decay_params(circ, star)
        assert out.kappa == pytest.approx(0.1) and out.gamma == 1.25

    def test_equal_inputs(self):
        circ = DecouplingParams(1.0, 0.9, 1.0, 1.0, 1.0, 1.5)
        star = BallisticityParams(1.0, 0.9, 1.0, 1.5)
        out = derived_decay_params(circ, star)
        assert out.kappa == pytest.approx(0.1) and out.gamma == 1.5

    def test_mixed_minima(self):
        circ = DecouplingParams(1.0, 9.0, 1.0, 1.0, 1.0, 2.0)
        star = BallisticityParams(1.0, 18.0, 1.0, 1.5)
        out = derived_decay_params(circ, star)
        assert out.kappa == pytest.approx(1.0) and out.gamma == 1.5


ASEP_SPEC = EnvironmentSpec("asep", asep=AsepParams(0.7, 0.5), buffer_width=40)
DEC_PARAMS = DecouplingParams(v_circ=1.0, kappa_circ=0.4, c_circ=5.0, c2=1.0, c3=1.0, gamma_circ=1.5)


def gap_setup(d_h):
    b1 = Region(-math.inf, 0.0, 0.0, 24.0)
    b2 = Region(d_h, math.inf, 0.0, 24.0)
    f1 = BoxFunctional("occupation", Region(-10.0, 0.0, 0.0, 24.0), threshold=5, t_eval=20.0)
    f2 = BoxFunctional("occupation", Region(d_h, d_h + 10.0, 0.0, 24.0), threshold=5, t_eval=20.0)
    return b1, b2, f1, f2


class TestDecouplingGap:
    def test_constant_functional_gap_zero(self):
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(61, rm, ASEP_SPEC)
        b1, b2, f1, f2 = gap_setup(30.0)
        f1_const = BoxFunctional("occupation", f1.support, threshold=0, t_eval=20.0)  # always 1
        out = decoupling_gap(fac, b1, b2, f1_const, f2, 200, DEC_PARAMS)
        assert out.gap_hat == 0.0

    def test_support_outside_box_rejected(self):
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(61, rm, ASEP_SPEC)
        b1, b2, f1, f2 = gap_setup(30.0)
        bad = BoxFunctional("occupation", Region(-10.0, 5.0, 0.0, 24.0), threshold=5, t_eval=20.0)
        with pytest.raises(ValueError):
            decoupling_gap(fac, b1, b2, bad, f2, 100, DEC_PARAMS)

    def test_noise_functionals_independent(self):
        # functions of the Poisson field in disjoint regions: gap within 3 SE of 0
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(62, rm, EnvironmentSpec("constant"))
        b1 = Region(-math.inf, 0.0, 0.0, 10.0)
        b2 = Region(25.0, math.inf, 0.0, 10.0)
        f1 = BoxFunctional("noise_count", Region(-8.0, 0.0, 0.0, 10.0), threshold=8)
        f2 = BoxFunctional("noise_count", Region(25.0, 33.0, 0.0, 10.0), threshold=8)
        out = decoupling_gap(fac, b1, b2, f1, f2, 800, DEC_PARAMS, threads=2)
        assert abs(out.gap_hat) <= 3.0 * out.stderr

    def test_gap_symmetry_on_matched_seeds(self):
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(63, rm, ASEP_SPEC)
        b1, b2, f1, f2 = gap_setup(40.0)
        out_ab = decoupling_gap(fac, b1, b2, f1, f2, 150, DEC_PARAMS)
        out_ba = decoupling_gap(fac, b2, b1, f2, f1, 150, DEC_PARAMS)
        assert out_ab.gap_hat == out_ba.gap_hat
        assert out_ab.stderr == out_ba.stderr

    def test_jump_count_functional_runs(self):
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(64, rm, ASEP_SPEC)
        b1, b2, _, f2 = gap_setup(30.0)
        f1 = BoxFunctional("jump_count", Region(-10.0, 0.0, 0.0, 24.0), threshold=20)
        out = decoupling_gap(fac, b1, b2, f1, f2, 150, DEC_PARAMS)
        assert 0.0 <= out.mean_f1 <= 1.0


class TestCurves:
    def test_ballisticity_symmetric_near_half(self):
        rm = RateModel.constant(0.5, 0.5, 1.0)
        fac = RealizationFactory(71, rm, EnvironmentSpec("constant"))
        rows = ballisticity_curve(fac, 0.0, [50.0, 200.0], 1500, threads=2)
        # median 0 plus an O(t^-1/2) atom at zero
        assert abs(rows[-1].p_hat - 0.5) < 0.04

    def test_ballisticity_t_zero_is_certain(self):
        rm = RateModel.constant(0.8, 0.2, 1.0)
        fac = RealizationFactory(72, rm, EnvironmentSpec("constant"))
        rows = ballisticity_curve(fac, 0.0, [0.0, 10.0], 60)
        assert rows[0].p_hat == 1.0

    def test_bound_column(self):
        rm = RateModel.constant(0.8, 0.2, 1.0)
        fac = RealizationFactory(73, rm, EnvironmentSpec("constant"))
        params = BallisticityParams(0.3, 0.5, 2.0, 1.5)
        rows = ballisticity_curve(fac, 0.3, [10.0, 100.0], 60, params=params)
        assert rows[0].bound == pytest.approx(params.bound(10.0))

    def test_lln_constant_rates(self):
        rm = RateModel.constant(0.8, 0.2, 1.0)
        fac = RealizationFactory(74, rm, EnvironmentSpec("constant"))
        rows, v_hat = lln_curve(fac, [100.0, 400.0], 400, epsilon=0.1, threads=2)
        se = rows[-1].sd / 400**0.5
        assert abs(v_hat - 0.6) < 3.0 * se
        assert rows[-1].sd < rows[0].sd

    def test_lln_immobile_model(self):
        rm = RateModel(np.array([0.0]), np.array([0.0]), 1.0)
        fac = RealizationFactory(75, rm, EnvironmentSpec("constant"))
        rows, v_hat = lln_curve(fac, [5.0, 50.0], 50)
        assert v_hat == 0.0 and all(r.sd == 0.0 for r in rows)

    def test_lln_rejects_zero_time(self):
        rm = RateModel.constant(0.8, 0.2, 1.0)
        fac = RealizationFactory(76, rm, EnvironmentSpec("constant"))
        with pytest.raises(ValueError):
            lln_curve(fac, [0.0, 10.0], 50)
