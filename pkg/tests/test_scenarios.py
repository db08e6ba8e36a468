import numpy as np
import pytest
from scipy.integrate import quad

from warpflow.errors import ConditionAViolated, DomainError
from warpflow.scenarios import (
    build_anosov_example,
    build_constant_curvature,
    build_scenario,
    case_bound,
    scenario_bounds,
)
from warpflow.warp import warp_from_config_section


class TestAnosovExample:
    def test_conditions_hold_for_a3(self, anosov_spec):
        report = anosov_spec.condition_report()
        assert report.min_h > 0.0
        assert report.a_ok and report.b_ok and report.c_ok
        c1, c2 = anosov_spec.growth_bounds
        assert c1 == pytest.approx(2.0 * (3.0 - np.sqrt(2.0)), rel=1e-14)
        assert c2 == pytest.approx(2.0 * (3.0 + np.sqrt(2.0)), rel=1e-14)

    def test_small_slope_rejected(self):
        with pytest.raises(ConditionAViolated):
            build_anosov_example(0.1)

    def test_eta_equals_20_pi(self, anosov_spec):
        # g'' integrates to zero over a period and (a + sin + cos)^2
        # averages to a^2 + 1; quadrature confirms the hand evaluation
        bounds = scenario_bounds(anosov_spec)
        assert bounds.eta == pytest.approx(20.0 * np.pi, abs=1e-8)
        direct, _ = quad(lambda x: float(anosov_spec.h(np.asarray(x))), 0.0, 2.0 * np.pi)
        assert direct == pytest.approx(bounds.eta, abs=1e-9)

    def test_curvature_bound_matches_profile(self, anosov_spec):
        xs = np.linspace(0.0, 2.0 * np.pi, 20001)
        assert anosov_spec.curvature_bound() == pytest.approx(float(np.max(anosov_spec.h(xs))), rel=1e-6)


class TestCounterexample:
    def test_ray_curvature_profile(self, counter_spec):
        # -f''/f = -(1+x^2)^{-2} along the axis direction
        for t in (0.0, 1.0, 3.0, 10.0):
            assert counter_spec.h(np.asarray(t)) == pytest.approx((1 + t * t) ** -2, rel=1e-12)

    def test_no_period_marker(self, counter_spec):
        assert counter_spec.period is None
        assert counter_spec.claims == ()
        with pytest.raises(DomainError):
            scenario_bounds(counter_spec)


class TestConstantCurvature:
    def test_rejects_nonpositive_slope(self):
        with pytest.raises(DomainError):
            build_constant_curvature(0.0)

    def test_h_is_k_squared(self):
        spec = build_constant_curvature(1.7, n=3)
        xs = np.linspace(-5.0, 5.0, 100)
        assert np.max(np.abs(spec.h(xs) - 1.7**2)) < 1e-12


class TestScenarioRegistry:
    def test_build_by_name(self):
        for name in ("anosov-warped-torus", "counterexample-sqrt", "constant-curvature"):
            spec = build_scenario(name, a=3.0, k=1.0, n=2)
            assert spec.params["kind"] == name

    def test_unknown_name(self):
        with pytest.raises(DomainError):
            build_scenario("nope")

    def test_config_roundtrip(self, anosov_spec):
        section = anosov_spec.to_config_section()
        back = warp_from_config_section(section)
        assert back.params == anosov_spec.params
        xs = np.linspace(0.0, 6.0, 50)
        for a, b in zip(back.log_derivatives(xs), anosov_spec.log_derivatives(xs)):
            assert np.allclose(a, b)


class TestCaseBounds:
    def test_axis_case_value(self, anosov_spec):
        bounds = scenario_bounds(anosov_spec)
        # eta/(2T) = 20 pi / (4 pi) = 5
        assert case_bound(bounds, 1.0, 8.0 * np.pi) == pytest.approx(-5.0, rel=1e-9)
        assert case_bound(bounds, -1.0, 8.0 * np.pi) == pytest.approx(-5.0, rel=1e-9)

    def test_fast_bracket(self, anosov_spec):
        bounds = scenario_bounds(anosov_spec)
        T = bounds.T
        assert case_bound(bounds, 0.7, 10.0 * T) == pytest.approx(-bounds.eta / (16.0 * T))

    def test_below_threshold_not_applicable(self, anosov_spec):
        bounds = scenario_bounds(anosov_spec)
        assert case_bound(bounds, 0.0, 0.9 * bounds.case3_threshold) is None
        assert case_bound(bounds, 1.0, 1.9 * bounds.T) is None

    def test_final_bound_composition(self, anosov_spec):
        bounds = scenario_bounds(anosov_spec)
        expected = max(
            -bounds.eta / (64.0 * bounds.T),
            -bounds.eta / (4.0 * (8.0 * bounds.T + 2.0 * bounds.slow_entry)),
        )
        assert case_bound(bounds, -0.8, bounds.case4_threshold + 1.0) == pytest.approx(expected)
        assert bounds.final_bound == pytest.approx(-0.15625, rel=1e-12)

    def test_domain_guard(self, anosov_spec):
        bounds = scenario_bounds(anosov_spec)
        with pytest.raises(DomainError):
            case_bound(bounds, 1.5, 100.0)


class TestSpeedThresholdTimes:
    def test_slow_entry_bound(self, anosov_spec):
        # first crossing of b = 1/2 happens before (2/C1) log 3 whenever
        # b0 is in the middle bracket
        from warpflow.geodesics import scalar_velocity_series

        bounds = scenario_bounds(anosov_spec)
        for b0 in (-0.5, -0.2, 0.0, 0.3, 0.49):
            times, b, _ = scalar_velocity_series(anosov_spec, b0, 2.0, step=1e-3)
            idx = np.nonzero(b >= 0.5)[0]
            assert len(idx) > 0
            t1 = times[idx[0]]
            assert t1 < bounds.slow_entry

    def test_backward_exit_bound(self, anosov_spec):
        # time of b = -1/2 exceeds (1/C2) log(1/(3 B0)) when that is positive
        from warpflow.geodesics import scalar_velocity_series

        bounds = scenario_bounds(anosov_spec)
        for b0 in (-0.9, -0.8, -0.7):
            B0 = (1.0 + b0) / (1.0 - b0)
            lower = np.log(1.0 / (3.0 * B0)) / bounds.C2
            times, b, _ = scalar_velocity_series(anosov_spec, b0, 5.0, step=1e-3)
            idx = np.nonzero(b >= -0.5)[0]
            t2 = times[idx[0]]
            if lower > 0:
                assert t2 > lower
