import numpy as np
import pytest

from warpflow import engine
from warpflow.errors import DomainError, IntegratorDrift
from warpflow.geodesics import (
    flip,
    integrate_geodesic,
    integrate_window,
    parallel_frame,
    scalar_velocity,
    scalar_velocity_series,
    unit_tangent,
    unit_tangent_from_direction,
)
from warpflow.warp import WarpSpec


def _flat_warp(n=2):
    def triple(x):
        x = np.asarray(x, float)
        z = np.zeros_like(x)
        return z, z, z

    return WarpSpec(name="flat", n=n, mode="exponential", triple=triple, c_squared=0.0)


def _identity_warp(n=2):
    def triple(x):
        x = np.asarray(x, float)
        return x, np.ones_like(x), np.zeros_like(x)

    return WarpSpec(name="g(x)=x", n=n, mode="exponential", triple=triple, c_squared=1.0)


class TestUnitTangent:
    def test_normalization(self, anosov_spec):
        th = unit_tangent(anosov_spec, 0.5, np.zeros(2), 3.0, [0.1, 0.2])
        assert th.speed(anosov_spec) == pytest.approx(1.0, abs=1e-12)

    def test_validation_rejects_nonunit(self, anosov_spec):
        with pytest.raises(DomainError):
            unit_tangent(anosov_spec, 0.5, np.zeros(2), 3.0, [0.1, 0.2], normalize=False)

    def test_direction_construction(self, anosov_spec):
        th = unit_tangent_from_direction(anosov_spec, 1.2, np.zeros(2), 0.6, [0.8, 0.0])
        assert th.speed(anosov_spec) == pytest.approx(1.0, abs=1e-10)
        u0, u = th.frame_velocity(anosov_spec)
        assert u0 == pytest.approx(0.6, rel=1e-12)
        assert np.allclose(u, [0.8, 0.0], rtol=1e-12)


class TestIntegrateGeodesic:
    def test_flat_straight_line(self):
        spec = _flat_warp()
        th = unit_tangent_from_direction(spec, 0.0, np.zeros(2), 1.0, [0.0, 0.0])
        path = integrate_geodesic(spec, th, 5.0, 0.01)
        assert np.max(np.abs(path.x - path.times_fine)) < 1e-12
        assert path.max_unit_defect < 1e-14

    def test_axis_geodesic_is_exact_translation(self, anosov_spec):
        # |x'| = 1 start: x(t) = x0 + t, fiber frozen
        th = unit_tangent_from_direction(anosov_spec, 0.25, np.zeros(2), 1.0, [0.0, 0.0])
        path = integrate_geodesic(anosov_spec, th, 10.0, 0.01)
        assert np.max(np.abs(path.x - (0.25 + path.times_fine))) < 1e-12
        assert np.max(np.abs(path.u)) == 0.0

    def test_initial_acceleration_from_reduction(self):
        # x'' (0) = g'(0)(1 - x'(0)^2) = 1 for g(x) = x and a vertical start
        spec = _identity_warp()
        th = unit_tangent_from_direction(spec, 0.0, np.zeros(2), 0.0, [1.0, 0.0])
        path = integrate_geodesic(spec, th, 0.1, 0.001)
        h = path.step / 2.0
        xpp = (path.x[2] - 2.0 * path.x[1] + path.x[0]) / (h * h)
        assert xpp == pytest.approx(1.0, abs=1e-6)

    def test_momentum_and_unit_speed_defects(self, anosov_spec):
        th = unit_tangent_from_direction(anosov_spec, 0.3, np.zeros(2), 0.2, [0.5, 0.84])
        path = integrate_geodesic(anosov_spec, th, 20.0, 1e-3)
        assert path.max_unit_defect < 1e-8
        assert path.max_momentum_defect < 1e-8

    def test_drift_guard_raises(self, anosov_spec):
        th = unit_tangent_from_direction(anosov_spec, 0.3, np.zeros(2), 0.2, [0.5, 0.84])
        with pytest.raises(IntegratorDrift):
            integrate_geodesic(anosov_spec, th, 20.0, 0.1, drift_tol=1e-12)

    def test_backward_integration(self, const_spec):
        th = unit_tangent_from_direction(const_spec, 0.0, np.zeros(2), 0.3, [0.954, 0.0])
        path = integrate_geodesic(const_spec, th, -5.0, 0.01)
        assert path.t_lo == pytest.approx(-5.0)
        assert path.t_hi == pytest.approx(0.0)
        assert path.times_fine[path.t0_index] == pytest.approx(0.0)

    def test_window_gluing_consistent(self, const_spec):
        th = unit_tangent_from_direction(const_spec, 0.0, np.zeros(2), 0.3, [0.954, 0.0])
        win = integrate_window(const_spec, th, -2.0, 3.0, 0.01)
        fwd = integrate_geodesic(const_spec, th, 3.0, 0.01)
        j0 = win.t0_index
        assert np.allclose(win.x[j0:], fwd.x, atol=1e-14)
        assert np.allclose(win.K[j0:], fwd.K, atol=1e-12)


class TestScalarVelocity:
    def test_fixed_point(self, anosov_spec):
        assert scalar_velocity(anosov_spec, 1.0, 7.0) == 1.0

    def test_tanh_closed_form(self):
        spec = _identity_warp()
        times, b, _ = scalar_velocity_series(spec, 0.0, 5.0, step=1e-3)
        assert np.max(np.abs(b - np.tanh(times))) < 1e-12

    def test_domain_error(self, anosov_spec):
        with pytest.raises(DomainError):
            scalar_velocity(anosov_spec, 1.5, 1.0)

    def test_growth_sandwich_strict(self, anosov_spec):
        # log-odds form of the two-sided bound: strict at every grid time
        c1, c2 = anosov_spec.growth_bounds
        for b0 in (-0.9, -0.3, 0.0, 0.4, 0.95):
            times, b, ell = scalar_velocity_series(anosov_spec, b0, 50.0, step=2e-3)
            ell0 = np.log((1 + b0) / (1 - b0))
            lo = ell0 + c1 * times[1:]
            hi = ell0 + c2 * times[1:]
            assert np.all(ell[1:] > lo)
            assert np.all(ell[1:] < hi)

    def test_matches_full_integrator(self, anosov_spec):
        b0, x0 = 0.37, 0.8
        rest = np.sqrt(1 - b0 * b0)
        th = unit_tangent_from_direction(anosov_spec, x0, np.zeros(2), b0, [rest, 0.0])
        path = integrate_geodesic(anosov_spec, th, 5.0, 1e-3)
        b_scalar = scalar_velocity(anosov_spec, b0, 5.0, x0=x0, step=1e-3)
        assert path.u0[-1] == pytest.approx(b_scalar, abs=1e-10)


class TestParallelFrame:
    def test_flat_frame_constant(self):
        spec = _flat_warp()
        th = unit_tangent_from_direction(spec, 0.0, np.zeros(2), 1.0, [0.0, 0.0])
        path = integrate_geodesic(spec, th, 2.0, 0.01)
        frame = parallel_frame(path)
        assert np.max(np.abs(frame.alpha - frame.alpha[0])) < 1e-14
        assert np.max(np.abs(frame.beta - frame.beta[0])) < 1e-14

    def test_axis_geodesic_scaled_fiber_fields(self, anosov_spec):
        # along |x'| = 1 geodesics the fields f^{-1} d_{y_i} are parallel:
        # in the orthonormal basis they are the constant coordinate fields
        th = unit_tangent_from_direction(anosov_spec, 0.0, np.zeros(2), 1.0, [0.0, 0.0])
        path = integrate_geodesic(anosov_spec, th, 10.0, 0.01)
        frame = parallel_frame(path)
        assert np.max(np.abs(frame.alpha)) < 1e-8
        assert np.max(np.abs(frame.beta - frame.beta[0])) < 1e-8

    def test_orthonormality_long_horizon(self, anosov_spec):
        th = unit_tangent_from_direction(anosov_spec, 0.4, np.zeros(2), -0.3, [0.6, 0.742])
        path = integrate_geodesic(anosov_spec, th, 50.0, 0.01, drift_tol=1e-5)
        frame = parallel_frame(path)
        assert frame.max_orthonormality_defect() < 1e-8

    def test_transport_preserves_metric_inner_products(self, counter_spec):
        th = unit_tangent_from_direction(counter_spec, 0.5, np.zeros(2), 0.1, [0.7, 0.707])
        path = integrate_geodesic(counter_spec, th, 30.0, 0.01, drift_tol=1e-6)
        frame = parallel_frame(path)
        for j in (0, len(path.times_fine) // 2, len(path.times_fine) - 1):
            gram = frame.inner_products(j)
            assert np.max(np.abs(gram - np.eye(2))) < 1e-8


class TestFlip:
    def test_involution(self, anosov_spec):
        th = unit_tangent_from_direction(anosov_spec, 0.3, np.zeros(2), 0.5, [0.6, 0.62])
        back = flip(flip(th))
        assert back.dx == th.dx
        assert np.all(back.dy == th.dy)

    def test_flip_preserves_unit_speed_exactly(self, anosov_spec):
        th = unit_tangent_from_direction(anosov_spec, 0.3, np.zeros(2), 0.5, [0.6, 0.62])
        assert flip(th).speed(anosov_spec) == th.speed(anosov_spec)

    def test_time_reversal(self, anosov_spec):
        th = unit_tangent_from_direction(anosov_spec, 0.3, np.zeros(2), 0.5, [0.6, 0.62])
        fwd = integrate_geodesic(anosov_spec, flip(th), 10.0, 0.005, drift_tol=1e-6)
        back = integrate_geodesic(anosov_spec, th, -10.0, 0.005, drift_tol=1e-6)
        # gamma_{flip(theta)}(t) = gamma_theta(-t) with reversed velocity
        assert np.max(np.abs(fwd.x - back.x[::-1])) < 1e-9
        assert np.max(np.abs(fwd.u0 + back.u0[::-1])) < 1e-9
        assert np.max(np.abs(fwd.u + back.u[::-1])) < 1e-9


class TestConvergenceOrder:
    def test_fourth_order_defect_reduction(self):
        # measured where truncation dominates the double-precision floor
        spec = _identity_warp()
        th = unit_tangent_from_direction(spec, 0.0, np.zeros(2), 0.0, [1.0, 0.0])
        u0, u = th.frame_velocity(spec)
        d_coarse = engine.conservation_scan(spec, [th.x], [th.y], [u0], [u], t_end=20.0, step=0.02)
        d_fine = engine.conservation_scan(spec, [th.x], [th.y], [u0], [u], t_end=20.0, step=0.01)
        coarse = max(d_coarse[0][0], d_coarse[1][0])
        fine = max(d_fine[0][0], d_fine[1][0])
        assert coarse / fine >= 8.0
