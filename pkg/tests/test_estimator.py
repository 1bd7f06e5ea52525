"""Tests for the deadzone-gated projection estimator."""

import math

import numpy as np
import pytest

from mraclab.estimator import (
    EstimatorState,
    deadzone_flag,
    estimator_update,
    prediction_error,
    project_box,
)
from mraclab.system import ParamBox, box_norm

UNIT_BOX = ParamBox(lo=(-1.0, -1.0), hi=(1.0, 1.0))


class TestProjectBox:
    def test_interior_point_unchanged(self):
        x = np.array([0.25, -0.5])
        np.testing.assert_allclose(project_box(x, UNIT_BOX), x, rtol=0, atol=0)

    def test_clamps_coordinatewise(self):
        np.testing.assert_allclose(
            project_box(np.array([3.0, -2.0]), UNIT_BOX), [1.0, -1.0], rtol=0, atol=0
        )

    def test_non_expansive(self):
        rng = np.random.default_rng(43)
        for _ in range(1000):
            dim = int(rng.integers(1, 6))
            lo = rng.uniform(-2, 0, dim)
            box = ParamBox(lo=tuple(lo), hi=tuple(lo + rng.uniform(0.1, 3, dim)))
            x = rng.uniform(-5, 5, dim)
            y = rng.uniform(-5, 5, dim)
            dist_proj = np.linalg.norm(project_box(x, box) - project_box(y, box))
            assert dist_proj <= np.linalg.norm(x - y) + 1e-12


class TestPredictionError:
    def test_known_value(self):
        e = prediction_error(1.0, np.array([1.0, 1.0]), np.array([0.25, 0.25]))
        assert e == pytest.approx(0.5, abs=1e-15)

    def test_exact_model_zero_error(self):
        rng = np.random.default_rng(47)
        theta = rng.uniform(-2, 2, 4)
        phi = rng.uniform(-3, 3, 4)
        assert prediction_error(float(phi @ theta), phi, theta) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            prediction_error(0.0, np.zeros(3), np.zeros(2))


class TestDeadzone:
    def test_zero_regressor_gates_off(self):
        assert deadzone_flag(5.0, np.zeros(3), 1.0, math.inf) == 0

    def test_threshold_arithmetic(self):
        # |e| = 10 against (2 sqrt(2) + 0.1) * 1 ~= 2.93: too large, gate off.
        s_norm = box_norm(UNIT_BOX)
        assert deadzone_flag(10.0, np.array([1.0, 0.0]), s_norm, 0.1) == 0
        assert deadzone_flag(2.9, np.array([1.0, 0.0]), s_norm, 0.1) == 1

    def test_infinite_delta_always_updates(self):
        assert deadzone_flag(1e6, np.array([1e-9, 0.0]), 1.0, math.inf) == 1

    def test_strict_inequality_at_threshold(self):
        # Exactly on the boundary counts as outside the update region.
        assert deadzone_flag(3.0, np.array([1.0]), 1.0, 1.0) == 0


class TestEstimatorState:
    def test_rejects_estimate_outside_box(self):
        with pytest.raises(ValueError):
            EstimatorState(theta_hat=np.array([2.0, 0.0]), box=UNIT_BOX)

    def test_rejects_nonpositive_delta(self):
        with pytest.raises(ValueError):
            EstimatorState(theta_hat=np.zeros(2), box=UNIT_BOX, delta=0.0)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            EstimatorState(theta_hat=np.zeros(3), box=UNIT_BOX)

    def test_caches_box_norm(self):
        st = EstimatorState(theta_hat=np.zeros(2), box=UNIT_BOX)
        assert st.box_norm_cached == pytest.approx(math.sqrt(2.0), abs=1e-15)


class TestEstimatorUpdate:
    def test_plain_gradient_move(self):
        st = EstimatorState(theta_hat=np.zeros(2), box=UNIT_BOX)
        rec = estimator_update(st, np.array([1.0, 0.0]), ybar_next=0.5)
        assert rec.e_next == pytest.approx(0.5, abs=1e-15)
        assert rec.rho == 1
        np.testing.assert_allclose(rec.nu, [0.5, 0.0], rtol=0, atol=1e-15)
        np.testing.assert_allclose(rec.theta_check, [0.5, 0.0], rtol=0, atol=1e-15)
        np.testing.assert_allclose(st.theta_hat, [0.5, 0.0], rtol=0, atol=1e-15)

    def test_projection_clamps_overshoot(self):
        st = EstimatorState(theta_hat=np.array([0.9, 0.0]), box=UNIT_BOX)
        rec = estimator_update(st, np.array([1.0, 0.0]), ybar_next=2.0)
        assert rec.e_next == pytest.approx(1.1, abs=1e-15)
        np.testing.assert_allclose(rec.theta_check, [2.0, 0.0], rtol=0, atol=1e-15)
        np.testing.assert_allclose(st.theta_hat, [1.0, 0.0], rtol=0, atol=0)

    def test_deadzone_freezes_estimate(self):
        st = EstimatorState(theta_hat=np.zeros(2), box=UNIT_BOX, delta=0.5)
        rec = estimator_update(st, np.array([0.1, 0.0]), ybar_next=1.0)
        assert rec.rho == 0
        np.testing.assert_allclose(rec.nu, [0.0, 0.0], rtol=0, atol=0)
        np.testing.assert_allclose(st.theta_hat, [0.0, 0.0], rtol=0, atol=0)
        np.testing.assert_allclose(rec.theta_check, [0.0, 0.0], rtol=0, atol=0)

    def test_zero_regressor_is_noop(self):
        st = EstimatorState(theta_hat=np.array([0.3, -0.2]), box=UNIT_BOX)
        rec = estimator_update(st, np.zeros(2), ybar_next=7.0)
        assert rec.rho == 0
        np.testing.assert_allclose(st.theta_hat, [0.3, -0.2], rtol=0, atol=0)

    def test_estimate_stays_in_box(self):
        rng = np.random.default_rng(53)
        for delta in (math.inf, 0.5):
            st = EstimatorState(theta_hat=np.zeros(2), box=UNIT_BOX, delta=delta)
            for _ in range(500):
                phi = rng.uniform(-3, 3, 2)
                estimator_update(st, phi, ybar_next=float(rng.uniform(-10, 10)))
                assert st.box.contains(st.theta_hat, tol=0.0)

    def test_move_bounded_by_normalized_error(self):
        # ||theta_hat(t+1) - theta_hat(t)|| <= rho |e| / ||phi||.
        rng = np.random.default_rng(59)
        st = EstimatorState(theta_hat=np.zeros(2), box=UNIT_BOX, delta=2.0)
        for _ in range(1000):
            phi = rng.uniform(-2, 2, 2)
            prev = st.theta_hat.copy()
            rec = estimator_update(st, phi, ybar_next=float(rng.uniform(-5, 5)))
            norm = np.linalg.norm(phi)
            bound = rec.rho * abs(rec.e_next) / norm if norm > 0 else 0.0
            assert np.linalg.norm(st.theta_hat - prev) <= bound + 1e-9

    def test_parameter_error_contraction(self):
        # With ybar generated by theta* in the box plus noise wbar, each
        # gated update obeys
        #   ||err(t+1)||^2 - ||err(t)||^2 <= rho (-e^2/2 + 2 wbar^2)/||phi||^2.
        rng = np.random.default_rng(61)
        for delta in (math.inf, 1.0):
            dim = 3
            box = ParamBox(lo=(-1.5, -1.0, 0.5), hi=(1.0, 2.0, 3.0))
            theta_star = box.sample(rng)
            st = EstimatorState(theta_hat=box.midpoint(), box=box, delta=delta)
            for _ in range(800):
                phi = rng.uniform(-2, 2, dim)
                wbar = float(rng.uniform(-0.3, 0.3))
                before = float(np.sum((st.theta_hat - theta_star) ** 2))
                rec = estimator_update(st, phi, ybar_next=float(phi @ theta_star) + wbar)
                after = float(np.sum((st.theta_hat - theta_star) ** 2))
                if rec.rho:
                    allowed = (-0.5 * rec.e_next**2 + 2.0 * wbar**2) / float(phi @ phi)
                else:
                    allowed = 0.0
                assert after - before <= allowed + 1e-9

    def test_infinite_delta_gate_tracks_regressor(self):
        st = EstimatorState(theta_hat=np.zeros(2), box=UNIT_BOX)
        rec = estimator_update(st, np.array([1e-12, 0.0]), ybar_next=3.0)
        assert rec.rho == 1
        rec = estimator_update(st, np.zeros(2), ybar_next=3.0)
        assert rec.rho == 0
