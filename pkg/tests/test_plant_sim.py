"""Tests for plant stepping, coefficient schedules, signals, and filtered noise."""

import math

import numpy as np
import pytest

from mraclab.poly import PolyZ
from mraclab.system import AdmissibilityError, PlantParams, ReferenceModel, to_predictor_params
from mraclab.plant_sim import (
    CoefSpec,
    CoefficientSchedule,
    PlantState,
    coef_eval,
    constant_signal,
    plant_step,
    signal_eval,
    sinusoid,
    square_wave,
    table_signal,
    wbar_sequence,
    white_noise,
    windowed_sinusoid,
    zero_signal,
)


def demo_schedule() -> CoefficientSchedule:
    """Time-varying showcase plant: slow sinusoidal drifts in every coefficient."""
    return CoefficientSchedule(
        a=(
            CoefSpec(kind="sinusoid", amplitude=2.0, rate=1.0 / 100.0),
            CoefSpec(kind="sinusoid", amplitude=-2.0, rate=1.0 / 300.0, trig="sin"),
        ),
        b=(
            CoefSpec(kind="sinusoid", offset=13.0 / 4.0, amplitude=-7.0 / 4.0, rate=1.0 / 125.0),
            CoefSpec(kind="sinusoid", amplitude=-1.0, rate=1.0 / 50.0),
        ),
        d=1,
    )


class TestSignals:
    def test_square_wave_halves(self):
        r = square_wave(period=200)
        assert signal_eval(r, 0) == 1.0
        assert signal_eval(r, 50) == 1.0
        assert signal_eval(r, 99) == 1.0
        assert signal_eval(r, 100) == -1.0
        assert signal_eval(r, 150) == -1.0
        assert signal_eval(r, 200) == 1.0

    def test_square_wave_phase_and_prehistory(self):
        r = square_wave(period=4, amplitude=2.0, phase=1.0)
        assert signal_eval(r, 1) == 2.0
        assert signal_eval(r, 3) == -2.0
        # Before the phase origin the wave holds its starting value.
        assert signal_eval(r, 0) == 2.0
        assert signal_eval(r, -10) == 2.0

    def test_windowed_sinusoid_window_is_open_left(self):
        w = windowed_sinusoid(200, 500, amplitude=0.1, rate=10.0)
        assert signal_eval(w, 200) == 0.0
        assert signal_eval(w, 300) == pytest.approx(0.1 * math.cos(3000.0), abs=1e-15)
        assert signal_eval(w, 500) == pytest.approx(0.1 * math.cos(5000.0), abs=1e-15)
        assert signal_eval(w, 501) == 0.0

    def test_sinusoid_and_constant(self):
        s = sinusoid(amplitude=2.0, rate=0.5, phase=0.25)
        assert signal_eval(s, 3) == pytest.approx(2.0 * math.cos(1.75), abs=1e-15)
        assert signal_eval(constant_signal(-1.5), 123) == -1.5
        assert signal_eval(zero_signal(), 7) == 0.0

    def test_table(self):
        s = table_signal([1.0, -2.0, 3.0], t_start=10)
        assert signal_eval(s, 9) == 0.0
        assert signal_eval(s, 10) == 1.0
        assert signal_eval(s, 12) == 3.0
        assert signal_eval(s, 13) == 0.0

    def test_white_noise_is_bounded_and_pure(self):
        w = white_noise(amplitude=0.5, seed=3)
        samples = [signal_eval(w, t) for t in range(-100, 2000)]
        assert max(abs(v) for v in samples) <= 0.5
        # Purity: re-evaluation after touching other times gives the same value.
        ref = signal_eval(w, 700)
        for t in range(650, 750):
            signal_eval(w, t)
        assert signal_eval(w, 700) == ref
        assert abs(np.mean(samples)) < 0.02

    def test_white_noise_seeds_differ(self):
        a = [signal_eval(white_noise(1.0, seed=1), t) for t in range(50)]
        b = [signal_eval(white_noise(1.0, seed=2), t) for t in range(50)]
        assert a != b

    def test_rejects_bad_specs(self):
        with pytest.raises(ValueError):
            square_wave(period=0)
        with pytest.raises(ValueError):
            windowed_sinusoid(10, 5, 1.0, 1.0)
        with pytest.raises(ValueError):
            table_signal([])


class TestCoefSpecs:
    def test_constant(self):
        assert coef_eval(CoefSpec.const(1.25), 999) == 1.25

    def test_sinusoid_cos_and_sin(self):
        c = CoefSpec(kind="sinusoid", offset=3.25, amplitude=-1.75, rate=1.0 / 125.0)
        assert coef_eval(c, 0) == pytest.approx(1.5, abs=1e-15)
        s = CoefSpec(kind="sinusoid", amplitude=-2.0, rate=1.0 / 300.0, trig="sin")
        assert coef_eval(s, 0) == 0.0
        assert coef_eval(s, 300) == pytest.approx(-2.0 * math.sin(1.0), abs=1e-15)

    def test_piecewise(self):
        c = CoefSpec(kind="piecewise", times=(0, 100), values=(1.0, -1.0))
        assert coef_eval(c, -5) == 1.0
        assert coef_eval(c, 99) == 1.0
        assert coef_eval(c, 100) == -1.0

    def test_table_clamps_at_ends(self):
        c = CoefSpec(kind="table", values=(0.5, 0.6, 0.7), t_start=10)
        assert coef_eval(c, 0) == 0.5
        assert coef_eval(c, 11) == 0.6
        assert coef_eval(c, 99) == 0.7

    def test_rejects_bad_piecewise(self):
        with pytest.raises(ValueError):
            CoefSpec(kind="piecewise", times=(5, 5), values=(1.0, 2.0))


class TestSchedule:
    def test_demo_values_at_zero(self):
        a, b = demo_schedule().coeffs_at(0)
        np.testing.assert_allclose(a, [2.0, 0.0], rtol=0, atol=1e-15)
        np.testing.assert_allclose(b, [1.5, -1.0], rtol=0, atol=1e-15)

    def test_constant_round_trip(self):
        params = PlantParams(a=(0.3, -0.1), b=(2.0, 1.0), d=1)
        sched = CoefficientSchedule.constant(params)
        assert sched.is_constant()
        assert sched.params_at(123) == params

    def test_demo_horizon_is_admissible(self):
        demo_schedule().validate_horizon(0, 1000)

    def test_flags_minimum_phase_loss(self):
        sched = CoefficientSchedule(
            a=(),
            b=(CoefSpec.const(1.0), CoefSpec(kind="sinusoid", amplitude=2.0, rate=0.05)),
            d=1,
        )
        with pytest.raises(AdmissibilityError, match="t = "):
            sched.validate_horizon(0, 200)

    def test_flags_gain_sign_flip(self):
        sched = CoefficientSchedule(
            a=(), b=(CoefSpec(kind="piecewise", times=(0, 50), values=(1.0, -1.0)),), d=1
        )
        with pytest.raises(AdmissibilityError, match="sign"):
            sched.validate_horizon(0, 100)


class TestPlantStep:
    def test_single_step(self):
        sched = CoefficientSchedule.constant(PlantParams(a=(0.5,), b=(2.0,), d=1))
        state = PlantState(n=1, m=0, d=1, y_hist=[1.0])
        assert plant_step(state, sched, 0, u_t=0.3, w_next=0.0) == pytest.approx(0.1, abs=1e-15)

    def test_pure_noise_from_rest(self):
        sched = CoefficientSchedule.constant(PlantParams(a=(0.4,), b=(1.0, 0.2), d=1))
        state = PlantState(n=1, m=1, d=1)
        assert plant_step(state, sched, 0, u_t=0.0, w_next=1.0) == 1.0

    def test_two_step_delay_alignment(self):
        # y(t+1) = u(t-1) with d = 2: the first input surfaces two steps later.
        sched = CoefficientSchedule.constant(PlantParams(a=(), b=(1.0,), d=2))
        state = PlantState(n=0, m=0, d=2)
        y1 = plant_step(state, sched, 0, u_t=5.0, w_next=0.0)
        state.push_y(y1)
        y2 = plant_step(state, sched, 1, u_t=7.0, w_next=0.0)
        assert y1 == 0.0
        assert y2 == 5.0

    def test_matches_direct_recursion(self):
        rng = np.random.default_rng(41)
        for d in (1, 2):
            plant = PlantParams(a=(0.6, -0.3), b=(1.5, 0.4), d=d)
            sched = CoefficientSchedule.constant(plant)
            T = 60
            u = rng.uniform(-1, 1, T)
            w = rng.uniform(-0.2, 0.2, T + 1)
            # Oracle: plain nested recursion on zero-extended arrays.
            y_ref = [0.0] * (T + 1)
            for t in range(T):
                acc = w[t + 1]
                for i, ai in enumerate(plant.a, start=1):
                    if t + 1 - i >= 0:
                        acc -= ai * y_ref[t + 1 - i]
                for i, bi in enumerate(plant.b):
                    if t + 1 - d - i >= 0:
                        acc += bi * u[t + 1 - d - i]
                y_ref[t + 1] = acc
            state = PlantState(n=2, m=1, d=d)
            y = [0.0] * (T + 1)
            for t in range(T):
                y[t + 1] = plant_step(state, sched, t, u_t=u[t], w_next=w[t + 1])
                state.push_y(y[t + 1])
            np.testing.assert_allclose(y, y_ref, rtol=0, atol=1e-12)


class TestWbar:
    def test_unit_delay_shifts_by_one(self):
        w = table_signal([1.0], t_start=5)  # impulse at t = 5
        out = wbar_sequence(PolyZ((1.0,)), w, t0=0, T=10)
        expected = np.zeros(11)
        expected[4] = 1.0
        np.testing.assert_allclose(out, expected, rtol=0, atol=0)

    def test_zero_disturbance(self):
        out = wbar_sequence(PolyZ((1.0, 0.5)), zero_signal(), t0=-3, T=6)
        np.testing.assert_allclose(out, np.zeros(7), rtol=0, atol=0)

    def test_two_step_filter(self):
        w = table_signal([2.0, -1.0, 4.0], t_start=0)
        out = wbar_sequence((1.0, 0.5), w, t0=-2, T=6)
        # wbar(t) = w(t+2) + 0.5 w(t+1)
        expected = [2.0, -1.0 + 1.0, 4.0 - 0.5, 2.0, 0.0, 0.0, 0.0]
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


class TestPredictorForm:
    """Open-loop check that the split parameters satisfy the d-step predictor."""

    @pytest.mark.parametrize(
        "a, b, d, L",
        [
            ((0.7, -0.2), (2.0, 0.5), 1, (1.0, 0.0, -0.5)),
            ((0.4,), (1.0, 0.3), 2, (1.0, -0.4)),
            ((-0.9, 0.3), (2.5,), 3, (1.0, 0.2)),
        ],
    )
    def test_weighted_output_matches_regressor_form(self, a, b, d, L):
        plant = PlantParams(a=a, b=b, d=d)
        ref = ReferenceModel(L=PolyZ(L), H=PolyZ((1.0,)), d=d)
        theta = to_predictor_params(plant, ref).theta_star()
        n, m = plant.n, plant.m
        T = 120
        u_sig = white_noise(1.0, seed=11)
        w_sig = table_signal(list(np.random.default_rng(13).uniform(-0.3, 0.3, T)), t_start=1)
        sched = CoefficientSchedule.constant(plant)
        state = PlantState(n=n, m=m, d=d)
        y = [0.0] * (T + 1)
        u = [signal_eval(u_sig, t) for t in range(T + 1)]
        for t in range(T):
            y[t + 1] = plant_step(state, sched, t, u_t=u[t], w_next=signal_eval(w_sig, t + 1))
            state.push_y(y[t + 1])
        wbar = wbar_sequence(predictor_F(ref, plant), w_sig, t0=0, T=T)
        l_coeffs = ref.L.coeffs
        worst = 0.0
        for t in range(max(n, m + d) + len(l_coeffs), T - d):
            ybar_future = sum(l_coeffs[j] * y[t + d - j] for j in range(len(l_coeffs)))
            phi = [y[t - i] for i in range(n)] + [u[t - i] for i in range(m + d)]
            worst = max(worst, abs(ybar_future - float(np.dot(phi, theta)) - wbar[t]))
        assert worst <= 1e-9


def predictor_F(ref, plant):
    from mraclab.poly import predictor_split

    F, _ = predictor_split(ref.L, plant.a_poly(), plant.d)
    return F
