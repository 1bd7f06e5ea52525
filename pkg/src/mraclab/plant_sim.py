"""Plant stepping, coefficient schedules, and exogenous signal generators.

Conventions used throughout the package:

* The disturbance sample w(t) enters the output emitted at the same index:
  y(t+1) is produced with w(t+1).
* Time-varying coefficients are sampled at emission time: producing y(t+1)
  from data up to time t uses a_i(t), b_i(t).
* Signals are pure functions of (spec, t) - evaluating one sample never
  depends on the horizon or on previous evaluations, so every run is
  reproducible sample-by-sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .system import AdmissibilityError, PlantParams

__all__ = [
    "SignalSpec",
    "signal_eval",
    "zero_signal",
    "constant_signal",
    "square_wave",
    "sinusoid",
    "windowed_sinusoid",
    "table_signal",
    "white_noise",
    "CoefSpec",
    "coef_eval",
    "CoefficientSchedule",
    "PlantState",
    "plant_step",
    "wbar_sequence",
]

SIGNAL_KINDS = (
    "zero",
    "constant",
    "square_wave",
    "sinusoid",
    "windowed_sinusoid",
    "table",
    "white_noise",
)

_NOISE_BLOCK = 512


@dataclass(frozen=True)
class SignalSpec:
    """Declarative description of a scalar signal on integer time."""

    kind: str
    amplitude: float = 0.0
    level: float = 0.0
    period: int = 0
    phase: float = 0.0
    rate: float = 0.0
    t_start: int = 0
    t_end: int = 0
    values: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "square_wave" and self.period < 1:
            raise ValueError("square_wave needs period >= 1")
        if self.kind == "windowed_sinusoid" and self.t_end < self.t_start:
            raise ValueError("windowed_sinusoid needs t_start <= t_end")
        if self.kind == "table" and not self.values:
            raise ValueError("table signal needs at least one value")


def zero_signal() -> SignalSpec:
    return SignalSpec(kind="zero")


def constant_signal(level: float) -> SignalSpec:
    return SignalSpec(kind="constant", level=level)


def square_wave(period: int, amplitude: float = 1.0, phase: float = 0.0) -> SignalSpec:
    """+amplitude on the first half of each period, -amplitude on the second."""
    return SignalSpec(kind="square_wave", period=period, amplitude=amplitude, phase=phase)


def sinusoid(amplitude: float, rate: float, phase: float = 0.0) -> SignalSpec:
    """amplitude * cos(rate * t + phase)."""
    return SignalSpec(kind="sinusoid", amplitude=amplitude, rate=rate, phase=phase)


def windowed_sinusoid(t_start: int, t_end: int, amplitude: float, rate: float) -> SignalSpec:
    """amplitude * cos(rate * t) on the window t_start < t <= t_end, else 0."""
    return SignalSpec(
        kind="windowed_sinusoid", t_start=t_start, t_end=t_end, amplitude=amplitude, rate=rate
    )


def table_signal(values, t_start: int = 0) -> SignalSpec:
    """Explicit samples values[k] at t = t_start + k; zero outside the table."""
    return SignalSpec(kind="table", values=tuple(values), t_start=t_start)


def white_noise(amplitude: float, seed: int = 0) -> SignalSpec:
    """Uniform noise on [-amplitude, amplitude], reproducible per (seed, t)."""
    return SignalSpec(kind="white_noise", amplitude=amplitude, seed=seed)


@lru_cache(maxsize=8192)
def _noise_block(seed: int, block: int) -> tuple[float, ...]:
    # Zig-zag encode the (possibly negative) block index and seed, since
    # seed sequences only accept non-negative integers.
    enc = tuple(2 * v if v >= 0 else -2 * v - 1 for v in (seed, block))
    rng = np.random.default_rng((0x9E3779B9,) + enc)
    return tuple(rng.uniform(-1.0, 1.0, _NOISE_BLOCK))


def signal_eval(spec: SignalSpec, t: int) -> float:
    """Sample the signal at integer time t (pure function)."""
    kind = spec.kind
    if kind == "zero":
        return 0.0
    if kind == "constant":
        return spec.level
    if kind == "square_wave":
        s = t - spec.phase
        if s < 0:
            s = 0.0  # frozen at the start-of-wave value before the phase origin
        return spec.amplitude if (s % spec.period) < spec.period / 2.0 else -spec.amplitude
    if kind == "sinusoid":
        return spec.amplitude * math.cos(spec.rate * t + spec.phase)
    if kind == "windowed_sinusoid":
        if spec.t_start < t <= spec.t_end:
            return spec.amplitude * math.cos(spec.rate * t)
        return 0.0
    if kind == "table":
        i = t - spec.t_start
        if 0 <= i < len(spec.values):
            return spec.values[i]
        return 0.0
    if kind == "white_noise":
        block, offset = divmod(t, _NOISE_BLOCK)
        return spec.amplitude * _noise_block(spec.seed, block)[offset]
    raise ValueError(f"unknown signal kind {kind!r}")


COEF_KINDS = ("constant", "sinusoid", "piecewise", "table")


@dataclass(frozen=True)
class CoefSpec:
    """One time-varying plant coefficient.

    constant:  value
    sinusoid:  offset + amplitude * trig(rate * t + phase), trig in {cos, sin}
    piecewise: values[k] on [times[k], times[k+1]), values[0] before times[0]
    table:     values[t - t_start], clamped to the table ends
    """

    kind: str
    value: float = 0.0
    offset: float = 0.0
    amplitude: float = 0.0
    rate: float = 0.0
    phase: float = 0.0
    trig: str = "cos"
    times: tuple[int, ...] = ()
    values: tuple[float, ...] = ()
    t_start: int = 0

    def __post_init__(self) -> None:
        if self.kind not in COEF_KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        object.__setattr__(self, "times", tuple(int(v) for v in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "sinusoid" and self.trig not in ("cos", "sin"):
            raise ValueError("sinusoid coefficient needs trig in {'cos', 'sin'}")
        if self.kind == "piecewise":
            if len(self.times) != len(self.values) or not self.values:
                raise ValueError("piecewise coefficient needs matching times/values")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise ValueError("piecewise breakpoints must be strictly increasing")
        if self.kind == "table" and not self.values:
            raise ValueError("table coefficient needs at least one value")

    @staticmethod
    def const(value: float) -> "CoefSpec":
        return CoefSpec(kind="constant", value=value)


def coef_eval(spec: CoefSpec, t: int) -> float:
    kind = spec.kind
    if kind == "constant":
        return spec.value
    if kind == "sinusoid":
        angle = spec.rate * t + spec.phase
        trig = math.cos(angle) if spec.trig == "cos" else math.sin(angle)
        return spec.offset + spec.amplitude * trig
    if kind == "piecewise":
        out = spec.values[0]
        for brk, val in zip(spec.times, spec.values):
            if t >= brk:
                out = val
            else:
                break
        return out
    if kind == "table":
        i = min(max(t - spec.t_start, 0), len(spec.values) - 1)
        return spec.values[i]
    raise ValueError(f"unknown coefficient kind {kind!r}")


@dataclass(frozen=True)
class CoefficientSchedule:
    """Per-coefficient time functions for the plant, plus the fixed delay d."""

    a: tuple[CoefSpec, ...]
    b: tuple[CoefSpec, ...]
    d: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "b", tuple(self.b))
        if self.d < 1:
            raise AdmissibilityError("input delay d must be at least 1")
        if not self.b:
            raise AdmissibilityError("schedule needs at least the b0 coefficient")

    @classmethod
    def constant(cls, params: PlantParams) -> "CoefficientSchedule":
        return cls(
            a=tuple(CoefSpec.const(v) for v in params.a),
            b=tuple(CoefSpec.const(v) for v in params.b),
            d=params.d,
        )

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def m(self) -> int:
        return len(self.b) - 1

    def is_constant(self) -> bool:
        return all(s.kind == "constant" for s in self.a + self.b)

    def coeffs_at(self, t: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Raw coefficient values at time t, without admissibility checks."""
        return (
            tuple(coef_eval(s, t) for s in self.a),
            tuple(coef_eval(s, t) for s in self.b),
        )

    def params_at(self, t: int) -> PlantParams:
        """Validated plant coefficients at time t."""
        a, b = self.coeffs_at(t)
        return PlantParams(a=a, b=b, d=self.d)

    def validate_horizon(self, t0: int, steps: int) -> None:
        """Check admissibility (and a fixed b0 sign) at every emission time.

        Emission times for a run over [t0, t0 + steps] are t0..t0 + steps - 1.
        """
        sign = 0.0
        for t in range(t0, t0 + max(steps, 1)):
            try:
                params = self.params_at(t)
            except AdmissibilityError as exc:
                raise AdmissibilityError(f"schedule inadmissible at t = {t}: {exc}") from exc
            s = math.copysign(1.0, params.b[0])
            if sign == 0.0:
                sign = s
            elif s != sign:
                raise AdmissibilityError(f"b0 changes sign on the horizon (t = {t})")


class PlantState:
    """Ring buffers for the plant recursion, newest first.

    y holds y(t)..y(t-n+1); u holds u(t)..u(t-m-d+1) once the input at the
    current time has been pushed.
    """

    def __init__(self, n: int, m: int, d: int, y_hist=(), u_hist=()):
        self.n, self.m, self.d = n, m, d
        y_hist = [float(v) for v in y_hist][:n]
        u_hist = [float(v) for v in u_hist][: m + d - 1]
        self.y = y_hist + [0.0] * (n - len(y_hist))
        self.u = u_hist + [0.0] * (m + d - 1 - len(u_hist))

    def push_y(self, value: float) -> None:
        if self.n:
            self.y.insert(0, float(value))
            self.y.pop()

    def push_u(self, value: float) -> None:
        self.u.insert(0, float(value))
        if len(self.u) > self.m + self.d:
            self.u.pop()


def plant_step(
    state: PlantState, schedule: CoefficientSchedule, t: int, u_t: float, w_next: float
) -> float:
    """Advance the plant one step: push u(t), return y(t+1).

    Coefficients are sampled at emission time t; the caller is responsible
    for pushing the returned output via state.push_y (the controller side
    shares the same sample).
    """
    a, b = schedule.coeffs_at(t)
    state.push_u(u_t)
    y_next = float(w_next)
    for i, ai in enumerate(a):
        y_next -= ai * state.y[i]
    off = schedule.d - 1
    for i, bi in enumerate(b):
        y_next += bi * state.u[off + i]
    return y_next


def wbar_sequence(F, w: SignalSpec, t0: int, T: int) -> np.ndarray:
    """Forward-filtered disturbance wbar(t) = sum_i f_i w(t + d - i), d = len(F).

    F is the quotient from the predictor split (a PolyZ or plain coefficient
    sequence of exactly d entries). Returns samples for t = t0 .. t0 + T
    inclusive. This is the noise term of the d-step-ahead predictor: the
    weighted output satisfies ybar(t + d) = phi(t)^T theta* + wbar(t).
    """
    f = tuple(float(c) for c in getattr(F, "coeffs", F))
    d = len(f)
    out = np.empty(T + 1)
    for k in range(T + 1):
        t = t0 + k
        out[k] = sum(f[i] * signal_eval(w, t + d - i) for i in range(d))
    return out
