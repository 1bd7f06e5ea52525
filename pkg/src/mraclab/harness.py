"""Closed-loop orchestration, trace capture, and the verification suite.

One experiment = plant schedule + reference model + estimator box + initial
data + exogenous signals. run_closed_loop executes the certainty-equivalence
loop and records everything needed to re-derive each quantity offline; the
check_* functions then confirm, on the recorded trace, the properties the
projection estimator and the adaptive loop are supposed to have:

* the per-step estimate move is bounded by the normalized prediction error,
  and the parameter error contracts up to a noise term (check_prop1);
* the tracking error, the prediction error, and the parameter error are
  linked by exact algebraic identities (check_identities);
* closed-loop signals admit exponential-decay envelopes driven by the
  reference and disturbance inputs (fit_decay_bound), with tracking-error
  energy finite in the disturbance-free case (tracking_energy).

Trace columns are exact re-loadable decimals, so a saved run can be audited
later without re-simulation (and tampering is detectable, because every
column is cross-checked against the recursions that produced it).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import (
    ControlError,
    control_input,
    init_from_x0,
    prestart_regressors,
    reference_outputs,
    x0_length,
    ybar,
)
from .estimator import EstimatorState, deadzone_flag, estimator_update
from .plant_sim import (
    CoefficientSchedule,
    CoefSpec,
    SignalSpec,
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
from .poly import PolyZ, max_root_modulus, predictor_split
from .system import (
    AdmissibilityError,
    ParamBox,
    PlantParams,
    ReferenceModel,
    box_norm,
    build_param_box,
    to_predictor_params,
)

__all__ = [
    "ConfigError",
    "NumericAbort",
    "ExperimentConfig",
    "config_from_dict",
    "Trace",
    "GroundTruth",
    "ground_truth",
    "run_closed_loop",
    "predictor_residuals",
    "CheckResult",
    "VerificationReport",
    "check_prop1",
    "check_identities",
    "check_trace_consistency",
    "fit_decay_bound",
    "tracking_energy",
    "config_spectral_floor",
    "demo_config",
    "reproduce_example",
    "write_trace_csv",
    "trace_from_csv",
    "write_outputs",
]

OVERFLOW_LIMIT = 1e100
CHECK_TOL = 1e-9
IDENTITY_TOL = 1e-8


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the offending field path."""

    def __init__(self, fieldpath: str, message: str):
        super().__init__(f"{fieldpath}: {message}")
        self.fieldpath = fieldpath


class NumericAbort(RuntimeError):
    """The simulation produced a non-finite or astronomically large value."""


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one closed-loop run depends on, in plain hashable data."""

    schedule: CoefficientSchedule
    ref: ReferenceModel
    box: ParamBox
    delta: float
    t0: int
    steps: int
    x0: tuple[float, ...]
    theta0: tuple[float, ...]
    r: SignalSpec
    w: SignalSpec
    seed: int = 0
    s_ab: ParamBox | None = None
    s_ab_samples: int = 256
    s_ab_margin: float = 0.0
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "theta0", tuple(float(v) for v in self.theta0))

    @property
    def n(self) -> int:
        return self.schedule.n

    @property
    def m(self) -> int:
        return self.schedule.m

    @property
    def d(self) -> int:
        return self.schedule.d

    @property
    def dim_theta(self) -> int:
        return self.n + self.m + self.d

    def validate(self) -> None:
        n, m, d = self.n, self.m, self.d
        if self.ref.d != d:
            raise ConfigError("reference", f"reference delay {self.ref.d} != plant delay {d}")
        if self.ref.order > n:
            raise ConfigError(
                "reference.L", f"order {self.ref.order} exceeds plant order {n}"
            )
        if self.box.dim != self.dim_theta:
            raise ConfigError(
                "estimator.box",
                f"box dimension {self.box.dim} != n+m+d = {self.dim_theta}",
            )
        lo, hi = self.box.lo[n], self.box.hi[n]
        if lo <= 0.0 <= hi:
            raise ConfigError(
                "estimator.box",
                f"beta0 interval [{lo}, {hi}] contains 0; the control law divides by beta0",
            )
        if not self.delta > 0.0:
            raise ConfigError("estimator.delta", "deadzone width must be positive (or inf)")
        if len(self.x0) != x0_length(n, m, d):
            raise ConfigError(
                "sim.x0",
                f"needs {x0_length(n, m, d)} entries for (n={n}, m={m}, d={d}), got {len(self.x0)}",
            )
        if not all(math.isfinite(v) for v in self.x0):
            raise ConfigError("sim.x0", "entries must be finite")
        if len(self.theta0) != self.dim_theta:
            raise ConfigError(
                "sim.theta0", f"needs {self.dim_theta} entries, got {len(self.theta0)}"
            )
        if not self.box.contains(np.array(self.theta0), tol=1e-12):
            raise ConfigError("sim.theta0", "initial estimate must lie inside the box")
        if self.steps < self.ref.order + 2 * d:
            raise ConfigError(
                "sim.steps",
                f"horizon must cover at least n' + 2d = {self.ref.order + 2 * d} steps",
            )
        try:
            self.schedule.validate_horizon(self.t0, self.steps)
        except AdmissibilityError as exc:
            raise ConfigError("plant.schedule", str(exc)) from exc

    # -- serialization ------------------------------------------------------

    def to_config_dict(self) -> dict:
        """Plain-JSON document form (the shape the CLI accepts)."""
        a0, b0 = self.schedule.coeffs_at(self.t0)
        plant: dict = {"a": list(a0), "b": list(b0), "d": self.d}
        if not self.schedule.is_constant():
            plant["schedule"] = {
                "a": [_coef_to_doc(c) for c in self.schedule.a],
                "b": [_coef_to_doc(c) for c in self.schedule.b],
            }
        estimator: dict = {
            "delta": "inf" if math.isinf(self.delta) else self.delta,
            "box": {"lo": list(self.box.lo), "hi": list(self.box.hi)},
        }
        if self.s_ab is not None:
            estimator["s_ab_box"] = {"lo": list(self.s_ab.lo), "hi": list(self.s_ab.hi)}
            estimator["samples"] = self.s_ab_samples
            estimator["margin"] = self.s_ab_margin
        doc = {
            "plant": plant,
            "reference": {"L": list(self.ref.L.coeffs), "H": list(self.ref.H.coeffs)},
            "estimator": estimator,
            "sim": {
                "t0": self.t0,
                "steps": self.steps,
                "x0": list(self.x0),
                "theta0": list(self.theta0),
                "seed": self.seed,
            },
            "signals": {"r": _signal_to_doc(self.r), "w": _signal_to_doc(self.w)},
        }
        if self.label:
            doc["label"] = self.label
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_config_dict(), sort_keys=True, allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _signal_to_doc(spec: SignalSpec) -> dict:
    doc = {"kind": spec.kind}
    if spec.kind == "constant":
        doc["level"] = spec.level
    elif spec.kind == "square_wave":
        doc.update(period=spec.period, amplitude=spec.amplitude, phase=spec.phase)
    elif spec.kind == "sinusoid":
        doc.update(amplitude=spec.amplitude, rate=spec.rate, phase=spec.phase)
    elif spec.kind == "windowed_sinusoid":
        doc.update(
            t_start=spec.t_start, t_end=spec.t_end, amplitude=spec.amplitude, rate=spec.rate
        )
    elif spec.kind == "table":
        doc.update(values=list(spec.values), t_start=spec.t_start)
    elif spec.kind == "white_noise":
        doc.update(amplitude=spec.amplitude, seed=spec.seed)
    return doc


def _coef_to_doc(spec: CoefSpec) -> dict:
    doc = {"kind": spec.kind}
    if spec.kind == "constant":
        doc["value"] = spec.value
    elif spec.kind == "sinusoid":
        doc.update(
            offset=spec.offset,
            amplitude=spec.amplitude,
            rate=spec.rate,
            phase=spec.phase,
            trig=spec.trig,
        )
    elif spec.kind == "piecewise":
        doc.update(times=list(spec.times), values=list(spec.values))
    elif spec.kind == "table":
        doc.update(values=list(spec.values), t_start=spec.t_start)
    return doc


# -- parsing ----------------------------------------------------------------


def _parse_signal(doc, fieldpath: str) -> SignalSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(fieldpath, "expected an object with a 'kind' field")
    kind = doc["kind"]
    try:
        if kind == "zero":
            return zero_signal()
        if kind == "constant":
            return constant_signal(float(doc["level"]))
        if kind == "square_wave":
            return square_wave(
                int(doc["period"]),
                float(doc.get("amplitude", 1.0)),
                float(doc.get("phase", 0.0)),
            )
        if kind == "sinusoid":
            return sinusoid(
                float(doc["amplitude"]), float(doc["rate"]), float(doc.get("phase", 0.0))
            )
        if kind == "windowed_sinusoid":
            return windowed_sinusoid(
                int(doc["t_start"]),
                int(doc["t_end"]),
                float(doc["amplitude"]),
                float(doc["rate"]),
            )
        if kind == "table":
            return table_signal(
                [float(v) for v in doc["values"]], int(doc.get("t_start", 0))
            )
        if kind == "white_noise":
            return white_noise(float(doc["amplitude"]), int(doc.get("seed", 0)))
    except KeyError as exc:
        raise ConfigError(fieldpath, f"missing field {exc.args[0]!r} for kind {kind!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(fieldpath, str(exc))
    raise ConfigError(fieldpath, f"unknown signal kind {kind!r}")


def _parse_coef(doc, fieldpath: str) -> CoefSpec:
    if isinstance(doc, (int, float)):
        return CoefSpec.const(float(doc))
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(fieldpath, "expected a number or an object with a 'kind' field")
    kind = doc["kind"]
    try:
        if kind == "constant":
            return CoefSpec.const(float(doc["value"]))
        if kind == "sinusoid":
            return CoefSpec(
                kind="sinusoid",
                offset=float(doc.get("offset", 0.0)),
                amplitude=float(doc["amplitude"]),
                rate=float(doc["rate"]),
                phase=float(doc.get("phase", 0.0)),
                trig=doc.get("trig", "cos"),
            )
        if kind == "piecewise":
            return CoefSpec(
                kind="piecewise", times=tuple(doc["times"]), values=tuple(doc["values"])
            )
        if kind == "table":
            return CoefSpec(
                kind="table", values=tuple(doc["values"]), t_start=int(doc.get("t_start", 0))
            )
    except KeyError as exc:
        raise ConfigError(fieldpath, f"missing field {exc.args[0]!r} for kind {kind!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(fieldpath, str(exc))
    raise ConfigError(fieldpath, f"unknown coefficient kind {kind!r}")


def _floats(doc, fieldpath: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in doc)
    except (TypeError, ValueError):
        raise ConfigError(fieldpath, "expected an array of numbers")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from its JSON-document form.

    Raises ConfigError (with a dotted field path) on any structural or
    semantic problem. config_from_dict(cfg.to_config_dict()) == cfg for any
    valid configuration.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be an object")
    for key in ("plant", "reference", "estimator", "sim"):
        if key not in doc:
            raise ConfigError(key, "missing section")
    plant = doc["plant"]
    try:
        d = int(plant["d"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("plant.d", "missing or non-integer delay")

    if "schedule" in plant:
        sched = plant["schedule"]
        a_specs = tuple(
            _parse_coef(c, f"plant.schedule.a[{i}]") for i, c in enumerate(sched.get("a", []))
        )
        b_specs = tuple(
            _parse_coef(c, f"plant.schedule.b[{i}]") for i, c in enumerate(sched.get("b", []))
        )
        if not b_specs:
            raise ConfigError("plant.schedule.b", "needs at least one coefficient")
        try:
            schedule = CoefficientSchedule(a=a_specs, b=b_specs, d=d)
        except ValueError as exc:
            raise ConfigError("plant.schedule", str(exc))
    else:
        if "b" not in plant:
            raise ConfigError("plant.b", "missing section")
        try:
            params = PlantParams(
                a=_floats(plant.get("a", ()), "plant.a"),
                b=_floats(plant["b"], "plant.b"),
                d=d,
            )
        except AdmissibilityError as exc:
            raise ConfigError("plant", str(exc))
        schedule = CoefficientSchedule.constant(params)

    ref_doc = doc["reference"]
    try:
        ref = ReferenceModel(
            L=PolyZ(_floats(ref_doc["L"], "reference.L")),
            H=PolyZ(_floats(ref_doc["H"], "reference.H")),
            d=d,
        )
    except KeyError as exc:
        raise ConfigError("reference", f"missing field {exc.args[0]!r}")
    except ValueError as exc:
        raise ConfigError("reference", str(exc))

    sim = doc["sim"]
    try:
        t0 = int(sim.get("t0", 0))
        steps = int(sim["steps"])
        seed = int(sim.get("seed", 0))
    except KeyError as exc:
        raise ConfigError("sim", f"missing field {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError("sim", str(exc))
    x0 = _floats(sim.get("x0", [0.0] * x0_length(schedule.n, schedule.m, d)), "sim.x0")

    est = doc["estimator"]
    raw_delta = est.get("delta", "inf")
    if isinstance(raw_delta, str):
        if raw_delta != "inf":
            raise ConfigError("estimator.delta", f"expected a number or 'inf', got {raw_delta!r}")
        delta = math.inf
    else:
        try:
            delta = float(raw_delta)
        except (TypeError, ValueError):
            raise ConfigError("estimator.delta", "expected a number or 'inf'")

    s_ab = None
    samples = int(est.get("samples", 256))
    margin = float(est.get("margin", 0.0))
    if "s_ab_box" in est:
        sb = est["s_ab_box"]
        try:
            s_ab = ParamBox(lo=_floats(sb["lo"], "estimator.s_ab_box.lo"),
                            hi=_floats(sb["hi"], "estimator.s_ab_box.hi"))
        except KeyError as exc:
            raise ConfigError("estimator.s_ab_box", f"missing field {exc.args[0]!r}")
        except ValueError as exc:
            raise ConfigError("estimator.s_ab_box", str(exc))
    if "box" in est:
        bb = est["box"]
        try:
            box = ParamBox(lo=_floats(bb["lo"], "estimator.box.lo"),
                           hi=_floats(bb["hi"], "estimator.box.hi"))
        except KeyError as exc:
            raise ConfigError("estimator.box", f"missing field {exc.args[0]!r}")
        except ValueError as exc:
            raise ConfigError("estimator.box", str(exc))
    elif s_ab is not None:
        try:
            box = build_param_box(
                s_ab, ref, n_a=schedule.n, samples=samples, margin=margin, seed=seed
            )
        except (AdmissibilityError, ValueError) as exc:
            raise ConfigError("estimator.s_ab_box", str(exc))
    else:
        raise ConfigError("estimator", "needs a 'box' or an 's_ab_box'")

    raw_theta0 = sim.get("theta0", "midpoint")
    if isinstance(raw_theta0, str):
        if raw_theta0 != "midpoint":
            raise ConfigError("sim.theta0", f"expected an array or 'midpoint', got {raw_theta0!r}")
        theta0 = tuple(box.midpoint())
    else:
        theta0 = _floats(raw_theta0, "sim.theta0")

    signals = doc.get("signals", {})
    r = _parse_signal(signals["r"], "signals.r") if "r" in signals else zero_signal()
    w = _parse_signal(signals["w"], "signals.w") if "w" in signals else zero_signal()

    cfg = ExperimentConfig(
        schedule=schedule,
        ref=ref,
        box=box,
        delta=delta,
        t0=t0,
        steps=steps,
        x0=x0,
        theta0=theta0,
        r=r,
        w=w,
        seed=seed,
        s_ab=s_ab,
        s_ab_samples=samples,
        s_ab_margin=margin,
        label=str(doc.get("label", "")),
    )
    cfg.validate()
    return cfg


CONVENTIONS = {
    "r_prestart": "r(t) = 0 for t < t0",
    "w_alignment": "w(t) enters the output emitted at index t",
    "coefficient_sampling": "time-varying coefficients are sampled at emission time",
    "history_padding": "output/input history older than x0 is zero",
    "e_column": "e(t) was computed while emitting y(t); e(t0) = 0",
    "rho_column": "rho(t)/nu(t) gate the update from t to t+1; final row is 0",
    "identity_range": "algebraic identity checks start at t = t0 + d",
}


# ---------------------------------------------------------------------------
# Trace


@dataclass
class Trace:
    """Row-per-time-step record of one closed-loop run (t = t0 .. t0+steps)."""

    t: np.ndarray
    y: np.ndarray
    y_star: np.ndarray
    u: np.ndarray
    eps: np.ndarray
    eps_bar: np.ndarray
    e: np.ndarray
    rho: np.ndarray
    norm_phi: np.ndarray
    theta_hat: np.ndarray  # (rows, p)
    nu: np.ndarray  # (rows, p)
    phi: np.ndarray  # (rows, p)
    r: np.ndarray
    w: np.ndarray
    pre_phi: dict[int, np.ndarray]  # phi(t) for t in [t0-d+1, t0)
    meta: dict = field(default_factory=dict)

    @property
    def rows(self) -> int:
        return len(self.t)

    @property
    def t0(self) -> int:
        return int(self.t[0])

    @property
    def t_end(self) -> int:
        return int(self.t[-1])

    def index(self, t: int) -> int:
        k = t - self.t0
        if not 0 <= k < self.rows:
            raise IndexError(f"time {t} outside trace range [{self.t0}, {self.t_end}]")
        return k

    def phi_at(self, t: int) -> np.ndarray:
        if t < self.t0:
            return self.pre_phi[t - self.t0]
        return self.phi[self.index(t)]

    def norm_phi_at(self, t: int) -> float:
        if t < self.t0:
            v = self.pre_phi[t - self.t0]
            return math.sqrt(float(v @ v))
        return float(self.norm_phi[self.index(t)])


# ---------------------------------------------------------------------------
# Closed loop


def run_closed_loop(cfg: ExperimentConfig) -> Trace:
    """Execute the adaptive loop over t = t0 .. t0 + steps and record a Trace.

    Step order at each time t: advance the reference model, solve the
    control law for u(t) (which freezes phi(t)), then emit y(t+1) with the
    disturbance sample w(t+1), and finally run one estimator update on the
    d-step-lagged regressor. The estimate used to compute u(t) is always
    theta_hat(t), i.e. the one produced after the previous step's update.
    """
    cfg.validate()
    n, m, d = cfg.n, cfg.m, cfg.d
    p = cfg.dim_theta
    t0, T = cfg.t0, cfg.steps
    gain_sign = math.copysign(1.0, cfg.box.lo[n])

    ctrl, plant = init_from_x0(cfg.x0, n, m, d, cfg.ref, t0=t0, gain_sign=gain_sign)
    est = EstimatorState(theta_hat=np.array(cfg.theta0), box=cfg.box, delta=cfg.delta)
    pre_phi = prestart_regressors(cfg.x0, n, m, d)

    rows = T + 1
    col = {
        name: np.zeros(rows)
        for name in ("y", "y_star", "u", "eps", "eps_bar", "e", "norm_phi", "r", "w")
    }
    rho = np.zeros(rows, dtype=int)
    theta_hat = np.zeros((rows, p))
    nu = np.zeros((rows, p))
    phi = np.zeros((rows, p))

    e_pending = 0.0
    for k in range(rows):
        t = t0 + k
        y_star_t, _ = reference_outputs(ctrl, t, cfg.r)
        u_t = control_input(ctrl, est.theta_hat, t)
        phi_t = ctrl.reg.phi(0)
        y_t = ctrl.reg.y[0]
        ybar_t = ybar(ctrl.reg.y, cfg.ref.L)

        col["y"][k] = y_t
        col["y_star"][k] = y_star_t
        col["u"][k] = u_t
        col["eps"][k] = y_t - y_star_t
        col["eps_bar"][k] = ybar_t - ctrl.ybar_star_now
        col["e"][k] = e_pending
        col["norm_phi"][k] = math.sqrt(float(phi_t @ phi_t))
        col["r"][k] = signal_eval(cfg.r, t)
        col["w"][k] = signal_eval(cfg.w, t)
        theta_hat[k] = est.theta_hat
        phi[k] = phi_t

        if k < T:
            # phi(t-d+1) must be read while the y/u buffers are still aligned
            # at time t; pushing y(t+1) shifts the y side one step ahead.
            phi_lag = ctrl.reg.phi(d - 1)
            w_next = signal_eval(cfg.w, t + 1)
            y_next = plant_step(plant, cfg.schedule, t, u_t, w_next)
            if not math.isfinite(y_next) or abs(y_next) > OVERFLOW_LIMIT:
                raise NumericAbort(
                    f"output diverged at t = {t + 1} (y = {y_next!r}); "
                    "check the admissible box and plant schedule"
                )
            plant.push_y(y_next)
            ctrl.reg.push_y(y_next)
            ybar_next = ybar(ctrl.reg.y, cfg.ref.L)
            rec = estimator_update(est, phi_lag, ybar_next)
            e_pending = rec.e_next
            rho[k] = rec.rho
            nu[k] = rec.nu

    for name, arr in col.items():
        if not np.all(np.isfinite(arr)):
            raise NumericAbort(f"non-finite values in column {name}")

    x0_arr = np.array(cfg.x0)
    meta = {
        "dims": {"n": n, "m": m, "d": d, "n_ref": cfg.ref.order, "p": p},
        "t0": t0,
        "steps": T,
        "delta": cfg.delta,
        "x0_norm": float(np.linalg.norm(x0_arr)),
        "gain_sign": gain_sign,
        "config": cfg.to_config_dict(),
        "config_hash": cfg.config_hash(),
        "conventions": dict(CONVENTIONS),
        "nu_available": True,
        "label": cfg.label,
    }
    return Trace(
        t=np.arange(t0, t0 + rows),
        y=col["y"],
        y_star=col["y_star"],
        u=col["u"],
        eps=col["eps"],
        eps_bar=col["eps_bar"],
        e=col["e"],
        rho=rho,
        norm_phi=col["norm_phi"],
        theta_hat=theta_hat,
        nu=nu,
        phi=phi,
        r=col["r"],
        w=col["w"],
        pre_phi=pre_phi,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Ground truth for verification


@dataclass
class GroundTruth:
    """True predictor parameters and filtered noise for a recorded run."""

    constant: bool
    theta_star: np.ndarray | None  # (p,) when the plant is constant
    theta_star_rows: np.ndarray  # (rows, p)
    F: PolyZ | None
    wbar: np.ndarray | None  # aligned with wbar_t0, constant plants only
    wbar_t0: int

    def wbar_at(self, t: int) -> float:
        if self.wbar is None:
            raise ValueError("filtered noise is only defined for constant plants")
        k = t - self.wbar_t0
        if not 0 <= k < len(self.wbar):
            raise IndexError(f"wbar not materialized at t = {t}")
        return float(self.wbar[k])


def ground_truth(cfg: ExperimentConfig) -> GroundTruth:
    """True (alpha, beta) per row, plus the predictor noise for constant plants."""
    rows = cfg.steps + 1
    if cfg.schedule.is_constant():
        params = cfg.schedule.params_at(cfg.t0)
        pp = to_predictor_params(params, cfg.ref)
        theta = pp.theta_star()
        F, _ = predictor_split(cfg.ref.L, params.a_poly(), cfg.d)
        wbar_t0 = cfg.t0 - cfg.d + 1
        wbar = wbar_sequence(F, cfg.w, wbar_t0, cfg.steps + cfg.d)
        return GroundTruth(
            constant=True,
            theta_star=theta,
            theta_star_rows=np.tile(theta, (rows, 1)),
            F=F,
            wbar=wbar,
            wbar_t0=wbar_t0,
        )
    stars = np.zeros((rows, cfg.dim_theta))
    for k in range(rows):
        pp = to_predictor_params(cfg.schedule.params_at(cfg.t0 + k), cfg.ref)
        stars[k] = pp.theta_star()
    return GroundTruth(
        constant=False,
        theta_star=None,
        theta_star_rows=stars,
        F=None,
        wbar=None,
        wbar_t0=cfg.t0,
    )


# ---------------------------------------------------------------------------
# Verification checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float  # worst slack; negative means violated by that much
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = f"{status} {self.name} (worst margin {self.margin:.3e})"
        return f"{out} - {self.detail}" if self.detail else out


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)
    fitted: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, margin: float, detail: str = "", tol: float = CHECK_TOL) -> None:
        self.checks.append(CheckResult(name, bool(margin >= -tol), float(margin), detail))

    def lines(self) -> list[str]:
        out = [c.line() for c in self.checks]
        for key, val in self.fitted.items():
            out.append(f"INFO {key} = {val:.6g}" if isinstance(val, float) else f"INFO {key} = {val}")
        return out

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "margin": c.margin, "detail": c.detail}
                for c in self.checks
            ],
            "fitted": self.fitted,
        }


def check_prop1(
    trace: Trace, theta_star=None, wbar=None, wbar_t0: int | None = None
) -> VerificationReport:
    """Estimator-property checks on a recorded trace.

    Always checked: the per-step estimate move is bounded by the gated,
    normalized prediction error. When the true parameters (constant plants)
    and the filtered noise are supplied, additionally checks the
    parameter-error contraction per step and accumulated over the run, and
    - for disturbance-free runs - monotonicity of the parameter error.
    """
    rep = VerificationReport()
    d = trace.meta["dims"]["d"]
    t0 = trace.t0
    T = trace.rows - 1

    worst = math.inf
    for k in range(T):
        move = float(np.linalg.norm(trace.theta_hat[k + 1] - trace.theta_hat[k]))
        if trace.rho[k]:
            norm = trace.norm_phi_at(t0 + k - d + 1)
            bound = abs(trace.e[k + 1]) / norm if norm > 0 else 0.0
        else:
            bound = 0.0
        worst = min(worst, bound - move)
    rep.add("estimate_move_bounded", worst, f"{T} steps")

    if theta_star is None:
        return rep

    theta_star = np.asarray(theta_star, dtype=float)
    if wbar is None or wbar_t0 is None:
        raise ValueError("contraction checks need the filtered noise sequence")
    wbar = np.asarray(wbar, dtype=float)

    def wbar_at(t: int) -> float:
        return float(wbar[t - wbar_t0])

    err_sq = np.sum((trace.theta_hat - theta_star) ** 2, axis=1)
    worst = math.inf
    budget = 0.0
    for k in range(d - 1, T):
        if trace.rho[k]:
            t_lag = t0 + k - d + 1
            norm = trace.norm_phi_at(t_lag)
            allowed = (
                (-0.5 * trace.e[k + 1] ** 2 + 2.0 * wbar_at(t_lag) ** 2) / norm**2
                if norm > 0
                else 0.0
            )
        else:
            allowed = 0.0
        budget += allowed
        worst = min(worst, allowed - (err_sq[k + 1] - err_sq[k]))
    rep.add("parameter_error_contraction_step", worst, f"from t = {t0 + d - 1}")
    total_margin = err_sq[d - 1] + budget - err_sq[T]
    rep.add("parameter_error_contraction_total", total_margin)

    if np.all(trace.w == 0.0):
        err = np.sqrt(err_sq)
        inc = float(np.max(np.diff(err[d - 1 :]))) if T >= d else 0.0
        rep.add("parameter_error_monotone", -inc, "w = 0 run")
    return rep


def check_identities(trace: Trace, theta_star, wbar, wbar_t0: int) -> VerificationReport:
    """Exact algebraic identities linking eps_bar, e, and the parameter error.

    Checked for t >= t0 + d, where the recorded history fully determines
    every term (before that, the arbitrary initial condition x0 breaks the
    predictor identity by construction):

      eps_bar(t) = e(t) + phi(t-d)^T [theta_hat(t-1) - theta_hat(t-d)]
      e(t)       = -phi(t-d)^T [theta_hat(t-1) - theta*] + wbar(t-d)
      eps_bar(t) = -phi(t-d)^T [theta_hat(t-d) - theta*] + wbar(t-d)

    The first is pure bookkeeping (no plant knowledge); the other two hold
    because theta* satisfies the d-step predictor.
    """
    rep = VerificationReport()
    theta_star = np.asarray(theta_star, dtype=float)
    wbar = np.asarray(wbar, dtype=float)
    d = trace.meta["dims"]["d"]
    t0 = trace.t0
    T = trace.rows - 1

    res1 = res2 = res3 = 0.0
    for k in range(d, T + 1):
        phi_lag = trace.phi[k - d]
        wb = float(wbar[t0 + k - d - wbar_t0])
        r1 = trace.eps_bar[k] - trace.e[k] - float(
            phi_lag @ (trace.theta_hat[k - 1] - trace.theta_hat[k - d])
        )
        r2 = trace.e[k] + float(phi_lag @ (trace.theta_hat[k - 1] - theta_star)) - wb
        r3 = trace.eps_bar[k] + float(phi_lag @ (trace.theta_hat[k - d] - theta_star)) - wb
        res1 = max(res1, abs(r1))
        res2 = max(res2, abs(r2))
        res3 = max(res3, abs(r3))
    span = f"t = {t0 + d} .. {t0 + T}"
    rep.add("identity_tracking_vs_prediction", IDENTITY_TOL - res1, span, tol=0.0)
    rep.add("identity_prediction_error", IDENTITY_TOL - res2, span, tol=0.0)
    rep.add("identity_tracking_error", IDENTITY_TOL - res3, span, tol=0.0)
    return rep


def check_trace_consistency(trace: Trace, cfg: ExperimentConfig) -> VerificationReport:
    """Cross-check every stored column against the recursions that made it.

    Used when auditing a reloaded trace file: the plant recursion, the
    control-law closure, the error columns, the regressor norms, and the
    deadzone gates must all be reproducible from the stored data plus the
    configuration. Any edit to a stored value shows up as a residual.
    """
    rep = VerificationReport()
    n, m, d = cfg.n, cfg.m, cfg.d
    t0 = trace.t0
    T = trace.rows - 1
    h = cfg.ref.H.coeffs
    l_coeffs = cfg.ref.L.coeffs

    def r_at(t: int) -> float:
        return signal_eval(cfg.r, t) if t >= t0 else 0.0

    def y_hist(t: int, depth: int) -> list[float]:
        out = []
        for j in range(depth):
            s = t - j
            if s >= t0:
                out.append(float(trace.y[s - t0]))
            else:
                idx = t0 - s
                out.append(float(cfg.x0[idx]) if idx < n + d - 1 else 0.0)
        return out

    def u_at(s: int) -> float:
        if s >= t0:
            return float(trace.u[s - t0])
        idx = (n + d - 1) + (t0 - 1 - s)
        return float(cfg.x0[idx]) if idx < len(cfg.x0) else 0.0

    # Plant recursion: y(t+1) from schedule, history, and w(t+1).
    worst = 0.0
    for k in range(T):
        t = t0 + k
        a, b = cfg.schedule.coeffs_at(t)
        acc = signal_eval(cfg.w, t + 1)
        yh = y_hist(t, n)
        for i, ai in enumerate(a):
            acc -= ai * yh[i]
        for i, bi in enumerate(b):
            acc += bi * u_at(t + 1 - d - i)
        worst = max(worst, abs(acc - float(trace.y[k + 1])))
    rep.add("consistency_plant_recursion", CHECK_TOL - worst, tol=0.0)

    # Control-law closure: phi(t)^T theta_hat(t) = ybar*(t+d).
    worst = 0.0
    for k in range(T + 1):
        t = t0 + k
        target = sum(h[i] * r_at(t - i) for i in range(len(h)))
        worst = max(worst, abs(float(trace.phi[k] @ trace.theta_hat[k]) - target))
    rep.add("consistency_control_closure", CHECK_TOL - worst, tol=0.0)

    # Error columns from y, y*, and the weighted sums.
    worst_eps = worst_bar = 0.0
    for k in range(T + 1):
        t = t0 + k
        worst_eps = max(worst_eps, abs(trace.eps[k] - (trace.y[k] - trace.y_star[k])))
        yb = sum(c * v for c, v in zip(l_coeffs, y_hist(t, len(l_coeffs))))
        target = sum(h[i] * r_at(t - d - i) for i in range(len(h)))
        worst_bar = max(worst_bar, abs(trace.eps_bar[k] - (yb - target)))
    rep.add("consistency_tracking_error", CHECK_TOL - worst_eps, tol=0.0)
    rep.add("consistency_weighted_error", CHECK_TOL - worst_bar, tol=0.0)

    # Prediction-error column: e(t) = ybar(t) - phi(t-d)^T theta_hat(t-1).
    worst = abs(float(trace.e[0]))  # first row is 0 by convention
    for k in range(1, T + 1):
        t = t0 + k
        yb = sum(c * v for c, v in zip(l_coeffs, y_hist(t, len(l_coeffs))))
        pred = float(trace.phi_at(t - d) @ trace.theta_hat[k - 1])
        worst = max(worst, abs(trace.e[k] - (yb - pred)))
    rep.add("consistency_prediction_error", CHECK_TOL - worst, tol=0.0)

    # Regressor norms and deadzone gates.
    worst = 0.0
    for k in range(T + 1):
        worst = max(worst, abs(trace.norm_phi[k] - float(np.linalg.norm(trace.phi[k]))))
    rep.add("consistency_regressor_norm", CHECK_TOL - worst, tol=0.0)

    s_norm = box_norm(cfg.box)
    bad = 0
    for k in range(T):
        expect = deadzone_flag(
            trace.e[k + 1], trace.phi_at(t0 + k - d + 1), s_norm, cfg.delta
        )
        bad += int(expect != int(trace.rho[k]))
    bad += int(trace.rho[T] != 0)  # final row gates nothing
    rep.add("consistency_deadzone_gate", -float(bad), f"{T} gates", tol=0.0)

    # Estimates stay inside the box.
    lo = np.asarray(cfg.box.lo)
    hi = np.asarray(cfg.box.hi)
    overs = max(
        float(np.max(lo - trace.theta_hat, initial=0.0)),
        float(np.max(trace.theta_hat - hi, initial=0.0)),
    )
    rep.add("consistency_estimates_in_box", 1e-12 - overs, tol=0.0)
    return rep


def predictor_residuals(trace: Trace, cfg: ExperimentConfig) -> np.ndarray:
    """Residuals of the d-step predictor on recorded closed-loop data.

    For a constant plant, ybar(t) - phi(t-d)^T theta* - wbar(t-d) is zero in
    exact arithmetic for every t >= t0 + d, no matter how u was chosen; the
    returned array holds those residuals (closed-loop data included).
    """
    gt = ground_truth(cfg)
    if not gt.constant:
        raise ValueError("predictor residuals need a constant plant")
    d, t0, T = cfg.d, trace.t0, trace.rows - 1
    l_coeffs = cfg.ref.L.coeffs
    n_pad = cfg.n + d - 1

    def y_at(s: int) -> float:
        if s >= t0:
            return float(trace.y[s - t0])
        idx = t0 - s
        return float(cfg.x0[idx]) if idx < n_pad else 0.0

    out = np.zeros(T + 1 - d)
    for k in range(d, T + 1):
        t = t0 + k
        yb = sum(c * y_at(t - j) for j, c in enumerate(l_coeffs))
        out[k - d] = yb - float(trace.phi[k - d] @ gt.theta_star) - gt.wbar_at(t - d)
    return out


def fit_decay_bound(trace: Trace, lam: float, floor: float | None = None) -> float:
    """Smallest c such that, for every recorded t,

        ||phi(t)|| <= c [ lam^(t-t0) ||x0|| + sum_{j=t0..t} lam^(t-j) (|r(j)| + |w(j)|) ].

    The envelope is computed recursively; lam must lie strictly between the
    spectral floor of the configuration (when supplied) and 1.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"decay rate must lie in (0, 1), got {lam}")
    if floor is not None and lam <= floor:
        raise ValueError(
            f"decay rate {lam} does not exceed the spectral floor {floor:.6f}"
        )
    env = float(trace.meta["x0_norm"])
    c = 0.0
    for k in range(trace.rows):
        drive = abs(trace.r[k]) + abs(trace.w[k])
        env = env + drive if k == 0 else lam * env + drive
        if env <= 0.0:
            if trace.norm_phi[k] > 0.0:
                raise ValueError(
                    f"degenerate fit at t = {trace.t0 + k}: zero envelope, nonzero signal"
                )
            continue
        c = max(c, float(trace.norm_phi[k]) / env)
    return c


def tracking_energy(trace: Trace) -> tuple[float, np.ndarray]:
    """Total and cumulative tracking-error energy sum eps(t)^2 from t0 + d on.

    partial[k] covers t = t0 + d .. t0 + d + k.
    """
    d = trace.meta["dims"]["d"]
    tail = trace.eps[d:] ** 2
    partial = np.cumsum(tail)
    total = float(partial[-1]) if len(partial) else 0.0
    return total, partial


def config_spectral_floor(cfg: ExperimentConfig, stride: int = 1) -> float:
    """Spectral floor of one run: root moduli of L and of B(t) on the horizon."""
    floor = max_root_modulus(cfg.ref.L)
    if cfg.schedule.is_constant():
        times = [cfg.t0]
    else:
        times = range(cfg.t0, cfg.t0 + cfg.steps, max(stride, 1))
    for t in times:
        b = cfg.schedule.coeffs_at(t)[1]
        floor = max(floor, max_root_modulus(PolyZ(b)))
    return floor


# ---------------------------------------------------------------------------
# Trace files


CSV_FMT = "%.17g"


def _csv_header(p: int) -> list[str]:
    return (
        ["t", "y", "y_star", "u", "eps", "eps_bar", "e", "rho", "norm_phi"]
        + [f"theta_hat_{i}" for i in range(p)]
        + ["r", "w"]
    )


def write_trace_csv(trace: Trace, path) -> None:
    """Exact decimal dump, one row per time step, reloadable bit-for-bit."""
    p = trace.theta_hat.shape[1]
    lines = [",".join(_csv_header(p))]
    for k in range(trace.rows):
        cells = [str(int(trace.t[k]))]
        cells += [
            CSV_FMT % v
            for v in (
                trace.y[k],
                trace.y_star[k],
                trace.u[k],
                trace.eps[k],
                trace.eps_bar[k],
                trace.e[k],
            )
        ]
        cells.append(str(int(trace.rho[k])))
        cells.append(CSV_FMT % trace.norm_phi[k])
        cells += [CSV_FMT % v for v in trace.theta_hat[k]]
        cells.append(CSV_FMT % trace.r[k])
        cells.append(CSV_FMT % trace.w[k])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def trace_from_csv(path, cfg: ExperimentConfig) -> Trace:
    """Reload a stored trace, rebuilding regressor vectors from the columns.

    The regressor entries are pure history reads, so they are reconstructed
    from the y/u columns plus the configuration's initial data rather than
    stored; everything else comes from the file as written.
    """
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    n, m, d = cfg.n, cfg.m, cfg.d
    p = cfg.dim_theta
    if header != _csv_header(p):
        raise ConfigError("trace", "unexpected trace header for this configuration")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    rows = data.shape[0]
    t = data[:, 0].astype(int)
    t0 = int(t[0])

    y_col = data[:, 1]
    u_col = data[:, 3]

    def y_at(s: int) -> float:
        if s >= t0:
            return float(y_col[s - t0])
        idx = t0 - s
        return float(cfg.x0[idx]) if idx < n + d - 1 else 0.0

    def u_at(s: int) -> float:
        if s >= t0:
            return float(u_col[s - t0])
        idx = (n + d - 1) + (t0 - 1 - s)
        return float(cfg.x0[idx]) if idx < len(cfg.x0) else 0.0

    def build_phi(s: int) -> np.ndarray:
        return np.array(
            [y_at(s - i) for i in range(n)] + [u_at(s - j) for j in range(m + d)]
        )

    phi = np.vstack([build_phi(t0 + k) for k in range(rows)])
    pre_phi = {off: build_phi(t0 + off) for off in range(-d + 1, 0)}

    meta = {
        "dims": {"n": n, "m": m, "d": d, "n_ref": cfg.ref.order, "p": p},
        "t0": t0,
        "steps": rows - 1,
        "delta": cfg.delta,
        "x0_norm": float(np.linalg.norm(np.array(cfg.x0))),
        "gain_sign": math.copysign(1.0, cfg.box.lo[n]),
        "config": cfg.to_config_dict(),
        "config_hash": cfg.config_hash(),
        "conventions": dict(CONVENTIONS),
        "nu_available": False,
        "label": cfg.label,
    }
    return Trace(
        t=t,
        y=y_col,
        y_star=data[:, 2],
        u=u_col,
        eps=data[:, 4],
        eps_bar=data[:, 5],
        e=data[:, 6],
        rho=data[:, 7].astype(int),
        norm_phi=data[:, 8],
        theta_hat=data[:, 9 : 9 + p],
        nu=np.zeros((rows, p)),
        phi=phi,
        r=data[:, 9 + p],
        w=data[:, 10 + p],
        pre_phi=pre_phi,
        meta=meta,
    )


PLOT_SCRIPT = """\
# Render with: gnuplot plot.gp
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 1000,760 font ',11'

set output 'tracking.png'
set multiplot layout 2,1 title 'Closed-loop tracking'
set ylabel 'output'
plot 'trace.csv' using 1:2 with lines lw 1.5 title 'y', \\
     'trace.csv' using 1:3 with lines dashtype 2 lw 1.5 title 'y*'
set ylabel 'input'
plot 'trace.csv' using 1:4 with lines lw 1.2 title 'u'
unset multiplot

set output 'estimates.png'
set multiplot layout 2,1 title 'Estimator behaviour'
set ylabel 'theta_hat'
plot {theta_plots}
set ylabel 'tracking error'
plot 'trace.csv' using 1:5 with lines lw 1.2 title 'eps'
unset multiplot
"""


def write_plot_script(trace: Trace, path) -> None:
    p = trace.theta_hat.shape[1]
    cols = ", \\\n     ".join(
        f"'trace.csv' using 1:{10 + i} with lines title 'theta_hat_{i}'" for i in range(p)
    )
    Path(path).write_text(PLOT_SCRIPT.format(theta_plots=cols))


def _regime_rms(trace: Trace) -> dict:
    """RMS tracking error over thirds of the run (before/during/after windows)."""
    t = trace.t
    eps = trace.eps

    def rms(mask) -> float:
        vals = eps[mask]
        return float(np.sqrt(np.mean(vals**2))) if len(vals) else 0.0

    t0, t_end = trace.t0, trace.t_end
    b0, b1 = t0 + (t_end - t0) // 5, t0 + (t_end - t0) // 2
    return {
        f"rms_eps[{t0},{b0}]": rms((t >= t0) & (t <= b0)),
        f"rms_eps({b0},{b1}]": rms((t > b0) & (t <= b1)),
        f"rms_eps[{b1 + (t_end - b1) // 5},{t_end}]": rms(
            (t >= b1 + (t_end - b1) // 5) & (t <= t_end)
        ),
    }


def build_summary(trace: Trace, report: VerificationReport | None = None) -> dict:
    total, _ = tracking_energy(trace)
    lo = np.asarray(trace.meta["config"]["estimator"]["box"]["lo"])
    hi = np.asarray(trace.meta["config"]["estimator"]["box"]["hi"])
    in_box = bool(
        np.all(trace.theta_hat >= lo - 1e-12) and np.all(trace.theta_hat <= hi + 1e-12)
    )
    summary = {
        "config": trace.meta["config"],
        "config_hash": trace.meta["config_hash"],
        "rows": trace.rows,
        "t_range": [trace.t0, trace.t_end],
        "tracking": {
            "energy_total": total,
            **_regime_rms(trace),
        },
        "estimates": {
            "final": [float(v) for v in trace.theta_hat[-1]],
            "min": [float(v) for v in trace.theta_hat.min(axis=0)],
            "max": [float(v) for v in trace.theta_hat.max(axis=0)],
            "within_box": in_box,
            "updates_gated_on": int(np.sum(trace.rho)),
        },
        "conventions": trace.meta["conventions"],
    }
    if trace.meta.get("label"):
        summary["label"] = trace.meta["label"]
    if report is not None:
        summary["checks"] = report.to_dict()
    return summary


def write_outputs(trace: Trace, out_dir, report: VerificationReport | None = None) -> dict:
    """Write trace.csv, summary.json, and plot.gp into out_dir; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / "trace.csv",
        "summary": out / "summary.json",
        "plot": out / "plot.gp",
    }
    write_trace_csv(trace, paths["trace"])
    paths["summary"].write_text(
        json.dumps(build_summary(trace, report), indent=2, allow_nan=False) + "\n"
    )
    write_plot_script(trace, paths["plot"])
    return paths


# ---------------------------------------------------------------------------
# Packaged showcase experiment


def demo_config(steps: int = 1000) -> ExperimentConfig:
    """The packaged showcase run: slowly drifting second-order plant,
    two-periods-back reference weighting, mid-run disturbance burst.

    All four plant coefficients drift sinusoidally; the admissible box is
    the exact predictor-space image of their envelope box. The estimator
    runs without a deadzone; the disturbance 0.1 cos(10 t) is active only on
    200 < t <= 500, so the trace shows clean tracking, degradation, and
    recovery in sequence.
    """
    schedule = CoefficientSchedule(
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
    ref = ReferenceModel(L=PolyZ((1.0, 0.0, -0.5)), H=PolyZ((0.5,)), d=1)
    box = ParamBox(lo=(-2.0, -2.5, 1.5, -1.0), hi=(2.0, 1.5, 5.0, 1.0))
    return ExperimentConfig(
        schedule=schedule,
        ref=ref,
        box=box,
        delta=math.inf,
        t0=0,
        steps=steps,
        x0=(-1.0, -1.0, 0.0),
        theta0=tuple(box.midpoint()),
        r=square_wave(period=200, amplitude=1.0),
        w=windowed_sinusoid(200, 500, amplitude=0.1, rate=10.0),
        seed=0,
        label="showcase",
    )


def reproduce_example(out_dir=None) -> tuple[Trace, dict]:
    """Run the packaged showcase experiment and build its summary.

    When out_dir is given, also writes trace.csv, summary.json, and plot.gp
    there. Returns (trace, summary). The run is fully deterministic: two
    invocations produce byte-identical artifacts.
    """
    cfg = demo_config()
    trace = run_closed_loop(cfg)
    rep = check_prop1(trace)
    if out_dir is not None:
        write_outputs(trace, out_dir, rep)
    return trace, build_summary(trace, rep)
