"""Plant and predictor parameter spaces.

A plant is the difference equation

    y(t) + sum_{i=1}^n a_i y(t-i) = sum_{i=0}^m b_i u(t-d-i) + w(t)

with unit leading output coefficient, b0 != 0 and B(z^-1) = sum b_i z^-i
having all roots strictly inside the unit circle (minimum phase). A stable
reference model L(z^-1) y*(t) = z^-d H(z^-1) r(t) induces the predictor
reparameterization (alpha, beta) through the split L = F A + z^-d alpha,
beta = F B, under which the weighted output ybar(t) = y(t) + sum l_j y(t-j)
satisfies ybar(t+d) = phi(t)^T theta* + wbar(t) with the regressor
phi(t) = (y(t)..y(t-n+1), u(t)..u(t-m-d+1)).

This module holds the parameter containers, the plant-to-predictor map,
and the hyperrectangle machinery the projected estimator needs: building
a predictor-space box from a plant-space box, its norm (largest Euclidean
norm over the box), and the spectral floor that lower-bounds every decay
rate at which closed-loop signals can be bounded.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .poly import PolyZ, max_root_modulus, poly_mul, predictor_split, schur_stable

__all__ = [
    "AdmissibilityError",
    "PlantParams",
    "ReferenceModel",
    "PredictorParams",
    "ParamBox",
    "to_predictor_params",
    "build_param_box",
    "box_norm",
    "spectral_floor",
]


class AdmissibilityError(ValueError):
    """A parameter set violates the standing admissibility assumptions."""


@dataclass(frozen=True)
class PlantParams:
    """Constant plant coefficients (a_1..a_n, b_0..b_m) with input delay d."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    d: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if self.d < 1:
            raise AdmissibilityError("input delay d must be at least 1")
        if not self.b:
            raise AdmissibilityError("b must contain at least b0")
        if self.b[0] == 0.0:
            raise AdmissibilityError("b0 must be nonzero (otherwise the true delay exceeds d)")
        if not all(math.isfinite(v) for v in self.a + self.b):
            raise AdmissibilityError("plant coefficients must be finite")
        if not schur_stable(self.b_poly()):
            raise AdmissibilityError(
                "B(z^-1) must have all roots strictly inside the unit circle"
            )

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def m(self) -> int:
        return len(self.b) - 1

    def a_poly(self) -> PolyZ:
        return PolyZ((1.0,) + self.a)

    def b_poly(self) -> PolyZ:
        return PolyZ(self.b)


@dataclass(frozen=True)
class ReferenceModel:
    """Stable reference model L(z^-1) y*(t) = z^-d H(z^-1) r(t)."""

    L: PolyZ
    H: PolyZ
    d: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise AdmissibilityError("reference delay d must be at least 1")
        if not self.L.is_monic():
            raise AdmissibilityError("L must be monic in z^0")
        if not schur_stable(self.L):
            raise AdmissibilityError("L must have all roots strictly inside the unit circle")
        # H may always carry a direct term; beyond that its depth is capped
        # so that ybar*(t+d) depends on r(t), r(t-1), ... but never on
        # reference samples older than the L recursion can supply.
        if self.H.degree > max(self.order - self.d, 0):
            raise AdmissibilityError(
                f"deg H = {self.H.degree} exceeds max(deg L - d, 0) = "
                f"{max(self.order - self.d, 0)}"
            )

    @property
    def order(self) -> int:
        """Order n' of the reference recursion (degree of L)."""
        return self.L.degree


@dataclass(frozen=True)
class PredictorParams:
    """Predictor-space parameters theta* = (alpha_0..alpha_{n-1}, beta_0..beta_{m+d-1})."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        object.__setattr__(self, "beta", tuple(float(v) for v in self.beta))
        if not self.beta:
            raise AdmissibilityError("beta must contain at least beta0")

    @property
    def dim(self) -> int:
        return len(self.alpha) + len(self.beta)

    def theta_star(self) -> np.ndarray:
        return np.array(self.alpha + self.beta)


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned hyperrectangle with lo[i] <= hi[i] in every coordinate."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise AdmissibilityError("box needs matching, non-empty lo/hi")
        if not all(math.isfinite(v) for v in lo + hi):
            raise AdmissibilityError("box bounds must be finite")
        if any(l > h for l, h in zip(lo, hi)):
            raise AdmissibilityError("box needs lo[i] <= hi[i] in every coordinate")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has dimension {x.shape}, box has {self.dim}")
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    def clamp(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has dimension {x.shape}, box has {self.dim}")
        return np.minimum(np.maximum(x, np.asarray(self.lo)), np.asarray(self.hi))

    def midpoint(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    def corners(self):
        """Iterate over all 2^dim corner tuples."""
        return itertools.product(*zip(self.lo, self.hi))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)

    def inflate(self, margin: float) -> "ParamBox":
        if margin < 0.0:
            raise AdmissibilityError("margin must be non-negative")
        return ParamBox(
            tuple(v - margin for v in self.lo), tuple(v + margin for v in self.hi)
        )


def to_predictor_params(theta: PlantParams, ref: ReferenceModel) -> PredictorParams:
    """Map plant coefficients (a, b) to predictor coefficients (alpha, beta).

    alpha is the d-step remainder of L/A (n coefficients) and beta = F B
    (m + d coefficients, beta0 = b0 exactly since f0 = 1).
    """
    if theta.d != ref.d:
        raise AdmissibilityError("plant and reference model disagree on the delay d")
    if ref.order > theta.n:
        raise AdmissibilityError(
            f"reference order {ref.order} exceeds plant order {theta.n}"
        )
    F, alpha = predictor_split(ref.L, theta.a_poly(), theta.d)
    beta = poly_mul(F, theta.b_poly())
    return PredictorParams(alpha=alpha.coeffs[: theta.n], beta=beta.coeffs)


def _beta0_gate(lo: float, hi: float) -> None:
    if lo <= 0.0 <= hi:
        raise AdmissibilityError(
            "beta0 interval of the predictor box contains 0; the control law "
            "divides by beta0, so its sign must be fixed over the box"
        )


def build_param_box(
    s_ab: ParamBox,
    ref: ReferenceModel,
    n_a: int,
    samples: int = 256,
    margin: float = 0.0,
    seed: int = 0,
) -> ParamBox:
    """Hyperrectangle hull of the predictor-space image of a plant-space box.

    The first n_a coordinates of s_ab are the a-coefficients, the remaining
    m + 1 the b-coefficients. The map is evaluated at every corner of s_ab
    plus `samples` uniform interior points; per-coordinate extrema, inflated
    by `margin`, give the box. For d = 1 each output coordinate is affine in
    (a, b), so the corner sweep alone is exact and samples only confirm it.
    For d >= 2 the result is a sampled outer estimate; use margin > 0 for
    slack. Every evaluated plant must be admissible, and the resulting
    beta0 interval must exclude zero.
    """
    if not 0 <= n_a <= s_ab.dim - 1:
        raise AdmissibilityError(
            f"n_a = {n_a} incompatible with a box of dimension {s_ab.dim}"
        )
    d = ref.d

    def image(point) -> np.ndarray:
        plant = PlantParams(a=point[:n_a], b=point[n_a:], d=d)
        return to_predictor_params(plant, ref).theta_star()

    points = [image(c) for c in s_ab.corners()]
    if samples > 0:
        rng = np.random.default_rng(seed)
        points.extend(image(tuple(s_ab.sample(rng))) for _ in range(samples))
    stacked = np.vstack(points)
    lo = stacked.min(axis=0) - margin
    hi = stacked.max(axis=0) + margin
    _beta0_gate(lo[n_a], hi[n_a])
    return ParamBox(tuple(lo), tuple(hi))


def box_norm(box: ParamBox) -> float:
    """Largest Euclidean norm over the box, attained at a corner."""
    return math.sqrt(sum(max(l * l, h * h) for l, h in zip(box.lo, box.hi)))


def spectral_floor(s_ab: ParamBox, ref: ReferenceModel, n_a: int, grid: int = 7) -> float:
    """Largest root modulus of L and of B over a grid sweep of the b-box.

    Closed-loop signals cannot be bounded by c lambda^t envelopes for any
    lambda at or below this value, so decay-rate fits must stay above it.
    Raises if any swept B violates the minimum-phase assumption.
    """
    if not 0 <= n_a <= s_ab.dim - 1:
        raise AdmissibilityError(
            f"n_a = {n_a} incompatible with a box of dimension {s_ab.dim}"
        )
    if grid < 2:
        raise AdmissibilityError("grid must have at least 2 points per axis")
    floor = max_root_modulus(ref.L)
    axes = [
        np.linspace(self_lo, self_hi, grid)
        for self_lo, self_hi in zip(s_ab.lo[n_a:], s_ab.hi[n_a:])
    ]
    for b in itertools.product(*axes):
        if b[0] == 0.0:
            raise AdmissibilityError(f"B at b = {b} is degenerate (b0 = 0)")
        bp = PolyZ(b)
        if not schur_stable(bp):
            raise AdmissibilityError(f"B at b = {b} is not minimum phase")
        floor = max(floor, max_root_modulus(bp))
    return floor
