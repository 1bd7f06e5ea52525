"""Polynomials in the unit-delay operator z^-1.

Coefficients are stored densely in ascending powers of z^-1: coeffs[i]
multiplies z^-i. This is the natural indexing for difference equations,
where a polynomial acts on a signal as sum_i c_i x(t - i). Trailing zero
coefficients are legal and only normalized away for display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PolyZ",
    "poly_mul",
    "predictor_split",
    "schur_stable",
    "max_root_modulus",
]

# Roots within this distance of the unit circle count as unstable: the
# admissible region is the open unit disk, so the boundary is rejected.
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class PolyZ:
    """Dense polynomial in z^-1; degree = len(coeffs) - 1, never empty."""

    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(c) for c in self.coeffs)
        if not vals:
            raise ValueError("PolyZ needs at least one coefficient")
        if not all(math.isfinite(c) for c in vals):
            raise ValueError("PolyZ coefficients must be finite")
        object.__setattr__(self, "coeffs", vals)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_monic(self) -> bool:
        """True when the z^0 coefficient is exactly 1."""
        return self.coeffs[0] == 1.0

    def trimmed(self) -> "PolyZ":
        """Copy with trailing zero coefficients dropped (display helper)."""
        last = len(self.coeffs) - 1
        while last > 0 and self.coeffs[last] == 0.0:
            last -= 1
        return PolyZ(self.coeffs[: last + 1])

    def __str__(self) -> str:
        parts = []
        for i, c in enumerate(self.trimmed().coeffs):
            if i == 0:
                parts.append(f"{c:g}")
            elif c != 0.0:
                parts.append(f"{c:+g} z^-{i}")
        return " ".join(parts)


def poly_mul(p: PolyZ, q: PolyZ) -> PolyZ:
    """Product of two delay polynomials (coefficient convolution)."""
    return PolyZ(tuple(np.convolve(p.coeffs, q.coeffs)))


def predictor_split(L: PolyZ, A: PolyZ, d: int) -> tuple[PolyZ, PolyZ]:
    """Split L/A = F + z^-d alpha/A by synthetic long division.

    F collects the first d quotient coefficients of the expansion of L/A in
    powers of z^-1 (so f0 = 1 when both are monic), and alpha is the
    remainder advanced by d steps, padded to exactly deg A coefficients
    (one zero coefficient when A is constant). The exact identity
    L == F*A + z^-d alpha holds coefficient-wise.
    """
    if d < 1:
        raise ValueError("delay d must be a positive integer")
    if not A.is_monic():
        raise ValueError("A must be monic in z^0 (division normalized by a0 = 1)")
    if not L.is_monic():
        raise ValueError("L must be monic in z^0")
    n = A.degree
    if L.degree > n + d - 1:
        raise ValueError(
            f"deg L = {L.degree} exceeds deg A + d - 1 = {n + d - 1}; "
            "the remainder would not fit in deg A coefficients"
        )
    work = list(L.coeffs) + [0.0] * (n + d - len(L.coeffs))
    f = [0.0] * d
    for k in range(d):
        f[k] = work[k]
        if f[k] != 0.0:
            for i in range(1, n + 1):
                work[k + i] -= f[k] * A.coeffs[i]
    alpha = work[d : d + n] if n >= 1 else [0.0]
    return PolyZ(tuple(f)), PolyZ(tuple(alpha))


def schur_stable(p: PolyZ) -> bool:
    """True iff every root of z^deg p(1/z) lies strictly inside the unit circle.

    Runs the Schur-Cohn reduction on the forward-power coefficients. Roots
    within BOUNDARY_TOL of the unit circle are classified unstable, so a
    True answer always certifies a strict stability margin.
    """
    if p.coeffs[0] == 0.0:
        raise ValueError("degenerate polynomial: leading (z^0) coefficient is zero")
    # Ascending powers of z; the leading coefficient c[-1] equals p.coeffs[0].
    c = [float(v) for v in reversed(p.coeffs)]
    while len(c) > 1:
        if abs(c[0]) >= (1.0 - BOUNDARY_TOL) * abs(c[-1]):
            return False
        q0, qn = c[0], c[-1]
        m = len(c) - 1
        c = [qn * c[i + 1] - q0 * c[m - 1 - i] for i in range(m)]
        scale = max(abs(v) for v in c)
        if scale > 0.0:
            c = [v / scale for v in c]
    return True


def max_root_modulus(p: PolyZ) -> float:
    """Largest root modulus of z^deg p(1/z); 0.0 for constants."""
    if p.coeffs[0] == 0.0:
        raise ValueError("degenerate polynomial: leading (z^0) coefficient is zero")
    t = p.trimmed()
    if t.degree == 0:
        return 0.0
    roots = np.roots(t.coeffs)
    return float(np.max(np.abs(roots)))
