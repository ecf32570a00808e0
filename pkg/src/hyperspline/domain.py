"""Admissible invariant domain of incompressible deformations and its map.

For an incompressible material the isochoric invariants (I1, I2) cannot
fill the whole quadrant: they are confined to a cusp-shaped region with
apex at (3, 3) whose lower and upper boundaries are traced by uniaxial
and equibiaxial deformation.  Both boundaries are roots in I2 of the
cubic

    C(I1, I2) = I2^3 - I1^2 I2^2 / 4 - 9 I1 I2 / 2 + I1^3 + 27/4 = 0,

which has exactly one spurious real root below 3 for every I1 > 3.

The map below sends this curved band to the unit square: the abscissa is
an affine rescaling of I1 and the ordinate measures the relative position
between the two boundaries, optionally after a monotone transform of I2
whose convexity is compatible with polyconvex energies.  A small width
floor ``delta`` keeps the map well defined at the apex, where the band
collapses to a point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQRT3 = math.sqrt(3.0)
_SHIFT = 3.0 * _SQRT3  # value of I2^(3/2) at the undeformed state


@dataclass(frozen=True)
class DomainMapConfig:
    """Parameters of the admissible-domain map.

    ``u_min``/``u_max`` bound the I1 axis, ``delta`` is the width floor
    regularising the apex, and ``use_polyconvex`` toggles the monotone
    I2 -> I2^(3/2) - 3*sqrt(3) transform of the second invariant.
    """

    u_max: float
    u_min: float = 3.0
    delta: float = 1e-6
    use_polyconvex: bool = True

    def __post_init__(self):
        if not self.u_max > self.u_min:
            raise ValueError("u_max must exceed u_min")
        if self.u_min < 3.0 - 1e-9:
            raise ValueError("u_min must be at least 3")
        if self.delta < 0.0:
            raise ValueError("delta must be nonnegative")


@dataclass(frozen=True)
class BoundaryEval:
    """Boundary roots of the admissibility cubic and their I1-derivatives."""

    i2_lo: float
    i2_hi: float
    d_lo: float
    d_hi: float


@dataclass(frozen=True)
class MapJacobian:
    dxi_di1: float
    deta_di1: float
    deta_di2: float


def cubic_residual(i1: float, i2: float) -> float:
    """C(I1, I2); zero on the boundary, negative strictly inside."""
    i1 = float(i1)
    i2 = float(i2)
    return (i2 ** 3 - 0.25 * i1 * i1 * i2 * i2 - 4.5 * i1 * i2
            + i1 ** 3 + 6.75)


def _shifted_cubic(i1: float):
    """Coefficients of C(I1, 3 + y) = y^3 + q2 y^2 + q1 y + q0.

    The factored forms of q1 and q0 avoid the catastrophic cancellation
    the monomial expansion suffers near the apex, which is what lets one
    Newton step reach machine-precision roots there.
    """
    q2 = (36.0 - i1 * i1) / 4.0
    q1 = -1.5 * (i1 - 3.0) * (i1 + 6.0)
    q0 = (i1 - 3.0) ** 2 * (i1 + 3.75)
    return q2, q1, q0


def _cubic_val_d2(i1: float, i2: float):
    """C and dC/dI2 evaluated through the shifted, factored form."""
    q2, q1, q0 = _shifted_cubic(i1)
    y = i2 - 3.0
    val = ((y + q2) * y + q1) * y + q0
    d2 = (3.0 * y + 2.0 * q2) * y + q1
    return val, d2


def _cubic_d1(i1: float, i2: float) -> float:
    """dC/dI1 in the shifted form (equals -I1*I2^2/2 - 9*I2/2 + 3*I1^2)."""
    y = i2 - 3.0
    return (-0.5 * i1) * y * y - 1.5 * (2.0 * i1 + 3.0) * y + (i1 - 3.0) * (3.0 * i1 + 4.5)


def boundary(i1: float) -> BoundaryEval:
    """Lower/upper admissible bounds on I2 at the given I1, with derivatives.

    Solves the monic cubic by the trigonometric three-real-root method,
    polishes each root with one Newton step, discards the spurious root
    below 3, and differentiates the remaining roots implicitly:
    I2' = -(dC/dI1) / (dC/dI2).  At the apex both bounds equal 3 and the
    common tangent slope is 1.
    """
    i1 = float(i1)
    if i1 < 3.0 - 1e-9:
        raise ValueError(f"I1 must be at least 3, got {i1!r}")
    if i1 <= 3.0:
        return BoundaryEval(3.0, 3.0, 1.0, 1.0)

    a = -0.25 * i1 * i1
    b = -4.5 * i1
    c = i1 ** 3 + 6.75
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    m = 2.0 * math.sqrt(-p / 3.0)
    arg = min(1.0, max(-1.0, 3.0 * q / (p * m)))
    phi = math.acos(arg) / 3.0
    shift = -a / 3.0
    roots = []
    for k in range(3):
        r = m * math.cos(phi - 2.0 * math.pi * k / 3.0) + shift
        val, d2 = _cubic_val_d2(i1, r)
        if abs(d2) > 1e-30:
            r = r - val / d2
        roots.append(r)

    kept = sorted(r for r in roots if r >= 3.0 - 1e-9)
    if not kept:  # round-off collapse immediately next to the apex
        kept = [3.0]
    lo, hi = kept[0], kept[-1]

    def _slope(root: float) -> float:
        _, d2 = _cubic_val_d2(i1, root)
        if abs(d2) < 1e-30:
            return 1.0
        return -_cubic_d1(i1, root) / d2

    return BoundaryEval(i2_lo=lo, i2_hi=hi, d_lo=_slope(lo), d_hi=_slope(hi))


def poly_transform(i2: float):
    """Polyconvexity-compatible transform of I2 and its derivative.

    Returns ``(I2^(3/2) - 3*sqrt(3), 1.5*sqrt(I2))``; the shift zeroes the
    transform at the undeformed state.  Values within round-off below the
    floor I2 = 3 are clamped to it.
    """
    i2 = float(i2)
    if i2 < 3.0 - 1e-9:
        raise ValueError(f"I2 must be at least 3, got {i2!r}")
    i2 = max(i2, 3.0)
    s = math.sqrt(i2)
    return i2 * s - _SHIFT, 1.5 * s


def poly_transform_inverse(value: float) -> float:
    """Inverse of the polyconvex transform."""
    x = float(value) + _SHIFT
    if x < 0.0:
        raise ValueError("transformed value below the admissible range")
    c = float(np.cbrt(x))
    return c * c


def _transform(i2: float, cfg: DomainMapConfig):
    if cfg.use_polyconvex:
        return poly_transform(i2)
    return float(i2), 1.0


def _transform_inverse(value: float, cfg: DomainMapConfig) -> float:
    if cfg.use_polyconvex:
        return poly_transform_inverse(value)
    return float(value)


def _check_i1(i1: float, cfg: DomainMapConfig) -> float:
    grace = 1e-9 * (1.0 + abs(i1))
    if i1 < cfg.u_min - grace or i1 > cfg.u_max + grace:
        raise ValueError(f"I1 = {i1!r} outside [{cfg.u_min}, {cfg.u_max}]")
    return min(max(float(i1), cfg.u_min), cfg.u_max)


def _band(i1: float, cfg: DomainMapConfig):
    """Transformed boundary values, their derivatives and effective width."""
    be = boundary(i1)
    t_lo, tp_lo = _transform(max(be.i2_lo, 3.0), cfg)
    t_hi, tp_hi = _transform(max(be.i2_hi, 3.0), cfg)
    d_lo = tp_lo * be.d_lo
    d_hi = tp_hi * be.d_hi
    gap = t_hi - t_lo
    dgap = d_hi - d_lo
    eff = math.hypot(gap, cfg.delta)
    deff = gap * dgap / eff if eff > 0.0 else 0.0
    return t_lo, d_lo, gap, dgap, eff, deff


def width(i1: float, cfg: DomainMapConfig):
    """Effective band width ``sqrt(gap^2 + delta^2)`` and its I1-derivative."""
    i1 = _check_i1(i1, cfg)
    _, _, _, _, eff, deff = _band(i1, cfg)
    return eff, deff


def map_forward(i1: float, i2: float, cfg: DomainMapConfig):
    """Map an admissible point (I1, I2) to unit-square coordinates (xi, eta).

    Admissibility is checked with a relative tolerance of 1e-9 on the
    second invariant; within that tolerance eta is clamped to [0, 1],
    beyond it the point is rejected.
    """
    i1 = _check_i1(i1, cfg)
    t, tp = _transform(i2, cfg)
    t_lo, _, _, _, eff, _ = _band(i1, cfg)
    tol = 1e-9 * (1.0 + abs(i2)) * max(tp, 1.0)
    if t < t_lo - tol or t > t_lo + eff + tol:
        raise ValueError(f"point (I1, I2) = ({i1!r}, {i2!r}) is not admissible")
    xi = (i1 - cfg.u_min) / (cfg.u_max - cfg.u_min)
    eta = (t - t_lo) / eff if eff > 0.0 else 0.0
    return min(max(xi, 0.0), 1.0), min(max(eta, 0.0), 1.0)


def map_inverse(xi: float, eta: float, cfg: DomainMapConfig):
    """Map unit-square coordinates back to invariants (I1, I2)."""
    xi = float(xi)
    eta = float(eta)
    if not -1e-12 <= xi <= 1.0 + 1e-12:
        raise ValueError(f"xi = {xi!r} outside [0, 1]")
    if not -1e-12 <= eta <= 1.0 + 1e-12:
        raise ValueError(f"eta = {eta!r} outside [0, 1]")
    xi = min(max(xi, 0.0), 1.0)
    eta = min(max(eta, 0.0), 1.0)
    i1 = cfg.u_min + xi * (cfg.u_max - cfg.u_min)
    t_lo, _, _, _, eff, _ = _band(i1, cfg)
    i2 = _transform_inverse(t_lo + eta * eff, cfg)
    return i1, max(i2, 3.0)


def map_jacobian(i1: float, i2: float, cfg: DomainMapConfig) -> MapJacobian:
    """Partial derivatives of (xi, eta) with respect to (I1, I2)."""
    i1 = _check_i1(i1, cfg)
    t, tp = _transform(i2, cfg)
    t_lo, d_lo, _, _, eff, deff = _band(i1, cfg)
    if eff <= 0.0:
        raise ValueError("zero band width; use delta > 0 to evaluate at the apex")
    dxi = 1.0 / (cfg.u_max - cfg.u_min)
    deta_di2 = tp / eff
    deta_di1 = (-d_lo * eff - (t - t_lo) * deff) / (eff * eff)
    return MapJacobian(dxi_di1=dxi, deta_di1=deta_di1, deta_di2=deta_di2)


def chain_rule(w_xi: float, w_eta: float, jac: MapJacobian):
    """Convert unit-square energy gradients to invariant-space gradients."""
    w1 = w_xi * jac.dxi_di1 + w_eta * jac.deta_di1
    w2 = w_eta * jac.deta_di2
    return float(w1), float(w2)
