"""Smoothing and shape-constraint operators for spline energy models.

The curvature penalty integrates the squared non-mixed second derivatives
of the energy over its parameter square (or over each axis for the
separable split) with per-span Gauss-Legendre quadrature, expressed as
rows of a least-squares block: ``||A_pen @ theta||^2`` equals the
integral exactly because the integrand is piecewise polynomial of degree
at most 6 per axis.  The mixed second derivative is deliberately not
penalised, so additively separable and bilinear surfaces are free.

The inequality operator collects the B-spline coefficients of the first
and second derivative splines along each axis.  Nonnegative coefficients
are sufficient (not necessary) for monotonicity and convexity of the
spline itself, which keeps the constraints linear in theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelKind, ModelSpec, spec_ops


@dataclass
class PenaltyOperator:
    rows: np.ndarray
    quad_order: int


@dataclass
class InequalityOperator:
    """Rows G with the constraint G @ theta <= rhs (rhs is all zeros)."""

    rows: np.ndarray
    rhs: np.ndarray


def _gauss_points(kv, order: int):
    """Gauss-Legendre nodes/weights over every nonempty knot span."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    t = kv.array()
    breaks = np.unique(t[kv.degree : kv.n + 1])
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        xs.extend(0.5 * (a + b) + half * nodes)
        ws.extend(half * weights)
    return np.array(xs), np.array(ws)


def curvature_operator(spec: ModelSpec, quad_order: int = 4) -> PenaltyOperator:
    """Least-squares rows of the curvature seminorm.

    For surfaces the seminorm is ``int (W_xixi^2 + W_etaeta^2)`` over the
    unit square; for the separable split it is the sum of the univariate
    ``int W''^2`` along each normalised axis.
    """
    if quad_order < 1:
        raise ValueError("quadrature order must be positive")
    ops = spec_ops(spec)
    xu, wu = _gauss_points(ops.u.kv, quad_order)
    xv, wv = _gauss_points(ops.v.kv, quad_order)

    rows = []
    if spec.kind is ModelKind.SEPARABLE:
        for x, w in zip(xu, wu):
            row = np.zeros(spec.n_params)
            row[: spec.n1] = np.sqrt(w) * ops.u.value_row(x, 2)
            rows.append(row)
        for x, w in zip(xv, wv):
            row = np.zeros(spec.n_params)
            row[spec.n1 :] = np.sqrt(w) * ops.v.value_row(x, 2)
            rows.append(row)
    else:
        ru2 = [ops.u.value_row(x, 2) for x in xu]
        ru0 = [ops.u.value_row(x, 0) for x in xu]
        rv2 = [ops.v.value_row(y, 2) for y in xv]
        rv0 = [ops.v.value_row(y, 0) for y in xv]
        for i, (wx, x) in enumerate(zip(wu, xu)):
            for j, (wy, y) in enumerate(zip(wv, xv)):
                s = np.sqrt(wx * wy)
                rows.append(s * np.kron(ru2[i], rv0[j]))
                rows.append(s * np.kron(ru0[i], rv2[j]))
    return PenaltyOperator(rows=np.vstack(rows), quad_order=quad_order)


def _dedup_unit_rows(rows: np.ndarray) -> np.ndarray:
    """Scale rows to unit norm, drop zero rows and exact duplicates."""
    out = []
    seen = set()
    for row in rows:
        nrm = np.linalg.norm(row)
        if nrm == 0.0:
            continue
        unit = row / nrm
        key = np.round(unit, 12).tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(unit)
    return np.vstack(out) if out else np.zeros((0, rows.shape[1]))


def inequality_operator(spec: ModelSpec, *, monotone_1: bool = True,
                        monotone_2: bool = True, convex_1: bool = True,
                        convex_2: bool = True) -> InequalityOperator:
    """Monotonicity/convexity constraints as ``G @ theta <= 0``.

    Nonnegativity of derivative-spline coefficients is imposed along each
    requested axis; for surfaces each coefficient line across the other
    axis is constrained.  Rows are unit-normalised and deduplicated.
    """
    ops = spec_ops(spec)
    blocks = []
    if spec.kind is ModelKind.SEPARABLE:
        def pad(block, axis):
            full = np.zeros((block.shape[0], spec.n_params))
            if axis == 0:
                full[:, : spec.n1] = block
            else:
                full[:, spec.n1 :] = block
            return full

        if monotone_1:
            blocks.append(pad(-ops.u.c1, 0))
        if monotone_2:
            blocks.append(pad(-ops.v.c1, 1))
        if convex_1:
            blocks.append(pad(-ops.u.c2, 0))
        if convex_2:
            blocks.append(pad(-ops.v.c2, 1))
    else:
        if monotone_1:
            blocks.append(-np.kron(ops.u.c1, ops.v.binv))
        if monotone_2:
            blocks.append(-np.kron(ops.u.binv, ops.v.c1))
        if convex_1:
            blocks.append(-np.kron(ops.u.c2, ops.v.binv))
        if convex_2:
            blocks.append(-np.kron(ops.u.binv, ops.v.c2))

    if not blocks:
        rows = np.zeros((0, spec.n_params))
    else:
        rows = _dedup_unit_rows(np.vstack(blocks))
    return InequalityOperator(rows=rows, rhs=np.zeros(rows.shape[0]))
