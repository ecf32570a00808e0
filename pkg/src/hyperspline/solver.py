"""Constrained linear least squares and penalty-weight selection.

The calibration problem is

    min ||A theta - y||^2 + lambda ||A_pen theta||^2
    s.t. A_ineq theta <= 0,  theta[fixed] = 0,

a convex QP solved with a primal active-set method in the least-squares
(stacked) form; the normal equations are never formed.  Every
equality-constrained subproblem goes through an orthogonal factorisation
of the stacked matrix restricted to the null space of the working set.
Starting from the feasible point theta = 0, steps stay feasible, blocking
constraints are added at the largest feasible step and constraints with
the most negative multiplier are dropped; ties break on the smallest
constraint index (Bland's rule) to avoid cycling.

The penalty weight can be chosen from the discrete L-curve: solve over a
grid of weights, locate the corner as the point of maximum discrete
curvature of the log-log (misfit, seminorm) polyline, and step one decade
below it.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

AUTO = "auto"


@dataclass
class CalibrationProblem:
    """Data, penalty, constraints and pinned parameters of one calibration."""

    A: np.ndarray
    y: np.ndarray
    A_pen: np.ndarray | None = None
    lambda_pen: float | str = 0.0
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    fixed_zero: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.A.shape[0] != self.y.size:
            raise ValueError("A and y disagree on the number of samples")
        n = self.A.shape[1]
        if self.A_pen is not None:
            self.A_pen = np.atleast_2d(np.asarray(self.A_pen, dtype=float))
            if self.A_pen.shape[1] != n:
                raise ValueError("A_pen has the wrong number of columns")
        if self.A_ineq is not None:
            self.A_ineq = np.atleast_2d(np.asarray(self.A_ineq, dtype=float))
            if self.A_ineq.shape[1] != n:
                raise ValueError("A_ineq has the wrong number of columns")
            if self.b_ineq is None:
                self.b_ineq = np.zeros(self.A_ineq.shape[0])
            else:
                self.b_ineq = np.asarray(self.b_ineq, dtype=float).ravel()
                if self.b_ineq.shape[0] != self.A_ineq.shape[0]:
                    raise ValueError("b_ineq has the wrong length")
                if np.any(self.b_ineq != 0.0):
                    raise ValueError("only homogeneous inequality constraints are supported")
        if isinstance(self.lambda_pen, str):
            if self.lambda_pen != AUTO:
                raise ValueError("lambda_pen must be a number or 'auto'")
        elif self.lambda_pen < 0.0:
            raise ValueError("lambda_pen must be nonnegative")
        bad = [i for i in self.fixed_zero if not 0 <= int(i) < n]
        if bad:
            raise ValueError(f"fixed_zero indices out of range: {bad}")
        self.fixed_zero = tuple(sorted(set(int(i) for i in self.fixed_zero)))

    @property
    def n_params(self) -> int:
        return self.A.shape[1]


@dataclass
class Solution:
    theta: np.ndarray
    objective: float
    active_set: tuple
    kkt_residual: float
    iterations: int
    wall_time: float


@dataclass
class LCurveResult:
    lambdas: np.ndarray
    misfits: np.ndarray
    seminorms: np.ndarray
    kappas: np.ndarray
    corner_index: int
    lambda_corner: float
    lambda_chosen: float


FEAS_TOL = 1e-9
MULT_TOL = 1e-10
STEP_TOL = 1e-12


def _stacked(problem: CalibrationProblem, free: np.ndarray, lam: float):
    """Stacked least-squares matrix on the free parameters, with ridge fallback.

    Penalty blocks taller than the parameter count are reduced to their
    triangular QR factor first (an exact norm-preserving step), keeping
    each subproblem small.  A numerically rank-deficient stack is
    stabilised by a micro-ridge of 1e-12 * ||A||^2 on the normal matrix,
    with a warning.
    """
    Af = problem.A[:, free]
    parts = [Af]
    if problem.A_pen is not None and lam > 0.0:
        Pf = problem.A_pen[:, free]
        if Pf.shape[0] > Pf.shape[1]:
            Pf = np.linalg.qr(Pf, mode="r")
        parts.append(math.sqrt(lam) * Pf)
    M = np.vstack(parts)
    d = np.concatenate([problem.y, np.zeros(M.shape[0] - Af.shape[0])])
    sv = np.linalg.svd(M, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    if M.shape[0] < M.shape[1] or (smax > 0 and sv[-1] < 1e-12 * smax):
        anorm = np.linalg.norm(Af, 2) if Af.size else 0.0
        if anorm > 0.0:
            warnings.warn("rank-deficient stacked system; adding micro-ridge "
                          "(consider a positive penalty weight or a coarser grid)",
                          stacklevel=3)
            ridge = 1e-6 * anorm * np.eye(M.shape[1])
            M = np.vstack([M, ridge])
            d = np.concatenate([d, np.zeros(M.shape[1])])
    return M, d


def _eqp(M: np.ndarray, d: np.ndarray, G: np.ndarray, work: list):
    """Minimise ||M t - d|| subject to G[work] t = 0 via a null-space basis."""
    n = M.shape[1]
    if work:
        Gw = G[work]
        _, s, Vt = np.linalg.svd(Gw, full_matrices=True)
        tol = max(Gw.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        rank = int(np.sum(s > tol))
        Z = Vt[rank:].T
    else:
        Z = np.eye(n)
    if Z.shape[1] == 0:
        return np.zeros(n)
    z, *_ = np.linalg.lstsq(M @ Z, d, rcond=None)
    return Z @ z


def _multipliers(M: np.ndarray, d: np.ndarray, G: np.ndarray, work: list,
                 theta: np.ndarray) -> np.ndarray:
    g = 2.0 * M.T @ (M @ theta - d)
    if not work:
        return np.zeros(0)
    mu, *_ = np.linalg.lstsq(G[work].T, -g, rcond=None)
    return mu


def _active_set_lsq(M, d, G, theta0, work0, max_iter, bland: bool):
    """Primal active-set loop; returns (theta, working set, iterations)."""
    n = M.shape[1]
    theta = theta0.copy()
    work = sorted(work0)
    m = G.shape[0]
    for it in range(1, max_iter + 1):
        trial = _eqp(M, d, G, work)
        viol = G @ trial if m else np.zeros(0)
        if m == 0 or np.all(viol <= FEAS_TOL):
            theta = trial
            mu = _multipliers(M, d, G, work, theta)
            if mu.size == 0 or np.min(mu) >= -MULT_TOL:
                return theta, work, it
            if bland:
                drop = next(i for i, v in zip(work, mu) if v < -MULT_TOL)
            else:
                drop = work[int(np.argmin(mu))]
            work.remove(drop)
            continue
        step = trial - theta
        Gstep = G @ step
        Gtheta = G @ theta
        t_best, j_best = 1.0, -1
        for j in range(m):
            if j in work or Gstep[j] <= FEAS_TOL * max(1.0, abs(Gstep[j])):
                continue
            if Gstep[j] <= 0.0:
                continue
            tj = max(0.0, -Gtheta[j]) / Gstep[j]
            if tj < t_best - 1e-15 or (abs(tj - t_best) <= 1e-15 and (j_best < 0 or j < j_best)):
                t_best, j_best = min(tj, 1.0), j
        theta = theta + t_best * step
        if j_best >= 0 and t_best < 1.0:
            work.append(j_best)
            work.sort()
        elif np.linalg.norm(t_best * step) < STEP_TOL:
            # no progress and nothing to add: treat as converged
            mu = _multipliers(M, d, G, work, theta)
            if mu.size == 0 or np.min(mu) >= -MULT_TOL:
                return theta, work, it
    raise RuntimeError(f"active-set solver failed to converge in {max_iter} iterations")


def solve(problem: CalibrationProblem, theta0: np.ndarray | None = None,
          max_iter: int | None = None) -> Solution:
    """Solve the calibration QP.

    ``theta0`` may supply a feasible warm start (the working set is seeded
    with its active rows); the default start is theta = 0, which is always
    feasible for the homogeneous constraints.  Cold starts on heavily
    constrained penalised problems first solve at 1e4x and 1e2x the target
    weight — smoother solutions have small active sets, so each stage warm
    starts the next and the total iteration count drops severalfold.
    """
    if isinstance(problem.lambda_pen, str):
        raise ValueError("lambda_pen is 'auto'; run lcurve() first and solve "
                         "with the chosen numeric weight")
    t_start = time.perf_counter()
    lam = float(problem.lambda_pen)
    n_ineq = problem.A_ineq.shape[0] if problem.A_ineq is not None else 0
    warm = theta0
    pre_iters = 0
    if (theta0 is None and lam > 0.0 and problem.A_pen is not None
            and n_ineq > 2 * problem.n_params):
        # Stage weights stay below the point where the penalty block drowns
        # the misfit rows in roundoff; there the subproblems turn degenerate.
        lam_cap = 1e8 * float(np.sum(problem.A ** 2)) / max(
            float(np.sum(problem.A_pen ** 2)), np.finfo(float).tiny)
        try:
            for stage_lam in (1e4 * lam, 1e2 * lam):
                if not lam < stage_lam < lam_cap:
                    continue
                stage = _solve_once(replace(problem, lambda_pen=stage_lam),
                                    warm, max_iter)
                warm = stage.theta
                pre_iters += stage.iterations
        except RuntimeError:
            warm, pre_iters = theta0, 0
    sol = _solve_once(problem, warm, max_iter)
    return replace(sol, iterations=sol.iterations + pre_iters,
                   wall_time=time.perf_counter() - t_start)


def _solve_once(problem: CalibrationProblem, theta0: np.ndarray | None,
                max_iter: int | None) -> Solution:
    t_start = time.perf_counter()
    n = problem.n_params
    free = np.array([i for i in range(n) if i not in problem.fixed_zero], dtype=int)
    if free.size == 0:
        raise ValueError("all parameters are pinned")
    M, d = _stacked(problem, free, float(problem.lambda_pen))
    if problem.A_ineq is not None and problem.A_ineq.shape[0] > 0:
        G = problem.A_ineq[:, free]
    else:
        G = np.zeros((0, free.size))

    if theta0 is None:
        start = np.zeros(free.size)
        work0: list = []
    else:
        theta0 = np.asarray(theta0, dtype=float).ravel()
        if theta0.shape[0] != n:
            raise ValueError("theta0 has the wrong length")
        start = theta0[free]
        viol = G @ start if G.size else np.zeros(0)
        if viol.size and np.max(viol) > FEAS_TOL:
            raise ValueError("theta0 is infeasible")
        work0 = [j for j in range(G.shape[0]) if G.shape[0] and viol[j] >= -MULT_TOL]

    cap = max_iter if max_iter is not None else 10 * free.size + 100
    try:
        th_free, work, iters = _active_set_lsq(M, d, G, start, work0, cap, bland=False)
    except RuntimeError:
        th_free, work, iters = _active_set_lsq(M, d, G, np.zeros(free.size), [],
                                               3 * cap, bland=True)

    theta = np.zeros(n)
    theta[free] = th_free

    mu = _multipliers(M, d, G, work, th_free)
    mu_plus = np.clip(mu, 0.0, None)
    g = 2.0 * M.T @ (M @ th_free - d)
    stat = g + (G[work].T @ mu_plus if work else 0.0)
    kkt = float(np.linalg.norm(stat))

    obj = float(np.sum((problem.A @ theta - problem.y) ** 2))
    if problem.A_pen is not None and float(problem.lambda_pen) > 0.0:
        obj += float(problem.lambda_pen) * float(np.sum((problem.A_pen @ theta) ** 2))
    active = tuple(sorted(work))
    return Solution(theta=theta, objective=obj, active_set=active,
                    kkt_residual=kkt, iterations=iters,
                    wall_time=time.perf_counter() - t_start)


def kkt_check(problem: CalibrationProblem, theta: np.ndarray):
    """Residual norms (stationarity, feasibility, complementarity) at theta.

    Multipliers are estimated on the active rows by least squares and
    projected onto the nonnegative orthant.
    """
    if isinstance(problem.lambda_pen, str):
        raise ValueError("lambda_pen must be numeric for a KKT check")
    theta = np.asarray(theta, dtype=float).ravel()
    n = problem.n_params
    free = np.array([i for i in range(n) if i not in problem.fixed_zero], dtype=int)
    M, d = _stacked(problem, free, float(problem.lambda_pen))
    th = theta[free]
    g = 2.0 * M.T @ (M @ th - d)
    if problem.A_ineq is not None and problem.A_ineq.shape[0]:
        G = problem.A_ineq[:, free]
        slack = G @ th
        scale = 1e-8 * (1.0 + float(np.linalg.norm(th)))
        act = [j for j in range(G.shape[0]) if slack[j] >= -scale]
        feas = float(max(0.0, slack.max()))
        if act:
            mu, *_ = np.linalg.lstsq(G[act].T, -g, rcond=None)
            mu = np.clip(mu, 0.0, None)
            stat = float(np.linalg.norm(g + G[act].T @ mu))
            comp = float(np.max(np.abs(mu * slack[act]))) if len(act) else 0.0
        else:
            stat = float(np.linalg.norm(g))
            comp = 0.0
    else:
        feas = 0.0
        comp = 0.0
        stat = float(np.linalg.norm(g))
    return stat, feas, comp


def discrete_curvature(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Menger curvature at interior vertices of a polyline (endpoints get 0).

    Uses twice the triangle area (shoelace) over the product of the three
    side lengths; collinear triples give exactly zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    kappa = np.zeros(x.size)
    for i in range(1, x.size - 1):
        ax, ay = x[i] - x[i - 1], y[i] - y[i - 1]
        bx, by = x[i + 1] - x[i], y[i + 1] - y[i]
        cx, cy = x[i + 1] - x[i - 1], y[i + 1] - y[i - 1]
        area2 = abs(ax * by - ay * bx)  # twice the triangle area
        denom = math.hypot(ax, ay) * math.hypot(bx, by) * math.hypot(cx, cy)
        kappa[i] = area2 / denom if denom > 0.0 else 0.0
    return kappa


def default_lambda_grid(count: int = 25, low: float = 1e-10, high: float = 1e2) -> np.ndarray:
    return np.logspace(math.log10(low), math.log10(high), count)


def lcurve(problem: CalibrationProblem, lambda_grid=None) -> LCurveResult:
    """Sweep penalty weights and pick one decade below the L-curve corner.

    Solves are warm-started from the neighbouring weight (largest first);
    misfit is ``||A theta - y||^2`` and seminorm ``||A_pen theta||^2``.
    """
    if problem.A_pen is None:
        raise ValueError("lcurve requires a penalty operator")
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size < 5:
        raise ValueError("need at least 5 penalty weights")
    if np.any(grid <= 0.0) or not np.all(np.diff(grid) > 0.0):
        raise ValueError("penalty weights must be positive and strictly increasing")

    misfits = np.zeros(grid.size)
    seminorms = np.zeros(grid.size)
    theta_prev = None
    for idx in range(grid.size - 1, -1, -1):
        sub = replace(problem, lambda_pen=float(grid[idx]))
        try:
            sol = solve(sub, theta0=theta_prev)
        except ValueError:
            sol = solve(sub)
        theta_prev = sol.theta
        misfits[idx] = float(np.sum((problem.A @ sol.theta - problem.y) ** 2))
        seminorms[idx] = float(np.sum((problem.A_pen @ sol.theta) ** 2))

    tiny = 1e-300
    kappas = discrete_curvature(np.log10(np.maximum(misfits, tiny)),
                                np.log10(np.maximum(seminorms, tiny)))
    corner = int(np.argmax(kappas))
    lam_corner = float(grid[corner])
    return LCurveResult(lambdas=grid, misfits=misfits, seminorms=seminorms,
                        kappas=kappas, corner_index=corner,
                        lambda_corner=lam_corner, lambda_chosen=lam_corner / 10.0)
