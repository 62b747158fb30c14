"""Smoothed-objective interior-point solver for chained manipulation programs.

The general problem has ``m`` free points ``x_1 .. x_m`` hanging off a fixed
``x_0``; leg ``i`` costs ``c(x_{i-1}, x_i)`` and every linear constraint acts
on exactly one point.  The sequential program is the chain with one
constraint per point, the conjunction program is a single point carrying all
constraints.

Norm costs are not differentiable at zero-length legs, which is exactly where
optima tend to sit, so each stage minimizes a smooth surrogate plus a log
barrier and the smoothing width ``mu`` (and barrier weight) follow a geometric
schedule down to 1e-10, warm-starting each stage from the last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverDidNotConverge
from .geometry import CostKind, CostModel

MU_SCHEDULE = (1e-2, 1e-4, 1e-6, 1e-8, 1e-10)
DEFAULT_TOL = 1e-6
MAX_ITER = 50_000


# --------------------------------------------------------------------------
# smoothed leg costs, vectorized over legs: delta (m, d) -> val (m,), grad
# (m, d), hess (m, d, d)


def _smooth_l2(delta, mu):
    r = np.sqrt(np.einsum("ij,ij->i", delta, delta) + mu * mu)
    g = delta / r[:, None]
    d = delta.shape[1]
    h = (np.eye(d)[None] - g[:, :, None] * g[:, None, :]) / r[:, None, None]
    return r, g, h


def _smooth_l1(delta, mu):
    r = np.sqrt(delta * delta + mu * mu)
    g = delta / r
    h = np.zeros(delta.shape + (delta.shape[1],))
    idx = np.arange(delta.shape[1])
    h[:, idx, idx] = (mu * mu) / r**3
    return r.sum(axis=1), g, h


def _smooth_linf(delta, mu):
    d = delta.shape[1]
    v = np.hstack([delta, -delta]) / mu
    vmax = v.max(axis=1, keepdims=True)
    e = np.exp(v - vmax)
    s = e.sum(axis=1, keepdims=True)
    p = e / s
    val = mu * (vmax[:, 0] + np.log(s[:, 0])) - mu * math.log(2 * d)
    g = p[:, :d] - p[:, d:]
    q = p[:, :d] + p[:, d:]
    h = (np.einsum("ij,jk->ijk", q, np.eye(d)) - g[:, :, None] * g[:, None, :]) / mu
    return val, g, h


def _squared(delta, mu):
    val = np.einsum("ij,ij->i", delta, delta)
    d = delta.shape[1]
    return val, 2.0 * delta, np.broadcast_to(2.0 * np.eye(d), (delta.shape[0], d, d))


def _quadratic(A):
    def f(delta, mu):
        Ad = delta @ A
        val = np.einsum("ij,ij->i", Ad, delta)
        d = delta.shape[1]
        return val, 2.0 * Ad, np.broadcast_to(2.0 * A, (delta.shape[0], d, d))

    return f


def smoother_for(cost: CostModel, squared_l2: bool = False):
    """Smooth leg surrogate for a cost model.

    ``squared_l2`` swaps the Euclidean norm for its square, which has the same
    minimizer when there is a single leg and needs no smoothing at all.
    """
    if cost.kind is CostKind.L2:
        return _squared if squared_l2 else _smooth_l2
    if cost.kind is CostKind.L1:
        return _smooth_l1
    if cost.kind is CostKind.LINF:
        return _smooth_linf
    return _quadratic(cost.matrix)


@dataclass
class SolveResult:
    points: np.ndarray
    objective: float
    stages: int
    iterations: int
    multipliers: np.ndarray
    max_violation: float


def _legs(x0, X):
    return X - np.vstack([x0[None], X[:-1]])


def solve_chain(x0, X_init, blocks, W, b, cost: CostModel, *, squared_l2=False,
                tol=DEFAULT_TOL, max_iter=MAX_ITER, schedule=MU_SCHEDULE) -> SolveResult:
    """Minimize ``sum_i c(x_{i-1}, x_i)`` subject to ``W[c] @ x_{blocks[c]} >= b[c]``.

    ``X_init`` must be strictly feasible.  Constraint rows should be
    normalized so the barrier weight has cost units.
    """
    x0 = np.asarray(x0, float)
    X = np.array(X_init, dtype=float)
    m, d = X.shape
    blocks = np.asarray(blocks, dtype=int)
    W = np.asarray(W, float)
    b = np.asarray(b, float)
    smooth = smoother_for(cost, squared_l2)
    n = m * d
    # scatter matrix: constraint c acts on coordinates blocks[c]*d .. +d
    cols = blocks[:, None] * d + np.arange(d)[None]
    Wfull = np.zeros((len(b), n))
    np.put_along_axis(Wfull, cols, W, axis=1)

    slack = Wfull @ X.ravel() - b
    if np.any(slack <= 0):
        raise ValueError("initial point must be strictly feasible")

    def objective(xf, mu, t):
        Xm = xf.reshape(m, d)
        s = Wfull @ xf - b
        if np.any(s <= 0):
            return math.inf
        val, _, _ = smooth(_legs(x0, Xm), mu)
        return float(val.sum() - t * np.log(s).sum())

    total_iter = 0
    xf = X.ravel().copy()
    stage_ok = True
    lam2 = 0.0
    eye = np.eye(n)
    for stage, mu in enumerate(schedule):
        t = mu
        stage_ok = False
        # Levenberg damping: lp smoothings are locally linear away from ties,
        # so the undamped Newton system can be singular
        rho = 0.0
        for _ in range(max_iter):
            total_iter += 1
            Xm = xf.reshape(m, d)
            val, g_leg, h_leg = smooth(_legs(x0, Xm), mu)
            s = Wfull @ xf - b
            f = float(val.sum() - t * np.log(s).sum())
            G = np.zeros((m, d))
            G += g_leg
            G[:-1] -= g_leg[1:]
            H = np.zeros((m, d, m, d))
            for i in range(m):
                H[i, :, i, :] += h_leg[i]
                if i > 0:
                    H[i - 1, :, i - 1, :] += h_leg[i]
                    H[i, :, i - 1, :] -= h_leg[i]
                    H[i - 1, :, i, :] -= h_leg[i]
            grad = G.ravel() - t * (Wfull.T @ (1.0 / s))
            Hm = H.reshape(n, n) + t * (Wfull.T * (1.0 / s**2)) @ Wfull
            hscale = max(1.0, float(np.abs(np.diag(Hm)).max()))
            while True:
                try:
                    step = -np.linalg.solve(Hm + rho * eye, grad)
                except np.linalg.LinAlgError:
                    step = None
                if step is not None and np.all(np.isfinite(step)):
                    lam2 = float(-grad @ step)
                    if lam2 >= 0.0:
                        break
                rho = max(10.0 * rho, 1e-12 * hscale)
            stop = 1e-3 * tol if stage < len(schedule) - 1 else 1e-15
            if lam2 / 2.0 <= stop * max(1.0, abs(f)):
                # a small damped decrement under negligible damping also means
                # the gradient vanishes along flat directions (non-unique optima)
                if rho <= 1e-10 * hscale:
                    stage_ok = True
                    break
                rho = rho / 100.0 if rho > 1e-14 * hscale else 0.0
                continue
            alpha = 1.0
            # stay strictly inside
            ds = Wfull @ step
            neg = ds < 0
            if np.any(neg):
                alpha = min(1.0, 0.99 * float(np.min(-s[neg] / ds[neg])))
            accepted = False
            halvings = 0
            for _ls in range(60):
                fn = objective(xf + alpha * step, mu, t)
                if fn <= f - 0.25 * alpha * lam2:
                    accepted = True
                    break
                alpha *= 0.5
                halvings += 1
            if not accepted:
                if rho < 1e6 * hscale and lam2 / 2.0 > 1e-12 * max(1.0, abs(f)):
                    rho = max(10.0 * rho, 1e-12 * hscale)
                    continue
                # rounding floor: no further decrease is representable
                stage_ok = lam2 / 2.0 <= 1e-9 * max(1.0, abs(f))
                break
            xf = xf + alpha * step
            if halvings == 0:
                rho = rho / 10.0 if rho > 1e-14 * hscale else 0.0
            elif halvings > 2:
                rho = max(10.0 * rho, 1e-12 * hscale)
        if not stage_ok and stage == len(schedule) - 1:
            Xm = xf.reshape(m, d)
            obj = float(cost.of_delta(_legs(x0, Xm)).sum())
            raise SolverDidNotConverge(
                "smoothed solver did not converge",
                best_iterate=Xm.copy(), objective=obj,
                residuals={"newton_decrement_sq": lam2},
            )

    Xm = xf.reshape(m, d)
    s = Wfull @ xf - b
    obj = float(cost.of_delta(_legs(x0, Xm)).sum())
    return SolveResult(
        points=Xm.copy(), objective=obj, stages=len(schedule), iterations=total_iter,
        multipliers=schedule[-1] / s, max_violation=float(max(0.0, -s.min())),
    )


def feasible_start_toward(x, z_in, W, b, margin=1e-3):
    """Point on the segment from ``x`` to the interior point ``z_in`` that is
    strictly feasible with slack at least ``min(margin, slack(z_in)/2)``."""
    x = np.asarray(x, float)
    z_in = np.asarray(z_in, float)
    sx = W @ x - b
    sz = W @ z_in - b
    target = min(margin, 0.5 * float(sz.min()))
    alpha = 0.0
    for a, c in zip(sx, sz):
        if a < target:
            alpha = max(alpha, (target - a) / (c - a))
    alpha = min(1.0, alpha)
    return x + alpha * (z_in - x)
