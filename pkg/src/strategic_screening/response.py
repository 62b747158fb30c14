"""Agent best responses against a screening pipeline.

Two settings are covered: passing every test at once (conjunction) and
passing them one after another (sequential), where an agent may leave an
earlier accept region once it has been cleared.  For two tests in the plane
under Euclidean cost both have closed forms; otherwise the convex programs
are handed to :mod:`strategic_screening.solver`.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, nnls

from .errors import (
    DimensionMismatch,
    InfeasibleRegion,
    ParallelClassifiers,
    PlanInfeasible,
)
from .geometry import (
    BOUNDARY_TOL,
    PARALLEL_TOL,
    CostKind,
    CostModel,
    HalfspaceClassifier,
    Mode,
    Pipeline,
    as_point,
    homogenize,
    interior_point,
)
from .solver import DEFAULT_TOL, feasible_start_toward, solve_chain

CERTIFY_TOL = 1e-6


class Method(str, enum.Enum):
    CLOSED_FORM_2D = "closed_form_2d"
    CONVEX_SOLVER = "convex_solver"
    ORACLE = "oracle"


class RegionLabel(str, enum.Enum):
    R1 = "R1"  # already passes h1, projects onto h2
    R2 = "R2"  # zig-zag
    R3 = "R3"  # straight to the boundary intersection
    R4 = "R4"  # projection onto h1 clears both
    ALREADY_ACCEPTED = "AlreadyAccepted"


REGION_CODES = {
    RegionLabel.ALREADY_ACCEPTED: 0,
    RegionLabel.R1: 1,
    RegionLabel.R2: 2,
    RegionLabel.R3: 3,
    RegionLabel.R4: 4,
}
REGION_FROM_CODE = {v: k for k, v in REGION_CODES.items()}


@dataclass(frozen=True)
class KktCertificate:
    multipliers: tuple
    stationarity_residual: float
    complementarity_residual: float

    @property
    def certified(self) -> bool:
        return (
            self.stationarity_residual < CERTIFY_TOL
            and self.complementarity_residual < CERTIFY_TOL
            and all(lam >= -1e-9 for lam in self.multipliers)
        )

    def to_dict(self) -> dict:
        return {
            "multipliers": list(self.multipliers),
            "stationarity_residual": self.stationarity_residual,
            "complementarity_residual": self.complementarity_residual,
        }


@dataclass(frozen=True, eq=False)
class ManipulationPlan:
    """Path ``x0 -> x1 -> ... -> xk`` with its per-leg costs.

    Conjunction plans have a two-point path ``(x, z)``.
    """

    path: np.ndarray
    leg_costs: tuple
    total_cost: float
    method: Method
    certificate: KktCertificate | None = None

    def __post_init__(self):
        path = np.array(self.path, dtype=float)
        if path.ndim != 2 or path.shape[0] < 2:
            raise DimensionMismatch("a plan path needs at least two points")
        path.setflags(write=False)
        object.__setattr__(self, "path", path)
        object.__setattr__(self, "leg_costs", tuple(float(c) for c in self.leg_costs))
        object.__setattr__(self, "total_cost", float(self.total_cost))
        object.__setattr__(self, "method", Method(self.method))
        if len(self.leg_costs) != path.shape[0] - 1:
            raise ValueError("leg_costs must have one entry per leg")
        if abs(sum(self.leg_costs) - self.total_cost) > 1e-9:
            raise ValueError("total_cost must equal the sum of leg costs")

    @property
    def start(self) -> np.ndarray:
        return self.path[0]

    @property
    def end(self) -> np.ndarray:
        return self.path[-1]

    def with_certificate(self, cert) -> "ManipulationPlan":
        return ManipulationPlan(self.path, self.leg_costs, self.total_cost, self.method, cert)


@dataclass(frozen=True)
class CostGap:
    c_conj: float
    c_seq: float
    ratio: float


def _plan_from_path(path, cost: CostModel, method, certificate=None) -> ManipulationPlan:
    path = np.asarray(path, float)
    legs = cost.of_delta(np.diff(path, axis=0))
    legs = np.where(np.all(np.diff(path, axis=0) == 0.0, axis=1), 0.0, legs)
    return ManipulationPlan(path, tuple(legs), float(np.sum(legs)), method, certificate)


# --------------------------------------------------------------------------
# closed forms, batched over agents (homogenized, normalized coordinates)


def _wedge_trig(w1, w2):
    c = float(w1 @ w2)
    cos_t = -c
    sin_t = math.sqrt(max(0.0, 1.0 - c * c))
    return cos_t, sin_t


def conj2d_batch(w1, w2, X):
    """Conjunction best response for ``{w1 @ z >= 0} & {w2 @ z >= 0}``.

    Returns ``(Z, cost)`` for the rows of ``X``.
    """
    X = np.asarray(X, float)
    eps = BOUNDARY_TOL
    a1 = X @ w1
    a2 = X @ w2
    P1 = X - np.minimum(a1, 0.0)[:, None] * w1
    P2 = X - np.minimum(a2, 0.0)[:, None] * w2
    both = (a1 >= -eps) & (a2 >= -eps)
    case1 = ~both & (P2 @ w1 >= -eps)
    case2 = ~both & ~case1 & (P1 @ w2 >= -eps)
    case3 = ~both & ~case1 & ~case2
    Z = np.where(both[:, None], X, 0.0)
    Z = np.where(case1[:, None], P2, Z)
    Z = np.where(case2[:, None], P1, Z)
    cost = np.zeros(len(X))
    cost[case1] = np.maximum(-a2[case1], 0.0)
    cost[case2] = np.maximum(-a1[case2], 0.0)
    cost[case3] = np.linalg.norm(X[case3], axis=1)
    return Z, cost


def seq2d_batch(w1, w2, X):
    """Sequential best response (h1 first, then h2) in homogenized coordinates.

    Returns ``(X1, X2, cost, region_code)``; region codes follow
    :data:`REGION_CODES`.
    """
    X = np.asarray(X, float)
    eps = BOUNDARY_TOL
    cos_t, sin_t = _wedge_trig(w1, w2)
    a1 = X @ w1
    a2 = X @ w2
    pass1 = a1 >= -eps
    pass2 = a2 >= -eps
    d1 = np.maximum(-a1, 0.0)
    P1 = X + d1[:, None] * w1
    normP = np.linalg.norm(P1, axis=1)
    r4 = ~pass1 & (P1 @ w2 >= -eps)
    rest = ~pass1 & ~r4
    # zig-zag iff |tan t| <= |P|/d, written without dividing by cos t
    r2 = rest & (d1 * sin_t <= normP * abs(cos_t))
    r3 = rest & ~r2
    aa = pass1 & pass2
    r1 = pass1 & ~pass2

    X1 = X.copy()
    X1[r4] = P1[r4]
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = 1.0 - d1 * sin_t / (normP * abs(cos_t))
    X1[r2] = scale[r2][:, None] * P1[r2]
    X1[r3] = 0.0
    s2 = X1 @ w2
    X2 = X1 - np.where(s2 < -eps, s2, 0.0)[:, None] * w2

    cost = np.zeros(len(X))
    cost[r1] = -a2[r1]
    cost[r4] = d1[r4]
    cost[r2] = d1[r2] * abs(cos_t) + normP[r2] * sin_t
    cost[r3] = np.linalg.norm(X[r3], axis=1)
    region = np.zeros(len(X), dtype=np.int8)
    region[r1] = 1
    region[r2] = 2
    region[r3] = 3
    region[r4] = 4
    region[aa] = 0
    return X1, X2, cost, region


def closed_form_costs_2d(h1: HalfspaceClassifier, h2: HalfspaceClassifier, X):
    """Vectorized conjunction and sequential costs plus region codes for
    many agents against one non-parallel pair of planar classifiers."""
    s, g1, g2 = homogenize(h1, h2)
    Xh = np.asarray(X, float) + s
    _, c_conj = conj2d_batch(g1.w, g2.w, Xh)
    _, _, c_seq, region = seq2d_batch(g1.w, g2.w, Xh)
    return c_conj, c_seq, region


def _check_2d_pair(h1, h2, x):
    if h1.dim != 2 or h2.dim != 2:
        raise DimensionMismatch("2D closed forms need d = 2")
    return as_point(x, 2)


def conjunction_closed_form_2d(h1: HalfspaceClassifier, h2: HalfspaceClassifier, x) -> ManipulationPlan:
    """Three-case rule: project onto one boundary if that clears the other
    test, else move straight to the boundaries' meeting point."""
    x = _check_2d_pair(h1, h2, x)
    cost = CostModel.l2()
    try:
        s, g1, g2 = homogenize(h1, h2)
    except ParallelClassifiers:
        return _plan_from_path([x, _parallel_conjunction(h1, h2, x)], cost, Method.CLOSED_FORM_2D)
    Z, _ = conj2d_batch(g1.w, g2.w, (x + s)[None])
    z = Z[0] - s
    if np.array_equal(Z[0], x + s):
        z = x.copy()
    return _plan_from_path([x, z], cost, Method.CLOSED_FORM_2D)


def _parallel_conjunction(h1, h2, x):
    g1, g2 = h1.normalize(), h2.normalize()
    if g1.w @ g2.w > 0:
        g = g1 if g1.b >= g2.b else g2
        a = g.w @ x - g.b
        return x - min(a, 0.0) * g.w
    # opposite normals: a slab  g1.b <= g1.w @ z <= -g2.b
    lo, hi = g1.b, -g2.b
    if lo > hi + BOUNDARY_TOL:
        raise InfeasibleRegion("parallel classifiers with disjoint accept regions")
    a = g1.w @ x
    target = min(max(a, lo), hi)
    return x + (target - a) * g1.w


def sequential_closed_form_2d(h1: HalfspaceClassifier, h2: HalfspaceClassifier, x0) -> ManipulationPlan:
    """Optimal two-step path for planar tests under Euclidean cost.

    Dispatch: already past h1 -> stay then project onto h2 (R1); projection
    onto h1 already clears h2 (R4); otherwise compare ``|tan t|`` with
    ``|P(x0)| / d(x0)`` to choose between the boundary meeting point (R3) and
    the zig-zag (R2), preferring the zig-zag on ties.
    """
    x0 = _check_2d_pair(h1, h2, x0)
    s, g1, g2 = homogenize(h1, h2)
    X1, X2, _, _ = seq2d_batch(g1.w, g2.w, (x0 + s)[None])
    x1 = x0.copy() if np.array_equal(X1[0], x0 + s) else X1[0] - s
    x2 = x1.copy() if np.array_equal(X2[0], X1[0]) else X2[0] - s
    return _plan_from_path([x0, x1, x2], CostModel.l2(), Method.CLOSED_FORM_2D)


def classify_region(h1: HalfspaceClassifier, h2: HalfspaceClassifier, x0) -> RegionLabel:
    x0 = _check_2d_pair(h1, h2, x0)
    s, g1, g2 = homogenize(h1, h2)
    _, _, _, region = seq2d_batch(g1.w, g2.w, (x0 + s)[None])
    return REGION_FROM_CODE[int(region[0])]


# --------------------------------------------------------------------------
# general convex programs


def _normalized_rows(pipeline: Pipeline):
    p = pipeline.normalized()
    return p, p.W, p.b


def _check_x(pipeline, x):
    return as_point(x, pipeline.dim)


def conjunction_response(pipeline: Pipeline, x, cost: CostModel | None = None,
                         tol: float = DEFAULT_TOL) -> ManipulationPlan:
    """Cheapest single move into the intersection of all accept regions."""
    cost = cost or CostModel.l2()
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = _check_x(pipeline, x)
    _check_cost_dim(cost, pipeline.dim)
    p, W, b = _normalized_rows(pipeline)
    if np.all(W @ x - b >= -BOUNDARY_TOL):
        return _plan_from_path([x, x], cost, Method.CONVEX_SOLVER, _zero_certificate(p.k, cost))
    z_in, slack = interior_point(W, b)
    if slack <= 1e-12:
        raise InfeasibleRegion("conjunction accept region has empty interior")
    start = feasible_start_toward(x, z_in, W, b)
    res = solve_chain(x, start[None], np.zeros(p.k, dtype=int), W, b, cost,
                      squared_l2=cost.kind is CostKind.L2, tol=tol)
    plan = _plan_from_path([x, res.points[0]], cost, Method.CONVEX_SOLVER)
    if cost.kind is CostKind.L2:
        plan = plan.with_certificate(kkt_check(plan, p.with_mode(Mode.CONJUNCTION)))
    return plan


def sequential_response(pipeline: Pipeline, x0, cost: CostModel | None = None,
                        tol: float = DEFAULT_TOL) -> ManipulationPlan:
    """Cheapest path clearing the tests in order.

    The solver starts from the conjunction best response copied into every
    stage (feasible by construction and never worse than the optimum's
    upper bound); if the conjunction region is empty each stage starts from
    its own projection instead.
    """
    cost = cost or CostModel.l2()
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = _check_x(pipeline, x0)
    _check_cost_dim(cost, pipeline.dim)
    p, W, b = _normalized_rows(pipeline)
    k = p.k
    if np.all(W @ x0 - b >= -BOUNDARY_TOL):
        path = np.repeat(x0[None], k + 1, axis=0)
        return _plan_from_path(path, cost, Method.CONVEX_SOLVER, _zero_certificate(k, cost))
    try:
        z = conjunction_response(p, x0, cost, tol).end
        X = np.repeat(z[None], k, axis=0)
    except InfeasibleRegion:
        X = np.array([x0 + max(0.0, bi - wi @ x0) * wi for wi, bi in zip(W, b)])
    margin = 1e-3
    slack = np.einsum("ij,ij->i", W, X) - b
    X = X + np.maximum(margin - slack, 0.0)[:, None] * W
    res = solve_chain(x0, X, np.arange(k), W, b, cost, tol=tol)
    path = np.vstack([x0[None], res.points])
    if cost.kind is CostKind.L2:
        path = _polish_l2(path, W, b)
    plan = _plan_from_path(path, cost, Method.CONVEX_SOLVER)
    if cost.kind is CostKind.L2:
        plan = plan.with_certificate(kkt_check(plan, p.with_mode(Mode.SEQUENTIAL)))
    return plan


def _polish_l2(path, W, b, snap=1e-6):
    """Sharpen a smoothed Euclidean sequential solution.

    Near-zero legs are collapsed (by the triangle inequality this never
    raises the cost), nearly tight constraints are treated as equalities, and
    the remaining smooth problem is solved by Newton's method on its KKT
    system.  The polished path is kept only if it is feasible and no more
    costly than the input.
    """
    path = np.array(path, dtype=float)
    k = len(b)
    scale = max(1.0, float(np.abs(path).max()))
    before = float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum())

    out = path.copy()
    for i in range(1, k + 1):
        if (np.linalg.norm(out[i] - out[i - 1]) < snap * scale
                and W[i - 1] @ out[i - 1] - b[i - 1] >= -BOUNDARY_TOL):
            out[i] = out[i - 1]
    # group[i] = index of the free point that path point i belongs to (0 = fixed start)
    group = np.zeros(k + 1, dtype=int)
    for i in range(1, k + 1):
        group[i] = group[i - 1] + (0 if np.array_equal(out[i], out[i - 1]) else 1)
    G = int(group[-1])
    if G == 0:
        return out
    d = path.shape[1]
    x0 = out[0]
    Y = np.array([out[np.flatnonzero(group == g)[0]] for g in range(1, G + 1)])
    slack = np.einsum("ij,ij->i", W, out[1:]) - b
    active = np.flatnonzero(slack <= snap * scale)
    act_group = group[1:][active]
    if np.any(act_group == 0):
        return out
    A = np.zeros((len(active), G * d))
    for r, (c, g) in enumerate(zip(active, act_group)):
        A[r, (g - 1) * d:g * d] = W[c]
    rhs_c = b[active]

    y = Y.ravel()
    for _ in range(30):
        Ym = y.reshape(G, d)
        legs = Ym - np.vstack([x0[None], Ym[:-1]])
        r = np.linalg.norm(legs, axis=1)
        if r.min() < 1e-12:
            return out
        u = legs / r[:, None]
        grad = np.zeros((G, d))
        grad += u
        grad[:-1] -= u[1:]
        H = np.zeros((G, d, G, d))
        for i in range(G):
            h = (np.eye(d) - np.outer(u[i], u[i])) / r[i]
            H[i, :, i, :] += h
            if i > 0:
                H[i - 1, :, i - 1, :] += h
                H[i, :, i - 1, :] -= h
                H[i - 1, :, i, :] -= h
        n = G * d
        K = np.zeros((n + len(active), n + len(active)))
        K[:n, :n] = H.reshape(n, n)
        K[:n, n:] = A.T
        K[n:, :n] = A
        rhs = -np.concatenate([grad.ravel(), A @ y - rhs_c])
        step = np.linalg.lstsq(K, rhs, rcond=None)[0][:n]
        y = y + step
        if np.abs(step).max() < 1e-15 * scale:
            break
    Ym = y.reshape(G, d)
    cand = out.copy()
    for i in range(1, k + 1):
        if group[i] > 0:
            cand[i] = Ym[group[i] - 1]
    ok = np.all(np.einsum("ij,ij->i", W, cand[1:]) - b >= -BOUNDARY_TOL)
    after = float(np.linalg.norm(np.diff(cand, axis=0), axis=1).sum())
    if ok and after <= before + 1e-12 * max(1.0, before):
        return cand
    return out


def best_response(pipeline: Pipeline, x, cost: CostModel | None = None,
                  tol: float = DEFAULT_TOL, closed_form: bool = True) -> ManipulationPlan:
    """Dispatch on the pipeline mode; uses the planar closed form when it
    applies (two non-parallel tests, d = 2, Euclidean cost)."""
    cost = cost or CostModel.l2()
    if closed_form and pipeline.k == 2 and pipeline.dim == 2 and cost.kind is CostKind.L2:
        h1, h2 = pipeline.classifiers
        g1, g2 = h1.normalize(), h2.normalize()
        if abs(float(g1.w @ g2.w)) < 1.0 - PARALLEL_TOL:
            if pipeline.mode is Mode.CONJUNCTION:
                plan = conjunction_closed_form_2d(h1, h2, x)
            else:
                plan = sequential_closed_form_2d(h1, h2, x)
            return plan.with_certificate(kkt_check(plan, pipeline))
    if pipeline.mode is Mode.CONJUNCTION:
        return conjunction_response(pipeline, x, cost, tol)
    return sequential_response(pipeline, x, cost, tol)


def _check_cost_dim(cost, d):
    if cost.matrix is not None and cost.matrix.shape[0] != d:
        raise DimensionMismatch("cost matrix dimension does not match the pipeline")


def _zero_certificate(k, cost):
    if cost.kind is not CostKind.L2:
        return None
    return KktCertificate(tuple([0.0] * k), 0.0, 0.0)


# --------------------------------------------------------------------------
# KKT certificate


def kkt_check(plan: ManipulationPlan, pipeline: Pipeline, *, zero_tol: float = 1e-7,
              active_tol: float = 1e-7) -> KktCertificate:
    """Residuals of the Euclidean-cost stationarity and complementary
    slackness conditions at ``plan``.

    With unit leg directions ``u_j`` and multipliers ``lam_c >= 0``, a
    stationary path satisfies ``u_j = sum of lam_c * w_c`` over the
    constraints attached to points ``j, j+1, ...``; a zero-length leg only
    needs that sum to have norm at most one (a subgradient).  Multipliers
    are fitted by non-negative least squares on the active constraints.
    """
    p = pipeline.normalized()
    W, b = p.W, p.b
    k = p.k
    path = np.asarray(plan.path, float)
    if path.shape[1] != p.dim:
        raise DimensionMismatch("plan and pipeline dimensions differ")
    if p.mode is Mode.CONJUNCTION:
        if path.shape[0] != 2:
            raise PlanInfeasible("conjunction plans have exactly one move")
        owner = np.ones(k, dtype=int)
    else:
        if path.shape[0] != k + 1:
            raise PlanInfeasible("sequential plans have one point per test")
        owner = np.arange(1, k + 1)
    slack = np.einsum("ij,ij->i", W, path[owner]) - b
    if np.any(slack < -BOUNDARY_TOL):
        raise PlanInfeasible(f"plan violates constraint(s) {np.flatnonzero(slack < -BOUNDARY_TOL).tolist()}")

    m = path.shape[0] - 1
    legs = np.diff(path, axis=0)
    lengths = np.linalg.norm(legs, axis=1)
    scale = max(1.0, float(np.abs(path).max()))
    nonzero = lengths > zero_tol * scale
    active = np.flatnonzero(slack <= active_tol * scale)

    def sums(lam_active):
        lam = np.zeros(k)
        lam[active] = lam_active
        out = np.zeros((m, p.dim))
        for j in range(1, m + 1):
            mask = owner >= j
            out[j - 1] = (lam[mask, None] * W[mask]).sum(axis=0)
        return out, lam

    lam_a = np.zeros(len(active))
    if nonzero.any() and len(active):
        rows, rhs = [], []
        for j in np.flatnonzero(nonzero):
            rows.append(np.where((owner[active] >= j + 1)[None, :], W[active].T, 0.0))
            rhs.append(legs[j] / lengths[j])
        A = np.vstack(rows)
        y = np.concatenate(rhs)
        lam_a, _ = nnls(A, y)

        S, _ = sums(lam_a)
        zero_excess = np.linalg.norm(S[~nonzero], axis=1) - 1.0 if (~nonzero).any() else np.array([0.0])
        if zero_excess.max() > 1e-9:
            lam_a = _refine_multipliers(A, y, lam_a, active, owner, W, ~nonzero, m)

    S, lam = sums(lam_a)
    stat = 0.0
    for j in range(m):
        if nonzero[j]:
            stat = max(stat, float(np.abs(legs[j] / lengths[j] - S[j]).max()))
        else:
            stat = max(stat, float(np.linalg.norm(S[j]) - 1.0))
    comp = float(np.abs(lam * slack).max()) if k else 0.0
    return KktCertificate(tuple(float(v) for v in lam), max(stat, 0.0), comp)


def _refine_multipliers(A, y, lam0, active, owner, W, zero_mask, m):
    zero_legs = np.flatnonzero(zero_mask)
    act_owner = owner[active]
    Wa = W[active]

    def obj(lam):
        r = A @ lam - y
        return float(r @ r)

    def jac(lam):
        return 2.0 * A.T @ (A @ lam - y)

    cons = []
    for j in zero_legs:
        mask = act_owner >= j + 1

        def c(lam, mask=mask):
            v = (lam[mask, None] * Wa[mask]).sum(axis=0)
            return 1.0 - float(v @ v)

        cons.append({"type": "ineq", "fun": c})
    res = minimize(obj, lam0, jac=jac, bounds=[(0.0, None)] * len(lam0),
                   constraints=cons, method="SLSQP", options={"ftol": 1e-16, "maxiter": 500})
    return np.maximum(res.x, 0.0) if res.success else lam0


# --------------------------------------------------------------------------


def cost_gap(h1: HalfspaceClassifier, h2: HalfspaceClassifier, x0,
             cost: CostModel | None = None, tol: float = DEFAULT_TOL) -> CostGap:
    """Conjunction vs sequential cost for one agent and a pair of tests."""
    cost = cost or CostModel.l2()
    pipe = Pipeline((h1, h2), Mode.SEQUENTIAL)
    closed = (h1.dim == 2 and cost.kind is CostKind.L2
              and abs(float(h1.normalize().w @ h2.normalize().w)) < 1.0 - PARALLEL_TOL)
    if closed:
        c_conj = conjunction_closed_form_2d(h1, h2, x0).total_cost
        c_seq = sequential_closed_form_2d(h1, h2, x0).total_cost
    else:
        c_conj = conjunction_response(pipe, x0, cost, tol).total_cost
        c_seq = sequential_response(pipe, x0, cost, tol).total_cost
    assert c_conj >= c_seq - 1e-6, "conjunction cost below sequential cost"
    if c_seq > 1e-12:
        ratio = c_conj / c_seq
    elif c_conj > 1e-12:
        ratio = math.inf
    else:
        ratio = 1.0
    return CostGap(c_conj, c_seq, ratio)


def project_polyhedron_batch(W, b, X):
    """Exact Euclidean projection of many points onto ``{W @ z >= b}`` by
    enumerating active sets (intended for small ``k``).

    Returns ``(Z, found)``; rows with ``found == False`` hit a degenerate
    active set and need the general solver.
    """
    W = np.asarray(W, float)
    b = np.asarray(b, float)
    X = np.asarray(X, float)
    n, d = X.shape
    k = len(b)
    Z = X.copy()
    slack = X @ W.T - b
    found = np.all(slack >= -BOUNDARY_TOL, axis=1)
    for size in range(1, min(k, d) + 1):
        if found.all():
            break
        for S in itertools.combinations(range(k), size):
            todo = ~found
            if not todo.any():
                break
            WS = W[list(S)]
            G = WS @ WS.T
            if abs(np.linalg.det(G)) < 1e-12:
                continue
            Ginv = np.linalg.inv(G)
            r = b[list(S)][None] - X[todo] @ WS.T  # (n', |S|)
            lam = r @ Ginv
            cand = X[todo] + lam @ WS
            ok = np.all(lam >= -1e-12, axis=1) & np.all(cand @ W.T - b >= -BOUNDARY_TOL, axis=1)
            idx = np.flatnonzero(todo)[ok]
            Z[idx] = cand[ok]
            found[idx] = True
    return Z, found
