"""Conservative threshold-shift defense and its audits.

The firm normalizes every test and raises each threshold by the agents'
budget ``tau``.  An unqualified agent then sits more than ``tau`` (in
Euclidean distance) below some shifted boundary, and no path costing at most
``tau`` can clear it, in either setting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AgentEvaluationError,
    DimensionMismatch,
    GridSpecError,
    InfeasibleRegion,
    ParallelClassifiers,
)
from .geometry import (
    BOUNDARY_TOL,
    CostKind,
    CostModel,
    Mode,
    Pipeline,
    _max_slack_point,
    general_position,
    homogenize,
    stack_points,
)
from .oracle import GridSpec
from .response import (
    REGION_FROM_CODE,
    RegionLabel,
    closed_form_costs_2d,
    conjunction_response,
    project_polyhedron_batch,
    seq2d_batch,
    sequential_response,
)
from .solver import DEFAULT_TOL

BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class DefendedPipeline:
    original: Pipeline
    shifted: Pipeline
    tau: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "mode": self.original.mode.value,
            "original": [{"w": h.w.tolist(), "b": h.b} for h in self.original.classifiers],
            "shifted": [{"w": h.w.tolist(), "b": h.b} for h in self.shifted.classifiers],
        }


@dataclass(frozen=True)
class ScreeningOutcome:
    accepted: bool
    cost_spent: float
    qualified: bool
    region: RegionLabel | None = None


@dataclass(frozen=True)
class EvaluationReport:
    tp_rate: float
    fp_rate: float
    tn_rate: float
    fn_rate: float
    n_agents: int
    setting: Mode
    tau: float

    def to_dict(self) -> dict:
        return {
            "setting": self.setting.value,
            "tau": self.tau,
            "n_agents": self.n_agents,
            "tp_rate": self.tp_rate,
            "fp_rate": self.fp_rate,
            "tn_rate": self.tn_rate,
            "fn_rate": self.fn_rate,
        }


def conservative_defense(pipeline: Pipeline, tau: float) -> DefendedPipeline:
    """Normalize every test and raise its threshold by ``tau``."""
    tau = float(tau)
    if not math.isfinite(tau) or tau < 0:
        raise ValueError("tau must be a finite non-negative number")
    p = pipeline.normalized()
    shifted = Pipeline(tuple(h.shifted(tau) for h in p.classifiers), pipeline.mode)
    return DefendedPipeline(p, shifted, tau)


# --------------------------------------------------------------------------
# batched manipulation costs


def qualified_mask(pipeline: Pipeline, X) -> np.ndarray:
    """Ground truth: the unmanipulated point passes every original test."""
    p = pipeline.normalized()
    return np.all(X @ p.W.T - p.b >= -BOUNDARY_TOL, axis=1)


def cost_lower_bound(pipeline: Pipeline, X, cost: CostModel, setting) -> np.ndarray:
    """Cheap lower bound on the best-response cost of each row of ``X``.

    Clearing test ``i`` alone already costs the cost-distance to its
    halfspace.  For a quadratic cost a sequential agent may split that
    distance over the first ``i`` legs, which divides it by ``i``.
    """
    p = pipeline.normalized()
    gaps = np.maximum(p.b[None, :] - X @ p.W.T, 0.0)
    if cost.is_norm:
        dual = np.array([cost.dual_norm(w) for w in p.W])
        return (gaps / dual).max(axis=1)
    Ainv = np.linalg.inv(cost.matrix)
    q = np.einsum("ij,jk,ik->i", p.W, Ainv, p.W)
    if Mode(setting) is Mode.SEQUENTIAL:
        q = q * np.arange(1, p.k + 1)
    return (gaps**2 / q).max(axis=1)


def _closed_form_applies(p: Pipeline, cost: CostModel) -> bool:
    if not (p.k == 2 and p.dim == 2 and cost.kind is CostKind.L2):
        return False
    try:
        homogenize(*p.classifiers)
    except ParallelClassifiers:
        return False
    return True


def _solver_cost(p: Pipeline, x, cost, setting, tol):
    try:
        if setting is Mode.CONJUNCTION:
            return conjunction_response(p, x, cost, tol).total_cost
        return sequential_response(p, x, cost, tol).total_cost
    except InfeasibleRegion:
        return math.inf


def manipulation_costs(pipeline: Pipeline, X, cost: CostModel, setting, budget=math.inf,
                       tol: float = DEFAULT_TOL) -> np.ndarray:
    """Best-response cost for every row of ``X`` in the given setting.

    Only comparisons against ``budget`` are guaranteed exact: rows whose cost
    provably exceeds the budget may carry a lower bound instead of the true
    value.  Rows are screened with :func:`cost_lower_bound`, already-accepted
    rows cost zero, two planar tests use the closed forms, Euclidean
    conjunctions use exact polyhedral projection, and a sequential agent whose
    conjunction cost fits the budget is settled without solving (sequential
    never costs more).
    """
    setting = Mode(setting)
    p = pipeline.normalized()
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[1] != p.dim:
        raise DimensionMismatch("agent and pipeline dimensions differ")
    if _closed_form_applies(p, cost):
        c_conj, c_seq, _ = closed_form_costs_2d(*p.classifiers, X)
        return c_conj if setting is Mode.CONJUNCTION else c_seq

    out = cost_lower_bound(p, X, cost, setting)
    accepted = np.all(X @ p.W.T - p.b >= -BOUNDARY_TOL, axis=1)
    out[accepted] = 0.0
    todo = np.flatnonzero(~accepted & (out <= budget + BUDGET_TOL))
    if len(todo) == 0:
        return out

    conj = np.full(len(todo), np.nan)
    if cost.kind is CostKind.L2 and p.k <= 4:
        Z, found = project_polyhedron_batch(p.W, p.b, X[todo])
        conj[found] = np.linalg.norm(Z[found] - X[todo][found], axis=1)
    for n, i in enumerate(todo):
        try:
            if setting is Mode.CONJUNCTION:
                out[i] = conj[n] if not np.isnan(conj[n]) else _solver_cost(p, X[i], cost, setting, tol)
                continue
            if not np.isnan(conj[n]) and conj[n] <= budget + BUDGET_TOL:
                # sequential cost is at most the conjunction cost
                if math.isinf(budget):
                    out[i] = _solver_cost(p, X[i], cost, setting, tol)
                else:
                    out[i] = min(conj[n], budget)
                continue
            out[i] = _solver_cost(p, X[i], cost, setting, tol)
        except Exception as exc:  # noqa: BLE001 - report which agent failed
            raise AgentEvaluationError(int(i), exc) from exc
    return out


def screen(defended: DefendedPipeline, agents, tau: float, cost: CostModel | None = None,
           setting=None, tol: float = DEFAULT_TOL) -> list:
    """Per-agent outcomes against the shifted pipeline."""
    cost = cost or CostModel.l2()
    setting = Mode(setting or defended.original.mode)
    X = stack_points(agents, defended.original.dim)
    if float(tau) < 0:
        raise ValueError("tau must be non-negative")
    shifted = defended.shifted.with_mode(setting)
    costs = manipulation_costs(shifted, X, cost, setting, budget=tau, tol=tol)
    ok = costs <= tau + BUDGET_TOL
    qual = qualified_mask(defended.original, X)
    regions = [None] * len(X)
    p = shifted.normalized()
    if _closed_form_applies(p, cost):
        s, g1, g2 = homogenize(*p.classifiers)
        _, _, _, codes = seq2d_batch(g1.w, g2.w, X + s)
        regions = [REGION_FROM_CODE[int(c)] for c in codes]
    return [
        ScreeningOutcome(bool(a), float(c) if a else 0.0, bool(q), r)
        for a, c, q, r in zip(ok, costs, qual, regions)
    ]


def evaluate(defended: DefendedPipeline, agents, tau: float, cost: CostModel | None = None,
             setting=None, tol: float = DEFAULT_TOL) -> EvaluationReport:
    """Confusion rates of the defended pipeline on agents with budget ``tau``.

    Ground truth is acceptance by the original tests at the unmanipulated
    point; an agent is accepted when its cheapest manipulation of the shifted
    pipeline costs at most ``tau``.
    """
    setting = Mode(setting or defended.original.mode)
    outcomes = screen(defended, agents, tau, cost, setting, tol)
    if not outcomes:
        raise ValueError("need at least one agent")
    return report_from_outcomes(outcomes, setting, tau)


def report_from_outcomes(outcomes, setting, tau) -> EvaluationReport:
    n = len(outcomes)
    acc = np.array([o.accepted for o in outcomes])
    qual = np.array([o.qualified for o in outcomes])
    tp = int(np.sum(acc & qual))
    fp = int(np.sum(acc & ~qual))
    tn = int(np.sum(~acc & ~qual))
    fn = n - tp - fp - tn
    return EvaluationReport(tp / n, fp / n, tn / n, fn / n, n, Mode(setting), float(tau))


# --------------------------------------------------------------------------
# zero false positive audit


@dataclass(frozen=True, eq=False)
class AuditResult:
    passed: bool
    tau: float
    settings: tuple
    n_checked: int
    counterexample: np.ndarray | None = None
    counterexample_setting: Mode | None = None
    counterexample_cost: float | None = None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tau": self.tau,
            "settings": [s.value for s in self.settings],
            "n_checked": self.n_checked,
            "counterexample": None if self.counterexample is None else self.counterexample.tolist(),
            "counterexample_setting": None if self.counterexample_setting is None
            else self.counterexample_setting.value,
            "counterexample_cost": self.counterexample_cost,
        }


def _vertices_2d(p: Pipeline):
    pts = []
    cls = p.classifiers
    for i in range(len(cls)):
        for j in range(i + 1, len(cls)):
            try:
                s, _, _ = homogenize(cls[i], cls[j])
            except ParallelClassifiers:
                continue
            pts.append(-s)
    return np.array(pts).reshape(-1, 2)


def check_audit_grid(defended: DefendedPipeline, tau: float, grid: GridSpec):
    if grid.dim != 2:
        raise GridSpecError("the raster audit needs a planar grid")
    V = _vertices_2d(defended.original)
    if len(V) and not all(grid.contains(v, margin=2.0 * tau - 1e-12) for v in V):
        raise GridSpecError("audit grid must cover every boundary meeting point with margin 2*tau")


def zero_fp_audit(defended: DefendedPipeline, tau: float, cost: CostModel | None = None,
                  grid: GridSpec | None = None, settings=(Mode.SEQUENTIAL, Mode.CONJUNCTION),
                  err: float = DEFAULT_TOL) -> AuditResult:
    """Search the grid for an unqualified agent who can afford the shifted
    pipeline.

    A counterexample is an unqualified node whose best-response cost is at
    most ``tau - err``; ``err`` absorbs solver error.  Candidates are checked
    in order of increasing cost lower bound and the first hit is returned.
    """
    cost = cost or CostModel.l2()
    if defended.original.dim != 2:
        raise DimensionMismatch("the raster audit is defined for d = 2")
    if grid is None:
        raise GridSpecError("an audit grid is required")
    tau = float(tau)
    check_audit_grid(defended, tau, grid)
    settings = tuple(Mode(s) for s in settings)
    X = grid.nodes()
    X = X[~qualified_mask(defended.original, X)]
    limit = tau - err
    for setting in settings:
        shifted = defended.shifted.with_mode(setting)
        lb = cost_lower_bound(shifted, X, cost, setting)
        cand = np.flatnonzero(lb <= limit)
        if len(cand) == 0:
            continue
        cand = cand[np.argsort(lb[cand], kind="stable")]
        p = shifted.normalized()
        if _closed_form_applies(p, cost):
            costs = manipulation_costs(p, X[cand], cost, setting)
            hit = np.flatnonzero(costs <= limit)
            if len(hit):
                j = int(hit[0])
                return AuditResult(False, tau, settings, len(X), X[cand[j]], setting, float(costs[j]))
            continue
        for i in cand:
            c = float(manipulation_costs(p, X[i:i + 1], cost, setting, budget=limit)[0])
            if c <= limit:
                return AuditResult(False, tau, settings, len(X), X[i], setting, c)
    return AuditResult(True, tau, settings, len(X))


@dataclass(frozen=True)
class SpotCheckResult:
    applicable: bool
    faces: tuple = ()

    @property
    def passed(self) -> bool:
        return self.applicable and all(self.faces)


def optimality_spot_check(defended: DefendedPipeline, tau: float, cost: CostModel | None = None,
                          delta: float = 1e-2) -> SpotCheckResult:
    """Loosen each shifted threshold by ``delta`` and look for a false positive
    next to that face.

    The probe agent sits ``tau + delta/2`` straight below a relative-interior
    point of the shifted face, so it is unqualified yet can reach the
    loosened face for ``tau - delta/2``.  Only meaningful in general
    position; otherwise the result is marked not applicable.
    """
    cost = cost or CostModel.l2()
    try:
        if not general_position(defended.shifted.classifiers):
            return SpotCheckResult(False)
    except InfeasibleRegion:
        return SpotCheckResult(False)
    p = defended.shifted.normalized()
    W, b = p.W, p.b
    faces = []
    for i in range(p.k):
        others = [j for j in range(p.k) if j != i]
        if others:
            out = _max_slack_point(W[others], b[others], A_eq=W[i:i + 1], b_eq=b[i:i + 1])
            if out is None:
                faces.append(False)
                continue
            point = out[0]
        else:
            point = b[i] * W[i]
        agent = point - (tau + 0.5 * delta) * W[i]
        if qualified_mask(defended.original, agent[None])[0]:
            faces.append(False)
            continue
        loose = Pipeline(
            tuple(h.shifted(-delta) if j == i else h for j, h in enumerate(p.classifiers)), p.mode
        )
        c = manipulation_costs(loose, agent[None], cost, p.mode, budget=tau)[0]
        faces.append(bool(c <= tau + BUDGET_TOL))
    return SpotCheckResult(True, tuple(faces))
