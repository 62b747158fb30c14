"""Brute-force grid oracle for best responses.

Paths are restricted to grid nodes (plus the start point itself), so every
oracle value is the cost of a genuinely feasible path and can only
overestimate the optimum.  ``error_bound`` caps the overestimate: rounding
each optimal point inward and then to the nearest node moves it by at most
``h * sqrt(d)`` (further near sharp corners of a conjunction region).  The
bound assumes the box contains the optimal path with that much room to spare.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import nnls

from .errors import DimensionMismatch, GridSpecError
from .geometry import BOUNDARY_TOL, CostKind, CostModel, Mode, Pipeline, as_point
from .kernels import NORM_CODES, minplus_transition

MAX_NODES_PER_AXIS = 400
MAX_DIM = 3
MAX_STAGES = 3
MAX_TOTAL_NODES = 4_000_000


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Axis-aligned box ``[lower, upper]`` sampled every ``h``."""

    lower: np.ndarray
    upper: np.ndarray
    h: float

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        h = float(self.h)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GridSpecError("grid bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and math.isfinite(h)):
            raise GridSpecError("grid bounds and resolution must be finite")
        if h <= 0:
            raise GridSpecError("grid resolution must be positive")
        if np.any(hi <= lo):
            raise GridSpecError("grid upper bounds must exceed lower bounds")
        steps = (hi - lo) / h
        if np.any(steps > MAX_NODES_PER_AXIS + 1e-9):
            raise GridSpecError(
                f"grid has {int(np.ceil(steps.max()))} steps on some axis, cap is {MAX_NODES_PER_AXIS}"
            )
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "h", h)

    @classmethod
    def around(cls, points, margin: float, h: float) -> "GridSpec":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts.min(axis=0) - margin, pts.max(axis=0) + margin, h)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def shape(self) -> tuple:
        return tuple(int(math.floor(s + 1e-9)) + 1 for s in (self.upper - self.lower) / self.h)

    def axes(self) -> list:
        return [lo + self.h * np.arange(n) for lo, n in zip(self.lower, self.shape)]

    def nodes(self) -> np.ndarray:
        """All nodes, shape ``(N, d)``, in C order of :attr:`shape`."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lower + margin) and np.all(x <= self.upper - margin))

    def nearest_index(self, x):
        """Multi-index of the node nearest to ``x``, or None outside the box."""
        idx = np.rint((np.asarray(x, float) - self.lower) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            return None
        return tuple(idx)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "h": self.h}


@dataclass(frozen=True, eq=False)
class OracleResult:
    cost: float
    path: np.ndarray
    error_bound: float


def _setup(pipeline: Pipeline, x0, cost, grid: GridSpec, max_k):
    cost = cost or CostModel.l2()
    d = pipeline.dim
    if d > MAX_DIM:
        raise DimensionMismatch(f"the grid oracle handles d <= {MAX_DIM}")
    if pipeline.k > max_k:
        raise ValueError(f"the grid oracle handles at most {max_k} stages")
    if grid.dim != d:
        raise DimensionMismatch("grid and pipeline dimensions differ")
    if cost.matrix is not None and cost.matrix.shape[0] != d:
        raise DimensionMismatch("cost matrix dimension does not match the pipeline")
    if math.prod(grid.shape) > MAX_TOTAL_NODES:
        raise GridSpecError(f"grid has more than {MAX_TOTAL_NODES} nodes")
    x0 = as_point(x0, d)
    p = pipeline.normalized()
    return p, x0, cost


def _feasible(P, w, b):
    return P @ w - b >= -BOUNDARY_TOL


def sequential_error_bound(k: int, grid: GridSpec, cost: CostModel) -> float:
    if not cost.is_norm:
        return math.inf
    return (2 * k - 1) * grid.h * math.sqrt(grid.dim) * cost.lipschitz_l2(grid.dim)


def _approach_margin(W) -> float:
    """Smallest ``max_{|u|<=1} min_{i in S} w_i @ u`` over constraint subsets
    ``S`` (at most ``d`` rows) that admit a common inward direction.

    For a subset this equals the distance from the origin to the convex hull
    of its normals, found here by a penalized non-negative least squares.
    """
    k, d = W.shape
    best = 1.0
    for size in range(2, min(k, d) + 1):
        for S in itertools.combinations(range(k), size):
            Ws = W[list(S)]
            big = 1e3
            A = np.vstack([Ws.T, big * np.ones((1, size))])
            y = np.concatenate([np.zeros(d), [big]])
            lam, _ = nnls(A, y)
            lam = lam / lam.sum()
            m = float(np.linalg.norm(lam @ Ws))
            if m > 1e-9:
                best = min(best, m)
    return best


def conjunction_error_bound(pipeline: Pipeline, grid: GridSpec, cost: CostModel) -> float:
    if not cost.is_norm:
        return math.inf
    m = _approach_margin(pipeline.normalized().W)
    half = 0.5 * grid.h * math.sqrt(grid.dim)
    return half * (1.0 + 1.0 / m) * cost.lipschitz_l2(grid.dim)


def _snap_inside(grid: GridSpec, nodes, z, w, b):
    """A feasible node near ``z`` (which satisfies ``w @ z >= b``), or None."""
    q = z + 0.5 * grid.h * math.sqrt(grid.dim) * w
    idx = grid.nearest_index(q)
    if idx is None:
        return None
    node = nodes[np.ravel_multi_index(idx, grid.shape)]
    return node if w @ node - b >= -BOUNDARY_TOL else None


def _pruning_radius(p: Pipeline, x0, cost, grid, nodes) -> float:
    """Cost of an explicit feasible grid path (greedy projections, snapped).

    Every node on an optimal grid path lies within this cost of ``x0``
    because the cost is a norm.
    """
    if not cost.is_norm:
        return math.inf
    pts = [x0]
    cur = x0
    for w, b in zip(p.W, p.b):
        gap = b - w @ cur
        if gap <= BOUNDARY_TOL:
            pts.append(cur)
            continue
        proj = cur + gap * w
        node = _snap_inside(grid, nodes, proj, w, b)
        if node is None:
            return math.inf
        pts.append(node)
        cur = node
    return float(cost.of_delta(np.diff(np.array(pts), axis=0)).sum()) + 1e-9


def _distance_transform(mask, grid: GridSpec, cost: CostModel):
    """Cost from every node to the nearest node in ``mask`` plus that node's
    multi-index.  Exact between lattice nodes for all three norms."""
    feats = ~mask
    if cost.kind is CostKind.L2:
        dist, ind = ndimage.distance_transform_edt(feats, return_indices=True)
    else:
        metric = "taxicab" if cost.kind is CostKind.L1 else "chessboard"
        dist, ind = ndimage.distance_transform_cdt(feats, metric=metric, return_indices=True)
    return dist.astype(float) * grid.h, ind


def oracle_sequential(pipeline: Pipeline, x0, cost: CostModel | None, grid: GridSpec) -> OracleResult:
    """Cheapest grid path clearing the tests in order.

    Stage ``i`` visits a node with ``w_i @ z >= b_i`` (or stays at ``x0`` when
    ``x0`` already passes).  Stages are relaxed with the min-plus kernel; the
    last stage of a norm cost is a single distance transform.
    """
    p, x0, cost = _setup(pipeline, x0, cost, grid, MAX_STAGES)
    k = p.k
    W, b = p.W, p.b
    nodes = grid.nodes()
    R = _pruning_radius(p, x0, cost, grid, nodes)
    reach = cost.of_delta(nodes - x0) <= R
    code = NORM_CODES[cost.kind.value]

    # stage point sets: grid node indices plus an optional copy of x0 (index -1)
    stage_idx, stage_pts = [], []
    for i in range(k):
        idx = np.flatnonzero(reach & _feasible(nodes, W[i], b[i]))
        pts = nodes[idx]
        if W[i] @ x0 - b[i] >= -BOUNDARY_TOL:
            idx = np.append(idx, -1)
            pts = np.vstack([pts, x0[None]])
        if len(idx) == 0:
            raise GridSpecError(f"no grid node passes test {i}; widen the box or refine the grid")
        stage_idx.append(idx)
        stage_pts.append(pts)

    use_dt = cost.is_norm and k >= 2
    last_relaxed = k - 1 if use_dt else k
    values = [cost.of_delta(stage_pts[0] - x0)]
    args = [None]
    for i in range(1, last_relaxed):
        v, a = minplus_transition(values[-1], stage_pts[i - 1], stage_pts[i], code, cost.matrix)
        values.append(v)
        args.append(a)

    if use_dt:
        final_idx, final_pts = stage_idx[-1], stage_pts[-1]
        prev_idx, prev_pts, prev_v = stage_idx[-2], stage_pts[-2], values[-1]
        mask = np.zeros(grid.shape, dtype=bool)
        mask.flat[final_idx[final_idx >= 0]] = True
        dist, ind = _distance_transform(mask, grid, cost)
        on_grid = prev_idx >= 0
        # grid -> grid through the transform
        flat_prev = prev_idx[on_grid]
        totals = prev_v[on_grid] + dist.ravel()[flat_prev]
        nearest = np.ravel_multi_index(tuple(a.ravel()[flat_prev] for a in ind), grid.shape)
        cands = [(totals, np.flatnonzero(on_grid), nearest)]
        # x0 in the previous stage -> any final point
        if not on_grid.all():
            j = int(np.flatnonzero(~on_grid)[0])
            c = prev_v[j] + cost.of_delta(final_pts - x0)
            cands.append((c, np.full(len(c), j), final_idx))
        # grid -> x0 in the final stage
        if final_idx[-1] == -1:
            c = prev_v + cost.of_delta(prev_pts - x0)
            cands.append((c, np.arange(len(prev_v)), np.full(len(c), -1)))
        best = (math.inf, None, None)
        for tot, src, dst in cands:
            if len(tot):
                j = int(np.argmin(tot))
                if tot[j] < best[0]:
                    best = (float(tot[j]), int(src[j]), int(dst[j]))
        total, j_prev, flat_final = best
        end = x0 if flat_final == -1 else nodes[flat_final]
        path = [end, prev_pts[j_prev]]
        j = j_prev
        for i in range(k - 2, 0, -1):
            j = int(args[i][j])
            path.append(stage_pts[i - 1][j])
    else:
        j = int(np.argmin(values[-1]))
        total = float(values[-1][j])
        path = [stage_pts[-1][j]]
        for i in range(k - 1, 0, -1):
            j = int(args[i][j])
            path.append(stage_pts[i - 1][j])
    path.append(x0)
    path = np.array(path[::-1])
    total = float(cost.of_delta(np.diff(path, axis=0)).sum())
    return OracleResult(total, path, sequential_error_bound(k, grid, cost))


def oracle_conjunction(pipeline: Pipeline, x0, cost: CostModel | None, grid: GridSpec) -> OracleResult:
    """Cheapest move from ``x0`` to a grid node passing every test."""
    p, x0, cost = _setup(pipeline, x0, cost, grid, max(pipeline.k, 1))
    bound = conjunction_error_bound(p, grid, cost)
    if np.all(p.W @ x0 - p.b >= -BOUNDARY_TOL):
        return OracleResult(0.0, np.array([x0, x0]), bound)
    nodes = grid.nodes()
    ok = np.all(nodes @ p.W.T - p.b >= -BOUNDARY_TOL, axis=1)
    if not ok.any():
        raise GridSpecError("no grid node passes every test; widen the box or refine the grid")
    cand = nodes[ok]
    c = cost.of_delta(cand - x0)
    j = int(np.argmin(c))
    return OracleResult(float(c[j]), np.array([x0, cand[j]]), bound)


def oracle_response(pipeline: Pipeline, x0, cost: CostModel | None, grid: GridSpec) -> OracleResult:
    if pipeline.mode is Mode.CONJUNCTION:
        return oracle_conjunction(pipeline, x0, cost, grid)
    return oracle_sequential(pipeline, x0, cost, grid)
