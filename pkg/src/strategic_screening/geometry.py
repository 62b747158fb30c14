"""Halfspace classifiers, pipelines, cost models and the exact geometric
primitives the closed forms are built from.

All value types are immutable; functions are pure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatch, InfeasibleRegion, NotNormalized, ParallelClassifiers

BOUNDARY_TOL = 1e-9
PARALLEL_TOL = 1e-9
RANK_TOL = 1e-7


def as_point(x, d: int | None = None) -> np.ndarray:
    """Validate and return ``x`` as a finite 1-D float array."""
    arr = np.array(x, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionMismatch(f"feature vector must be 1-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature vector has non-finite entries")
    if d is not None and arr.size != d:
        raise DimensionMismatch(f"expected dimension {d}, got {arr.size}")
    arr.setflags(write=False)
    return arr


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HalfspaceClassifier:
    """Linear test ``h(x) = 1  iff  w @ x >= b``."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        w = _frozen(self.w)
        if w.ndim != 1 or w.size < 1:
            raise DimensionMismatch("w must be a non-empty 1-D vector")
        if not np.all(np.isfinite(w)) or not math.isfinite(float(self.b)):
            raise ValueError("classifier parameters must be finite")
        if np.linalg.norm(w) <= 0.0:
            raise ValueError("classifier normal must be non-zero")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.w.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.w))

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.norm - 1.0) <= tol

    def normalize(self) -> "HalfspaceClassifier":
        n = self.norm
        return HalfspaceClassifier(self.w / n, self.b / n)

    def shifted(self, delta: float) -> "HalfspaceClassifier":
        return HalfspaceClassifier(self.w, self.b + delta)

    def margin(self, x) -> float:
        """Signed slack ``w @ x - b``."""
        x = as_point(x, self.dim)
        return float(self.w @ x - self.b)

    def __call__(self, x) -> int:
        return classify(self, x)

    def __eq__(self, other):
        if not isinstance(other, HalfspaceClassifier):
            return NotImplemented
        return self.b == other.b and np.array_equal(self.w, other.w)

    def __hash__(self):
        return hash((self.w.tobytes(), self.b))

    def __repr__(self):
        return f"HalfspaceClassifier(w={self.w.tolist()}, b={self.b!r})"


class Mode(str, enum.Enum):
    SEQUENTIAL = "sequential"
    CONJUNCTION = "conjunction"


@dataclass(frozen=True)
class Pipeline:
    classifiers: tuple
    mode: Mode = Mode.SEQUENTIAL

    def __post_init__(self):
        cls = tuple(self.classifiers)
        if len(cls) < 1:
            raise ValueError("a pipeline needs at least one classifier")
        d = cls[0].dim
        for h in cls:
            if h.dim != d:
                raise DimensionMismatch("all classifiers in a pipeline must share a dimension")
        object.__setattr__(self, "classifiers", cls)
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def k(self) -> int:
        return len(self.classifiers)

    @property
    def dim(self) -> int:
        return self.classifiers[0].dim

    @property
    def W(self) -> np.ndarray:
        return np.vstack([h.w for h in self.classifiers])

    @property
    def b(self) -> np.ndarray:
        return np.array([h.b for h in self.classifiers])

    def normalized(self) -> "Pipeline":
        return Pipeline(tuple(h.normalize() for h in self.classifiers), self.mode)

    def with_mode(self, mode) -> "Pipeline":
        return Pipeline(self.classifiers, Mode(mode))

    def accepts(self, x) -> bool:
        """Conjunction acceptance of an unmanipulated point."""
        return all(classify(h, x) for h in self.classifiers)


class CostKind(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"
    QUADRATIC = "quadratic"


@dataclass(frozen=True, eq=False)
class CostModel:
    """Manipulation cost ``c(x, y)``: an lp norm of ``y - x`` or the quadratic
    form ``(y - x) @ A @ (y - x)`` with ``A`` symmetric positive definite."""

    kind: CostKind = CostKind.L2
    matrix: np.ndarray | None = field(default=None)

    def __post_init__(self):
        kind = CostKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is CostKind.QUADRATIC:
            if self.matrix is None:
                raise ValueError("quadratic cost requires a matrix")
            A = _frozen(self.matrix)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise DimensionMismatch("quadratic cost matrix must be square")
            if not np.allclose(A, A.T, atol=1e-12, rtol=0):
                raise ValueError("quadratic cost matrix must be symmetric")
            if np.linalg.eigvalsh(A).min() <= 0.0:
                raise ValueError("quadratic cost matrix must be positive definite")
            object.__setattr__(self, "matrix", A)
        elif self.matrix is not None:
            raise ValueError(f"{kind.value} cost takes no matrix")

    @classmethod
    def l2(cls) -> "CostModel":
        return cls(CostKind.L2)

    @property
    def is_norm(self) -> bool:
        return self.kind is not CostKind.QUADRATIC

    def of_delta(self, delta) -> np.ndarray:
        """Cost of displacement(s); ``delta`` may be ``(d,)`` or ``(n, d)``."""
        delta = np.asarray(delta, dtype=float)
        if self.kind is CostKind.L2:
            return np.linalg.norm(delta, axis=-1)
        if self.kind is CostKind.L1:
            return np.abs(delta).sum(axis=-1)
        if self.kind is CostKind.LINF:
            return np.abs(delta).max(axis=-1)
        return np.einsum("...i,ij,...j->...", delta, self.matrix, delta)

    def __call__(self, x, y) -> float:
        return float(self.of_delta(np.asarray(y, float) - np.asarray(x, float)))

    def dual_norm(self, w) -> float:
        """Norm dual to the cost norm, so that the cost-distance from ``x`` to
        ``{w @ y >= b}`` is ``max(0, b - w @ x) / dual_norm(w)``."""
        w = np.asarray(w, float)
        if self.kind is CostKind.L2:
            return float(np.linalg.norm(w))
        if self.kind is CostKind.L1:
            return float(np.abs(w).max())
        if self.kind is CostKind.LINF:
            return float(np.abs(w).sum())
        raise ValueError("quadratic cost has no dual norm")

    def lipschitz_l2(self, d: int) -> float:
        """Lipschitz constant of the cost norm with respect to Euclidean
        displacement."""
        if self.kind is CostKind.L1:
            return math.sqrt(d)
        if self.kind in (CostKind.L2, CostKind.LINF):
            return 1.0
        raise ValueError("quadratic cost is not Lipschitz")

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.matrix is not None:
            out["matrix"] = self.matrix.tolist()
        return out

    def __repr__(self):
        if self.matrix is None:
            return f"CostModel({self.kind.value})"
        return f"CostModel(quadratic, {self.matrix.tolist()})"


# --------------------------------------------------------------------------
# primitives


def classify(h: HalfspaceClassifier, x) -> int:
    """1 iff ``w @ x >= b`` up to the boundary tolerance (scaled by ``|w|``)."""
    x = as_point(x)
    if x.size != h.dim:
        raise DimensionMismatch(f"classifier has dimension {h.dim}, point has {x.size}")
    return int(h.w @ x - h.b >= -BOUNDARY_TOL * h.norm)


def project_and_distance(h: HalfspaceClassifier, x):
    """Euclidean projection of ``x`` onto ``{w @ y >= 0}`` and its distance.

    Requires a normalized classifier through the origin.
    """
    if not h.is_normalized():
        raise NotNormalized("project_and_distance needs |w| = 1")
    if h.b != 0.0:
        raise ValueError("project_and_distance needs b = 0; homogenize first")
    x = as_point(x, h.dim)
    s = float(h.w @ x)
    if s >= 0.0:
        return x.copy(), 0.0
    return x - s * h.w, abs(s)


def homogenize(h1: HalfspaceClassifier, h2: HalfspaceClassifier):
    """Translate coordinates so both boundaries pass through the origin.

    Returns ``(s, h1', h2')`` with ``h_i(x) == h_i'(x + s)``; the normals of the
    returned classifiers are normalized.
    """
    if h1.dim != 2 or h2.dim != 2:
        raise DimensionMismatch("homogenize is defined for d = 2")
    g1, g2 = h1.normalize(), h2.normalize()
    if abs(float(g1.w @ g2.w)) >= 1.0 - PARALLEL_TOL:
        raise ParallelClassifiers("classifiers are parallel")
    s = np.linalg.solve(np.vstack([g1.w, g2.w]), -np.array([g1.b, g2.b]))
    s[np.abs(s) < 1e-15] = 0.0
    return _frozen(s), HalfspaceClassifier(g1.w, 0.0), HalfspaceClassifier(g2.w, 0.0)


def boundary_intersection(h1: HalfspaceClassifier, h2: HalfspaceClassifier) -> np.ndarray:
    """Meeting point of two non-parallel boundaries in the plane."""
    s, _, _ = homogenize(h1, h2)
    return -s


def angle_between(h1: HalfspaceClassifier, h2: HalfspaceClassifier) -> float:
    """Opening angle of the accepted wedge, ``arccos(-w1 @ w2)``."""
    if not (h1.is_normalized(1e-9) and h2.is_normalized(1e-9)):
        raise NotNormalized("angle_between needs normalized classifiers")
    c = float(h1.w @ h2.w)
    if abs(c) >= 1.0 - PARALLEL_TOL:
        raise ParallelClassifiers("classifiers are parallel")
    return math.acos(-c)


def is_monotone(h: HalfspaceClassifier) -> bool:
    return bool(np.all(h.w >= -PARALLEL_TOL))


def _max_slack_point(A_ub, b_ub, A_eq=None, b_eq=None, row_norms=None):
    """Chebyshev-style phase-1 LP: maximize ``t <= 1`` subject to
    ``A_ub @ x - t * |row| >= b_ub``. Returns ``(x, t)`` or ``None``."""
    n, d = A_ub.shape
    if row_norms is None:
        row_norms = np.linalg.norm(A_ub, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    G = np.hstack([-A_ub, row_norms[:, None]])
    kwargs = {}
    if A_eq is not None and len(A_eq):
        kwargs = {"A_eq": np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))]), "b_eq": b_eq}
    bounds = [(None, None)] * d + [(None, 1.0)]
    res = linprog(c, A_ub=G, b_ub=-b_ub, bounds=bounds, method="highs", **kwargs)
    if res.status != 0:
        return None
    return res.x[:d], float(res.x[-1])


def interior_point(W, b):
    """Point of ``{W @ x >= b}`` with maximal normalized slack, and that slack.

    Raises ``InfeasibleRegion`` when the region is empty.
    """
    W = np.atleast_2d(np.asarray(W, float))
    b = np.asarray(b, float)
    out = _max_slack_point(W, b)
    if out is None or out[1] < -1e-9:
        raise InfeasibleRegion("conjunction accept region is empty")
    return out


def conjunction_feasible(pipeline: Pipeline) -> bool:
    try:
        interior_point(pipeline.W, pipeline.b)
    except InfeasibleRegion:
        return False
    return True


def general_position(classifiers: Sequence[HalfspaceClassifier]) -> bool:
    """True when every boundary meets the others' joint accept region in a
    full ``(d-1)``-dimensional face.

    For each classifier a phase-1 LP looks for a point on its boundary that is
    strictly inside every other halfspace; the face's affine dimension is then
    read off the null space of the constraints active there.
    """
    cls = [h.normalize() for h in classifiers]
    if not cls:
        raise ValueError("need at least one classifier")
    d = cls[0].dim
    W = np.vstack([h.w for h in cls])
    b = np.array([h.b for h in cls])
    interior_point(W, b)  # raises on an empty conjunction
    k = len(cls)
    if k == 1:
        return True
    for i in range(k):
        others = [j for j in range(k) if j != i]
        out = _max_slack_point(W[others], b[others], A_eq=W[i:i + 1], b_eq=b[i:i + 1])
        if out is None:
            return False
        x, t = out
        if t <= RANK_TOL:
            return False
        slack = W @ x - b
        active = [i] + [j for j in others if slack[j] <= RANK_TOL]
        sv = np.linalg.svd(W[active], compute_uv=False)
        rank = int(np.sum(sv > RANK_TOL * max(1.0, sv.max())))
        if d - rank != d - 1:
            return False
    return True


def stack_points(points: Iterable, d: int | None = None) -> np.ndarray:
    arr = np.array([np.asarray(p, float) for p in points], dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch("points must share one dimension")
    if d is not None and arr.shape[1] != d:
        raise DimensionMismatch(f"expected dimension {d}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points have non-finite entries")
    return arr


def wedge_pair(theta: float, apex=(0.0, 0.0)):
    """Two planar tests whose accepted wedge has opening angle ``theta`` at
    ``apex``: ``x_2 >= apex_2`` and a boundary rotated by ``theta``."""
    if not 0.0 < theta < math.pi:
        raise ValueError("theta must lie in (0, pi)")
    a = np.asarray(apex, float)
    w1 = np.array([0.0, 1.0])
    w2 = np.array([math.sin(theta), -math.cos(theta)])
    return HalfspaceClassifier(w1, float(w1 @ a)), HalfspaceClassifier(w2, float(w2 @ a))


def cost_gap_pair(gamma: float):
    """``x_1/gamma + x_2 >= 1`` and ``x_1/gamma - x_2 >= 1``: from the origin a
    sequential agent pays at most 3 while a simultaneous one pays ``gamma``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return (HalfspaceClassifier([1.0 / gamma, 1.0], 1.0),
            HalfspaceClassifier([1.0 / gamma, -1.0], 1.0))
