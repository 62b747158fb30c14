"""Agent populations and planar manipulation-region rasters."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import HalfspaceClassifier, boundary_intersection
from .oracle import GridSpec
from .response import REGION_FROM_CODE, closed_form_costs_2d

DEFAULT_RESOLUTION = 200
BUDGET_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RegionRaster:
    """Closed-form costs on a planar grid.

    Cell ``(i, j)`` is centred on grid node ``(i, j)``; axis 0 runs along the
    first feature.  Values are point evaluations at the centre, so the raster
    is a picture of the regions, not a bound over each cell.
    """

    grid: GridSpec
    tau: float
    c_conj: np.ndarray
    c_seq: np.ndarray
    region: np.ndarray  # region codes, see response.REGION_CODES
    ok_conj: np.ndarray
    ok_seq: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.c_conj.shape

    @property
    def n_cells(self) -> int:
        return int(self.c_conj.size)

    def centers(self) -> np.ndarray:
        return self.grid.nodes()

    def region_labels(self) -> np.ndarray:
        return np.vectorize(lambda c: REGION_FROM_CODE[int(c)].value, otypes=[object])(self.region)

    def region_counts(self) -> dict:
        codes, counts = np.unique(self.region, return_counts=True)
        return {REGION_FROM_CODE[int(c)].value: int(n) for c, n in zip(codes, counts)}

    def rows(self):
        """``(x, y, c_conj, c_seq, region, ok_conj, ok_seq)`` per cell, row-major."""
        pts = self.centers()
        labels = self.region_labels().ravel()
        for p, cc, cs, lab, oc, os_ in zip(pts, self.c_conj.ravel(), self.c_seq.ravel(), labels,
                                           self.ok_conj.ravel(), self.ok_seq.ravel()):
            yield float(p[0]), float(p[1]), float(cc), float(cs), lab, bool(oc), bool(os_)


def default_raster_grid(h1: HalfspaceClassifier, h2: HalfspaceClassifier, tau: float,
                        resolution: int = DEFAULT_RESOLUTION) -> GridSpec:
    """Square box around the boundary meeting point with margin ``max(3 tau, 1)``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    v = boundary_intersection(h1, h2)
    m = max(3.0 * tau, 1.0)
    return GridSpec(v - m, v + m, 2.0 * m / (resolution - 1))


def rasterize(h1: HalfspaceClassifier, h2: HalfspaceClassifier, tau: float,
              grid: GridSpec | None = None) -> RegionRaster:
    """Conjunction and sequential costs, region labels and budget flags on a grid."""
    tau = float(tau)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if grid is None:
        grid = default_raster_grid(h1, h2, tau)
    if grid.dim != 2:
        raise ValueError("rasters are planar")
    X = grid.nodes()
    c_conj, c_seq, region = closed_form_costs_2d(h1, h2, X)
    shape = grid.shape
    c_conj = c_conj.reshape(shape)
    c_seq = c_seq.reshape(shape)
    return RegionRaster(
        grid, tau, c_conj, c_seq, region.reshape(shape),
        c_conj <= tau + BUDGET_TOL, c_seq <= tau + BUDGET_TOL,
    )


# --------------------------------------------------------------------------
# populations


class PopulationKind(str, enum.Enum):
    GRID_FAN = "grid_fan"
    UNIFORM_BOX = "uniform_box"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    kind: PopulationKind
    n: int
    seed: int = 0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PopulationKind(self.kind))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("population size must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        for name in ("lower", "upper", "mean"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.atleast_1d(np.asarray(v, dtype=float)))
        if self.cov is not None:
            object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if self.kind is PopulationKind.GAUSSIAN:
            if self.mean is None or self.cov is None:
                raise ValueError("gaussian populations need mean and cov")
            d = self.mean.size
            if self.cov.shape != (d, d):
                raise ValueError("cov must be d x d")
            if not np.allclose(self.cov, self.cov.T, atol=1e-12, rtol=0):
                raise ValueError("cov must be symmetric")
            if np.linalg.eigvalsh(self.cov).min() < -1e-12:
                raise ValueError("cov must be positive semidefinite")
        else:
            if self.lower is None or self.upper is None:
                raise ValueError(f"{self.kind.value} populations need lower and upper bounds")
            if self.lower.shape != self.upper.shape or np.any(self.upper < self.lower):
                raise ValueError("bounds must have equal length and upper >= lower")

    @property
    def dim(self) -> int:
        return (self.mean if self.kind is PopulationKind.GAUSSIAN else self.lower).size


def sample_population(spec: PopulationSpec) -> np.ndarray:
    """Deterministic agent sample, shape ``(n, d)``.

    A grid fan is the full lattice with ``n ** (1/d)`` points per axis, so
    ``n`` must be a perfect ``d``-th power.
    """
    d = spec.dim
    if spec.kind is PopulationKind.GRID_FAN:
        m = round(spec.n ** (1.0 / d))
        if m**d != spec.n:
            m = next((c for c in (m - 1, m + 1) if c > 0 and c**d == spec.n), None)
            if m is None:
                raise ValueError(f"grid fan size {spec.n} is not a perfect power of {d}")
        axes = [np.linspace(lo, hi, m) for lo, hi in zip(spec.lower, spec.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)
    rng = np.random.default_rng(spec.seed)
    if spec.kind is PopulationKind.UNIFORM_BOX:
        return rng.uniform(spec.lower, spec.upper, size=(spec.n, d))
    return rng.multivariate_normal(spec.mean, spec.cov, size=spec.n, method="eigh")


def raster_area(mask: np.ndarray, grid: GridSpec) -> float:
    """Area represented by the true cells of a mask."""
    return float(mask.sum()) * grid.h ** grid.dim


