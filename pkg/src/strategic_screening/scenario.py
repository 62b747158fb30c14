"""Scenario files and result serialization.

Scenarios are strict JSON: unknown keys, duplicate keys and non-finite
numbers are rejected with a :class:`ScenarioError` whose ``code`` says what
went wrong and whose ``field`` says where.  Results are written as a JSON
envelope ``{"type", "data", "metadata"}`` with reals rounded to 12
significant digits (infinities become the strings ``"inf"``/``"-inf"``), or
as CSV for tabular results.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .geometry import CostKind, CostModel, HalfspaceClassifier, Mode, Pipeline
from .oracle import GridSpec
from .population import PopulationKind, PopulationSpec, sample_population

SWEEP_PARAMS = ("gamma", "theta")
RASTER_HEADER = ("x", "y", "c_conj", "c_seq", "region", "ok_conj", "ok_seq")

_TOP_FIELDS = {"name", "description", "classifiers", "mode", "cost", "tau", "agents", "seed", "sweep"}
_REQUIRED = ("name", "classifiers")


@dataclass(frozen=True, eq=False)
class Sweep:
    param: str
    values: tuple


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    pipeline: Pipeline
    cost: CostModel
    tau: float = 0.0
    seed: int = 0
    agents: np.ndarray | None = None
    population: PopulationSpec | None = None
    grid: GridSpec | None = None
    sweep: Sweep | None = None
    description: str = ""

    @property
    def dim(self) -> int:
        return self.pipeline.dim

    @property
    def k(self) -> int:
        return self.pipeline.k

    def agent_points(self, seed: int | None = None) -> np.ndarray:
        """Agents as an ``(n, d)`` array, whichever way they were declared."""
        if self.agents is not None:
            return self.agents
        if self.population is not None:
            spec = self.population
            if seed is not None:
                spec = PopulationSpec(spec.kind, spec.n, seed, spec.lower, spec.upper, spec.mean, spec.cov)
            return sample_population(spec)
        if self.grid is not None:
            return self.grid.nodes()
        raise ScenarioError("MissingField", "agents", "scenario declares no agents")


# --------------------------------------------------------------------------
# parsing helpers


def _reject_constant(name):
    raise ValueError(f"non-finite number {name} is not allowed")


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number(v, where, *, nonneg=False, positive=False) -> float:
    if not _is_number(v):
        raise ScenarioError("InvalidValue", where, f"expected a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise ScenarioError("InvalidValue", where, "number must be finite")
    if nonneg and v < 0:
        raise ScenarioError("InvalidValue", where, "must be non-negative")
    if positive and v <= 0:
        raise ScenarioError("InvalidValue", where, "must be positive")
    return v


def _integer(v, where, *, minimum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError("InvalidValue", where, "expected an integer")
    if minimum is not None and v < minimum:
        raise ScenarioError("InvalidValue", where, f"must be at least {minimum}")
    return v


def _vector(v, where, dim=None) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise ScenarioError("InvalidValue", where, "expected a non-empty list of numbers")
    out = np.array([_number(x, f"{where}[{i}]") for i, x in enumerate(v)])
    if dim is not None and out.size != dim:
        raise ScenarioError("DimensionMismatch", where, f"expected length {dim}, got {out.size}")
    return out


def _matrix(v, where, dim) -> np.ndarray:
    if not isinstance(v, list) or len(v) != dim:
        raise ScenarioError("DimensionMismatch", where, f"expected a {dim}x{dim} matrix")
    return np.array([_vector(row, f"{where}[{i}]", dim) for i, row in enumerate(v)])


def _object(v, where, allowed, required=()) -> dict:
    if not isinstance(v, dict):
        raise ScenarioError("InvalidValue", where, "expected an object")
    for key in v:
        if key not in allowed:
            raise ScenarioError("UnknownField", f"{where}.{key}" if where else key, "unknown field")
    for key in required:
        if key not in v:
            raise ScenarioError("MissingField", f"{where}.{key}" if where else key, "required field missing")
    return v


def _enum(v, where, enum_cls):
    values = [e.value for e in enum_cls]
    if not isinstance(v, str) or v not in values:
        raise ScenarioError("InvalidEnum", where, f"expected one of {values}, got {v!r}")
    return enum_cls(v)


def _parse_classifiers(raw) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("InvalidValue", "classifiers", "expected a non-empty list")
    out = []
    dim = None
    for i, c in enumerate(raw):
        where = f"classifiers[{i}]"
        _object(c, where, {"w", "b"}, ("w", "b"))
        w = _vector(c["w"], f"{where}.w")
        if dim is None:
            dim = w.size
        elif w.size != dim:
            raise ScenarioError("DimensionMismatch", f"{where}.w",
                                f"dimension {w.size} differs from classifiers[0] ({dim})")
        if not np.any(w):
            raise ScenarioError("InvalidValue", f"{where}.w", "normal vector must be non-zero")
        out.append(HalfspaceClassifier(w, _number(c["b"], f"{where}.b")))
    return tuple(out)


def _parse_cost(raw, dim) -> CostModel:
    _object(raw, "cost", {"kind", "matrix"}, ("kind",))
    kind = _enum(raw["kind"], "cost.kind", CostKind)
    if kind is CostKind.QUADRATIC:
        if "matrix" not in raw:
            raise ScenarioError("MissingField", "cost.matrix", "quadratic cost needs a matrix")
        A = _matrix(raw["matrix"], "cost.matrix", dim)
        if not np.allclose(A, A.T, atol=1e-12, rtol=0) or np.linalg.eigvalsh(0.5 * (A + A.T)).min() <= 0:
            raise ScenarioError("NonPDMatrix", "cost.matrix", "matrix must be symmetric positive definite")
        return CostModel(kind, A)
    if "matrix" in raw:
        raise ScenarioError("InvalidValue", "cost.matrix", f"{kind.value} cost takes no matrix")
    return CostModel(kind)


def _parse_grid(raw, where, dim) -> GridSpec:
    _object(raw, where, {"lower", "upper", "h"}, ("lower", "upper", "h"))
    lo = _vector(raw["lower"], f"{where}.lower", dim)
    hi = _vector(raw["upper"], f"{where}.upper", dim)
    h = _number(raw["h"], f"{where}.h", positive=True)
    try:
        return GridSpec(lo, hi, h)
    except ValueError as exc:
        raise ScenarioError("InvalidValue", where, str(exc)) from exc


def _parse_population(raw, dim, seed) -> PopulationSpec:
    where = "agents.population"
    _object(raw, where, {"kind", "n", "lower", "upper", "mean", "cov"}, ("kind", "n"))
    kind = _enum(raw["kind"], f"{where}.kind", PopulationKind)
    n = _integer(raw["n"], f"{where}.n", minimum=1)
    kw = {}
    if kind is PopulationKind.GAUSSIAN:
        for key in ("mean", "cov"):
            if key not in raw:
                raise ScenarioError("MissingField", f"{where}.{key}", "gaussian populations need it")
        for key in ("lower", "upper"):
            if key in raw:
                raise ScenarioError("InvalidValue", f"{where}.{key}", "not used by gaussian populations")
        kw["mean"] = _vector(raw["mean"], f"{where}.mean", dim)
        cov = _matrix(raw["cov"], f"{where}.cov", dim)
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0) or np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-12:
            raise ScenarioError("NonPDMatrix", f"{where}.cov", "covariance must be symmetric positive semidefinite")
        kw["cov"] = cov
    else:
        for key in ("lower", "upper"):
            if key not in raw:
                raise ScenarioError("MissingField", f"{where}.{key}", f"{kind.value} populations need it")
        for key in ("mean", "cov"):
            if key in raw:
                raise ScenarioError("InvalidValue", f"{where}.{key}", f"not used by {kind.value} populations")
        kw["lower"] = _vector(raw["lower"], f"{where}.lower", dim)
        kw["upper"] = _vector(raw["upper"], f"{where}.upper", dim)
        if np.any(kw["upper"] < kw["lower"]):
            raise ScenarioError("InvalidValue", where, "upper must be >= lower")
        if kind is PopulationKind.GRID_FAN:
            m = round(n ** (1.0 / dim))
            if not any(c > 0 and c**dim == n for c in (m - 1, m, m + 1)):
                raise ScenarioError("InvalidValue", f"{where}.n", f"grid fan size must be a perfect power of {dim}")
    return PopulationSpec(kind, n, seed, **kw)


def _parse_sweep(raw) -> Sweep:
    _object(raw, "sweep", {"param", "values"}, ("param", "values"))
    if raw["param"] not in SWEEP_PARAMS:
        raise ScenarioError("InvalidEnum", "sweep.param", f"expected one of {list(SWEEP_PARAMS)}, got {raw['param']!r}")
    vals = _vector(raw["values"], "sweep.values")
    if raw["param"] == "gamma" and np.any(vals <= 0):
        raise ScenarioError("InvalidValue", "sweep.values", "gamma values must be positive")
    if raw["param"] == "theta" and np.any((vals <= 0) | (vals >= math.pi)):
        raise ScenarioError("InvalidValue", "sweep.values", "theta values must lie in (0, pi)")
    return Sweep(raw["param"], tuple(float(v) for v in vals))


def parse_scenario(raw: dict) -> Scenario:
    """Validate a decoded scenario object."""
    _object(raw, "", _TOP_FIELDS, _REQUIRED)
    name = raw["name"]
    if not isinstance(name, str) or not name:
        raise ScenarioError("InvalidValue", "name", "expected a non-empty string")
    description = raw.get("description", "")
    if not isinstance(description, str):
        raise ScenarioError("InvalidValue", "description", "expected a string")
    classifiers = _parse_classifiers(raw["classifiers"])
    dim = classifiers[0].dim
    mode = _enum(raw.get("mode", "sequential"), "mode", Mode)
    cost = _parse_cost(raw.get("cost", {"kind": "l2"}), dim)
    tau = _number(raw.get("tau", 0.0), "tau", nonneg=True)
    seed = _integer(raw.get("seed", 0), "seed", minimum=0)

    agents = population = grid = None
    if "agents" in raw:
        a = raw["agents"]
        if isinstance(a, list):
            if not a:
                raise ScenarioError("InvalidValue", "agents", "agent list is empty")
            agents = np.array([_vector(p, f"agents[{i}]", dim) for i, p in enumerate(a)])
        elif isinstance(a, dict):
            if len(a) != 1 or next(iter(a)) not in ("population", "grid"):
                keys = [k for k in a if k not in ("population", "grid")]
                if keys:
                    raise ScenarioError("UnknownField", f"agents.{keys[0]}", "unknown field")
                raise ScenarioError("InvalidValue", "agents", "give exactly one of population or grid")
            if "population" in a:
                population = _parse_population(a["population"], dim, seed)
            else:
                grid = _parse_grid(a["grid"], "agents.grid", dim)
        else:
            raise ScenarioError("InvalidValue", "agents", "expected a list of points or an object")
    sweep = _parse_sweep(raw["sweep"]) if "sweep" in raw else None
    return Scenario(
        name=name, pipeline=Pipeline(classifiers, mode), cost=cost, tau=tau, seed=seed,
        agents=agents, population=population, grid=grid, sweep=sweep, description=description,
    )


def loads_scenario(text: str) -> Scenario:
    try:
        raw = json.loads(text, parse_constant=_reject_constant, object_pairs_hook=_no_duplicates)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ScenarioError("ParseError", "", str(exc)) from exc
    return parse_scenario(raw)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ScenarioError("ParseError", str(path), f"cannot read file: {exc}") from exc
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ScenarioError("ParseError", str(path), "file is not UTF-8") from exc
    return loads_scenario(text)


def scenario_to_dict(s: Scenario) -> dict:
    out = {"name": s.name}
    if s.description:
        out["description"] = s.description
    out["classifiers"] = [{"w": h.w.tolist(), "b": h.b} for h in s.pipeline.classifiers]
    out["mode"] = s.pipeline.mode.value
    out["cost"] = s.cost.to_dict()
    out["tau"] = s.tau
    if s.agents is not None:
        out["agents"] = s.agents.tolist()
    elif s.population is not None:
        p = s.population
        pop = {"kind": p.kind.value, "n": p.n}
        for key in ("lower", "upper", "mean", "cov"):
            v = getattr(p, key)
            if v is not None:
                pop[key] = v.tolist()
        out["agents"] = {"population": pop}
    elif s.grid is not None:
        out["agents"] = {"grid": s.grid.to_dict()}
    out["seed"] = s.seed
    if s.sweep is not None:
        out["sweep"] = {"param": s.sweep.param, "values": list(s.sweep.values)}
    return out


# --------------------------------------------------------------------------
# results


@dataclass
class Results:
    """Serializable command output.

    ``table`` (optional) holds ``(header, rows)`` for results that have a CSV
    form.  ``metadata['timestamp']`` is the only field allowed to differ
    between identical runs.
    """

    type: str
    data: object
    metadata: dict = field(default_factory=dict)
    table: tuple | None = None

    def to_obj(self) -> dict:
        return {"type": self.type, "data": _clean(self.data), "metadata": _clean(self.metadata)}


def round12(x: float):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round12(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "value") and isinstance(obj.value, str):  # enums
        return obj.value
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_results(results: Results) -> str:
    return json.dumps(results.to_obj(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        r = round12(v)
        return r if isinstance(r, str) else repr(r)
    if v is None:
        return ""
    return str(v)


def dumps_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent or "."))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(results: Results, path, fmt: str = "json") -> None:
    """Write ``results`` as JSON or CSV.

    Empty tables are refused rather than written; the file only appears once
    it is complete.
    """
    fmt = fmt.lower()
    if fmt == "json":
        if results.table is not None and not results.table[1]:
            raise ValueError(f"refusing to write an empty {results.type} result")
        text = dumps_results(results)
    elif fmt == "csv":
        if results.table is None:
            raise ValueError(f"{results.type} results have no CSV form; use json")
        header, rows = results.table
        rows = list(rows)
        if not rows:
            raise ValueError(f"refusing to write an empty {results.type} table")
        text = dumps_table(header, rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    _atomic_write(path, text)


def _decode(obj):
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    return obj


def loads_results(text: str) -> Results:
    raw = json.loads(text, object_pairs_hook=_no_duplicates)
    if not isinstance(raw, dict) or set(raw) != {"type", "data", "metadata"}:
        raise ValueError("not a results envelope")
    return Results(raw["type"], _decode(raw["data"]), _decode(raw["metadata"]))


def read_results(path) -> Results:
    return loads_results(Path(path).read_text(encoding="utf-8"))


def read_table(path) -> tuple:
    """Header and rows of a CSV result, cells left as strings."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError("empty CSV file")
    return tuple(rows[0]), rows[1:]


def strip_timestamp(obj: dict) -> dict:
    """Copy of a results object without the run timestamp, for comparisons."""
    out = dict(obj)
    meta = dict(out.get("metadata", {}))
    meta.pop("timestamp", None)
    out["metadata"] = meta
    return out
