"""Acceptance criteria, one test each, with their runtime budgets."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from _instances import (
    pair_with_angle,
    random_general_position_pipeline,
    random_monotone_pipeline,
    random_pair,
)
from strategic_screening.cli import main
from strategic_screening.defense import (
    DefendedPipeline,
    conservative_defense,
    evaluate,
    zero_fp_audit,
)
from strategic_screening.defense import _vertices_2d
from strategic_screening.geometry import (
    CostKind,
    CostModel,
    HalfspaceClassifier,
    Mode,
    Pipeline,
    cost_gap_pair,
    wedge_pair,
)
from strategic_screening.oracle import GridSpec, oracle_conjunction, oracle_sequential
from strategic_screening.population import PopulationKind, PopulationSpec, rasterize, sample_population
from strategic_screening.response import (
    REGION_CODES,
    ManipulationPlan,
    Method,
    classify_region,
    conjunction_closed_form_2d,
    conjunction_response,
    kkt_check,
    sequential_closed_form_2d,
    sequential_response,
)
from strategic_screening.scenario import (
    load_scenario,
    read_results,
    read_table,
    strip_timestamp,
    write_results,
)

L2 = CostModel.l2()
SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


@pytest.mark.acceptance(1, "zig-zag example reproduction")
def test_example1_reproduction():
    h1, h2 = HalfspaceClassifier([-3.0, 4.0], 1.0), HalfspaceClassifier([1.0, 0.0], 1.0)
    pipe = Pipeline((h1, h2))
    x = np.zeros(2)
    with Timer() as t:
        conj_cf = conjunction_closed_form_2d(h1, h2, x).total_cost
        seq_cf = sequential_closed_form_2d(h1, h2, x).total_cost
        conj_s = conjunction_response(pipe, x, L2).total_cost
        seq_s = sequential_response(pipe, x, L2).total_cost
    assert abs(conj_cf - math.sqrt(2)) <= 1e-9
    assert abs(conj_s - math.sqrt(2)) <= 1e-4
    assert abs(seq_cf - 31 / 25) <= 1e-9
    assert abs(seq_s - 31 / 25) <= 1e-4
    explicit = np.array([[0.0, 0.0], [0.0, 0.25], [1.0, 0.25]])
    assert h1(explicit[1]) and h2(explicit[2])
    explicit_cost = np.linalg.norm(np.diff(explicit, axis=0), axis=1).sum()
    assert explicit_cost == 1.25
    assert seq_cf <= explicit_cost and seq_s <= explicit_cost
    assert t.elapsed < 1.0


@pytest.mark.acceptance(2, "cost-gap lemma")
def test_cost_gap_lemma():
    with Timer() as t:
        for gamma in (9.0, 30.0, 300.0):
            h1, h2 = cost_gap_pair(gamma)
            pipe = Pipeline((h1, h2))
            x = np.zeros(2)
            for c_conj, c_seq in (
                (conjunction_closed_form_2d(h1, h2, x).total_cost, sequential_closed_form_2d(h1, h2, x).total_cost),
                (conjunction_response(pipe, x, L2).total_cost, sequential_response(pipe, x, L2).total_cost),
            ):
                assert c_conj >= gamma - 1e-6
                assert c_seq <= 3 + 1e-6
                assert c_conj / c_seq >= gamma / 3 - 1e-6
    assert t.elapsed < 5.0


@pytest.mark.acceptance(3, "conjunction never cheaper than sequential")
def test_conj_at_least_seq():
    rng = np.random.default_rng(2003)
    violations = 0
    with Timer() as t:
        for _ in range(500):
            h1, h2 = random_pair(rng)
            x = rng.uniform(-3, 3, 2)
            c_conj = conjunction_closed_form_2d(h1, h2, x).total_cost
            c_seq = sequential_closed_form_2d(h1, h2, x).total_cost
            violations += c_conj < c_seq - 1e-6
    assert violations == 0
    assert t.elapsed < 30.0


@pytest.mark.acceptance(4, "no zig-zag for obtuse wedges")
def test_no_zigzag():
    rng = np.random.default_rng(2004)
    with Timer() as t:
        for _ in range(200):
            theta = rng.uniform(math.pi / 2, math.pi - 0.05)
            h1, h2 = pair_with_angle(rng, theta)
            pipe = Pipeline((h1, h2))
            x = rng.uniform(-3, 3, 2)
            cf = abs(sequential_closed_form_2d(h1, h2, x).total_cost
                     - conjunction_closed_form_2d(h1, h2, x).total_cost)
            solved = abs(sequential_response(pipe, x, L2).total_cost
                         - conjunction_response(pipe, x, L2).total_cost)
            assert cf <= 1e-5 and solved <= 1e-5
    assert t.elapsed < 20.0


@pytest.mark.acceptance(5, "monotone pipelines have no gap")
def test_monotone():
    rng = np.random.default_rng(2005)
    kinds = (CostKind.L1, CostKind.L2, CostKind.LINF)
    worst = 0.0
    with Timer() as t:
        for n in range(200):
            k = int(rng.integers(1, 5))
            d = int(rng.integers(1, 4))
            pipe = random_monotone_pipeline(rng, k, d)
            x0 = rng.uniform(-2.0, 0.0, d)
            assert not any(h(x0) for h in pipe.classifiers)
            cost = CostModel(kinds[n % 3])
            gap = abs(sequential_response(pipe, x0, cost).total_cost
                      - conjunction_response(pipe, x0, cost).total_cost)
            worst = max(worst, gap)
    assert worst <= 1e-5
    assert t.elapsed < 60.0


def _oracle_instance(rng):
    while True:
        h1, h2 = random_pair(rng, max_abs_cos=0.95, apex_box=0.5)
        x = rng.uniform(-1.5, 1.5, 2)
        seq = sequential_closed_form_2d(h1, h2, x)
        conj = conjunction_closed_form_2d(h1, h2, x)
        pts = np.vstack([seq.path, conj.path])
        lo, hi = pts.min(axis=0) - 0.5, pts.max(axis=0) + 0.5
        if np.all(hi - lo <= 8.0):
            return h1, h2, x, seq, conj, GridSpec(lo, hi, 0.02)


@pytest.mark.acceptance(6, "closed form vs solver vs grid oracle")
def test_closed_form_solver_oracle():
    rng = np.random.default_rng(2006)
    with Timer() as t:
        for _ in range(100):
            h1, h2, x, seq, conj, grid = _oracle_instance(rng)
            pipe = Pipeline((h1, h2))
            for cf, solve, oracle in ((seq.total_cost, sequential_response, oracle_sequential),
                                      (conj.total_cost, conjunction_response, oracle_conjunction)):
                s = solve(pipe, x, L2).total_cost
                o = oracle(pipe, x, L2, grid)
                assert abs(s - cf) <= 1e-4
                for v in (s, cf):
                    assert v - 1e-9 <= o.cost <= v + o.error_bound
    assert t.elapsed < 300.0


def _perturb_along(path, idx, w, W, b, owner):
    t = np.array([-w[1], w[0]]) / np.linalg.norm(w)
    for sign in (1.0, -1.0):
        new = path.copy()
        new[idx] = new[idx] + sign * 0.1 * t
        if np.all(np.einsum("ij,ij->i", W, new[owner]) - b >= -1e-9):
            return new
    return None


def _plan(path, method=Method.CONVEX_SOLVER):
    legs = np.linalg.norm(np.diff(path, axis=0), axis=1)
    return ManipulationPlan(path, legs, legs.sum(), method)


@pytest.mark.acceptance(7, "KKT certification")
def test_kkt_certification():
    rng = np.random.default_rng(2007)
    checked = perturbed = 0
    for _ in range(200):
        h1, h2 = random_pair(rng, max_abs_cos=0.95)
        x = rng.uniform(-3, 3, 2)
        if min(abs(h1.normalize().margin(x)), abs(h2.normalize().margin(x))) < 1e-3:
            continue
        for mode, fn in ((Mode.SEQUENTIAL, sequential_closed_form_2d),
                         (Mode.CONJUNCTION, conjunction_closed_form_2d)):
            pipe = Pipeline((h1, h2), mode).normalized()
            plan = fn(h1, h2, x)
            cert = kkt_check(plan, pipe)
            assert cert.certified
            assert cert.stationarity_residual < 1e-6 and cert.complementarity_residual < 1e-6
            checked += 1
            owner = np.array([1, 2]) if mode is Mode.SEQUENTIAL else np.array([1, 1])
            new = _perturb_along(plan.path, 1, pipe.W[0], pipe.W, pipe.b, owner)
            if new is None:
                continue
            assert not kkt_check(_plan(new), pipe).certified
            perturbed += 1
    assert checked >= 300 and perturbed >= 300


def _under_shifted(p, tau):
    half = conservative_defense(p, tau / 2)
    return DefendedPipeline(half.original, half.shifted, tau)


@pytest.mark.acceptance(8, "conservative defense: zero false positives, sequential tp dominates")
def test_conservative_defense():
    rng = np.random.default_rng(2008)
    fan = sample_population(PopulationSpec(PopulationKind.GRID_FAN, 961, lower=[-3, -3], upper=[3, 3]))
    n = len(fan)
    with Timer() as t:
        for i in range(50):
            p = random_general_position_pipeline(rng, 2 + i % 2)
            for tau in (0.1, 0.5, 1.0):
                grid = GridSpec.around(_vertices_2d(p), 2 * tau + 1.0, 0.05)
                res = zero_fp_audit(conservative_defense(p, tau), tau, L2, grid)
                assert res.passed, f"pipeline {i}, tau {tau}: {res.counterexample}"
                ctrl = zero_fp_audit(_under_shifted(p, tau), tau, L2, grid)
                assert not ctrl.passed, f"control found nothing for pipeline {i}, tau {tau}"
                d = conservative_defense(p, tau)
                seq = evaluate(d, fan, tau, L2, Mode.SEQUENTIAL)
                conj = evaluate(d, fan, tau, L2, Mode.CONJUNCTION)
                assert seq.fp_rate == 0.0 and conj.fp_rate == 0.0
                assert seq.tp_rate >= conj.tp_rate - 1.0 / n
    assert t.elapsed < 600.0


@pytest.mark.acceptance(9, "region raster")
def test_region_raster():
    with Timer() as t:
        acute = rasterize(*wedge_pair(math.pi / 6), 1.0)
        assert np.all(acute.ok_seq[acute.ok_conj])
        assert (acute.ok_seq & ~acute.ok_conj).any()
        right = rasterize(*wedge_pair(math.pi / 2), 1.0)
        assert np.array_equal(right.ok_seq, right.ok_conj)
        for r, theta in ((acute, math.pi / 6), (right, math.pi / 2)):
            assert set(np.unique(r.region)) <= set(REGION_CODES.values())
            assert sum(r.region_counts().values()) == r.n_cells
            h1, h2 = wedge_pair(theta)
            pts = r.centers()
            codes = r.region.ravel()
            rng = np.random.default_rng(9)
            for j in rng.choice(len(pts), 2000, replace=False):
                assert REGION_CODES[classify_region(h1, h2, pts[j])] == codes[j]
    assert t.elapsed < 60.0


COMMANDS = ("respond", "region", "defend", "evaluate", "gap", "audit", "verify")


def _applies(cmd, sc):
    planar_pair = sc.k == 2 and sc.dim == 2
    if cmd == "region":
        return planar_pair
    if cmd == "gap":
        return planar_pair or (sc.sweep is not None and sc.dim == 2)
    if cmd == "audit":
        # the Euclidean shift covers costs that dominate the Euclidean norm
        return sc.dim == 2 and sc.cost.kind in (CostKind.L2, CostKind.L1)
    if cmd == "verify":
        return sc.cost.is_norm and sc.dim <= 3 and sc.k <= 3
    return True


@pytest.mark.acceptance(10, "serialization round trip and CLI corpus")
def test_cli_corpus(tmp_path):
    ran = {c: 0 for c in COMMANDS}
    for path in sorted(SCENARIOS.glob("*.json")):
        sc = load_scenario(path)
        for cmd in COMMANDS:
            if not _applies(cmd, sc):
                continue
            out = tmp_path / f"{path.stem}.{cmd}.json"
            assert main([cmd, "--scenario", str(path), "--out", str(out)]) == 0, (path.stem, cmd)
            ran[cmd] += 1
            first = out.read_bytes()
            res = read_results(out)
            write_results(res, out)
            assert out.read_bytes() == first, (path.stem, cmd)
            if cmd in ("respond", "defend", "region", "gap"):
                again = tmp_path / "again.json"
                assert main([cmd, "--scenario", str(path), "--out", str(again)]) == 0
                assert strip_timestamp(json.loads(again.read_text())) == strip_timestamp(json.loads(first))
            csv_out = tmp_path / f"{path.stem}.{cmd}.csv"
            assert main([cmd, "--scenario", str(path), "--out", str(csv_out), "--format", "csv"]) == 0
            header, rows = read_table(csv_out)
            assert rows and all(len(r) == len(header) for r in rows)
    assert all(v >= 2 for v in ran.values()), ran
