import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from _instances import random_general_position_pipeline
from strategic_screening.defense import (
    DefendedPipeline,
    EvaluationReport,
    conservative_defense,
    cost_lower_bound,
    evaluate,
    manipulation_costs,
    optimality_spot_check,
    qualified_mask,
    screen,
    zero_fp_audit,
)
from strategic_screening.errors import AgentEvaluationError, GridSpecError, SolverDidNotConverge
from strategic_screening.geometry import (
    CostKind,
    CostModel,
    HalfspaceClassifier,
    Mode,
    Pipeline,
    wedge_pair,
)
from strategic_screening.oracle import GridSpec
from strategic_screening.population import PopulationKind, PopulationSpec, sample_population
from strategic_screening.response import conjunction_response, sequential_response

H1 = HalfspaceClassifier([-3.0, 4.0], 1.0)
H2 = HalfspaceClassifier([1.0, 0.0], 1.0)
EX1 = Pipeline((H1, H2))
L2 = CostModel.l2()
FAN = sample_population(PopulationSpec(PopulationKind.GRID_FAN, 3721, lower=[-3, -3], upper=[3, 3]))


def under_shifted(pipeline, tau):
    half = conservative_defense(pipeline, tau / 2)
    return DefendedPipeline(half.original, half.shifted, tau)


# shift


def test_shift_examples():
    d = conservative_defense(Pipeline((HalfspaceClassifier([1.0, 0.0], 1.0),)), 0.5)
    assert_allclose(d.shifted.classifiers[0].b, 1.5)
    d = conservative_defense(EX1, 0.0)
    assert d.shifted.classifiers == EX1.normalized().classifiers
    d = conservative_defense(EX1, 0.3)
    assert_allclose(d.shifted.W, [[-0.6, 0.8], [1.0, 0.0]], atol=1e-15)
    assert_allclose(d.shifted.b, [0.5, 1.3], atol=1e-15)
    assert d.shifted.mode is EX1.mode


def test_shift_rejects_bad_tau():
    with pytest.raises(ValueError):
        conservative_defense(EX1, -0.1)
    with pytest.raises(ValueError):
        conservative_defense(EX1, math.inf)


@given(tau=st.floats(0, 5), a=st.floats(0, 6.28), b=st.floats(-3, 3), scale=st.floats(0.1, 10))
def test_shift_normalizes_first(tau, a, b, scale):
    w = scale * np.array([math.cos(a), math.sin(a)])
    d = conservative_defense(Pipeline((HalfspaceClassifier(w, b),), Mode.CONJUNCTION), tau)
    h = d.shifted.classifiers[0]
    assert abs(np.linalg.norm(h.w) - 1.0) <= 1e-12
    assert_allclose(h.b, b / scale + tau, atol=1e-12)
    assert d.shifted.mode is Mode.CONJUNCTION


# costs


def test_lower_bound_is_sound():
    rng = np.random.default_rng(2)
    X = rng.uniform(-3, 3, (40, 2))
    for cost in (CostModel(CostKind.L1), L2, CostModel(CostKind.LINF),
                 CostModel(CostKind.QUADRATIC, [[2.0, 0.3], [0.3, 1.0]])):
        for setting in Mode:
            lb = cost_lower_bound(EX1, X, cost, setting)
            for x, l in zip(X, lb):
                solve = sequential_response if setting is Mode.SEQUENTIAL else conjunction_response
                assert l <= solve(EX1, x, cost).total_cost + 1e-6


def test_manipulation_costs_match_solver_three_tests():
    rng = np.random.default_rng(4)
    p = random_general_position_pipeline(rng, 3)
    X = rng.uniform(-3, 3, (25, 2))
    for setting in Mode:
        fast = manipulation_costs(p, X, L2, setting)
        solve = sequential_response if setting is Mode.SEQUENTIAL else conjunction_response
        ref = [solve(p, x, L2).total_cost for x in X]
        assert_allclose(fast, ref, atol=1e-5)


def test_manipulation_costs_budget_contract():
    rng = np.random.default_rng(8)
    p = random_general_position_pipeline(rng, 3)
    X = rng.uniform(-3, 3, (40, 2))
    exact = manipulation_costs(p, X, L2, Mode.SEQUENTIAL)
    capped = manipulation_costs(p, X, L2, Mode.SEQUENTIAL, budget=0.5)
    assert np.array_equal(exact <= 0.5 + 1e-9, capped <= 0.5 + 1e-9)


def test_agent_errors_carry_the_index(monkeypatch):
    import strategic_screening.defense as defense

    def boom(*args, **kwargs):
        raise SolverDidNotConverge("stuck", best_iterate=None, objective=None, residuals={})

    monkeypatch.setattr(defense, "_solver_cost", boom)
    p = Pipeline((HalfspaceClassifier([1.0, 0.0, 0.0], 0.0), HalfspaceClassifier([0.0, 1.0, 0.0], 0.0),
                  HalfspaceClassifier([0.0, 0.0, 1.0], 0.0)))
    with pytest.raises(AgentEvaluationError) as info:
        manipulation_costs(p, [[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]], L2, Mode.SEQUENTIAL)
    assert info.value.index == 1


# evaluation


def test_deep_agent_is_true_positive():
    d = conservative_defense(EX1, 0.5)
    out = screen(d, [[5.0, 8.0]], 0.5, L2, Mode.SEQUENTIAL)[0]
    assert out.accepted and out.qualified and out.cost_spent == 0.0


def test_evaluate_fan_acute():
    h1, h2 = wedge_pair(math.pi / 6)
    d = conservative_defense(Pipeline((h1, h2)), 0.5)
    seq = evaluate(d, FAN, 0.5, L2, Mode.SEQUENTIAL)
    conj = evaluate(d, FAN, 0.5, L2, Mode.CONJUNCTION)
    for r in (seq, conj):
        assert isinstance(r, EvaluationReport)
        assert r.fp_rate == 0.0
        assert abs(r.tp_rate + r.fp_rate + r.tn_rate + r.fn_rate - 1.0) <= 1e-9
        assert r.n_agents == 3721
    assert seq.tp_rate > conj.tp_rate


def test_evaluate_without_defense_has_false_positives():
    d = DefendedPipeline(EX1.normalized(), EX1.normalized(), 0.5)
    assert evaluate(d, FAN, 0.5, L2, Mode.SEQUENTIAL).fp_rate > 0.0


def test_evaluate_needs_agents():
    with pytest.raises(ValueError):
        evaluate(conservative_defense(EX1, 0.5), np.zeros((0, 2)), 0.5)


@given(seed=st.integers(0, 2**32 - 1), tau=st.floats(0.05, 1.0))
@settings(max_examples=15, deadline=None)
def test_no_false_positives_and_seq_dominates(seed, tau):
    rng = np.random.default_rng(seed)
    p = random_general_position_pipeline(rng, int(rng.integers(2, 4)))
    X = rng.uniform(-4, 4, (150, 2))
    d = conservative_defense(p, tau)
    seq = evaluate(d, X, tau, L2, Mode.SEQUENTIAL)
    conj = evaluate(d, X, tau, L2, Mode.CONJUNCTION)
    assert seq.fp_rate == 0.0 and conj.fp_rate == 0.0
    assert seq.tp_rate >= conj.tp_rate - 1.0 / len(X)


def test_qualified_mask():
    assert_allclose(qualified_mask(EX1, np.array([[1.0, 1.0], [0.0, 0.0]])), [True, False])


# audit


def test_audit_example1():
    grid = GridSpec([-2.0, -2.0], [3.0, 3.0], 0.05)
    res = zero_fp_audit(conservative_defense(EX1, 0.5), 0.5, L2, grid)
    assert res.passed and res.counterexample is None
    assert res.n_checked > 0


def test_audit_catches_under_shift():
    grid = GridSpec([-2.0, -2.0], [3.0, 3.0], 0.05)
    res = zero_fp_audit(under_shifted(EX1, 0.5), 0.5, L2, grid)
    assert not res.passed
    x = res.counterexample
    assert not EX1.accepts(x)
    assert res.counterexample_cost <= 0.5


def test_audit_tau_zero():
    grid = GridSpec([-2.0, -2.0], [3.0, 3.0], 0.05)
    assert zero_fp_audit(conservative_defense(EX1, 0.0), 0.0, L2, grid).passed


def test_audit_grid_errors():
    d = conservative_defense(EX1, 0.5)
    with pytest.raises(GridSpecError):
        zero_fp_audit(d, 0.5, L2, GridSpec([0.5, 0.5], [3.0, 3.0], 0.05))
    with pytest.raises(GridSpecError):
        zero_fp_audit(d, 0.5, L2, None)


def test_audit_l1_cost():
    # an l1 move is never shorter than the Euclidean one, so the shift still holds
    grid = GridSpec([-2.0, -2.0], [3.0, 3.0], 0.05)
    assert zero_fp_audit(conservative_defense(EX1, 0.5), 0.5, CostModel(CostKind.L1), grid).passed


def test_audit_three_tests():
    rng = np.random.default_rng(12)
    p = random_general_position_pipeline(rng, 3)
    grid = GridSpec([-6.0, -6.0], [6.0, 6.0], 0.05)
    assert zero_fp_audit(conservative_defense(p, 0.5), 0.5, L2, grid).passed
    assert not zero_fp_audit(under_shifted(p, 0.5), 0.5, L2, grid).passed


def test_spot_check():
    res = optimality_spot_check(conservative_defense(EX1, 0.5), 0.5, L2)
    assert res.applicable and res.passed
    fan = Pipeline(tuple(HalfspaceClassifier([math.cos(a), math.sin(a)], 0.0)
                         for a in (math.pi / 2, math.pi / 2 + 2.2, math.pi / 2 - 2.2)))
    assert not optimality_spot_check(conservative_defense(fan, 0.5), 0.5).applicable
