import warnings

import numpy as np
import pytest

from proxmed.dgp import SamplerConfig, sample
from proxmed.errors import SpecError
from proxmed.estimators import (CSV_HEADER, STRATEGIES, EstimateResult, FitPlan, ShiftedBridge,
                                consumed, estimate, fold_ids, psi1_s3, psi1_s4, psi1_s5_mr,
                                psi2_s2, psi2_s5_mr, psi3, shift_bridge)
from proxmed.model import Dataset, population_dataset
from proxmed.oracle import TabularBridge, identified_target, true_estimands

from conftest import perfect_proxy_spec


def _exact_args(ex):
    return dict(h=ex.h, q=ex.q[1], nu=ex.nu)


def test_population_exactness(exact):
    for name, ex in exact.items():
        data = population_dataset(ex.pop)
        for est in ("psi1", "psi2", "psi3"):
            target = identified_target(ex.spec, est, 1, 0)
            for strat in STRATEGIES:
                res = estimate(data, est, strat, 1, 0, **_exact_args(ex))
                assert abs(res.point - target) < 1e-8, (name, est, strat)


def test_both_treatment_contrasts(exact):
    ex = exact["D1"]
    data = population_dataset(ex.pop, expand_y=False)
    target = identified_target(ex.spec, "psi1", 0, 1)
    for strat in STRATEGIES:
        res = estimate(data, "psi1", strat, 0, 1, h=ex.h, q=ex.q[0], nu=ex.nu)
        assert abs(res.point - target) < 1e-8


def test_psi3_on_generalized_front_door(exact):
    ex = exact["G1"]
    data = population_dataset(ex.pop)
    tv = true_estimands(ex.spec, 1, 0)
    res = psi3(data, "s5_mr", 1, **_exact_args(ex))
    assert res.estimand == "psi3"
    assert abs(res.point - tv.psi3) < 1e-8
    assert abs(res.point - tv.psi2) > 0.01


def test_psi3_equals_psi2_on_front_door(exact):
    ex = exact["F1"]
    data = population_dataset(ex.pop)
    tv = true_estimands(ex.spec, 1, 0)
    for strat in STRATEGIES:
        assert abs(psi3(data, strat, 1, **_exact_args(ex)).point - tv.psi2) < 1e-8


def test_constant_bridge_and_outcome(exact):
    ex = exact["D1"]
    data = population_dataset(ex.pop)
    const = TabularBridge("outcome_h", np.full((2, 2, 2), 4.0))
    for strat in ("s1_hw", "s3_ha"):
        assert estimate(data, "psi1", strat, 1, 0, h=const, q=ex.q[1], nu=ex.nu).point == pytest.approx(4.0, abs=1e-12)
        assert estimate(data, "psi2", strat, 1, h=const, q=ex.q[1], nu=ex.nu).point == pytest.approx(4.0, abs=1e-12)
    ones = Dataset(data.x, data.a, data.z, data.w, np.full(data.n, 4.0), levels=data.levels, weights=data.weights)
    assert psi2_s2(ones, ex.q[1], ex.nu, 1).point == pytest.approx(4.0, abs=1e-10)
    assert estimate(ones, "psi1", "s2_qa", 1, 0, h=ex.h, q=ex.q[1], nu=ex.nu).point == pytest.approx(4.0, abs=1e-10)


def test_constant_outcome_all_strategies():
    spec = perfect_proxy_spec(y_const=-1.5)
    from proxmed.model import to_population
    from proxmed.oracle import exact_nuisances, solve_outcome_bridge, solve_treatment_bridge

    pop = to_population(spec)
    data = population_dataset(pop)
    h, q, nu = solve_outcome_bridge(pop), solve_treatment_bridge(pop, 1), exact_nuisances(pop)
    for est in ("psi1", "psi2", "psi3"):
        for strat in STRATEGIES:
            assert estimate(data, est, strat, 1, 0, h=h, q=q, nu=nu).point == pytest.approx(-1.5, abs=1e-10)


def test_s4_reduces_to_s3_when_a_equals_a_prime(exact, specs):
    ex = exact["D1"]
    data = sample(specs["D1"], SamplerConfig(seed=0, n=1000))
    for a in (0, 1):
        s4 = psi1_s4(data, ex.h, ex.q[a], ex.nu, a, a).point
        s3 = psi1_s3(data, ex.h, ex.nu, a, a).point
        assert abs(s4 - s3) < 1e-9


def test_display_form_differs(exact):
    ex = exact["D1"]
    data = population_dataset(ex.pop)
    derived = psi1_s3(data, ex.h, ex.nu, 1, 0).point
    display = psi1_s3(data, ex.h, ex.nu, 1, 0, display_form=True).point
    assert abs(derived - identified_target(ex.spec, "psi1", 1, 0)) < 1e-10
    assert abs(display - derived) > 1e-3


def test_if_mean_zero_given_nuisances(exact):
    for ex in exact.values():
        data = population_dataset(ex.pop)
        res, ifv = psi1_s5_mr(data, a=1, a_prime=0, nuisances=(ex.h, ex.q[1], ex.nu), return_if=True)
        assert abs(data.mean(ifv)) < 1e-12
        assert abs(res.point - identified_target(ex.spec, "psi1", 1, 0)) < 1e-10
        res2 = psi2_s5_mr(data, a=1, nuisances=(ex.h, ex.q[1], ex.nu))
        assert abs(res2.point - identified_target(ex.spec, "psi2", 1)) < 1e-10


def test_fold_ids():
    a = fold_ids(103, 5, seed=4)
    assert np.array_equal(a, fold_ids(103, 5, seed=4))
    assert not np.array_equal(a, fold_ids(103, 5, seed=5))
    sizes = np.bincount(a)
    assert len(sizes) == 5 and sizes.max() - sizes.min() <= 1


def test_cross_fit_deterministic(specs):
    data = sample(specs["D1"], SamplerConfig(seed=8, n=600))
    r1 = psi1_s5_mr(data, FitPlan(), 1, 0, folds=3, seed=2)
    r2 = psi1_s5_mr(data, FitPlan(), 1, 0, folds=3, seed=2)
    assert r1 == r2
    assert r1.folds == 3 and r1.std_error > 0
    lo, hi = r1.ci_95
    assert lo < r1.point < hi


def test_small_fold_warning(specs):
    data = sample(specs["D1"], SamplerConfig(seed=8, n=200))
    with pytest.warns(RuntimeWarning, match="folds"):
        psi1_s5_mr(data, FitPlan(), 1, 0, folds=5, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        psi1_s5_mr(data, FitPlan(), 1, 0, folds=2, seed=0)


def test_needs_two_folds(specs):
    data = sample(specs["D1"], SamplerConfig(seed=8, n=200))
    with pytest.raises(ValueError):
        psi1_s5_mr(data, FitPlan(), 1, 0, folds=1)


def test_dispatch_errors(specs):
    data = sample(specs["D1"], SamplerConfig(seed=8, n=100))
    with pytest.raises(ValueError):
        estimate(data, "psi4", "s1_hw", 1, 0)
    with pytest.raises(ValueError):
        estimate(data, "psi1", "s9", 1, 0)
    with pytest.raises(ValueError):
        estimate(data, "psi1", "s1_hw", 1)


def test_consumed_sets():
    assert consumed("psi1", "s2_qa") == ("q", "p(a|x)")
    assert consumed("psi2", "s2_qa") == ("q",)
    assert consumed("psi2", "s4_hqa") == ("h", "q")
    assert len(consumed("psi1", "s5_mr")) == 4


def test_result_serialization(exact):
    ex = exact["D1"]
    data = population_dataset(ex.pop)
    res = estimate(data, "psi1", "s5_mr", 1, 0, **_exact_args(ex))
    row = res.csv_row().split(",")
    assert len(row) == len(CSV_HEADER.split(","))
    assert float(row[4]) == res.point
    d = res.to_dict()
    assert d["ci_95"][0] < d["point"] < d["ci_95"][1]
    plain = EstimateResult("psi2", "s1_hw", 1, None, 0.5)
    assert plain.ci_95 is None and plain.csv_row().split(",")[5] == ""


def test_shift_bridge(exact):
    h = exact["D1"].h
    bad = shift_bridge(h, 0)
    assert np.allclose(bad.values[:, 0] - h.values[:, 0], 0.3)
    assert np.array_equal(bad.values[:, 1], h.values[:, 1])
    wrapped = shift_bridge(lambda v, a, x: np.zeros(len(v)), 1, 0.5)
    assert isinstance(wrapped, ShiftedBridge)
    assert np.allclose(wrapped(np.zeros(2), np.array([0, 1]), np.zeros(2)), [0.0, 0.5])


def test_plan_spoils_requested(exact):
    ex = exact["D1"]
    h, q, nu = FitPlan(corrupt=frozenset({"q", "pw"})).spoil(ex.h, ex.q[1], ex.nu)
    assert h is ex.h
    assert not np.array_equal(q.values, ex.q[1].values)
    assert np.array_equal(nu.propensity_table, ex.nu.propensity_table)
    assert not np.array_equal(nu.w_law_table, ex.nu.w_law_table)


def test_continuous_pipeline(specs):
    data = sample(specs["GAUSS1"], SamplerConfig(seed=1, n=400))
    plan = FitPlan(lambda_h=1e-3, lambda_q=1e-3)
    res = estimate(data, "psi1", "s5_mr", 1, 0, plan=plan, folds=2, seed=0)
    assert np.isfinite(res.point) and res.std_error > 0
    for strat in ("s1_hw", "s2_qa", "s3_ha", "s4_hqa"):
        assert np.isfinite(estimate(data, "psi2", strat, 1, plan=plan).point)
    with pytest.raises(SpecError):
        estimate(data, "psi1", "s1_hw", 1, 0, plan=FitPlan(bridge_method="tabular"))
