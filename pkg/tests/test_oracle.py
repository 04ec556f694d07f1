import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from proxmed.dgp import random_valid_scm
from proxmed.errors import PositivityError
from proxmed.model import FiniteSpace, spec_from_dict, spec_to_dict, to_population, mediator_joint
from proxmed.oracle import (TabularBridge, check_completeness, drq_if_mean, exact_nuisances,
                            identified_components, identified_target, if_values_table,
                            observed_mediator_psi, population_if_mean, population_mr_value,
                            population_psi_via_h, population_psi_via_q, qrat_residual,
                            solve_outcome_bridge, solve_treatment_bridge, true_estimands)

import reference
from conftest import perfect_proxy_spec

D1_PSI = {"psi1": 0.379167790615377, "psi2": 0.35856630693571967, "psi3": 0.32706023604089507}


def test_truth_matches_brute_force(specs, random_pool):
    for spec in [specs[n] for n in ("D1", "F1", "G1")] + random_pool[:6]:
        doc = spec_to_dict(spec)
        for a, ap in ((1, 0), (0, 1), (1, 1)):
            tv = true_estimands(spec, a, ap)
            bf = reference.estimands(doc, a, ap)
            assert np.allclose([tv.psi1, tv.psi2, tv.psi3], bf, rtol=0, atol=1e-12)


def test_d1_frozen_values(specs):
    tv = true_estimands(specs["D1"], 1, 0)
    for k, v in D1_PSI.items():
        assert abs(getattr(tv, k) - v) < 1e-12


def test_constant_outcome():
    spec = perfect_proxy_spec(y_const=3.0)
    tv = true_estimands(spec, 1, 0)
    assert np.allclose([tv.psi1, tv.psi2, tv.psi3], 3.0, atol=1e-12)
    pop = to_population(spec)
    vh = population_psi_via_h(pop, solve_outcome_bridge(pop), 1, 0)
    vq = population_psi_via_q(pop, solve_treatment_bridge(pop, 1), 1, 0)
    assert np.allclose([vh.psi1, vh.psi2, vq.psi1, vq.psi2], 3.0, atol=1e-10)


def test_null_effect(specs):
    doc = json.loads(json.dumps(spec_to_dict(specs["D1"])))
    t = doc["tables"]
    for x in range(2):
        t["p_m_given_ax"][x][1] = t["p_m_given_ax"][x][0]
        for a in range(2):
            t["p_z_given_max"][x][a] = t["p_z_given_max"][x][0]
            t["p_y_given_mawxu"][x][a] = t["p_y_given_mawxu"][x][0]
    spec = spec_from_dict(doc)
    pop = to_population(spec)
    tv = true_estimands(spec, 1, 0)
    vh = population_psi_via_h(pop, solve_outcome_bridge(pop), 1, 0)
    assert np.allclose([tv.psi1, tv.psi2, tv.psi3, vh.psi1, vh.psi2], pop.mean_y(), atol=1e-12)


def test_observed_mediator_formulas(specs):
    d1, f1, g1 = specs["D1"], specs["F1"], specs["G1"]
    assert abs(observed_mediator_psi(mediator_joint(d1), 1, 0).psi1 - true_estimands(d1, 1, 0).psi1) < 1e-10
    assert abs(observed_mediator_psi(mediator_joint(f1), 1, 0).psi2 - true_estimands(f1, 1, 0).psi2) < 1e-10
    g = observed_mediator_psi(mediator_joint(g1), 1, 0)
    assert g.psi3 == g.psi2


def test_perfect_proxies_give_mediator_regressions():
    spec = perfect_proxy_spec()
    pop = to_population(spec)
    mj = mediator_joint(spec)
    h = solve_outcome_bridge(pop)
    assert np.allclose(h.values, mj.e_y_given_xam(), atol=1e-10)
    q = solve_treatment_bridge(pop, 1)
    pm = mj.p_m_given_ax()
    assert np.allclose(q.values, pm[:, 1, :][:, None, :] / pm, atol=1e-10)


def test_bridge_back_substitution(exact):
    for ex in exact.values():
        pop = ex.pop
        lhs = np.einsum("xazw,xaw->xaz", pop.p_w_given_zax(), ex.h.values)
        assert np.abs(lhs - pop.e_y_given_zax()).max() < 1e-10
        for a, q in ex.q.items():
            pw = pop.p_w_given_ax()
            lhs = np.einsum("xbwz,xbz->xbw", pop.p_z_given_wax(), q.values)
            assert np.abs(lhs - pw[:, a, :][:, None, :] / pw).max() < 1e-10


def test_q_is_one_on_own_arm(exact):
    ex = exact["D1"]
    pop = ex.pop
    for a in (0, 1):
        cond = np.einsum("xwz,xz->xw", pop.p_z_given_wax()[:, a], ex.q[a].values[:, a])
        assert np.allclose(cond, 1.0, atol=1e-10)


def _collapse_w(spec):
    """Merge W into a single informative level: |W|=2 but rank one."""
    doc = json.loads(json.dumps(spec_to_dict(spec)))
    for x in range(2):
        doc["tables"]["p_w_given_mx"][x] = [[0.5, 0.5], [0.5, 0.5]]
    return spec_from_dict(doc)


def test_nonexistent_bridge_flagged(specs):
    spec = _collapse_w(specs["D1"])
    h = solve_outcome_bridge(to_population(spec))
    assert h.residual_norm >= 1e-8 and not h.exists
    assert not check_completeness(mediator_joint(spec), "w_side").complete


def test_completeness_reports(specs):
    assert check_completeness(mediator_joint(perfect_proxy_spec()), "w_side").complete
    doc = json.loads(json.dumps(spec_to_dict(specs["D1"])))
    for x in range(2):
        for a in range(2):
            doc["tables"]["p_z_given_max"][x][a] = [[0.3, 0.7], [0.3, 0.7]]
    rep = check_completeness(mediator_joint(spec_from_dict(doc)), "z_side")
    assert np.all(rep.ranks == 1) and not rep.complete
    for spec in specs.values():
        if hasattr(spec, "space"):
            for side in ("z_side", "w_side"):
                assert check_completeness(mediator_joint(spec), side).complete


def test_identification_equivalence(exact):
    for ex in exact.values():
        for a, ap in ((1, 0), (0, 1)):
            vh = population_psi_via_h(ex.pop, ex.h, a, ap)
            vq = population_psi_via_q(ex.pop, ex.q[a], a, ap)
            tv = true_estimands(ex.spec, a, ap)
            assert abs(vh.psi1 - vq.psi1) < 1e-10 and abs(vh.psi2 - vq.psi2) < 1e-10
            for formula, target in identified_components(ex.spec).items():
                assert abs(getattr(vh, formula) - getattr(tv, target)) < 1e-10


def test_psi2_formula_is_not_interventional_mean_with_direct_effect(exact):
    ex = exact["G1"]
    tv = true_estimands(ex.spec, 1, 0)
    vh = population_psi_via_h(ex.pop, ex.h, 1, 0)
    assert abs(vh.psi2 - tv.psi3) < 1e-10
    assert abs(vh.psi2 - tv.psi2) > 0.01
    assert identified_target(ex.spec, "psi3", 1) == pytest.approx(tv.psi3, abs=1e-10)


def test_front_door_psi3_equals_psi2(specs):
    tv = true_estimands(specs["F1"], 1, 0)
    assert abs(tv.psi3 - tv.psi2) < 1e-12
    assert abs(tv.psi1 - tv.psi2) < 1e-12


def test_consistency_case_a_equals_a_prime(exact):
    ex = exact["D1"]
    for a in (0, 1):
        vq = population_psi_via_q(ex.pop, ex.q[a], a, a)
        assert abs(vq.psi1 - true_estimands(ex.spec, a, a).psi2) < 1e-10


def test_unit_mean_of_q(exact):
    for ex in exact.values():
        for a, q in ex.q.items():
            assert abs(np.einsum("xazw,xaz->", ex.pop.prob, q.values) - 1) < 1e-10


def test_bridge_choice_does_not_matter():
    # |W| = 3 > |M| = 2 leaves a null space in the outcome-bridge system
    space = FiniteSpace(x_levels=2, m_levels=2, z_levels=2, w_levels=3)
    spec = random_valid_scm(space, "mediation", seed=3)
    pop = to_population(spec)
    h = solve_outcome_bridge(pop)
    pwz = pop.p_w_given_zax()
    moved = h.values.copy()
    for x in range(2):
        for a in range(2):
            null = np.linalg.svd(pwz[x, a])[2][-1]
            assert np.abs(pwz[x, a] @ null).max() < 1e-10
            moved[x, a] += 0.7 * null
    h2 = TabularBridge("outcome_h", moved)
    v1 = population_psi_via_h(pop, h, 1, 0)
    v2 = population_psi_via_h(pop, h2, 1, 0)
    assert abs(v1.psi1 - v2.psi1) < 1e-10 and abs(v1.psi2 - v2.psi2) < 1e-10


def test_qrat_identity(exact):
    for ex in exact.values():
        for q in ex.q.values():
            assert qrat_residual(ex.mj, q) < 1e-8


def test_if_mean_zero(exact):
    for ex in exact.values():
        for which in ("psi1", "psi2"):
            assert abs(population_if_mean(ex.pop, ex.h, ex.q[1], ex.nu, 1, 0, which)) < 1e-10


def test_if_table_mean_matches(exact):
    ex = exact["D1"]
    vh = population_psi_via_h(ex.pop, ex.h, 1, 0)
    tab = if_values_table(ex.pop, ex.h, ex.q[1], ex.nu, 1, 0, "psi1", vh.psi1)
    assert abs(np.sum(tab * ex.pop.y_joint)) < 1e-10


def test_perturbed_h_with_q_and_propensity(exact):
    ex = exact["D1"]
    vals = ex.h.values.copy()
    vals[0, 1, 1] += 0.1
    h_bad = TabularBridge("outcome_h", vals)
    truth = population_psi_via_h(ex.pop, ex.h, 1, 0).psi1
    assert abs(population_mr_value(ex.pop, h_bad, ex.q[1], ex.nu, 1, 0, "psi1") - truth) < 1e-10


def test_if_zero_pointwise_for_constant_outcome():
    spec = perfect_proxy_spec(y_const=2.0)
    pop = to_population(spec)
    h, q = solve_outcome_bridge(pop), solve_treatment_bridge(pop, 1)
    nu = exact_nuisances(pop)
    assert np.allclose(h.values, 2.0)
    assert abs(population_mr_value(pop, h, q, nu, 1, 0, "psi1") - 2.0) < 1e-12


def test_drq(exact):
    rng = np.random.default_rng(11)
    for ex in exact.values():
        q = ex.q[1]
        assert drq_if_mean(ex.pop, q, np.zeros_like(ex.h.values)) == 0.0
        assert abs(drq_if_mean(ex.pop, q, np.ones_like(ex.h.values))) < 1e-12
        for _ in range(10):
            assert abs(drq_if_mean(ex.pop, q, rng.normal(size=ex.h.values.shape))) < 1e-10


def test_drq_detects_wrong_q(exact):
    ex = exact["D1"]
    bad = TabularBridge("treatment_q", ex.q[1].values + 0.2, target_a=1)
    g = np.random.default_rng(0).normal(size=ex.h.values.shape)
    assert abs(drq_if_mean(ex.pop, bad, g)) > 1e-3


def test_positivity_error(exact):
    pw = exact["D1"].pop.p_w_given_ax().copy()
    pw[0, 0, 1] = 0.0
    from proxmed.oracle import treatment_bridge_rhs

    with pytest.raises(PositivityError) as err:
        treatment_bridge_rhs(pw, 1)
    assert (0, 0, 1) in err.value.cells


def test_bridge_serialization(exact):
    q = exact["D1"].q[1]
    again = TabularBridge.from_dict(json.loads(json.dumps(q.to_dict())))
    assert np.array_equal(again.values, q.values) and again.target_a == 1


def test_gaussian_truth(specs):
    g = specs["GAUSS1"]
    tv = true_estimands(g, 1, 0)
    assert tv.psi1 == pytest.approx(g.b * g.alpha)
    assert tv.psi2 == pytest.approx(g.b * g.alpha + g.c)
    # symmetric propensity around x = 0
    assert tv.psi3 == pytest.approx(g.b * g.alpha + 0.5 * g.c, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.sampled_from([2, 3]),
       kind=st.sampled_from(["mediation", "front_door", "generalized_front_door"]))
def test_identification_property(seed, k, kind):
    space = FiniteSpace(x_levels=2, u_levels=2, m_levels=k, z_levels=k, w_levels=k)
    spec = random_valid_scm(space, kind, seed)
    pop = to_population(spec)
    h, q = solve_outcome_bridge(pop), solve_treatment_bridge(pop, 1)
    vh = population_psi_via_h(pop, h, 1, 0)
    vq = population_psi_via_q(pop, q, 1, 0)
    tv = true_estimands(spec, 1, 0)
    assert abs(vh.psi1 - vq.psi1) < 1e-8 and abs(vh.psi2 - vq.psi2) < 1e-8
    for formula, target in identified_components(spec).items():
        assert abs(getattr(vh, formula) - getattr(tv, target)) < 1e-8
    assert qrat_residual(mediator_joint(spec), q) < 1e-8
    nu = exact_nuisances(pop)
    assert abs(population_if_mean(pop, h, q, nu, 1, 0, "psi2")) < 1e-10
