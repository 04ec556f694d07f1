"""Built-in models D1, F1, G1 and GAUSS1.

The discrete fixtures were drawn with :func:`random_valid_scm`, scanning
seeds from 0 until a draw met the recipe's extra requirements, and frozen to
JSON.  ``build_fixture`` re-runs a recipe; ``python3 -m proxmed.fixtures``
rewrites the JSON files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .model import FiniteSpace, GaussianScmSpec, spec_from_dict, spec_to_dict

FIXTURE_NAMES = ("D1", "F1", "G1", "GAUSS1")
MAX_SEED = 500


@dataclass(frozen=True)
class Recipe:
    name: str
    space: FiniteSpace
    model_kind: str
    min_rel_singular: float
    note: str
    proxy_concentration: float = 0.0


RECIPES = {
    "D1": Recipe("D1", FiniteSpace(x_levels=2), "mediation", 0.6,
                 "all-binary mediation model without hidden confounder; strong proxies "
                 "(bridge tables bounded by 1.4, every p(x,a,w) >= 0.05); negative control: "
                 "corrupting every nuisance moves both MR values by > 1e-3", 30.0),
    "F1": Recipe("F1", FiniteSpace(x_levels=2, u_levels=2), "front_door", 0.2,
                 "binary front-door model with a binary hidden confounder of A and Y, no direct A->Y"),
    "G1": Recipe("G1", FiniteSpace(x_levels=2, u_levels=2), "generalized_front_door", 0.2,
                 "binary generalized front-door model with hidden confounder and direct A->Y; "
                 "|E[Y(M(a))] - E[Y(a)]| > 0.02 for a = 0, 1"),
}

GAUSS1 = GaussianScmSpec(sigma_x=1.0, prop_intercept=0.0, prop_slope=0.5, alpha=1.0, gamma=0.5,
                         b=1.0, c=0.5, d=0.5, sd_m=1.0, sd_z=0.5, sd_w=0.5, sd_y=1.0, name="GAUSS1")


def _well_conditioned(spec, bound=1.4, min_cell=0.05) -> bool:
    from .model import to_population
    from .oracle import solve_outcome_bridge, solve_treatment_bridge

    pop = to_population(spec)
    tables = [solve_outcome_bridge(pop)] + [solve_treatment_bridge(pop, a)
                                            for a in range(spec.space.a_levels)]
    return (max(abs(t.values).max() for t in tables) <= bound
            and pop.prob.sum(axis=2).min() >= min_cell)


def _negative_control(spec) -> bool:
    from .estimators import FitPlan
    from .oracle import (exact_nuisances, population_mr_value, population_psi_via_h,
                         solve_outcome_bridge, solve_treatment_bridge)
    from .model import to_population

    pop = to_population(spec)
    h, q, nu = solve_outcome_bridge(pop), solve_treatment_bridge(pop, 1), exact_nuisances(pop)
    truth = population_psi_via_h(pop, h, 1, 0)
    bad = FitPlan(corrupt=frozenset({"h", "q", "pa", "pw"}), corrupt_slice=0).spoil(h, q, nu)
    return (abs(population_mr_value(pop, *bad, 1, 0, "psi1") - truth.psi1) > 1e-3
            and abs(population_mr_value(pop, *bad, 1, 0, "psi2") - truth.psi2) > 1e-3)


def _direct_effect(spec) -> bool:
    from .oracle import true_estimands

    return all(abs(v.psi3 - v.psi2) > 0.02 for v in (true_estimands(spec, a, 1 - a) for a in (0, 1)))


EXTRA = {"D1": lambda s: _well_conditioned(s) and _negative_control(s), "G1": _direct_effect, "F1": None}


def build_fixture(name: str):
    """Re-derive a fixture from its recipe; returns (spec, seed)."""
    from .dgp import random_valid_scm

    if name == "GAUSS1":
        return GAUSS1, None
    rec = RECIPES[name]
    for seed in range(MAX_SEED):
        try:
            spec = random_valid_scm(rec.space, rec.model_kind, seed, name=name,
                                    min_rel_singular=rec.min_rel_singular, accept=EXTRA[name],
                                    proxy_concentration=rec.proxy_concentration)
        except RuntimeError:
            continue
        return spec, seed
    raise RuntimeError(f"recipe {name} found no spec")


def _path(name):
    return resources.files("proxmed") / "fixtures" / f"{name}.json"


def load_fixture(name: str):
    """Frozen fixture spec by name."""
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURE_NAMES)}")
    doc = json.loads(_path(name).read_text())
    return spec_from_dict(doc["spec"])


def fixture_document(name: str) -> dict:
    return json.loads(_path(name).read_text())


def write_fixtures(directory=None):
    from .serialize import dumps

    out = Path(directory) if directory else Path(__file__).parent / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    for name in FIXTURE_NAMES:
        spec, seed = build_fixture(name)
        rec = RECIPES.get(name)
        doc = {"name": name, "generator_seed": seed,
               "note": rec.note if rec else "linear-Gaussian model with logistic propensity",
               "min_rel_singular": rec.min_rel_singular if rec else None,
               "proxy_concentration": rec.proxy_concentration if rec else None,
               "spec": spec_to_dict(spec)}
        (out / f"{name}.json").write_text(dumps(doc) + "\n")


if __name__ == "__main__":
    write_fixtures()
