import numpy as np
import pytest

from proxmed.dgp import random_valid_scm
from proxmed.fixtures import load_fixture
from proxmed.model import FiniteSpace, ScmSpec, mediator_joint, to_population
from proxmed.oracle import exact_nuisances, solve_outcome_bridge, solve_treatment_bridge

DISCRETE = ("D1", "F1", "G1")


@pytest.fixture(scope="session")
def specs():
    return {name: load_fixture(name) for name in DISCRETE + ("GAUSS1",)}


class Exact:
    """Population law plus exact bridges and nuisances of one spec."""

    def __init__(self, spec, a=1):
        self.spec = spec
        self.pop = to_population(spec)
        self.mj = mediator_joint(spec)
        self.h = solve_outcome_bridge(self.pop)
        self.q = {lvl: solve_treatment_bridge(self.pop, lvl) for lvl in range(spec.space.a_levels)}
        self.nu = exact_nuisances(self.pop)


@pytest.fixture(scope="session")
def exact(specs):
    return {name: Exact(specs[name]) for name in DISCRETE}


def random_specs(count=20):
    """Deterministic mix of binary and ternary-mediator valid specs."""
    kinds = ("mediation", "front_door", "generalized_front_door")
    out = []
    for i in range(count):
        k = 2 if i % 2 == 0 else 3
        space = FiniteSpace(x_levels=2, u_levels=2, m_levels=k, z_levels=k, w_levels=k)
        out.append(random_valid_scm(space, kinds[i % 3], seed=100 + i, name=f"R{i}"))
    return out


@pytest.fixture(scope="session")
def random_pool():
    return random_specs()


def perfect_proxy_spec(model_kind="mediation", y_const=None):
    """Binary model with W = Z = M deterministically."""
    space = FiniteSpace(x_levels=2, u_levels=0)
    eye = np.eye(2)
    tables = {
        "x": [0.4, 0.6],
        "a": [[0.3, 0.7], [0.6, 0.4]],
        "m": [[[0.8, 0.2], [0.3, 0.7]], [[0.6, 0.4], [0.25, 0.75]]],
        "z": np.broadcast_to(eye, (2, 2, 2, 2)).tolist(),
        "w": np.broadcast_to(eye, (2, 2, 2)).tolist(),
    }
    if y_const is None:
        y = np.zeros((2, 2, 2, 2, 2))
        for x in range(2):
            for a in range(2):
                for m in range(2):
                    p1 = 0.2 + 0.3 * a + 0.35 * m + 0.1 * x
                    y[x, a, m, :, :] = [1 - p1, p1]
        tables["y"] = y.tolist()
        return ScmSpec.from_tables(space, model_kind, tables)
    space = FiniteSpace(x_levels=2, u_levels=0, y_continuous=True)
    tables["y_mean"] = np.full((2, 2, 2, 2), float(y_const)).tolist()
    return ScmSpec.from_tables(space, model_kind, tables)
