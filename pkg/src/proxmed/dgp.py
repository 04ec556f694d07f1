"""Seeded sampling from structural models and random valid discrete models."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import (DEFAULT_PARENTS, Dataset, FiniteSpace, GaussianScmSpec, ScmSpec,
                    to_population, mediator_joint, validate_spec)

RNG_NAME = "numpy.PCG64"
POSITIVITY_FLOOR = 0.02
MAX_RETRIES = 100


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    n: int
    replication: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    def generator(self) -> np.random.Generator:
        if self.replication is None:
            return np.random.default_rng(self.seed)
        return np.random.default_rng(np.random.SeedSequence([self.seed, self.replication]))


def _categorical(rng, probs):
    """One draw per row of ``probs`` (n, k)."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs))[:, None] * cdf[:, -1:]
    return np.minimum((u > cdf).sum(axis=1), probs.shape[1] - 1)


def sample(spec, cfg: SamplerConfig) -> Dataset:
    """i.i.d. draws in structural order; M and U are not returned."""
    rng = cfg.generator()
    if isinstance(spec, GaussianScmSpec):
        return _sample_gaussian(spec, cfg, rng)
    n = cfg.n
    vals = {}
    for var in ("x", "u", "a", "m", "z", "w"):
        tab = spec.cpts[var]
        rows = tab[tuple(vals[p] for p in spec.parents[var])] if spec.parents[var] else np.broadcast_to(tab, (n, len(tab)))
        vals[var] = _categorical(rng, rows)
    ypar = tuple(vals[p] for p in spec.parents["y"])
    if spec.space.y_continuous:
        y = spec.y_mean[ypar] + spec.y_noise_sd * rng.standard_normal(n)
    else:
        y = spec.y_values[_categorical(rng, spec.cpts["y"][ypar])]
    sp = spec.space
    levels = {"x": sp.x_levels, "a": sp.a_levels, "z": sp.z_levels, "w": sp.w_levels}
    return Dataset(vals["x"], vals["a"], vals["z"], vals["w"], np.asarray(y, dtype=float),
                   levels=levels, seed=cfg.seed, source=spec.name, rng=RNG_NAME)


def _sample_gaussian(spec: GaussianScmSpec, cfg, rng) -> Dataset:
    n = cfg.n
    x = spec.sigma_x * rng.standard_normal(n)
    a = (rng.random(n) < spec.propensity(x)).astype(int)
    m = spec.alpha * a + spec.gamma * x + spec.sd_m * rng.standard_normal(n)
    z = m + spec.sd_z * rng.standard_normal(n)
    w = m + spec.sd_w * rng.standard_normal(n)
    y = spec.b * m + spec.c * a + spec.d * x + spec.sd_y * rng.standard_normal(n)
    return Dataset(x, a, z, w, y, levels={"a": 2}, seed=cfg.seed, source=spec.name,
                   rng=RNG_NAME, discrete=False)


def gaussian_moments(spec: GaussianScmSpec):
    """Mean vector and covariance of (X, A, Z, W, Y) for a constant propensity."""
    if spec.prop_slope != 0:
        raise ValueError("closed-form moments need a constant propensity")
    p = float(expit(spec.prop_intercept))
    # sources: X, A, e_m, e_z, e_w, e_y
    mean_src = np.array([0.0, p, 0, 0, 0, 0])
    var_src = np.array([spec.sigma_x ** 2, p * (1 - p), spec.sd_m ** 2, spec.sd_z ** 2,
                        spec.sd_w ** 2, spec.sd_y ** 2])
    m_row = np.array([spec.gamma, spec.alpha, 1, 0, 0, 0])
    load = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        m_row + [0, 0, 0, 1, 0, 0],
        m_row + [0, 0, 0, 0, 1, 0],
        spec.b * m_row + [spec.d, spec.c, 0, 0, 0, 1],
    ], dtype=float)
    return load @ mean_src, load @ np.diag(var_src) @ load.T


# --- random valid discrete models ------------------------------------------

def _rows(rng, shape, boost=None):
    """Dirichlet rows floored at POSITIVITY_FLOOR and renormalized.

    Concentrations are all 1, plus ``boost[..., k]`` where given.
    """
    if boost is None:
        p = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
    else:
        conc = np.broadcast_to(1.0 + boost, shape).reshape(-1, shape[-1])
        p = np.array([rng.dirichlet(c) for c in conc]).reshape(shape)
    p = np.maximum(p, POSITIVITY_FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


def _proxy_boost(space, var, ext, proxy_concentration):
    """Extra Dirichlet mass on proxy level k = m, making Z and W track M."""
    if not proxy_concentration or var not in ("z", "w"):
        return None
    size = space.size
    shape = tuple(size(p) for p in ext) + (size(var),)
    m_ax = ext.index("m")
    m = np.arange(space.m_levels).reshape([-1 if i == m_ax else 1 for i in range(len(ext))] + [1])
    k = np.arange(size(var)).reshape([1] * len(ext) + [-1])
    return np.broadcast_to(proxy_concentration * (m == k), shape)


def _draw_spec(space, model_kind, rng, name, proxy_concentration=0.0):
    size = space.size
    tables = {}
    for var in ("x", "u", "a", "m", "z", "w"):
        pars = DEFAULT_PARENTS[var]
        if var == "u" and not space.u_levels:
            continue
        ext = tuple(p for p in pars if p != "u" or space.u_levels)
        tables[var] = _rows(rng, tuple(size(p) for p in ext) + (size(var),),
                            _proxy_boost(space, var, ext, proxy_concentration))
    ypars = tuple(p for p in DEFAULT_PARENTS["y"] if p != "u" or space.u_levels)
    yshape = tuple(size(p) for p in ypars)
    if space.y_continuous:
        ytab = rng.uniform(-1.0, 1.0, size=yshape)
    else:
        ytab = _rows(rng, yshape + (space.y_levels,))
    if model_kind == "front_door":
        ax = ypars.index("a")
        ytab = np.repeat(np.take(ytab, [0], axis=ax), space.a_levels, axis=ax)
    tables["y_mean" if space.y_continuous else "y"] = ytab
    return ScmSpec.from_tables(space, model_kind, tables, name=name)


def acceptable(spec, min_rel_singular=0.0) -> bool:
    """Validation, full-rank completeness and exact bridge existence."""
    from .oracle import check_completeness, solve_outcome_bridge, solve_treatment_bridge

    if not validate_spec(spec).ok:
        return False
    mj = mediator_joint(spec)
    for side in ("z_side", "w_side"):
        rep = check_completeness(mj, side)
        if not rep.complete or rep.min_rel_singular < min_rel_singular:
            return False
    pop = to_population(spec, check=False)
    if not solve_outcome_bridge(pop).exists:
        return False
    return all(solve_treatment_bridge(pop, a).exists for a in range(spec.space.a_levels))


def random_valid_scm(space: FiniteSpace, model_kind: str, seed: int, name: str = "",
                     min_rel_singular: float = 0.0, accept=None,
                     proxy_concentration: float = 0.0) -> ScmSpec:
    """Random discrete model that passes validation, has complete proxies and
    admits both bridges.

    Redraws (up to 100 times) until every check holds.  ``min_rel_singular``
    optionally demands better-conditioned proxy matrices and ``accept`` is an
    extra caller predicate on the spec.  ``proxy_concentration`` > 0 adds
    Dirichlet mass to proxy level k = m in the Z and W tables (stronger proxies).
    """
    if model_kind == "mediation" and space.u_levels:
        space = dataclasses.replace(space, u_levels=0)
    for attempt in range(MAX_RETRIES):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        spec = _draw_spec(space, model_kind, rng, name, proxy_concentration)
        if acceptable(spec, min_rel_singular) and (accept is None or accept(spec)):
            return spec
    raise RuntimeError(f"no valid spec after {MAX_RETRIES} draws for {space}")
