"""Exact population-level quantities for discrete models.

Bridge tables are indexed ``[x, a, w]`` for the outcome bridge h(w, a, x) and
``[x, a', z]`` for the treatment bridge q_a(z, a', x).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PositivityError
from .model import (FULL_AXES, GaussianScmSpec, MediatorJoint, PopulationJoint, ScmSpec,
                    _broadcast)

EXISTENCE_TOL = 1e-8
RANK_TOL = 1e-10


@dataclass(frozen=True)
class EstimandValue:
    psi1: float
    psi2: float
    psi3: float
    a: int
    a_prime: int

    def to_dict(self) -> dict:
        return {"a": self.a, "a_prime": self.a_prime, "psi1": self.psi1, "psi2": self.psi2,
                "psi3": self.psi3}


@dataclass(frozen=True, eq=False)
class TabularBridge:
    """Bridge function on a finite support.

    ``kind`` is ``"outcome_h"`` (values[x, a, w]) or ``"treatment_q"``
    (values[x, a', z], with ``target_a`` the treatment level a).
    """

    kind: str
    values: np.ndarray
    residual_norm: float = 0.0
    target_a: int | None = None

    @property
    def exists(self) -> bool:
        return self.residual_norm < EXISTENCE_TOL

    def __call__(self, v, a, x):
        """Evaluate at arrays of (proxy, treatment, covariate) levels."""
        return self.values[np.asarray(x, dtype=int), np.asarray(a, dtype=int),
                           np.asarray(v, dtype=int)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target_a": self.target_a,
                "residual_norm": self.residual_norm, "axes": ["x", "a", "w" if self.kind == "outcome_h" else "z"],
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "TabularBridge":
        return cls(doc["kind"], np.array(doc["values"], dtype=float),
                   float(doc.get("residual_norm", 0.0)), doc.get("target_a"))


def _select(table, axes, fixed):
    """Index ``table`` at fixed values, dropping those axes."""
    idx = tuple(fixed[ax] if ax in fixed else slice(None) for ax in axes)
    return table[idx], tuple(ax for ax in axes if ax not in fixed)


def _interventional_mean(spec: ScmSpec, a_mediator: int, a_outcome: int | None) -> float:
    """E[Y] when every mechanism except A and Y reads treatment ``a_mediator``
    and Y reads ``a_outcome`` (None = the naturally assigned A)."""
    target = FULL_AXES
    p = spec.broadcast("x") * spec.broadcast("u") * spec.broadcast("a")
    for var in ("m", "z", "w"):
        axes = spec.parents[var] + (var,)
        tab, rest = _select(spec.cpts[var], axes, {"a": a_mediator})
        p = p * _broadcast(tab, rest, target)
    y_tab = spec.y_mean_table()
    if a_outcome is None:
        ey = _broadcast(y_tab, spec.parents["y"], target)
    else:
        tab, rest = _select(y_tab, spec.parents["y"], {"a": a_outcome})
        ey = _broadcast(tab, rest, target)
    return float((p * ey).sum())


def true_estimands(spec, a: int, a_prime: int) -> EstimandValue:
    """Ground-truth counterfactual means from the structural equations.

    psi1 = E[Y(a', M(a))], psi2 = E[Y(a)], psi3 = E[Y(M(a))].
    """
    if isinstance(spec, GaussianScmSpec):
        return gaussian_estimands(spec, a, a_prime)
    return EstimandValue(
        psi1=_interventional_mean(spec, a, a_prime),
        psi2=_interventional_mean(spec, a, a),
        psi3=_interventional_mean(spec, a, None),
        a=a, a_prime=a_prime,
    )


def gaussian_estimands(spec: GaussianScmSpec, a: int, a_prime: int) -> EstimandValue:
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    p_treated = float(np.dot(weights, spec.propensity(spec.sigma_x * nodes)) / weights.sum())
    med = spec.b * spec.alpha * a
    return EstimandValue(psi1=med + spec.c * a_prime, psi2=med + spec.c * a,
                         psi3=med + spec.c * p_treated, a=a, a_prime=a_prime)


def observed_mediator_psi(mj: MediatorJoint, a: int, a_prime: int) -> EstimandValue:
    """Classical identification formulas that use the mediator directly."""
    pxam = mj.p_xam()
    px = pxam.sum(axis=(1, 2))
    pa = pxam.sum(axis=2) / px[:, None]
    pm = mj.p_m_given_ax()
    ey = mj.e_y_given_xam()
    psi1 = float(np.einsum("xm,xm,x->", ey[:, a_prime, :], pm[:, a, :], px))
    psi2 = float(np.einsum("xbm,xm,xb,x->", ey, pm[:, a, :], pa, px))
    return EstimandValue(psi1, psi2, psi2, a, a_prime)


def _lstsq(mat, rhs):
    sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    return sol, float(np.linalg.norm(mat @ sol - rhs))


def solve_outcome_bridge(pop: PopulationJoint) -> TabularBridge:
    """Minimum-norm solution of sum_w h(w,a,x) p(w|z,a,x) = E[Y|z,a,x]."""
    sp = pop.space
    pwz = pop.p_w_given_zax()
    ey = pop.e_y_given_zax()
    pz = pop.p_z_given_ax()
    h = np.zeros((sp.x_levels, sp.a_levels, sp.w_levels))
    resid = 0.0
    for x in range(sp.x_levels):
        for a in range(sp.a_levels):
            rows = pz[x, a] > 0
            h[x, a], r = _lstsq(pwz[x, a][rows], ey[x, a][rows])
            resid = max(resid, r)
    return TabularBridge("outcome_h", h, resid)


def treatment_bridge_rhs(pw_ax, a):
    """Ratio p(w|a,x) / p(w|a',x) indexed (x, a', w), with positivity check."""
    num = pw_ax[:, a, :][:, None, :]
    bad = np.argwhere((pw_ax <= 0) & (num > 0))
    if len(bad):
        raise PositivityError("p(w|a',x) = 0 where p(w|a,x) > 0",
                              [tuple(int(i) for i in c) for c in bad])
    out = np.zeros_like(pw_ax)
    np.divide(np.broadcast_to(num, pw_ax.shape), pw_ax, out=out, where=pw_ax > 0)
    return out


def solve_treatment_bridge(pop: PopulationJoint, a: int) -> TabularBridge:
    """Minimum-norm solution of sum_z q_a(z,a',x) p(z|w,a',x) = p(w|a,x)/p(w|a',x)."""
    sp = pop.space
    pw = pop.p_w_given_ax()
    rhs = treatment_bridge_rhs(pw, a)
    pzw = pop.p_z_given_wax()
    q = np.zeros((sp.x_levels, sp.a_levels, sp.z_levels))
    resid = 0.0
    for x in range(sp.x_levels):
        for ap in range(sp.a_levels):
            rows = pw[x, ap] > 0
            q[x, ap], r = _lstsq(pzw[x, ap][rows], rhs[x, ap][rows])
            resid = max(resid, r)
    return TabularBridge("treatment_q", q, resid, target_a=a)


@dataclass(frozen=True)
class CompletenessReport:
    which: str
    ranks: np.ndarray           # (x, a)
    m_levels: int
    min_rel_singular: float     # smallest sigma_min / sigma_max over (x, a)

    @property
    def complete(self) -> bool:
        return bool(np.all(self.ranks == self.m_levels))

    def to_dict(self) -> dict:
        return {"which": self.which, "complete": self.complete, "ranks": self.ranks.tolist(),
                "m_levels": self.m_levels, "min_rel_singular": self.min_rel_singular}


def check_completeness(mj: MediatorJoint, which: str) -> CompletenessReport:
    """Rank of p(m|z,a,x) (``z_side``) or p(m|w,a,x) (``w_side``) per (a, x)."""
    if which == "z_side":
        joint = mj.prob.sum(axis=4).transpose(0, 1, 3, 2)   # (x, a, z, m)
    elif which == "w_side":
        joint = mj.prob.sum(axis=3).transpose(0, 1, 3, 2)   # (x, a, w, m)
    else:
        raise ValueError(f"which must be 'z_side' or 'w_side', not {which!r}")
    denom = joint.sum(axis=3, keepdims=True)
    cond = np.divide(joint, denom, out=np.zeros_like(joint), where=denom > 0)
    ranks = np.zeros(joint.shape[:2], dtype=int)
    rel = np.inf
    for x in range(joint.shape[0]):
        for a in range(joint.shape[1]):
            s = np.linalg.svd(cond[x, a], compute_uv=False)
            ranks[x, a] = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0
            rel = min(rel, s[-1] / s[0] if s[0] > 0 else 0.0)
    return CompletenessReport(which, ranks, mj.space.m_levels, float(rel))


def qrat_residual(mj: MediatorJoint, q: TabularBridge) -> float:
    """Max violation of sum_z q_a(z,a',x) p(z|m,a',x) = p(m|a,x)/p(m|a',x)."""
    pxamz = mj.prob.sum(axis=4)
    pz_m = pxamz / pxamz.sum(axis=3, keepdims=True)          # (x, a', m, z)
    lhs = np.einsum("xbmz,xbz->xbm", pz_m, q.values)
    pm = mj.p_m_given_ax()
    rhs = pm[:, q.target_a, :][:, None, :] / pm
    return float(np.abs(lhs - rhs).max())


def population_psi_via_h(pop: PopulationJoint, h: TabularBridge, a: int, a_prime: int) -> EstimandValue:
    px = pop.p_x()
    pw = pop.p_w_given_ax()
    pa = pop.p_a_given_x()
    psi1 = float(np.einsum("xw,xw,x->", h.values[:, a_prime, :], pw[:, a, :], px))
    psi2 = float(np.einsum("xbw,xw,xb,x->", h.values, pw[:, a, :], pa, px))
    return EstimandValue(psi1, psi2, psi2, a, a_prime)


def population_psi_via_q(pop: PopulationJoint, q: TabularBridge, a: int, a_prime: int) -> EstimandValue:
    if q.target_a is not None and q.target_a != a:
        raise ValueError(f"bridge targets a={q.target_a}, requested a={a}")
    pa = pop.p_a_given_x()
    if np.any(pa[:, a_prime] <= 0):
        raise PositivityError("p(a'|x) = 0", [(int(x), a_prime) for x in np.flatnonzero(pa[:, a_prime] <= 0)])
    my = pop.prob * pop.y_mean                                   # (x, a, z, w)
    qy = np.einsum("xazw,xaz->xa", my, q.values)
    psi1 = float(np.sum(qy[:, a_prime] / pa[:, a_prime]))
    psi2 = float(qy.sum())
    return EstimandValue(psi1, psi2, psi2, a, a_prime)


def exact_nuisances(pop: PopulationJoint):
    from .nuisance import NuisanceSet

    return NuisanceSet.from_tables(pop.p_a_given_x(), pop.p_w_given_ax(), provenance="exact",
                                   clip=False)


def population_mr_value(pop: PopulationJoint, h: TabularBridge, q: TabularBridge, nu,
                        a: int, a_prime: int, which: str) -> float:
    """Exact mean of the multiply robust identifying expression.

    ``nu`` supplies (possibly wrong) p(a|x) and p(w|a,x); the expectation is
    always under the true law ``pop``.
    """
    pa_hat = nu.propensity_table
    pw_hat = nu.w_law_table
    prob, ey = pop.prob, pop.y_mean
    hv, qv = h.values, q.values
    resid = ey - hv[:, :, None, :]                               # (x, a, z, w)
    if which == "psi1":
        eta1 = np.einsum("xw,xw->x", hv[:, a_prime, :], pw_hat[:, a, :])
        t1 = np.einsum("xzw,xz,xzw->x", prob[:, a_prime], qv[:, a_prime], resid[:, a_prime])
        t1 = np.sum(t1 / pa_hat[:, a_prime])
        p_xaw = prob.sum(axis=2)
        t2 = np.sum(np.einsum("xw,xw->x", p_xaw[:, a], hv[:, a_prime, :] - eta1[:, None]) / pa_hat[:, a])
        t3 = np.dot(pop.p_x(), eta1)
        return float(t1 + t2 + t3)
    if which == "psi2":
        t1 = np.einsum("xazw,xaz,xazw->", prob, qv, resid)
        hbar = np.einsum("xbw,xb->xw", hv, pa_hat)
        eta2 = np.einsum("xw,xw->x", hbar, pw_hat[:, a, :])
        p_xaw = prob.sum(axis=2)
        t2 = np.sum(np.einsum("xw,xw->x", p_xaw[:, a], hbar - eta2[:, None]) / pa_hat[:, a])
        eta1_obs = np.einsum("xbw,xw->xb", hv, pw_hat[:, a, :])  # eta1(x, A, a)
        t3 = np.sum(pop.p_xa() * eta1_obs)
        return float(t1 + t2 + t3)
    raise ValueError(f"which must be 'psi1' or 'psi2', not {which!r}")


def population_if_mean(pop: PopulationJoint, h: TabularBridge, q: TabularBridge, nu,
                       a: int, a_prime: int, which: str, psi: float | None = None) -> float:
    """Exact mean of the influence function; zero when every input is exact.

    ``psi`` defaults to the outcome-bridge identification of the estimand.
    """
    if psi is None:
        val = population_psi_via_h(pop, h, a, a_prime)
        psi = val.psi1 if which == "psi1" else val.psi2
    return population_mr_value(pop, h, q, nu, a, a_prime, which) - psi


def if_values_table(pop: PopulationJoint, h: TabularBridge, q: TabularBridge, nu,
                    a: int, a_prime: int, which: str, psi: float) -> np.ndarray:
    """Influence function on every (x, a, z, w, y) cell of a discrete-Y population."""
    pa_hat, pw_hat = nu.propensity_table, nu.w_law_table
    hv, qv = h.values, q.values
    y = pop.y_values[None, None, None, None, :]
    sp = pop.space
    A = np.arange(sp.a_levels)[None, :, None, None, None]
    h_obs = hv[:, :, None, :, None]
    q_obs = qv[:, :, :, None, None]
    if which == "psi1":
        eta1 = np.einsum("xw,xw->x", hv[:, a_prime, :], pw_hat[:, a, :])[:, None, None, None, None]
        ind_p = (A == a_prime) / pa_hat[:, a_prime][:, None, None, None, None]
        ind = (A == a) / pa_hat[:, a][:, None, None, None, None]
        h_ap = hv[:, a_prime, :][:, None, None, :, None]
        val = ind_p * q_obs * (y - h_obs) + ind * (h_ap - eta1) + eta1 - psi
    else:
        hbar = np.einsum("xbw,xb->xw", hv, pa_hat)
        eta2 = np.einsum("xw,xw->x", hbar, pw_hat[:, a, :])[:, None, None, None, None]
        ind = (A == a) / pa_hat[:, a][:, None, None, None, None]
        eta1_obs = np.einsum("xbw,xw->xb", hv, pw_hat[:, a, :])[:, :, None, None, None]
        val = q_obs * (y - h_obs) + ind * (hbar[:, None, None, :, None] - eta2) + eta1_obs - psi
    return np.broadcast_to(val, pop.y_joint.shape)


def drq_if_mean(pop: PopulationJoint, q: TabularBridge, g: np.ndarray, a: int | None = None) -> float:
    """Population mean of the treatment-bridge influence-function numerator.

    ``g`` is a table g(w, a, x) indexed [x, a, w].  The mean is zero whenever
    ``q`` solves its bridge equation, for every ``g``.
    """
    a = q.target_a if a is None else a
    pa = pop.p_a_given_x()
    pw = pop.p_w_given_ax()
    prob = pop.prob
    t1 = np.einsum("xazw,xaz,xaw->", prob, q.values, g)
    t2 = np.einsum("xa,xaw,xw->", pop.p_xa(), g, pw[:, a, :])
    gbar = np.einsum("xbw,xb->xw", g, pa)
    p_xaw = prob.sum(axis=2)
    t3 = np.sum(np.einsum("xw,xw->x", p_xaw[:, a], gbar) / pa[:, a])
    t4_inner = np.einsum("xw,xw->x", gbar, pw[:, a, :])
    t4 = np.sum(pop.p_xa()[:, a] * t4_inner / pa[:, a])
    return float(t1 - t2 - t3 + t4)


# Which counterfactual mean each identifying formula recovers, per model kind.
# The psi2 formula is E[Y(a)] only without a direct A -> Y effect; with one it
# recovers E[Y(M(a))].
IDENTIFIED = {
    "mediation": {"psi1": "psi1", "psi2": "psi3"},
    "front_door": {"psi2": "psi2"},
    "generalized_front_door": {"psi2": "psi3"},
}


def identified_components(spec) -> dict:
    """Map formula name -> true estimand it identifies under the model kind.

    A front-door model also has psi3 = psi2 and psi1 = psi2 (no direct
    effect), and a mediation model has psi2(a) = psi1(a, a).
    """
    return dict(IDENTIFIED[spec.model_kind])


def identified_target(spec, estimand: str, a: int, a_prime: int | None = None) -> float:
    """Population value targeted by the ``estimand`` formulas (psi3 -> psi2 formula).

    Discrete specs: the formula evaluated with the exact outcome bridge.
    Gaussian specs: the matching structural counterfactual.
    """
    formula = "psi2" if estimand == "psi3" else estimand
    ap = a if a_prime is None else a_prime
    if isinstance(spec, GaussianScmSpec):
        tv = gaussian_estimands(spec, a, ap)
        return tv.psi1 if formula == "psi1" else tv.psi3
    from .model import to_population

    pop = to_population(spec)
    val = population_psi_via_h(pop, solve_outcome_bridge(pop), a, ap)
    return val.psi1 if formula == "psi1" else val.psi2
