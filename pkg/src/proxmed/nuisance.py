"""Auxiliary laws p(a|x), p(w|a,x) and the derived quantities eta1, hbar, eta2."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SpecError

PROPENSITY_BOUNDS = (0.01, 0.99)


def _clip_rows(p, lo, hi, iters=50):
    """Clip probability rows to [lo, hi] while keeping them normalized."""
    p = np.asarray(p, dtype=float)
    for _ in range(iters):
        c = np.clip(p, lo, hi)
        c = c / c.sum(axis=-1, keepdims=True)
        if np.allclose(c, p, rtol=0, atol=1e-15):
            break
        p = c
    return p


@dataclass(frozen=True)
class GaussianWLaw:
    """W | A, X ~ N(coef . (1, A, X), sd^2); expectations by Gauss-Hermite."""

    coef: np.ndarray
    sd: float
    n_nodes: int = 40

    def mean(self, a, x):
        return self.coef[0] + self.coef[1] * np.asarray(a, dtype=float) + self.coef[2] * np.asarray(x, dtype=float)

    def expect(self, func, a, x):
        nodes, wts = np.polynomial.hermite_e.hermegauss(self.n_nodes)
        wts = wts / wts.sum()
        mu = self.mean(np.broadcast_to(a, np.shape(x)), x)
        return sum(wk * func(mu + self.sd * tk) for tk, wk in zip(nodes, wts))


@dataclass(frozen=True, eq=False)
class NuisanceSet:
    """Propensity p(a|x) and proxy law p(w|a,x).

    Tabular mode stores ``propensity_table[x, a]`` and ``w_law_table[x, a, w]``.
    Continuous mode stores a fitted classifier (``propensity_model``, mapping
    x to class probabilities) and a :class:`GaussianWLaw`.
    """

    propensity_table: np.ndarray | None = None
    w_law_table: np.ndarray | None = None
    propensity_model: object = None
    w_law: GaussianWLaw | None = None
    provenance: str = "empirical"
    clipped: int = 0
    a_levels: int = 2
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_tables(cls, propensity, w_law, provenance="exact", clip=True):
        pa = np.asarray(propensity, dtype=float)
        clipped = 0
        if clip:
            lo, hi = PROPENSITY_BOUNDS
            clipped = int(np.sum((pa < lo) | (pa > hi)))
            pa = _clip_rows(pa, lo, hi)
        return cls(pa, np.asarray(w_law, dtype=float), provenance=provenance, clipped=clipped,
                   a_levels=pa.shape[1])

    @property
    def tabular(self) -> bool:
        return self.propensity_table is not None

    def propensity(self, x):
        """Matrix of p(a|x_i), shape (n, a_levels)."""
        if self.tabular:
            return self.propensity_table[np.asarray(x, dtype=int)]
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        p = self.propensity_model.predict_proba(x)
        return _clip_rows(p, *PROPENSITY_BOUNDS)

    def p_w(self, a, x):
        """Matrix of p(w|a, x_i), shape (n, w_levels); tabular mode only."""
        x = np.asarray(x, dtype=int)
        return self.w_law_table[x, np.broadcast_to(np.asarray(a, dtype=int), x.shape)]

    def expect_w(self, func, a, x):
        """E[func(W) | A=a, X=x_i] for each i; ``func`` maps a W-array to values."""
        if self.tabular:
            x = np.asarray(x, dtype=int)
            pw = self.p_w(a, x)
            vals = np.stack([func(np.full(x.shape, w)) for w in range(pw.shape[1])], axis=1)
            return np.sum(vals * pw, axis=1)
        return self.w_law.expect(func, a, x)

    def to_dict(self) -> dict:
        if not self.tabular:
            return {"provenance": self.provenance, "mode": "continuous",
                    "w_law": {"coef": self.w_law.coef.tolist(), "sd": self.w_law.sd}}
        return {"provenance": self.provenance, "mode": "tabular", "clipped": self.clipped,
                "propensity": self.propensity_table.tolist(), "w_law": self.w_law_table.tolist()}


def _counts(index_cols, shape, weights):
    out = np.zeros(shape)
    np.add.at(out, tuple(index_cols), 1.0 if weights is None else weights)
    return out


def fit_nuisances(data, smoothing: float = 0.5) -> NuisanceSet:
    """Empirical nuisance tables with additive smoothing per cell.

    Continuous data get a logistic propensity in X and a linear-Gaussian
    W | A, X law.
    """
    if not data.discrete:
        return _fit_continuous(data)
    lv = data.levels
    wts = data.weights
    if wts is not None:
        wts = wts / wts.sum() * data.n
    cxa = _counts((data.x, data.a), (lv["x"], lv["a"]), wts)
    if np.any(cxa.sum(axis=0) <= 0):
        raise SpecError("treatment arm absent from data", "a")
    empty_x = np.flatnonzero(cxa.sum(axis=1) <= 0)
    if len(empty_x):
        raise SpecError(f"no records for x levels {empty_x.tolist()}", "x")
    pa = (cxa + smoothing) / (cxa.sum(axis=1, keepdims=True) + smoothing * lv["a"])
    cxaw = _counts((data.x, data.a, data.w), (lv["x"], lv["a"], lv["w"]), wts)
    denom = cxaw.sum(axis=2, keepdims=True) + smoothing * lv["w"]
    if np.any(denom <= 0):
        raise SpecError("empty (x, a) cell and no smoothing", "w")
    pw = (cxaw + smoothing) / denom
    return NuisanceSet.from_tables(pa, pw, provenance="empirical")


def _fit_continuous(data) -> NuisanceSet:
    from sklearn.linear_model import LogisticRegression

    if len(np.unique(data.a)) < 2:
        raise SpecError("treatment arm absent from data", "a")
    x = np.asarray(data.x, dtype=float).reshape(-1, 1)
    sw = None if data.weights is None else data.weights / data.weights.mean()
    clf = LogisticRegression(C=1e6, max_iter=1000).fit(x, data.a, sample_weight=sw)
    design = np.column_stack([np.ones(data.n), data.a, data.x])
    wv = np.ones(data.n) if sw is None else sw
    coef = np.linalg.solve(design.T @ (design * wv[:, None]), design.T @ (wv * data.w))
    resid = data.w - design @ coef
    sd = float(np.sqrt(np.sum(wv * resid ** 2) / max(np.sum(wv) - 3, 1)))
    return NuisanceSet(propensity_model=clf, w_law=GaussianWLaw(coef, sd), provenance="empirical",
                       a_levels=int(data.a.max()) + 1)


# --- derived quantities ----------------------------------------------------

def eta1(h, nu: NuisanceSet, x, a_prime, a):
    """eta1(x, a', a) = E[h(W, a', X) | A=a, X=x]; ``a_prime`` may be an array."""
    x = np.asarray(x)
    ap = np.broadcast_to(np.asarray(a_prime), x.shape)
    return nu.expect_w(lambda w: h(w, ap, x), a, x)


def hbar(h, nu: NuisanceSet, w, x):
    """hbar(w, x) = sum_a' h(w, a', x) p(a'|x)."""
    w, x = np.asarray(w), np.asarray(x)
    pa = nu.propensity(x)
    return sum(h(w, np.full(x.shape, k), x) * pa[:, k] for k in range(pa.shape[1]))


def eta2(h, nu: NuisanceSet, x, a, route: str = "sum"):
    """eta2(x, a), either as sum_a' eta1(x,a',a) p(a'|x) or as E[hbar(W,X)|A=a,X=x]."""
    x = np.asarray(x)
    if route == "sum":
        pa = nu.propensity(x)
        return sum(eta1(h, nu, x, k, a) * pa[:, k] for k in range(pa.shape[1]))
    if route == "hbar":
        return nu.expect_w(lambda w: hbar(h, nu, w, x), a, x)
    raise ValueError(f"unknown route {route!r}")


def eta1_regression(h, data, a_prime, a):
    """eta1 by least-squares regression of h(W, a', X) on (1, X) within the A=a arm.

    Returns a callable x -> eta1 estimate; exact when eta1 is affine in x.
    """
    arm = data.a == a
    x = np.asarray(data.x, dtype=float)[arm]
    target = h(data.w[arm], np.full(arm.sum(), a_prime), data.x[arm])
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return lambda xx: coef[0] + coef[1] * np.asarray(xx, dtype=float)


# --- misspecification injectors ------------------------------------------

def _sign_noise(shape, rng):
    signs = rng.choice([-1.0, 1.0], size=shape)
    rows = signs.reshape(-1, shape[-1])
    for r in rows:
        if np.all(r == r[0]):
            r[0] = -r[0]
    return rows.reshape(shape)


def corrupt_table(table, seed: int, amount: float = 0.3):
    """Multiply cells by 1 +/- ``amount`` (random signs, never all equal in a
    row) and renormalize rows."""
    rng = np.random.default_rng(seed)
    out = np.asarray(table) * (1.0 + amount * _sign_noise(np.shape(table), rng))
    return out / out.sum(axis=-1, keepdims=True)


def misspecify(nu: NuisanceSet, which, seed: int = 0, amount: float = 0.3) -> NuisanceSet:
    """Corrupt the named laws (``"pa"`` and/or ``"pw"``) of a tabular set."""
    which = set(which)
    if not which:
        return nu
    pa, pw = nu.propensity_table, nu.w_law_table
    if "pa" in which:
        pa = _clip_rows(corrupt_table(pa, seed, amount), *PROPENSITY_BOUNDS)
    if "pw" in which:
        pw = corrupt_table(pw, seed + 1, amount)
    tag = "+".join(sorted(which))
    return replace(nu, propensity_table=pa, w_law_table=pw, provenance=f"misspecified({tag})")


def constant_propensity(nu: NuisanceSet) -> NuisanceSet:
    """Wrong-model propensity that ignores X (marginal mixture of rows)."""
    pa = np.broadcast_to(nu.propensity_table.mean(axis=0), nu.propensity_table.shape).copy()
    return replace(nu, propensity_table=pa, provenance="misspecified(constant_propensity)")


def w_law_ignoring_a(nu: NuisanceSet) -> NuisanceSet:
    """Wrong-model proxy law that pools over treatment arms."""
    pw = np.broadcast_to(nu.w_law_table.mean(axis=1, keepdims=True), nu.w_law_table.shape).copy()
    return replace(nu, w_law_table=pw, provenance="misspecified(w_law_ignoring_a)")
