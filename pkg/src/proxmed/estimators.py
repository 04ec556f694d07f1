"""Sample estimators of psi1, psi2 and psi3.

Strategies, with the nuisances each one consumes:

    s1_hw   h and p(w|a,x)
    s2_qa   q_a and p(a|x)
    s3_ha   h and p(a|x)
    s4_hqa  h, q_a and p(a|x)
    s5_mr   all four, combined in the influence-function (multiply robust) form

Bridges are any callables ``bridge(v, a, x)``: tabular or kernel.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .bridges import KernelSpec, fit_h_minimax, fit_h_tabular, fit_q_minimax, fit_q_tabular
from .nuisance import NuisanceSet, eta1, eta2, fit_nuisances, hbar, misspecify

STRATEGIES = ("s1_hw", "s2_qa", "s3_ha", "s4_hqa", "s5_mr")
ESTIMANDS = ("psi1", "psi2", "psi3")
CONSUMES = {
    "s1_hw": ("h", "p(w|a,x)"),
    "s2_qa": ("q", "p(a|x)"),
    "s3_ha": ("h", "p(a|x)"),
    "s4_hqa": ("h", "q", "p(a|x)"),
    "s5_mr": ("h", "q", "p(a|x)", "p(w|a,x)"),
}
# the psi2 forms of s2 and s4 never touch the propensity
CONSUMES_PSI2 = dict(CONSUMES, s2_qa=("q",), s4_hqa=("h", "q"))


def consumed(estimand: str, strategy: str) -> tuple:
    return (CONSUMES if estimand == "psi1" else CONSUMES_PSI2)[strategy]


CSV_HEADER = "estimand,strategy,a,a_prime,point,se,ci_lo,ci_hi,n,seed"
MIN_FOLD = 50
Z95 = 1.96


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass(frozen=True)
class EstimateResult:
    estimand: str
    strategy: str
    a: int
    a_prime: int | None
    point: float
    std_error: float | None = None
    n: int = 0
    folds: int = 1
    seed: int | None = None
    nuisance_provenance: tuple = ()
    consumed: tuple = ()

    @property
    def ci_95(self):
        if self.std_error is None:
            return None
        return (self.point - Z95 * self.std_error, self.point + Z95 * self.std_error)

    def to_dict(self) -> dict:
        ci = self.ci_95
        return {"estimand": self.estimand, "strategy": self.strategy, "a": self.a,
                "a_prime": self.a_prime, "point": self.point, "std_error": self.std_error,
                "ci_95": None if ci is None else list(ci), "n": self.n, "folds": self.folds,
                "seed": self.seed, "nuisance_provenance": list(self.nuisance_provenance),
                "consumed": list(self.consumed)}

    def csv_row(self) -> str:
        lo, hi = self.ci_95 or (None, None)
        nums = (self.a, self.a_prime, self.point, self.std_error, lo, hi, self.n, self.seed)
        return ",".join([self.estimand, self.strategy] + [_fmt(v) for v in nums])


def _provenance(h=None, q=None, nu=None):
    tags = []
    for name, obj in (("h", h), ("q", q)):
        if obj is not None:
            tags.append(f"{name}:{getattr(obj, 'provenance', type(obj).__name__)}")
    if nu is not None:
        tags.append(f"nuisance:{nu.provenance}")
    return tuple(tags)


def _result(estimand, strategy, data, a, a_prime, point, h=None, q=None, nu=None, **kw):
    return EstimateResult(estimand, strategy, a, a_prime, float(point), n=data.n,
                          seed=data.seed, nuisance_provenance=_provenance(h, q, nu),
                          consumed=consumed(estimand, strategy), **kw)


def _ind(data, level):
    return (np.asarray(data.a) == level).astype(float)


def _arm(data, nu, level):
    """I(A = level) / p(level | X)."""
    return _ind(data, level) / nu.propensity(data.x)[:, level]


# --- psi1 ------------------------------------------------------------------

def psi1_s1(data, h, nu: NuisanceSet, a: int, a_prime: int) -> EstimateResult:
    val = data.mean(eta1(h, nu, data.x, a_prime, a))
    return _result("psi1", "s1_hw", data, a, a_prime, val, h=h, nu=nu)


def psi1_s2(data, q, nu: NuisanceSet, a: int, a_prime: int) -> EstimateResult:
    val = data.mean(_arm(data, nu, a_prime) * data.y * q(data.z, data.a, data.x))
    return _result("psi1", "s2_qa", data, a, a_prime, val, q=q, nu=nu)


def psi1_s3(data, h, nu: NuisanceSet, a: int, a_prime: int, display_form: bool = False) -> EstimateResult:
    """Weighted a-arm average of h at the target slice a'.

    ``display_form=True`` evaluates h at the observed treatment instead.
    """
    slice_a = data.a if display_form else np.full(data.n, a_prime)
    val = data.mean(_arm(data, nu, a) * h(data.w, slice_a, data.x))
    return _result("psi1", "s3_ha", data, a, a_prime, val, h=h, nu=nu)


def psi1_s4(data, h, q, nu: NuisanceSet, a: int, a_prime: int) -> EstimateResult:
    val = data.mean(_arm(data, nu, a_prime) * h(data.w, data.a, data.x) * q(data.z, data.a, data.x))
    return _result("psi1", "s4_hqa", data, a, a_prime, val, h=h, q=q, nu=nu)


def mr_terms_psi1(data, h, q, nu: NuisanceSet, a: int, a_prime: int):
    """Per-record terms whose mean is the multiply robust psi1 estimate."""
    e1 = eta1(h, nu, data.x, a_prime, a)
    resid = data.y - h(data.w, data.a, data.x)
    return (_arm(data, nu, a_prime) * q(data.z, data.a, data.x) * resid
            + _arm(data, nu, a) * (h(data.w, np.full(data.n, a_prime), data.x) - e1) + e1)


# --- psi2 ------------------------------------------------------------------

def psi2_s1(data, h, nu: NuisanceSet, a: int) -> EstimateResult:
    val = data.mean(eta1(h, nu, data.x, data.a, a))
    return _result("psi2", "s1_hw", data, a, None, val, h=h, nu=nu)


def psi2_s2(data, q, nu: NuisanceSet | None, a: int) -> EstimateResult:
    val = data.mean(data.y * q(data.z, data.a, data.x))
    return _result("psi2", "s2_qa", data, a, None, val, q=q)


def psi2_s3(data, h, nu: NuisanceSet, a: int) -> EstimateResult:
    val = data.mean(_arm(data, nu, a) * hbar(h, nu, data.w, data.x))
    return _result("psi2", "s3_ha", data, a, None, val, h=h, nu=nu)


def psi2_s4(data, h, q, nu: NuisanceSet | None, a: int) -> EstimateResult:
    val = data.mean(h(data.w, data.a, data.x) * q(data.z, data.a, data.x))
    return _result("psi2", "s4_hqa", data, a, None, val, h=h, q=q)


def mr_terms_psi2(data, h, q, nu: NuisanceSet, a: int):
    """Per-record terms whose mean is the multiply robust psi2 estimate."""
    resid = data.y - h(data.w, data.a, data.x)
    return (q(data.z, data.a, data.x) * resid
            + _arm(data, nu, a) * (hbar(h, nu, data.w, data.x) - eta2(h, nu, data.x, a))
            + eta1(h, nu, data.x, data.a, a))


# --- multiply robust with cross-fitting ------------------------------------

@dataclass(frozen=True)
class ShiftedBridge:
    """Bridge plus a constant on one treatment slice (a deliberate error)."""

    base: object
    slice_a: int
    amount: float = 0.3

    @property
    def provenance(self):
        return f"misspecified(shift{self.amount:+g}@a={self.slice_a})"

    def __call__(self, v, a, x):
        return self.base(v, a, x) + self.amount * (np.asarray(a) == self.slice_a)


def shift_bridge(bridge, slice_a: int, amount: float = 0.3):
    """Corrupt a bridge by adding ``amount`` on the slice A = slice_a.

    Tabular bridges stay tabular, anything else is wrapped.
    """
    vals = getattr(bridge, "values", None)
    if vals is not None:
        from .oracle import TabularBridge

        new = np.array(vals, dtype=float)
        new[:, slice_a, :] += amount
        return TabularBridge(bridge.kind, new, bridge.residual_norm, bridge.target_a)
    return ShiftedBridge(bridge, slice_a, amount)


@dataclass(frozen=True)
class FitPlan:
    """How to fit (h, q_a, nuisances) on a training sample.

    ``bridge_method`` is ``"tabular"`` (discrete data only) or ``"minimax"``.
    ``corrupt`` names nuisances to spoil after fitting ({"h","q","pa","pw"}),
    with bridge errors placed on the slice ``corrupt_slice``.
    """

    bridge_method: str = "auto"
    lambda_h: float | None = None
    lambda_q: float | None = None
    kernels: tuple = (KernelSpec(), KernelSpec())
    smoothing: float = 0.5
    max_anchors: int | None = None
    corrupt: frozenset = frozenset()
    corrupt_slice: int = 0
    corrupt_seed: int = 0

    def method_for(self, data):
        if self.bridge_method == "auto":
            return "tabular" if data.discrete else "minimax"
        if self.bridge_method not in ("tabular", "minimax"):
            raise ValueError(f"unknown bridge method {self.bridge_method!r}")
        return self.bridge_method

    def fit(self, data, a: int):
        nu = fit_nuisances(data, self.smoothing)
        if self.method_for(data) == "tabular":
            h, q = fit_h_tabular(data), fit_q_tabular(data, a)
        else:
            h = fit_h_minimax(data, self.kernels, self.lambda_h, self.lambda_q, self.max_anchors)
            q = fit_q_minimax(data, nu, a, self.kernels, self.lambda_h, self.lambda_q, self.max_anchors)
        return self.spoil(h, q, nu)

    def spoil(self, h, q, nu):
        bad = set(self.corrupt)
        if "h" in bad:
            h = shift_bridge(h, self.corrupt_slice)
        if "q" in bad:
            q = shift_bridge(q, self.corrupt_slice)
        laws = bad & {"pa", "pw"}
        if laws:
            nu = misspecify(nu, laws, self.corrupt_seed)
        return h, q, nu


def fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label per record from a seeded permutation."""
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D])).permutation(n)
    labels = np.empty(n, dtype=int)
    for k, idx in enumerate(np.array_split(perm, folds)):
        labels[idx] = k
    return labels


def _weighted_se(terms, weights, point):
    w = weights / weights.sum()
    n = len(terms)
    var = np.sum(w * (terms - point) ** 2) * n / max(n - 1, 1)
    return float(np.sqrt(var / n))


def _mr(which, data, a, a_prime, plan, folds, seed, nuisances):
    if nuisances is not None:
        h, q, nu = nuisances
        terms = (mr_terms_psi1(data, h, q, nu, a, a_prime) if which == "psi1"
                 else mr_terms_psi2(data, h, q, nu, a))
        k_used, prov = 1, _provenance(h, q, nu)
    else:
        if folds < 2:
            raise ValueError("cross-fitting needs at least 2 folds")
        plan = plan or FitPlan()
        labels = fold_ids(data.n, folds, 0 if seed is None else seed)
        terms = np.empty(data.n)
        prov = ()
        sizes = np.bincount(labels, minlength=folds)
        if sizes.min() < MIN_FOLD:
            warnings.warn(f"smallest of {folds} folds has {sizes.min()} records (< {MIN_FOLD})",
                          RuntimeWarning, stacklevel=3)
        for k in range(folds):
            test = np.flatnonzero(labels == k)
            h, q, nu = plan.fit(data.take(np.flatnonzero(labels != k)), a)
            part = data.take(test)
            terms[test] = (mr_terms_psi1(part, h, q, nu, a, a_prime) if which == "psi1"
                           else mr_terms_psi2(part, h, q, nu, a))
            prov = _provenance(h, q, nu)
        k_used = folds
    point = data.mean(terms)
    se = _weighted_se(terms, data.w_weights, point)
    return EstimateResult(which, "s5_mr", a, a_prime if which == "psi1" else None, float(point),
                          std_error=se, n=data.n, folds=k_used, seed=data.seed if seed is None else seed,
                          nuisance_provenance=prov, consumed=CONSUMES["s5_mr"]), terms - point


def psi1_s5_mr(data, plan: FitPlan | None = None, a: int = 1, a_prime: int = 0, folds: int = 5,
               seed: int | None = None, nuisances=None, return_if: bool = False):
    """Multiply robust psi1 estimate with IF-based standard error.

    Nuisances are cross-fitted over ``folds`` folds, or taken as given via
    ``nuisances=(h, q, nu)`` (then no sample splitting is done).
    """
    res, ifv = _mr("psi1", data, a, a_prime, plan, folds, seed, nuisances)
    return (res, ifv) if return_if else res


def psi2_s5_mr(data, plan: FitPlan | None = None, a: int = 1, folds: int = 5,
               seed: int | None = None, nuisances=None, return_if: bool = False):
    res, ifv = _mr("psi2", data, a, None, plan, folds, seed, nuisances)
    return (res, ifv) if return_if else res


# --- dispatch ----------------------------------------------------------------

def estimate(data, estimand: str, strategy: str, a: int, a_prime: int | None = None,
             h=None, q=None, nu=None, plan: FitPlan | None = None, folds: int = 5,
             seed: int | None = None, display_form: bool = False) -> EstimateResult:
    """Run one (estimand, strategy) pair; missing nuisances are fitted by ``plan``.

    psi3 uses the psi2 formulas and is relabelled.
    """
    if estimand not in ESTIMANDS:
        raise ValueError(f"unknown estimand {estimand!r}")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if estimand == "psi1" and a_prime is None:
        raise ValueError("psi1 needs a_prime")
    if estimand == "psi3":
        res = estimate(data, "psi2", strategy, a, None, h, q, nu, plan, folds, seed)
        return replace(res, estimand="psi3")
    if strategy == "s5_mr":
        given = None if h is None or q is None or nu is None else (h, q, nu)
        if estimand == "psi1":
            return psi1_s5_mr(data, plan, a, a_prime, folds, seed, given)
        return psi2_s5_mr(data, plan, a, folds, seed, given)
    if h is None or q is None or nu is None:
        fh, fq, fnu = (plan or FitPlan()).fit(data, a)
        h = fh if h is None else h
        q = fq if q is None else q
        nu = fnu if nu is None else nu
    if estimand == "psi1":
        if strategy == "s1_hw":
            return psi1_s1(data, h, nu, a, a_prime)
        if strategy == "s2_qa":
            return psi1_s2(data, q, nu, a, a_prime)
        if strategy == "s3_ha":
            return psi1_s3(data, h, nu, a, a_prime, display_form)
        return psi1_s4(data, h, q, nu, a, a_prime)
    if strategy == "s1_hw":
        return psi2_s1(data, h, nu, a)
    if strategy == "s2_qa":
        return psi2_s2(data, q, nu, a)
    if strategy == "s3_ha":
        return psi2_s3(data, h, nu, a)
    return psi2_s4(data, h, q, nu, a)


def psi3(data, strategy: str, a: int, **kw) -> EstimateResult:
    """psi3 = E[Y(M(a))], estimated with the psi2 formulas."""
    return estimate(data, "psi3", strategy, a, **kw)
