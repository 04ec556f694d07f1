"""Study harness: robustness grids, Monte Carlo bias/coverage, convergence sweeps."""
from __future__ import annotations

import csv
import io
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .bridges import KernelSpec, fit_h_minimax, fit_h_tabular, fit_q_minimax, fit_q_tabular
from .dgp import SamplerConfig, sample
from .errors import SpecError
from .estimators import FitPlan, STRATEGIES, consumed, estimate
from .model import GaussianScmSpec, population_dataset, spec_from_dict, spec_to_dict, to_population
from .nuisance import fit_nuisances
from .oracle import exact_nuisances, identified_target, solve_outcome_bridge, solve_treatment_bridge

NUISANCES = ("h", "q", "pa", "pw")
# pairs of correctly specified nuisances that keep the MR form unbiased
VALID_PAIRS = {
    "psi1": ({"h", "pw"}, {"h", "pa"}, {"q", "pa"}),
    "psi2": ({"h", "pw"}, {"h", "pa"}, {"q", "pa"}, {"q", "pw"}),
}
_LAW = {"p(a|x)": "pa", "p(w|a,x)": "pw", "h": "h", "q": "q"}
COLUMNS = ("study", "mode", "estimand", "strategy", "pattern", "n", "replications", "mean_bias",
           "mc_se", "if_se_mean", "coverage", "mse_h", "mse_q", "expected_unbiased", "runtime_s")


def all_patterns():
    return tuple(frozenset(c) for k in range(5) for c in itertools.combinations(NUISANCES, k))


def pattern_name(pattern) -> str:
    return "+".join(sorted(pattern)) if pattern else "none"


def parse_pattern(text) -> frozenset:
    if isinstance(text, str):
        parts = [] if text in ("", "none") else text.split("+")
    else:
        parts = list(text)
    bad = set(parts) - set(NUISANCES)
    if bad:
        raise SpecError(f"unknown nuisance {sorted(bad)[0]!r}", "patterns")
    return frozenset(parts)


def expected_unbiased(estimand: str, strategy: str, pattern) -> bool:
    """Whether the corruption pattern leaves the strategy's target intact."""
    formula = "psi2" if estimand == "psi3" else estimand
    good = set(NUISANCES) - set(pattern)
    if strategy == "s5_mr":
        return any(pair <= good for pair in VALID_PAIRS[formula])
    return {_LAW[c] for c in consumed(formula, strategy)} <= good


@dataclass(frozen=True)
class StudyConfig:
    """One study.  ``spec`` is a fixture name or a spec object."""

    spec: object = "D1"
    kind: str = "robustness"
    mode: str = "population"
    estimands: tuple = ("psi1", "psi2")
    strategies: tuple = ("s5_mr",)
    patterns: tuple = field(default_factory=all_patterns)
    a: int = 1
    a_prime: int = 0
    replications: int = 1
    sample_sizes: tuple = (2000,)
    seed: int = 0
    folds: int = 5
    bridge_method: str = "auto"
    lambda_h: float | None = None
    lambda_q: float | None = None
    bandwidth: object = "median_heuristic"
    max_anchors: int | None = None

    def __post_init__(self):
        if self.kind not in ("robustness", "convergence"):
            raise SpecError(f"unknown study kind {self.kind!r}", "kind")
        if self.mode not in ("population", "sampling"):
            raise SpecError(f"unknown mode {self.mode!r}", "mode")
        if self.replications < 1:
            raise SpecError("must be >= 1", "replications")
        sizes = list(self.sample_sizes)
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
            raise SpecError("must be positive and strictly ascending", "sample_sizes")
        for e in self.estimands:
            if e not in ("psi1", "psi2", "psi3"):
                raise SpecError(f"unknown estimand {e!r}", "estimands")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise SpecError(f"unknown strategy {s!r}", "strategies")

    def resolve_spec(self):
        if isinstance(self.spec, str):
            from .fixtures import load_fixture

            try:
                return load_fixture(self.spec)
            except KeyError as exc:
                raise SpecError(str(exc), "spec") from None
        if isinstance(self.spec, dict):
            return spec_from_dict(self.spec)
        return self.spec

    def plan(self, pattern=frozenset()) -> FitPlan:
        kern = KernelSpec(bandwidth=self.bandwidth)
        return FitPlan(bridge_method=self.bridge_method, lambda_h=self.lambda_h,
                       lambda_q=self.lambda_q, kernels=(kern, kern), max_anchors=self.max_anchors,
                       corrupt=frozenset(pattern), corrupt_slice=self.a_prime,
                       corrupt_seed=self.seed)

    def to_dict(self) -> dict:
        spec = self.spec if isinstance(self.spec, (str, dict)) else spec_to_dict(self.spec)
        return {"spec": spec, "kind": self.kind, "mode": self.mode,
                "estimands": list(self.estimands), "strategies": list(self.strategies),
                "patterns": [pattern_name(p) for p in self.patterns], "a": self.a,
                "a_prime": self.a_prime, "replications": self.replications,
                "sample_sizes": list(self.sample_sizes), "seed": self.seed, "folds": self.folds,
                "bridge_method": self.bridge_method, "lambda_h": self.lambda_h,
                "lambda_q": self.lambda_q, "bandwidth": self.bandwidth,
                "max_anchors": self.max_anchors}

    @classmethod
    def from_dict(cls, doc) -> "StudyConfig":
        if not isinstance(doc, dict):
            raise SpecError("study document must be an object", "")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise SpecError("unknown key", sorted(unknown)[0])
        kw = dict(doc)
        for key in ("estimands", "strategies", "sample_sizes"):
            if key in kw:
                if not isinstance(kw[key], list):
                    raise SpecError("must be a list", key)
                kw[key] = tuple(kw[key])
        if "patterns" in kw:
            if not isinstance(kw["patterns"], list):
                raise SpecError("must be a list", "patterns")
            kw["patterns"] = tuple(parse_pattern(p) for p in kw["patterns"])
        return cls(**kw)


@dataclass
class StudyReport:
    rows: list
    meta: dict = field(default_factory=dict)

    def deterministic_rows(self):
        """Rows without wall-clock timings (identical across reruns)."""
        return [{k: v for k, v in r.items() if k != "runtime_s"} for r in self.rows]

    def to_csv(self, timings: bool = True) -> str:
        cols = [c for c in COLUMNS if timings or c != "runtime_s"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in self.rows:
            writer.writerow([_cell(r.get(c)) for c in cols])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"meta": self.meta, "rows": self.rows}


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _row(**kw):
    out = {c: None for c in COLUMNS}
    out.update(kw)
    return out


def _summary(points, ses, target):
    points = np.asarray(points, dtype=float)
    err = points - target
    r = len(points)
    mc_se = float(np.std(points, ddof=1) / np.sqrt(r)) if r > 1 else float("nan")
    if ses and all(s is not None for s in ses):
        ses = np.asarray(ses, dtype=float)
        cover = float(np.mean(np.abs(err) <= 1.96 * ses))
        return float(err.mean()), mc_se, float(ses.mean()), cover
    return float(err.mean()), mc_se, None, None


# --- robustness --------------------------------------------------------------

def run_robustness_grid(cfg: StudyConfig) -> StudyReport:
    """Bias of every (estimand, strategy) under every corruption pattern.

    Population mode evaluates the estimators on the exactly weighted
    population with exact bridges and laws (then corrupted); sampling mode
    draws ``replications`` samples per n and fits everything.
    """
    spec = cfg.resolve_spec()
    rows = []
    targets = {e: identified_target(spec, e, cfg.a, cfg.a_prime) for e in cfg.estimands}
    if cfg.mode == "population":
        if isinstance(spec, GaussianScmSpec):
            raise SpecError("population mode needs a discrete spec", "mode")
        pop = to_population(spec)
        data = population_dataset(pop)
        exact = (solve_outcome_bridge(pop), solve_treatment_bridge(pop, cfg.a), exact_nuisances(pop))
        for est, strat, pat in itertools.product(cfg.estimands, cfg.strategies, cfg.patterns):
            t0 = time.perf_counter()
            h, q, nu = cfg.plan(pat).spoil(*exact)
            res = estimate(data, est, strat, cfg.a, cfg.a_prime, h=h, q=q, nu=nu)
            rows.append(_row(study="robustness", mode="population", estimand=est, strategy=strat,
                             pattern=pattern_name(pat), n=0, replications=1,
                             mean_bias=res.point - targets[est],
                             expected_unbiased=expected_unbiased(est, strat, pat),
                             runtime_s=time.perf_counter() - t0))
        return StudyReport(rows, {"config": cfg.to_dict(), "targets": targets})

    for n in cfg.sample_sizes:
        for pat in cfg.patterns:
            if pat & {"pa", "pw"} and isinstance(spec, GaussianScmSpec):
                raise SpecError("law corruption needs discrete data", "patterns")
            t0 = time.perf_counter()
            plan = cfg.plan(pat)
            res = {(e, s): [] for e in cfg.estimands for s in cfg.strategies}
            for r in range(cfg.replications):
                data = sample(spec, SamplerConfig(cfg.seed, n, replication=r))
                fitted = None
                for e, s in res:
                    if s == "s5_mr":
                        out = estimate(data, e, s, cfg.a, cfg.a_prime, plan=plan, folds=cfg.folds,
                                       seed=cfg.seed + r)
                    else:
                        fitted = fitted or plan.fit(data, cfg.a)
                        out = estimate(data, e, s, cfg.a, cfg.a_prime, *fitted)
                    res[(e, s)].append(out)
            elapsed = time.perf_counter() - t0
            for (e, s), outs in res.items():
                bias, mc_se, if_se, cover = _summary([o.point for o in outs],
                                                     [o.std_error for o in outs], targets[e])
                rows.append(_row(study="robustness", mode="sampling", estimand=e, strategy=s,
                                 pattern=pattern_name(pat), n=n, replications=cfg.replications,
                                 mean_bias=bias, mc_se=mc_se, if_se_mean=if_se, coverage=cover,
                                 expected_unbiased=expected_unbiased(e, s, pat),
                                 runtime_s=elapsed / len(res)))
    return StudyReport(rows, {"config": cfg.to_dict(), "targets": targets})


# --- convergence -------------------------------------------------------------

def _loglog_slope(ns, mses):
    ns, mses = np.asarray(ns, dtype=float), np.asarray(mses, dtype=float)
    if len(ns) < 2 or np.any(mses <= 0):
        return None
    return float(np.polyfit(np.log(ns), np.log(mses), 1)[0])


def run_convergence_sweep(cfg: StudyConfig) -> StudyReport:
    """Bridge MSE against the known bridge as n grows (nested prefixes per seed).

    Gaussian specs: kernel h against b w + c a + d x at the sample points.
    Discrete specs: fitted tables (or kernel fits on the support) against the
    oracle h and q_a, averaged over cells.
    """
    spec = cfg.resolve_spec()
    n_max = cfg.sample_sizes[-1]
    kern = KernelSpec(bandwidth=cfg.bandwidth)
    gaussian = isinstance(spec, GaussianScmSpec)
    if not gaussian:
        pop = to_population(spec)
        h0 = solve_outcome_bridge(pop)
        q0 = [solve_treatment_bridge(pop, a) for a in range(spec.space.a_levels)]
    method = cfg.bridge_method
    if method == "auto":
        method = "minimax" if gaussian else "tabular"
    per_n = {n: {"h": [], "q": [], "t": 0.0} for n in cfg.sample_sizes}
    for r in range(cfg.replications):
        full = sample(spec, SamplerConfig(cfg.seed, n_max, replication=r))
        for n in cfg.sample_sizes:
            t0 = time.perf_counter()
            data = full.take(np.arange(n))
            if gaussian:
                h = fit_h_minimax(data, (kern, kern), cfg.lambda_h, cfg.lambda_q, cfg.max_anchors)
                err = h(data.w, data.a, data.x) - spec.outcome_bridge(data.w, data.a, data.x)
                per_n[n]["h"].append(float(np.mean(err ** 2)))
            else:
                per_n[n]["h"].append(_table_mse(data, h0, q0, method, cfg, kern, which="h"))
                per_n[n]["q"].append(_table_mse(data, h0, q0, method, cfg, kern, which="q"))
            per_n[n]["t"] += time.perf_counter() - t0
    rows = []
    for n in cfg.sample_sizes:
        h_m = float(np.mean(per_n[n]["h"]))
        q_m = float(np.mean(per_n[n]["q"])) if per_n[n]["q"] else None
        mc = float(np.std(per_n[n]["h"], ddof=1) / np.sqrt(cfg.replications)) if cfg.replications > 1 else None
        rows.append(_row(study="convergence", mode="sampling", strategy=f"bridge_{method}",
                         pattern="none", n=n, replications=cfg.replications, mse_h=h_m, mse_q=q_m,
                         mc_se=mc, runtime_s=per_n[n]["t"]))
    ns = list(cfg.sample_sizes)
    meta = {"config": cfg.to_dict(), "method": method,
            "slope_h": _loglog_slope(ns, [r["mse_h"] for r in rows]),
            "slope_q": None if gaussian else _loglog_slope(ns, [r["mse_q"] for r in rows]),
            "monotone_h": all(b["mse_h"] <= a["mse_h"] for a, b in zip(rows, rows[1:]))}
    return StudyReport(rows, meta)


def _support(levels):
    grid = np.meshgrid(*(np.arange(k) for k in levels), indexing="ij")
    return [g.ravel() for g in grid]


def _table_mse(data, h0, q0, method, cfg, kern, which):
    if which == "h":
        if method == "tabular":
            return float(np.mean((fit_h_tabular(data).values - h0.values) ** 2))
        h = fit_h_minimax(data, (kern, kern), cfg.lambda_h, cfg.lambda_q, cfg.max_anchors)
        x, a, w = _support(h0.values.shape)
        return float(np.mean((h(w, a, x) - h0.values.ravel()) ** 2))
    errs = []
    nu = None if method == "tabular" else fit_nuisances(data)
    for a, qa in enumerate(q0):
        if method == "tabular":
            errs.append(np.mean((fit_q_tabular(data, a).values - qa.values) ** 2))
        else:
            q = fit_q_minimax(data, nu, a, (kern, kern), cfg.lambda_h, cfg.lambda_q, cfg.max_anchors)
            x, ap, z = _support(qa.values.shape)
            errs.append(np.mean((q(z, ap, x) - qa.values.ravel()) ** 2))
    return float(np.mean(errs))


def run_study(cfg: StudyConfig) -> StudyReport:
    if cfg.kind == "robustness":
        return run_robustness_grid(cfg)
    return run_convergence_sweep(cfg)
