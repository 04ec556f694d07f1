"""Domain types: variable spaces, structural models, exact joints and datasets.

Discrete models live on the canonical variable order ``(x, u, a, m, z, w, y)``.
Every conditional table is stored with its parents in that order followed by
its own axis.  A model without a hidden confounder still carries a ``u`` axis
of size one internally, so array code never has to special-case it; the JSON
form omits that axis.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import SpecError

VARS = ("x", "u", "a", "m", "z", "w", "y")
FULL_AXES = ("x", "u", "a", "m", "z", "w")
MODEL_KINDS = ("mediation", "front_door", "generalized_front_door")

DEFAULT_PARENTS = {
    "x": (),
    "u": ("x",),
    "a": ("x", "u"),
    "m": ("x", "a"),
    "z": ("x", "a", "m"),
    "w": ("x", "m"),
    "y": ("x", "u", "a", "m", "w"),
}

TABLE_KEYS = {
    "x": "p_x",
    "u": "p_u_given_x",
    "a": "p_a_given_xu",
    "m": "p_m_given_ax",
    "z": "p_z_given_max",
    "w": "p_w_given_mx",
    "y": "p_y_given_mawxu",
}
Y_MEAN_KEY = "e_y_given_mawxu"

NORMALIZATION_TOL = 1e-12
INDEPENDENCE_TOL = 1e-10


@dataclass(frozen=True)
class FiniteSpace:
    x_levels: int = 1
    u_levels: int = 0
    a_levels: int = 2
    m_levels: int = 2
    z_levels: int = 2
    w_levels: int = 2
    y_levels: int = 2
    y_continuous: bool = False

    def __post_init__(self):
        if self.x_levels < 1:
            raise SpecError("x_levels must be >= 1", "space.x_levels")
        if self.u_levels < 0:
            raise SpecError("u_levels must be >= 0", "space.u_levels")
        for name in ("a_levels", "m_levels"):
            if getattr(self, name) < 2:
                raise SpecError(f"{name} must be >= 2", f"space.{name}")
        if self.z_levels < self.m_levels:
            raise SpecError("z_levels must be >= m_levels (completeness)", "space.z_levels")
        if self.w_levels < self.m_levels:
            raise SpecError("w_levels must be >= m_levels (completeness)", "space.w_levels")
        if not self.y_continuous and self.y_levels < 2:
            raise SpecError("y_levels must be >= 2 for discrete Y", "space.y_levels")

    def size(self, var: str) -> int:
        """Internal axis length; an absent confounder is a size-one axis."""
        if var == "u":
            return max(self.u_levels, 1)
        if var == "y":
            return 1 if self.y_continuous else self.y_levels
        return getattr(self, f"{var}_levels")

    def to_dict(self) -> dict:
        return {
            "x_levels": self.x_levels,
            "u_levels": self.u_levels,
            "a_levels": self.a_levels,
            "m_levels": self.m_levels,
            "z_levels": self.z_levels,
            "w_levels": self.w_levels,
            "y_levels": self.y_levels,
            "y_continuous": self.y_continuous,
        }


def _broadcast(table, axes, target):
    """Reshape ``table`` (axes in canonical order) so it broadcasts over ``target``."""
    shape = [table.shape[axes.index(t)] if t in axes else 1 for t in target]
    return table.reshape(shape)


@dataclass(frozen=True, eq=False)
class ScmSpec:
    """Discrete structural causal model over (X, U, A, M, Z, W, Y).

    Build with :meth:`from_tables`; ``cpts`` hold internal-shape arrays.  For a
    continuous outcome, ``y_mean`` holds E[Y | parents] and ``y_noise_sd`` the
    Gaussian noise used when sampling.
    """

    space: FiniteSpace
    model_kind: str
    cpts: Mapping[str, np.ndarray]
    parents: Mapping[str, tuple]
    y_mean: np.ndarray | None = None
    y_values: np.ndarray | None = None
    y_noise_sd: float = 1.0
    name: str = ""

    @classmethod
    def from_tables(cls, space, model_kind, tables, parents=None, y_values=None,
                    y_noise_sd=1.0, name=""):
        """Build a spec from external-shape tables keyed by variable name.

        ``tables`` maps ``"x", "u", "a", "m", "z", "w"`` and either ``"y"``
        (discrete outcome distribution) or ``"y_mean"`` (continuous outcome)
        to nested arrays whose axes follow the parents in canonical order,
        with the ``u`` axis omitted when ``space.u_levels == 0``.
        """
        if model_kind not in MODEL_KINDS:
            raise SpecError(f"unknown model kind {model_kind!r}", "model_kind")
        pars = dict(DEFAULT_PARENTS)
        for var, ps in (parents or {}).items():
            if var not in VARS:
                raise SpecError(f"unknown variable {var!r}", f"parents.{var}")
            ps = tuple(ps)
            order = [VARS.index(p) for p in ps]
            if any(p not in VARS for p in ps) or sorted(order) != order or (
                order and order[-1] >= VARS.index(var)
            ):
                raise SpecError("parents must be earlier variables in canonical order",
                                f"parents.{var}")
            pars[var] = ps

        cpts = {}
        wanted = ["x", "u", "a", "m", "z", "w"] if space.u_levels else ["x", "a", "m", "z", "w"]
        if not space.y_continuous:
            wanted.append("y")
        for var in wanted:
            if var not in tables:
                raise SpecError("missing table", f"tables.{TABLE_KEYS[var]}")
            cpts[var] = cls._internal(space, tables[var], pars[var] + (var,),
                                      f"tables.{TABLE_KEYS[var]}")
        if not space.u_levels:
            cpts["u"] = np.ones((space.x_levels, 1))

        y_mean = None
        if space.y_continuous:
            if "y_mean" not in tables:
                raise SpecError("missing conditional-mean table", f"tables.{Y_MEAN_KEY}")
            y_mean = cls._internal(space, tables["y_mean"], pars["y"], f"tables.{Y_MEAN_KEY}")
            y_vals = np.array([np.nan])
        else:
            y_vals = (np.arange(space.y_levels, dtype=float) if y_values is None
                      else np.asarray(y_values, dtype=float))
            if y_vals.shape != (space.y_levels,):
                raise SpecError("y_values length must equal y_levels", "y_values")
        for arr in list(cpts.values()) + ([y_mean] if y_mean is not None else []):
            arr.setflags(write=False)
        return cls(space=space, model_kind=model_kind, cpts=cpts, parents=pars,
                   y_mean=y_mean, y_values=y_vals, y_noise_sd=float(y_noise_sd), name=name)

    @staticmethod
    def _internal(space, table, axes, path):
        try:
            arr = np.array(table, dtype=float)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"not a numeric array ({exc})", path) from None
        if space.u_levels == 0 and "u" in axes:
            ext_axes = tuple(a for a in axes if a != "u")
        else:
            ext_axes = axes
        expected = tuple(space.size(a) for a in ext_axes)
        if arr.shape != expected:
            raise SpecError(f"shape {arr.shape} != expected {expected} for axes {ext_axes}", path)
        if not np.all(np.isfinite(arr)):
            raise SpecError("non-finite entries", path)
        if ext_axes != axes:
            arr = np.expand_dims(arr, axes.index("u"))
        return arr

    def external_table(self, var):
        """Table in JSON shape (``u`` axis dropped when there is no confounder)."""
        arr = self.y_mean if var == "y_mean" else self.cpts[var]
        axes = self.parents["y"] if var == "y_mean" else self.parents[var] + (var,)
        if self.space.u_levels == 0 and "u" in axes:
            arr = arr.squeeze(axes.index("u"))
        return arr

    @property
    def has_confounder(self) -> bool:
        return self.space.u_levels > 0

    def broadcast(self, var, target=FULL_AXES):
        """Conditional table of ``var`` broadcast over the ``target`` axes."""
        return _broadcast(self.cpts[var], self.parents[var] + (var,), target)

    def y_mean_table(self):
        """E[Y | parents of Y], indexed by ``parents['y']``."""
        if self.space.y_continuous:
            return self.y_mean
        return self.cpts["y"] @ self.y_values

    def y_mean_broadcast(self, target=FULL_AXES):
        return _broadcast(self.y_mean_table(), self.parents["y"], target)

    def joint_tensor(self):
        """p(x, u, a, m, z, w) as a 6-d array."""
        p = np.ones([self.space.size(v) for v in FULL_AXES])
        for var in FULL_AXES:
            p = p * self.broadcast(var)
        return p


@dataclass(frozen=True)
class GaussianScmSpec:
    """Linear-Gaussian mediation model with binary treatment.

    X ~ N(0, sigma_x^2); P(A=1|X) = expit(prop_intercept + prop_slope X);
    M = alpha A + gamma X + e_m; Z = M + e_z; W = M + e_w;
    Y = b M + c A + d X + e_y.
    """

    sigma_x: float = 1.0
    prop_intercept: float = 0.0
    prop_slope: float = 0.0
    alpha: float = 1.0
    gamma: float = 0.5
    b: float = 1.0
    c: float = 0.5
    d: float = 0.5
    sd_m: float = 1.0
    sd_z: float = 0.5
    sd_w: float = 0.5
    sd_y: float = 1.0
    name: str = ""

    def __post_init__(self):
        for key in ("sigma_x", "sd_m", "sd_z", "sd_w", "sd_y"):
            if not getattr(self, key) > 0:
                raise SpecError("noise standard deviations must be > 0", key)

    model_kind = "mediation"

    def propensity(self, x):
        from scipy.special import expit

        return expit(self.prop_intercept + self.prop_slope * np.asarray(x, dtype=float))

    def outcome_bridge(self, w, a, x):
        """The analytic outcome bridge b w + c a + d x."""
        return self.b * np.asarray(w) + self.c * np.asarray(a) + self.d * np.asarray(x)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "sigma_x", "prop_intercept", "prop_slope", "alpha", "gamma", "b", "c", "d",
            "sd_m", "sd_z", "sd_w", "sd_y")}
        return {"kind": "gaussian", "name": self.name, **out}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    cells: tuple = ()
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "cells": [list(map(int, cell)) for cell in c.cells],
                 "detail": c.detail}
                for c in self.checks
            ],
        }


def _varies_along(table, axis, tol=NORMALIZATION_TOL):
    """Cells (index tuples of the other axes) where ``table`` changes along ``axis``."""
    spread = table.max(axis=axis) - table.min(axis=axis)
    return [tuple(int(i) for i in idx) for idx in np.argwhere(spread > tol)]


def _cmi(p, cond_axes, left_axes, right_axes):
    """Conditional mutual information from a joint table (nats)."""
    all_axes = set(range(p.ndim))
    keep = set(cond_axes) | set(left_axes) | set(right_axes)
    p = p.sum(axis=tuple(sorted(all_axes - keep)), keepdims=True)
    p_c = p.sum(axis=tuple(left_axes) + tuple(right_axes), keepdims=True)
    p_cl = p.sum(axis=tuple(right_axes), keepdims=True)
    p_cr = p.sum(axis=tuple(left_axes), keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = p * p_c / (p_cl * p_cr)
        terms = np.where(p > 0, p * np.log(np.where(p > 0, ratio, 1.0)), 0.0)
    return float(max(terms.sum(), 0.0))


def validate_spec(spec: ScmSpec) -> ValidationReport:
    """Check table normalization, positivity and the model-kind assumptions."""
    checks = []
    sp = spec.space

    bad = []
    for var, tab in spec.cpts.items():
        rows = tab.reshape(-1, tab.shape[-1])
        for i, row in enumerate(rows):
            if np.any(row < 0) or abs(row.sum() - 1.0) > NORMALIZATION_TOL:
                bad.append((VARS.index(var),) + tuple(int(k) for k in np.unravel_index(i, tab.shape[:-1])))
    checks.append(Check("tables normalized", not bad, tuple(bad),
                        "cell = (variable index, parent indices...)"))

    m_tab = spec.cpts["m"]
    zero_m = [tuple(int(i) for i in idx) for idx in np.argwhere(m_tab <= 0)]
    checks.append(Check("positivity p(m|a,x) > 0", not zero_m, tuple(zero_m)))

    pa = (spec.broadcast("u", ("x", "u")) * spec.broadcast("a", ("x", "u", "a"))).sum(axis=1)
    zero_a = [tuple(int(i) for i in idx) for idx in np.argwhere(pa <= 0)]
    checks.append(Check("positivity p(a|x) > 0", not zero_a, tuple(zero_a)))

    mj = mediator_joint(spec)
    # axes of mj.y_joint / prob: (x, a, m, z, w[, y])
    y_cells = []
    if "z" in spec.parents["y"]:
        y_cells = _varies_along(spec.y_mean_table() if sp.y_continuous else spec.cpts["y"],
                                spec.parents["y"].index("z"))
    if sp.y_continuous:
        joint = mj.prob.sum(axis=4)
        with np.errstate(invalid="ignore", divide="ignore"):
            ey_z = (mj.prob * mj.y_mean).sum(axis=4) / joint
            ey = (mj.prob * mj.y_mean).sum(axis=(3, 4)) / joint.sum(axis=3)
        gap = np.where(joint > 0, np.abs(ey_z - ey[..., None]), 0.0)
        stat = float(gap.max())
        detail = f"max |E[Y|a,m,x,z] - E[Y|a,m,x]| = {stat:.3g}"
    else:
        stat = _cmi(mj.y_joint, (0, 1, 2), (3,), (5,))
        detail = f"I(Y;Z|A,M,X) = {stat:.3g}"
    checks.append(Check("Y indep Z | A,M,X", stat <= INDEPENDENCE_TOL and not y_cells,
                        tuple(y_cells), detail))

    w_cells = []
    for par in ("a", "z", "u"):
        if par in spec.parents["w"]:
            w_cells += _varies_along(spec.cpts["w"], spec.parents["w"].index(par))
    stat = _cmi(mj.prob, (0, 2), (1, 3), (4,))
    checks.append(Check("W indep {A,Z} | M,X", stat <= INDEPENDENCE_TOL and not w_cells,
                        tuple(w_cells), f"I(W;A,Z|M,X) = {stat:.3g}"))

    m_cells = []
    if "u" in spec.parents["m"]:
        m_cells = _varies_along(spec.cpts["m"], spec.parents["m"].index("u"))
    z_cells = []
    if "u" in spec.parents["z"]:
        z_cells = _varies_along(spec.cpts["z"], spec.parents["z"].index("u"))
    checks.append(Check("M and Z free of hidden confounder", not (m_cells or z_cells),
                        tuple(m_cells + z_cells)))

    if spec.model_kind == "mediation":
        checks.append(Check("sequential exchangeability (no hidden confounder)",
                            sp.u_levels == 0, (), f"u_levels = {sp.u_levels}"))
    if spec.model_kind == "front_door":
        a_cells = []
        if "a" in spec.parents["y"]:
            tab = spec.y_mean_table() if sp.y_continuous else spec.cpts["y"]
            a_cells = _varies_along(tab, spec.parents["y"].index("a"))
        checks.append(Check("exclusion restriction Y(a,m) = Y(m)", not a_cells, tuple(a_cells)))
    return ValidationReport(tuple(checks))


@dataclass(frozen=True, eq=False)
class MediatorJoint:
    """Joint over (x, a, m, z, w) with the confounder summed out.

    Holds the mediator, so it exists only for verification.
    """

    space: FiniteSpace
    prob: np.ndarray
    y_mean: np.ndarray
    y_joint: np.ndarray | None
    y_values: np.ndarray

    def p_xam(self):
        return self.prob.sum(axis=(3, 4))

    def p_m_given_ax(self):
        """p(m | a, x) indexed (x, a, m)."""
        pxam = self.p_xam()
        return pxam / pxam.sum(axis=2, keepdims=True)

    def e_y_given_xam(self):
        pxam = self.p_xam()
        return _safe_div((self.prob * self.y_mean).sum(axis=(3, 4)), pxam)


def mediator_joint(spec: ScmSpec) -> MediatorJoint:
    full = spec.joint_tensor()
    ey = spec.y_mean_broadcast()
    prob = full.sum(axis=1)
    y_mean = _safe_div((full * ey).sum(axis=1), prob)
    y_joint = None
    if not spec.space.y_continuous:
        py = _broadcast(spec.cpts["y"], spec.parents["y"] + ("y",), FULL_AXES + ("y",))
        y_joint = (full[..., None] * py).sum(axis=1)
    return MediatorJoint(spec.space, prob, y_mean, y_joint, spec.y_values)


def _safe_div(num, den):
    den = np.broadcast_to(den, np.broadcast_shapes(np.shape(num), np.shape(den)))
    out = np.zeros(np.broadcast_shapes(np.shape(num), np.shape(den)))
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True, eq=False)
class PopulationJoint:
    """Exact law of the observed variables.

    ``prob`` is p(x, a, z, w); ``y_mean`` is E[Y | x, a, z, w]; ``y_joint`` is
    p(x, a, z, w, y) when Y is discrete.
    """

    space: FiniteSpace
    prob: np.ndarray
    y_mean: np.ndarray
    y_joint: np.ndarray | None = None
    y_values: np.ndarray | None = None
    source: str = ""

    def p_x(self):
        return self.prob.sum(axis=(1, 2, 3))

    def p_xa(self):
        return self.prob.sum(axis=(2, 3))

    def p_a_given_x(self):
        return _safe_div(self.p_xa(), self.p_x()[:, None])

    def p_w_given_ax(self):
        """p(w | a, x) indexed (x, a, w)."""
        pxaw = self.prob.sum(axis=2)
        return _safe_div(pxaw, pxaw.sum(axis=2, keepdims=True))

    def p_z_given_ax(self):
        pxaz = self.prob.sum(axis=3)
        return _safe_div(pxaz, pxaz.sum(axis=2, keepdims=True))

    def p_w_given_zax(self):
        """p(w | z, a, x) indexed (x, a, z, w)."""
        return _safe_div(self.prob, self.prob.sum(axis=3, keepdims=True))

    def p_z_given_wax(self):
        """p(z | w, a, x) indexed (x, a, w, z)."""
        return np.swapaxes(_safe_div(self.prob, self.prob.sum(axis=2, keepdims=True)), 2, 3)

    def e_y_given_zax(self):
        pxaz = self.prob.sum(axis=3)
        return _safe_div((self.prob * self.y_mean).sum(axis=3), pxaz)

    def mean_y(self) -> float:
        return float((self.prob * self.y_mean).sum())


def to_population(spec: ScmSpec, check: bool = True) -> PopulationJoint:
    """Exact observed-variable joint, summing out the mediator and confounder."""
    if check:
        report = validate_spec(spec)
        if not report.ok:
            names = ", ".join(c.name for c in report.failed())
            raise SpecError(f"spec fails validation: {names}", "spec")
    mj = mediator_joint(spec)
    prob = mj.prob.sum(axis=2)
    y_mean = _safe_div((mj.prob * mj.y_mean).sum(axis=2), prob)
    y_joint = None if mj.y_joint is None else mj.y_joint.sum(axis=2)
    return PopulationJoint(spec.space, prob, y_mean, y_joint, spec.y_values, spec.name)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed records (x, a, z, w, y), optionally weighted.

    Discrete datasets carry ``levels`` (cardinalities of x, a, z, w); for the
    continuous Gaussian model ``levels`` is ``{"a": 2}`` and x, z, w are reals.
    Weights, when present, act as frequency weights.
    """

    x: np.ndarray
    a: np.ndarray
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    levels: Mapping[str, int] = field(default_factory=dict)
    weights: np.ndarray | None = None
    seed: int | None = None
    source: str = ""
    rng: str = ""
    discrete: bool = True

    def __post_init__(self):
        n = len(self.y)
        for k in ("x", "a", "z", "w"):
            if len(getattr(self, k)) != n:
                raise SpecError("column lengths differ", k)
        if self.discrete:
            for k, lv in self.levels.items():
                col = getattr(self, k)
                if len(col) and (col.min() < 0 or col.max() >= lv):
                    raise SpecError(f"values outside 0..{lv - 1}", k)
        for col in (self.x, self.a, self.z, self.w, self.y):
            col.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def w_weights(self):
        """Normalized observation weights (uniform when unweighted)."""
        if self.weights is None:
            return np.full(self.n, 1.0 / self.n)
        return self.weights / self.weights.sum()

    def mean(self, values) -> float:
        return float(np.dot(self.w_weights, values))

    def take(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.a[idx], self.z[idx], self.w[idx], self.y[idx],
                       levels=self.levels,
                       weights=None if self.weights is None else self.weights[idx],
                       seed=self.seed, source=self.source, rng=self.rng, discrete=self.discrete)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,a,z,w,y\n")
        if self.discrete:
            for row in zip(self.x, self.a, self.z, self.w, self.y):
                buf.write("%d,%d,%d,%d,%s\n" % (*row[:4], format(float(row[4]), ".17g")))
        else:
            for x, a, z, w, y in zip(self.x, self.a, self.z, self.w, self.y):
                buf.write(",".join([format(float(x), ".17g"), "%d" % a, format(float(z), ".17g"),
                                    format(float(w), ".17g"), format(float(y), ".17g")]) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, levels=None, source="") -> "Dataset":
        """Parse ``x,a,z,w,y`` CSV; discreteness is inferred from integer columns."""
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None:
            raise SpecError("empty CSV", "header")
        if [h.strip() for h in header] != ["x", "a", "z", "w", "y"]:
            raise SpecError(f"expected header x,a,z,w,y, got {','.join(header)}", "header")
        rows = [r for r in reader if r]
        if not rows:
            raise SpecError("no data rows", "rows")
        try:
            arr = np.array([[float(v) for v in r] for r in rows])
        except ValueError as exc:
            raise SpecError(f"non-numeric value ({exc})", "rows") from None
        if arr.shape[1] != 5:
            raise SpecError("each row needs 5 fields", "rows")
        cols = arr.T
        discrete = all(np.all(cols[i] == np.round(cols[i])) for i in range(4))
        a = cols[1].astype(int)
        if discrete:
            x, z, w = (cols[i].astype(int) for i in (0, 2, 3))
            lv = {k: int(col.max()) + 1 for k, col in zip("xazw", (x, a, z, w))}
            if levels:
                lv.update(levels)
        else:
            x, z, w = cols[0], cols[2], cols[3]
            lv = {"a": int(a.max()) + 1}
        return cls(x, a, z, w, cols[4].copy(), levels=lv, source=source, discrete=discrete)


def population_dataset(pop: PopulationJoint, expand_y: bool = True) -> Dataset:
    """Weighted dataset whose empirical law is exactly ``pop``.

    With ``expand_y`` and a discrete outcome, one record per (x, a, z, w, y)
    cell; otherwise one record per (x, a, z, w) cell carrying E[Y | cell].
    Every estimator here is linear in Y, so both forms give the same means.
    """
    sp = pop.space
    rows, weights = [], []
    discrete_y = pop.y_joint is not None and expand_y
    for x, a, z, w in itertools.product(range(sp.x_levels), range(sp.a_levels),
                                        range(sp.z_levels), range(sp.w_levels)):
        if pop.prob[x, a, z, w] <= 0:
            continue
        if discrete_y:
            for k, yv in enumerate(pop.y_values):
                p = pop.y_joint[x, a, z, w, k]
                if p > 0:
                    rows.append((x, a, z, w, yv))
                    weights.append(p)
        else:
            rows.append((x, a, z, w, pop.y_mean[x, a, z, w]))
            weights.append(pop.prob[x, a, z, w])
    arr = np.array(rows)
    levels = {"x": sp.x_levels, "a": sp.a_levels, "z": sp.z_levels, "w": sp.w_levels}
    return Dataset(arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2].astype(int),
                   arr[:, 3].astype(int), arr[:, 4].copy(), levels=levels,
                   weights=np.array(weights), source=pop.source)


# --- JSON schema -----------------------------------------------------------

def spec_to_dict(spec) -> dict:
    if isinstance(spec, GaussianScmSpec):
        return spec.to_dict()
    tables = {}
    for var in ("x", "u", "a", "m", "z", "w"):
        if var == "u" and not spec.has_confounder:
            continue
        tables[TABLE_KEYS[var]] = spec.external_table(var).tolist()
    if spec.space.y_continuous:
        tables[Y_MEAN_KEY] = spec.external_table("y_mean").tolist()
    else:
        tables[TABLE_KEYS["y"]] = spec.external_table("y").tolist()
    out = {"name": spec.name, "space": spec.space.to_dict(), "model_kind": spec.model_kind,
           "tables": tables}
    extra = {v: list(p) for v, p in spec.parents.items() if p != DEFAULT_PARENTS[v]}
    if extra:
        out["parents"] = extra
    if spec.space.y_continuous:
        out["y_noise_sd"] = spec.y_noise_sd
    elif not np.array_equal(spec.y_values, np.arange(spec.space.y_levels)):
        out["y_values"] = spec.y_values.tolist()
    return out


def spec_from_dict(doc) -> "ScmSpec | GaussianScmSpec":
    if not isinstance(doc, dict):
        raise SpecError("spec document must be an object", "")
    if doc.get("kind") == "gaussian":
        fields = {k: v for k, v in doc.items() if k != "kind"}
        try:
            return GaussianScmSpec(**fields)
        except TypeError as exc:
            raise SpecError(str(exc), "") from None
    for key in ("space", "model_kind", "tables"):
        if key not in doc:
            raise SpecError("missing key", key)
    if not isinstance(doc["space"], dict):
        raise SpecError("must be an object", "space")
    try:
        space = FiniteSpace(**doc["space"])
    except TypeError as exc:
        raise SpecError(str(exc), "space") from None
    tabs = doc["tables"]
    if not isinstance(tabs, dict):
        raise SpecError("must be an object", "tables")
    tables = {}
    for var, key in TABLE_KEYS.items():
        if key in tabs:
            tables[var] = tabs[key]
    if Y_MEAN_KEY in tabs:
        tables["y_mean"] = tabs[Y_MEAN_KEY]
    unknown = set(tabs) - set(TABLE_KEYS.values()) - {Y_MEAN_KEY}
    if unknown:
        raise SpecError("unknown table", f"tables.{sorted(unknown)[0]}")
    return ScmSpec.from_tables(space, doc["model_kind"], tables, parents=doc.get("parents"),
                               y_values=doc.get("y_values"),
                               y_noise_sd=doc.get("y_noise_sd", 1.0), name=doc.get("name", ""))
