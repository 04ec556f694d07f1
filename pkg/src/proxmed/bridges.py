"""Sample estimates of the outcome bridge h and treatment bridge q_a.

The kernel estimators solve the regularized min-max problems

    h   = argmin_h max_f  E_n[(h(W,A,X) - Y) f(Z,A,X) - f^2] - lam_q |f|^2 + lam_h |h|^2
    q_a = argmin_q max_f  E_n[(1{A=a'}/p(a'|X) q(Z,A,X) - 1{A=a}/p(a|X)) f(W,X) - f^2]
                          - lam_h |f|^2 + lam_q |q|^2

over Gaussian RKHS functions expanded on kernel sections at the training
inputs.  The inner maximum is a concave quadratic with a closed form, which
leaves a convex quadratic in the learner coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist

from .errors import NumericalError, SpecError
from .oracle import TabularBridge

JITTER = 1e-10
MEDIAN_SUBSAMPLE = 1000


@dataclass(frozen=True)
class Block:
    """One argument of a kernel: ``cont`` (scalar), ``cat`` (one-hot) or
    ``delta`` (exact-match categorical, used for the treatment)."""

    name: str
    kind: str
    levels: int = 0


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian_rbf"
    bandwidth: object = "median_heuristic"

    def __post_init__(self):
        if self.family != "gaussian_rbf":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not isinstance(self.bandwidth, str) and not float(self.bandwidth) > 0:
            raise ValueError("bandwidth must be positive")


def _embed_block(block, values):
    v = np.asarray(values)
    if block.kind == "cat":
        return np.eye(block.levels)[v.astype(int)]
    return v.astype(float).reshape(-1, 1)


@dataclass(frozen=True, eq=False)
class ProductKernel:
    """Product of per-block Gaussian kernels with resolved bandwidths."""

    blocks: tuple
    bandwidths: tuple

    @classmethod
    def resolve(cls, blocks, raw, spec: KernelSpec, rng=None):
        """Fix bandwidths, by the median heuristic on each block if requested."""
        bws = []
        for j, block in enumerate(blocks):
            if block.kind == "delta":
                bws.append(0.0)
                continue
            if not isinstance(spec.bandwidth, str):
                bws.append(float(spec.bandwidth))
                continue
            vals = raw[:, j]
            if len(vals) > MEDIAN_SUBSAMPLE:
                rng = rng or np.random.default_rng(0)
                vals = vals[rng.choice(len(vals), MEDIAN_SUBSAMPLE, replace=False)]
            dist = pdist(_embed_block(block, vals))
            dist = dist[dist > 0]
            bws.append(float(np.median(dist)) if len(dist) else 1.0)
        return cls(tuple(blocks), tuple(bws))

    def _features(self, raw):
        cols, deltas = [], []
        for j, (block, bw) in enumerate(zip(self.blocks, self.bandwidths)):
            if block.kind == "delta":
                deltas.append(np.asarray(raw[:, j]).astype(int))
            else:
                cols.append(_embed_block(block, raw[:, j]) / (np.sqrt(2.0) * bw))
        feats = np.hstack(cols) if cols else np.zeros((len(raw), 0))
        return feats, deltas

    def __call__(self, raw_u, raw_v):
        fu, du = self._features(np.atleast_2d(raw_u))
        fv, dv = self._features(np.atleast_2d(raw_v))
        sq = (np.sum(fu ** 2, axis=1)[:, None] + np.sum(fv ** 2, axis=1)[None, :]
              - 2.0 * fu @ fv.T)
        k = np.exp(-np.maximum(sq, 0.0))
        for a_u, a_v in zip(du, dv):
            k = k * (a_u[:, None] == a_v[None, :])
        return k

    def to_dict(self) -> dict:
        return {"family": "gaussian_rbf",
                "blocks": [{"name": b.name, "kind": b.kind, "levels": b.levels} for b in self.blocks],
                "bandwidths": list(self.bandwidths)}


class _Whitener:
    """Factor W with W'W = S^-1 for a symmetric PSD matrix S.

    Cholesky when it succeeds; otherwise a spectral pseudo-inverse root that
    drops eigenvalues below 1e-13 of the largest.
    """

    def __init__(self, mat):
        self.cond = float("nan")
        try:
            self.lower = linalg.cholesky(mat, lower=True)
            self.vecs = None
        except linalg.LinAlgError:
            vals, vecs = linalg.eigh(mat)
            self.cond = float(vals[-1] / vals[0]) if vals[0] > 0 else float("inf")
            keep = vals > 1e-13 * vals[-1]
            self.vecs = vecs[:, keep] / np.sqrt(vals[keep])
            self.lower = None

    def apply(self, b):
        if self.lower is not None:
            return linalg.solve_triangular(self.lower, b, lower=True)
        return self.vecs.T @ b

    def solve(self, b):
        if self.lower is not None:
            return linalg.cho_solve((self.lower, True), b)
        return self.vecs @ (self.vecs.T @ b)


@dataclass(eq=False)
class MinimaxProblem:
    """Closed-form pieces of one min-max problem on a weighted sample.

    The learner is g = Phi_g @ alpha, the adversary f = Phi_f @ beta, and the
    empirical objective is
    sum_i omega_i [(g1_i g_i + g0_i) f_i - f_i^2] - lam_f b'G_f b + lam_g a'G_g a.
    """

    phi_g: np.ndarray
    gram_g: np.ndarray
    phi_f: np.ndarray
    gram_f: np.ndarray
    g1: np.ndarray
    g0: np.ndarray
    omega: np.ndarray
    lam_f: float
    lam_g: float
    jit_g: float = 0.0
    jit_f: float = 0.0
    condition: float = float("nan")
    _s: _Whitener = field(default=None, repr=False)

    def _s_matrix(self):
        s = self.phi_f.T @ (self.phi_f * self.omega[:, None])
        s += self.lam_f * self.gram_f
        s[np.diag_indices_from(s)] += self.lam_f * self.jit_f
        return s

    def _pen_g(self, alpha):
        return self.lam_g * (alpha @ self.gram_g @ alpha + self.jit_g * alpha @ alpha)

    def value(self, alpha, beta) -> float:
        g = self.phi_g @ alpha
        f = self.phi_f @ beta
        emp = np.dot(self.omega, (self.g1 * g + self.g0) * f - f ** 2)
        pen_f = self.lam_f * (beta @ self.gram_f @ beta + self.jit_f * beta @ beta)
        return float(emp - pen_f + self._pen_g(alpha))

    def _moment(self, alpha):
        resid = self.g1 * (self.phi_g @ alpha) + self.g0
        return self.phi_f.T @ (self.omega * resid)

    def best_response(self, alpha):
        """Maximizing adversary coefficients for fixed learner coefficients."""
        return 0.5 * self._s.solve(self._moment(alpha))

    def outer(self, alpha) -> float:
        """Regularized outer objective max_beta value(alpha, beta)."""
        v = self._s.apply(self._moment(alpha))
        return float(0.25 * v @ v + self._pen_g(alpha))

    def solve(self):
        """Learner coefficients minimizing :meth:`outer`."""
        if not all(np.all(np.isfinite(v)) for v in (self.phi_g, self.phi_f, self.g0, self.g1)):
            raise NumericalError("non-finite inputs to the min-max system", float("inf"))
        try:
            self._s = _Whitener(self._s_matrix())
            t = self._s.apply(self.phi_f.T @ (self.phi_g * (self.omega * self.g1)[:, None]))
            s = self._s.apply(self.phi_f.T @ (self.omega * self.g0))
            rhs = -(t.T @ s)
            lhs = t.T @ t
            del t
            lhs += 4.0 * self.lam_g * self.gram_g
            lhs[np.diag_indices_from(lhs)] += 4.0 * self.lam_g * self.jit_g
            if len(lhs) <= 500:
                self.condition = float(np.linalg.cond(lhs))
            outer = _Whitener(lhs)
            if outer.lower is None:
                self.condition = outer.cond
            alpha = outer.solve(rhs)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"min-max system not solvable ({exc})", float("inf")) from None
        if not np.all(np.isfinite(alpha)):
            raise NumericalError("non-finite bridge coefficients", self.condition)
        return alpha


def _jitter(gram):
    return JITTER * np.trace(gram) / max(len(gram), 1)


@dataclass(eq=False)
class KernelBridge:
    """Kernel expansion sum_j coef_j k(., anchor_j) of a bridge function.

    Anchors are raw argument rows (proxy, treatment, covariate).
    """

    kind: str
    anchors: np.ndarray
    coef: np.ndarray
    kernel: ProductKernel
    lambdas: tuple
    target_a: int | None = None
    problems: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if len(self.coef) != len(self.anchors):
            raise ValueError("coefficient count must equal anchor count")

    def __call__(self, v, a, x):
        raw = _stack(v, a, x)
        if len(self.anchors) == 0:
            return np.zeros(len(raw))
        return self.kernel(raw, self.anchors) @ self.coef

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target_a": self.target_a, "kernel": self.kernel.to_dict(),
                "lambda_h": self.lambdas[0], "lambda_q": self.lambdas[1],
                "anchors": self.anchors.tolist(), "coefficients": self.coef.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "KernelBridge":
        k = doc["kernel"]
        kern = ProductKernel(tuple(Block(b["name"], b["kind"], b["levels"]) for b in k["blocks"]),
                             tuple(k["bandwidths"]))
        return cls(doc["kind"], np.array(doc["anchors"], dtype=float), np.array(doc["coefficients"]),
                   kern, (doc["lambda_h"], doc["lambda_q"]), doc.get("target_a"))


def _stack(*cols):
    n = max(np.size(c) for c in cols)
    return np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in cols])


def _blocks(data, names):
    out = []
    for nm in names:
        if nm == "a":
            out.append(Block("a", "delta", data.levels.get("a", 2)))
        elif data.discrete:
            out.append(Block(nm, "cat", data.levels[nm]))
        else:
            out.append(Block(nm, "cont"))
    return tuple(out)


def default_lambda(n: int) -> float:
    return float(n) ** -0.4


def _compress(keys, g1, g0, omega):
    """Merge rows with identical (learner, adversary, g1) keys: weights add,
    g0 is weight-averaged.  Exact because the objective is linear in g0."""
    full = np.column_stack([keys, g1])
    uniq, inv = np.unique(full, axis=0, return_inverse=True)
    inv = inv.ravel()
    w = np.bincount(inv, weights=omega)
    g0m = np.bincount(inv, weights=omega * g0) / w
    return uniq[:, :-1], uniq[:, -1], g0m, w


def _anchor_set(raw, mask, max_anchors, rng):
    """Distinct inputs to expand on; ``same`` flags anchors == rows (in order)."""
    if mask is None and max_anchors is None:
        uniq = np.unique(raw, axis=0)
        if len(uniq) == len(raw):
            return raw, True
        return uniq, False
    uniq = np.unique(raw if mask is None else raw[mask], axis=0)
    if max_anchors is not None and len(uniq) > max_anchors:
        uniq = uniq[np.sort(rng.choice(len(uniq), max_anchors, replace=False))]
    return uniq, False


def _sections(kern, raw, anchors, same):
    phi = kern(raw, anchors)
    gram = phi if same else kern(anchors, anchors)
    return phi, gram


def _problem(learner_raw, adv_raw, g1, g0, omega, k_learn, k_adv, lam_learn, lam_adv,
             learner_mask=None, max_anchors=None, rng=None):
    rng = rng or np.random.default_rng(0)
    anchors_g, same_g = _anchor_set(learner_raw, learner_mask, max_anchors, rng)
    anchors_f, same_f = _anchor_set(adv_raw, None, max_anchors, rng)
    phi_g, gram_g = _sections(k_learn, learner_raw, anchors_g, same_g)
    phi_f, gram_f = _sections(k_adv, adv_raw, anchors_f, same_f)
    prob = MinimaxProblem(phi_g=phi_g, gram_g=gram_g, phi_f=phi_f, gram_f=gram_f,
                          g1=g1, g0=g0, omega=omega, lam_f=lam_adv, lam_g=lam_learn,
                          jit_g=_jitter(gram_g), jit_f=_jitter(gram_f))
    return prob, anchors_g


def fit_h_minimax(data, kernels=(KernelSpec(), KernelSpec()), lambda_h=None, lambda_q=None,
                  max_anchors=None) -> KernelBridge:
    """Outcome bridge by the min-max program with kernel classes.

    ``kernels`` are the specs for h on (W, A, X) and the adversary on
    (Z, A, X).  Regularizers default to n**-0.4.  ``max_anchors`` caps the
    expansion size (random subset of distinct inputs) for large continuous
    samples; by default every distinct training input is an anchor.
    """
    if data.n < 2:
        raise SpecError("need at least two records", "n")
    lam_h = default_lambda(data.n) if lambda_h is None else float(lambda_h)
    lam_q = default_lambda(data.n) if lambda_q is None else float(lambda_q)
    if not (lam_h > 0 and lam_q > 0):
        raise ValueError("regularizers must be positive")
    learner = _stack(data.w, data.a, data.x)
    adv = _stack(data.z, data.a, data.x)
    g1 = np.ones(data.n)
    g0 = -np.asarray(data.y, dtype=float)
    omega = data.w_weights
    if data.discrete:
        keys, g1, g0, omega = _compress(np.hstack([learner, adv]), g1, g0, omega)
        learner, adv = keys[:, :3], keys[:, 3:]
    k_h = ProductKernel.resolve(_blocks(data, ("w", "a", "x")), _stack(data.w, data.a, data.x), kernels[0])
    k_q = ProductKernel.resolve(_blocks(data, ("z", "a", "x")), _stack(data.z, data.a, data.x), kernels[1])
    prob, anchors = _problem(learner, adv, g1, g0, omega, k_h, k_q, lam_h, lam_q,
                             max_anchors=max_anchors)
    alpha = prob.solve()
    return KernelBridge("outcome_h", anchors, alpha, k_h, (lam_h, lam_q), problems=[prob])


def fit_q_minimax(data, nu, a: int, kernels=(KernelSpec(), KernelSpec()), lambda_h=None,
                  lambda_q=None, max_anchors=None) -> KernelBridge:
    """Treatment bridge q_a by the min-max program with kernel classes.

    The program is solved once per level a' (only records with A = a' inform
    q_a(., a', .)); the treatment enters the kernel as an exact-match factor,
    so the per-level expansions combine into one bridge.  ``kernels`` are the
    specs for the adversary on (W, X) and for q on (Z, A, X).
    """
    if data.n < 2:
        raise SpecError("need at least two records", "n")
    lam_h = default_lambda(data.n) if lambda_h is None else float(lambda_h)
    lam_q = default_lambda(data.n) if lambda_q is None else float(lambda_q)
    pa = nu.propensity(data.x)
    lo, hi = 0.01, 0.99
    if np.any(pa < lo - 1e-12) or np.any(pa > hi + 1e-12):
        raise ValueError("propensity outside [0.01, 0.99]")
    k_f = ProductKernel.resolve(_blocks(data, ("w", "x")), _stack(data.w, data.x), kernels[0])
    k_q = ProductKernel.resolve(_blocks(data, ("z", "a", "x")), _stack(data.z, data.a, data.x), kernels[1])
    learner_all = _stack(data.z, data.a, data.x)
    adv_all = _stack(data.w, data.x)
    rows = np.arange(data.n)
    g0_all = -(data.a == a).astype(float) / pa[rows, a]
    anchors, coefs, probs = [], [], []
    for ap in range(pa.shape[1]):
        if not np.any(data.a == ap):
            raise SpecError(f"treatment arm {ap} absent from data", "a")
        g1 = (data.a == ap).astype(float) / pa[rows, ap]
        learner, adv, g0, omega = learner_all, adv_all, g0_all, data.w_weights
        if data.discrete:
            keys, g1, g0, omega = _compress(np.hstack([learner, adv]), g1, g0, omega)
            learner, adv = keys[:, :3], keys[:, 3:]
        prob, anc = _problem(learner, adv, g1, g0, omega, k_q, k_f, lam_q, lam_h,
                             learner_mask=g1 != 0, max_anchors=max_anchors)
        anchors.append(anc)
        coefs.append(prob.solve())
        probs.append(prob)
    return KernelBridge("treatment_q", np.vstack(anchors), np.concatenate(coefs), k_q,
                        (lam_h, lam_q), target_a=a, problems=probs)


# --- tabular plug-in --------------------------------------------------------

def _weighted_counts(data, cols, shape):
    out = np.zeros(shape)
    w = data.w_weights * data.n
    np.add.at(out, tuple(np.asarray(c, dtype=int) for c in cols), w)
    return out


def _ridge(mat, rhs, ridge):
    k = mat.shape[1]
    sol = np.linalg.solve(mat.T @ mat + ridge * np.eye(k), mat.T @ rhs)
    return sol, float(np.linalg.norm(mat @ sol - rhs))


def fit_h_tabular(data, ridge: float = 1e-8) -> TabularBridge:
    """Plug-in outcome bridge from empirical conditional tables.

    (z, a, x) cells with no records drop out of the linear system.
    """
    if not data.discrete:
        raise SpecError("tabular bridges need discrete data", "x")
    lv = data.levels
    c = _weighted_counts(data, (data.x, data.a, data.z, data.w), (lv["x"], lv["a"], lv["z"], lv["w"]))
    sy = np.zeros(c.shape[:3])
    np.add.at(sy, (data.x, data.a, data.z), data.w_weights * data.n * data.y)
    h = np.zeros((lv["x"], lv["a"], lv["w"]))
    resid = 0.0
    for x in range(lv["x"]):
        for a in range(lv["a"]):
            cz = c[x, a].sum(axis=1)
            rows = cz > 0
            if not rows.any():
                raise SpecError(f"no records with a={a}, x={x}", "a")
            pwz = c[x, a][rows] / cz[rows, None]
            h[x, a], r = _ridge(pwz, sy[x, a][rows] / cz[rows], ridge)
            resid = max(resid, r)
    return TabularBridge("outcome_h", h, resid)


def fit_q_tabular(data, a: int, ridge: float = 1e-8) -> TabularBridge:
    """Plug-in treatment bridge from empirical conditional tables."""
    if not data.discrete:
        raise SpecError("tabular bridges need discrete data", "x")
    lv = data.levels
    c = _weighted_counts(data, (data.x, data.a, data.w, data.z), (lv["x"], lv["a"], lv["w"], lv["z"]))
    cw = c.sum(axis=3)                                   # (x, a, w)
    if np.any(cw.sum(axis=(0, 2)) <= 0):
        raise SpecError("treatment arm absent from data", "a")
    q = np.zeros((lv["x"], lv["a"], lv["z"]))
    resid = 0.0
    for x in range(lv["x"]):
        tot = cw[x].sum(axis=1)
        if tot[a] <= 0:
            raise SpecError(f"no records with a={a}, x={x}", "a")
        pw_a = cw[x, a] / tot[a]
        for ap in range(lv["a"]):
            if tot[ap] <= 0:
                raise SpecError(f"no records with a={ap}, x={x}", "a")
            pw_ap = cw[x, ap] / tot[ap]
            rows = pw_ap > 0
            pzw = c[x, ap][rows] / cw[x, ap][rows, None]
            q[x, ap], r = _ridge(pzw, pw_a[rows] / pw_ap[rows], ridge)
            resid = max(resid, r)
    return TabularBridge("treatment_q", q, resid, target_a=a)
