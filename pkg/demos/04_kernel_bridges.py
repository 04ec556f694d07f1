"""Kernel min-max bridges against known answers.

1. GAUSS1 has the analytic outcome bridge b*w + c*a + d*x.  MSE falls with n
   at the default regularizer n**-0.4, but the default shrinks hard; a
   smaller lambda is far closer at the same n.
2. On D1 with one-hot inputs the kernel fit at small lambda matches the
   exact bridge tables.
"""
import numpy as np

from proxmed import load_fixture
from proxmed.bridges import default_lambda, fit_h_minimax, fit_q_minimax
from proxmed.dgp import SamplerConfig, sample
from proxmed.model import to_population
from proxmed.nuisance import fit_nuisances
from proxmed.oracle import solve_outcome_bridge, solve_treatment_bridge

g = load_fixture("GAUSS1")
full = sample(g, SamplerConfig(seed=0, n=2000))
for n in (250, 500, 1000, 2000):
    d = full.take(np.arange(n))
    truth = g.outcome_bridge(d.w, d.a, d.x)
    row = []
    for lam in (None, 1e-3):
        h = fit_h_minimax(d, lambda_h=lam, lambda_q=lam)
        row.append(np.mean((h(d.w, d.a, d.x) - truth) ** 2))
    print(f"GAUSS1 n={n:5d}: MSE at lambda=n^-0.4 ({default_lambda(n):.3f}) {row[0]:.3f}; "
          f"at lambda=1e-3 {row[1]:.3f}")

spec = load_fixture("D1")
pop = to_population(spec)
h0, q0 = solve_outcome_bridge(pop), solve_treatment_bridge(pop, 1)
d = sample(spec, SamplerConfig(seed=0, n=5000))
h = fit_h_minimax(d, lambda_h=1e-6, lambda_q=1e-6)
q = fit_q_minimax(d, fit_nuisances(d), 1, lambda_h=1e-6, lambda_q=1e-6)
x, a, v = (c.ravel() for c in np.meshgrid(range(2), range(2), range(2), indexing="ij"))
print("\nD1 n=5000, lambda=1e-6  (x, a, w|z): kernel vs exact")
for i in range(8):
    print(f"  ({x[i]},{a[i]},{v[i]})  h {h(v[i:i+1], a[i:i+1], x[i:i+1])[0]:+.3f} vs {h0.values[x[i], a[i], v[i]]:+.3f}"
          f"   q {q(v[i:i+1], a[i:i+1], x[i:i+1])[0]:+.3f} vs {q0.values[x[i], a[i], v[i]]:+.3f}")
