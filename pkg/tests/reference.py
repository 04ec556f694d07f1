"""Test-only brute force over every configuration of (x, u, a, m, z, w, y).

Works from the JSON form of a spec (nested lists, default parents) with
plain Python loops, so it shares no array code with the package oracle.
"""
import itertools


def _tables(doc):
    sp = doc["space"]
    t = doc["tables"]
    has_u = sp["u_levels"] > 0
    lv = {k: sp[f"{k}_levels"] for k in ("x", "a", "m", "z", "w", "y")}
    lv["u"] = sp["u_levels"] if has_u else 1
    y_vals = doc.get("y_values", list(range(lv["y"])))

    def p_x(x):
        return t["p_x"][x]

    def p_u(u, x):
        return t["p_u_given_x"][x][u] if has_u else 1.0

    def p_a(a, x, u):
        return t["p_a_given_xu"][x][u][a] if has_u else t["p_a_given_xu"][x][a]

    def p_m(m, x, a):
        return t["p_m_given_ax"][x][a][m]

    def p_z(z, x, a, m):
        return t["p_z_given_max"][x][a][m][z]

    def p_w(w, x, m):
        return t["p_w_given_mx"][x][m][w]

    def e_y(x, u, a, m, w):
        row = t["p_y_given_mawxu"][x][u][a][m][w] if has_u else t["p_y_given_mawxu"][x][a][m][w]
        return sum(p * v for p, v in zip(row, y_vals))

    return lv, p_x, p_u, p_a, p_m, p_z, p_w, e_y


def counterfactual_mean(doc, a_med, a_out):
    """E[Y(a_out, M(a_med))]; ``a_out=None`` keeps the natural treatment."""
    lv, p_x, p_u, p_a, p_m, p_z, p_w, e_y = _tables(doc)
    total = 0.0
    for x, u, a, m, z, w in itertools.product(*(range(lv[k]) for k in "xuamzw")):
        weight = p_x(x) * p_u(u, x) * p_a(a, x, u) * p_m(m, x, a_med) * p_z(z, x, a_med, m) * p_w(w, x, m)
        total += weight * e_y(x, u, a if a_out is None else a_out, m, w)
    return total


def estimands(doc, a, a_prime):
    """(psi1, psi2, psi3) by enumeration."""
    return (counterfactual_mean(doc, a, a_prime), counterfactual_mean(doc, a, a),
            counterfactual_mean(doc, a, None))


def observed_joint(doc):
    """p(x, a, z, w) as a dict keyed by tuples."""
    lv, p_x, p_u, p_a, p_m, p_z, p_w, _ = _tables(doc)
    out = {}
    for x, u, a, m, z, w in itertools.product(*(range(lv[k]) for k in "xuamzw")):
        key = (x, a, z, w)
        out[key] = out.get(key, 0.0) + p_x(x) * p_u(u, x) * p_a(a, x, u) * p_m(m, x, a) * p_z(z, x, a, m) * p_w(w, x, m)
    return out
