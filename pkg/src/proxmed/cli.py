"""Command-line interface.

    proxmed validate <spec>
    proxmed oracle   <spec> --a 1 --a-prime 0
    proxmed simulate <spec> --n 1000 --seed 7 [--out data.csv]
    proxmed estimate <data.csv> --estimand psi1 --strategy s5_mr --a 1 --a-prime 0
    proxmed study    <study.json> --out report.csv

``<spec>`` is a JSON file or a fixture name (D1, F1, G1, GAUSS1).
Exit codes: 0 success, 1 validation failed, 2 schema/input error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, PositivityError, SpecError
from .serialize import dumps

EXIT_OK, EXIT_INVALID, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3


def _read_json(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read file ({exc.strerror})", path) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON ({exc.msg} at line {exc.lineno})", path) from None


def load_spec(ref: str):
    from .fixtures import FIXTURE_NAMES, load_fixture
    from .model import spec_from_dict

    if ref in FIXTURE_NAMES:
        return load_fixture(ref)
    doc = _read_json(ref)
    # fixture files wrap the spec with provenance
    if isinstance(doc, dict) and "spec" in doc and "tables" not in doc and "kind" not in doc:
        doc = doc["spec"]
    return spec_from_dict(doc)


def _emit(obj, out=None):
    text = dumps(obj) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_validate(args) -> int:
    from .model import GaussianScmSpec, validate_spec

    spec = load_spec(args.spec)
    if isinstance(spec, GaussianScmSpec):
        _emit({"ok": True, "checks": [{"name": "noise sd > 0", "passed": True}]})
        return EXIT_OK
    rep = validate_spec(spec)
    _emit(rep.to_dict())
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_oracle(args) -> int:
    from .model import GaussianScmSpec, mediator_joint, to_population, validate_spec
    from .oracle import (check_completeness, identified_components, population_psi_via_h,
                         population_psi_via_q, solve_outcome_bridge, solve_treatment_bridge,
                         true_estimands)

    spec = load_spec(args.spec)
    truth = true_estimands(spec, args.a, args.a_prime)
    out = {"spec": spec.name, "model_kind": spec.model_kind, **truth.to_dict(),
           "identified_components": identified_components(spec)}
    if isinstance(spec, GaussianScmSpec):
        out["outcome_bridge"] = {"w": spec.b, "a": spec.c, "x": spec.d}
        _emit(out)
        return EXIT_OK
    rep = validate_spec(spec)
    if not rep.ok:
        _emit({"error": "spec fails validation", "validation": rep.to_dict()})
        return EXIT_INVALID
    pop = to_population(spec)
    h = solve_outcome_bridge(pop)
    q = solve_treatment_bridge(pop, args.a)
    mj = mediator_joint(spec)
    out["via_h"] = population_psi_via_h(pop, h, args.a, args.a_prime).to_dict()
    out["via_q"] = population_psi_via_q(pop, q, args.a, args.a_prime).to_dict()
    out["bridge_residuals"] = {"outcome_h": h.residual_norm, "treatment_q": q.residual_norm}
    out["bridges_exist"] = {"outcome_h": h.exists, "treatment_q": q.exists}
    out["completeness"] = {side: check_completeness(mj, side).to_dict() for side in ("z_side", "w_side")}
    out["bridges"] = {"outcome_h": h.to_dict(), "treatment_q": q.to_dict()}
    _emit(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .dgp import SamplerConfig, sample

    if args.n < 1:
        raise SpecError("must be >= 1", "n")
    spec = load_spec(args.spec)
    data = sample(spec, SamplerConfig(args.seed, args.n))
    text = data.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_estimate(args) -> int:
    from .bridges import KernelSpec
    from .estimators import FitPlan, estimate
    from .model import Dataset

    try:
        text = Path(args.data).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read file ({exc.strerror})", args.data) from None
    data = Dataset.from_csv(text, source=args.data)
    bw = "median_heuristic" if args.bandwidth is None else args.bandwidth
    kern = KernelSpec(bandwidth=bw)
    plan = FitPlan(bridge_method=args.bridge_method, lambda_h=args.lambda_h, lambda_q=args.lambda_q,
                   kernels=(kern, kern), max_anchors=args.max_anchors)
    a_prime = args.a_prime if args.estimand == "psi1" else None
    if args.estimand == "psi1" and a_prime is None:
        raise SpecError("psi1 needs --a-prime", "a_prime")
    res = estimate(data, args.estimand, args.strategy, args.a, a_prime, plan=plan,
                   folds=args.folds, seed=args.seed, display_form=args.display_form)
    _emit(res.to_dict())
    return EXIT_OK


def cmd_study(args) -> int:
    from .experiments import StudyConfig, run_study

    try:
        cfg = StudyConfig.from_dict(_read_json(args.study))
    except TypeError as exc:
        raise SpecError(str(exc), args.study) from None
    rep = run_study(cfg)
    csv_text = rep.to_csv(timings=not args.no_timing)
    if args.out:
        Path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.json:
        _emit(rep.to_dict(), args.json)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxmed", description="Proximal mediation analysis tools.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a spec against the model assumptions")
    v.add_argument("spec")
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle", help="exact estimands, bridges and completeness ranks")
    o.add_argument("spec")
    o.add_argument("--a", type=int, default=1)
    o.add_argument("--a-prime", type=int, default=0)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("simulate", help="draw a seeded sample as CSV")
    s.add_argument("spec")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate psi1, psi2 or psi3 from a CSV sample")
    e.add_argument("data")
    e.add_argument("--estimand", choices=("psi1", "psi2", "psi3"), required=True)
    e.add_argument("--strategy", choices=("s1", "s2", "s3", "s4", "s5", "s1_hw", "s2_qa", "s3_ha",
                                          "s4_hqa", "s5_mr"), default="s5_mr")
    e.add_argument("--a", type=int, default=1)
    e.add_argument("--a-prime", type=int)
    e.add_argument("--folds", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--lambda-h", type=float)
    e.add_argument("--lambda-q", type=float)
    e.add_argument("--bandwidth", type=float)
    e.add_argument("--max-anchors", type=int)
    e.add_argument("--bridge-method", choices=("auto", "tabular", "minimax"), default="auto")
    e.add_argument("--display-form", action="store_true",
                   help="psi1 s3: evaluate h at the observed treatment")
    e.set_defaults(func=cmd_estimate)

    st = sub.add_parser("study", help="run a robustness or convergence study")
    st.add_argument("study")
    st.add_argument("--out")
    st.add_argument("--json")
    st.add_argument("--no-timing", action="store_true", help="omit the runtime column")
    st.set_defaults(func=cmd_study)
    return p


_SHORT = {"s1": "s1_hw", "s2": "s2_qa", "s3": "s3_ha", "s4": "s4_hqa", "s5": "s5_mr"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "strategy", None) in _SHORT:
        args.strategy = _SHORT[args.strategy]
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except SpecError as exc:
        sys.stderr.write(f"schema error: {exc}\n")
        return EXIT_SCHEMA
    except (NumericalError, PositivityError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
