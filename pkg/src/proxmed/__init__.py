"""Proximal identification and estimation of mediation and front-door
estimands when the mediator is hidden but two proxies are observed."""
from .errors import NumericalError, PositivityError, SpecError
from .model import (Dataset, FiniteSpace, GaussianScmSpec, ScmSpec, spec_from_dict, spec_to_dict,
                    to_population, validate_spec)
from .oracle import (EstimandValue, TabularBridge, identified_target, population_psi_via_h,
                     population_psi_via_q, solve_outcome_bridge, solve_treatment_bridge,
                     true_estimands)
from .dgp import SamplerConfig, random_valid_scm, sample
from .bridges import KernelBridge, KernelSpec, fit_h_minimax, fit_h_tabular, fit_q_minimax, fit_q_tabular
from .nuisance import NuisanceSet, eta1, eta2, fit_nuisances, hbar
from .estimators import EstimateResult, FitPlan, estimate, psi1_s5_mr, psi2_s5_mr, psi3
from .experiments import StudyConfig, StudyReport, run_convergence_sweep, run_robustness_grid
from .fixtures import FIXTURE_NAMES, load_fixture

__version__ = "0.1.0"
