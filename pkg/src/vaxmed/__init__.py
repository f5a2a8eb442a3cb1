"""Antibody mediation of vaccine efficacy.

Population models with exact cross-world oracles, identification formulas,
non-identifiability witnesses and correlation-indexed sensitivity curves,
and estimators for trial designs that add a passive-immunization arm.
"""

__version__ = "0.1.0"

from .bounds import (
    construct_pi_for_tau,
    lambda_s_sensitivity,
    max_tau,
    rho_endpoints,
    rho_of_ey1m0,
    tau_sweep,
)
from .counts import StratifiedTrialCounts
from .designs import (
    AssignmentDesign,
    CurveTable,
    closeout_identify,
    combine_curves,
    cve_cpe_curves,
    three_arm_binary_identify,
    two_trial_standardize,
)
from .effects import EffectReport, Undefined
from .identification import (
    StratifiedConditionalMeans,
    check_testable_constraints,
    effects_from_expectations,
    identify_ey1m0_undetectable,
    mediation_formula,
    theorem2_identify,
)
from .levels import NEG
from .popmodel import (
    BinaryTypeDistribution,
    GeneralPopulation,
    PhiTable,
    StratifiedPopulation,
    load_population,
    oracle_cross_world,
    oracle_effects,
    phi_from_pi,
    validate_population,
)
from .trialsim import TrialDesignSpec, bootstrap_ci, expected_counts, simulate_trial
