"""Identification of structural VAR mixing matrices from higher-order moments.

The package estimates the simultaneous-interaction matrix B of a structural
vector autoregression u_t = B e_t from second-, third- and fourth-order
product-moment conditions implied by mutually independent, non-Gaussian
shocks.  It provides independence-factorized weighting and covariance
estimators, a continuously scale-updated GMM estimator, asymptotic inference,
small-sample noise analytics, shock distribution generators and a Monte Carlo
harness with a CLI front end.
"""

from __future__ import annotations

__version__ = "0.1.0"

from homent.covariance import (
    UnivariateMomentTable,
    floored_inverse,
    g_empirical,
    g_smi,
    s_si,
    s_smi,
    s_smi_empirical,
    s_true,
)
from homent.dgps import (
    ShockDistributionSpec,
    population_moments,
    preset,
    sample_panel,
)
from homent.estimators import (
    EstimateResult,
    WeightingSpec,
    avar_weight,
    basis_estimates,
    csue_si,
    csue_star,
    cue,
    gmm_star,
    minimize_gmm,
    objective_at,
    sign_permute,
    signed_permutation,
    two_step_csue,
    two_step_gmm,
)
from homent.inference import (
    AsymptoticCovariance,
    UnidentifiedModelError,
    WaldTest,
    asymptotic_covariance,
    confidence_interval,
    wald,
)
from homent.mc import (
    Scenario,
    TestSpec,
    record_columns,
    run_scenario,
    summarize,
)
from homent.moments import (
    MomentSystem,
    MultiIndex,
    constant_c,
    enumerate_moment_indices,
    full_system,
)
from homent.noise import (
    NoiseDecomposition,
    expected_loss_split,
    noise_decomposition,
    noise_gradient_at_identity,
)
from homent.svar import (
    DegenerateInnovationError,
    MomentWorkspace,
    SingularMatrixError,
    coef_position,
    innovations,
    moment_jacobian,
    moment_values,
    sample_moments,
    unvec,
    vec,
)
from homent.varmodel import VarFit, VarSpec, ols_var, simulate_var

__all__ = [
    "AsymptoticCovariance",
    "DegenerateInnovationError",
    "EstimateResult",
    "MomentSystem",
    "MomentWorkspace",
    "MultiIndex",
    "NoiseDecomposition",
    "Scenario",
    "ShockDistributionSpec",
    "SingularMatrixError",
    "TestSpec",
    "UnidentifiedModelError",
    "UnivariateMomentTable",
    "VarFit",
    "VarSpec",
    "WaldTest",
    "WeightingSpec",
    "__version__",
    "asymptotic_covariance",
    "avar_weight",
    "basis_estimates",
    "coef_position",
    "confidence_interval",
    "constant_c",
    "csue_si",
    "csue_star",
    "cue",
    "enumerate_moment_indices",
    "expected_loss_split",
    "floored_inverse",
    "full_system",
    "g_empirical",
    "g_smi",
    "gmm_star",
    "innovations",
    "minimize_gmm",
    "moment_jacobian",
    "moment_values",
    "noise_decomposition",
    "noise_gradient_at_identity",
    "objective_at",
    "ols_var",
    "population_moments",
    "preset",
    "record_columns",
    "run_scenario",
    "s_si",
    "s_smi",
    "s_smi_empirical",
    "s_true",
    "sample_moments",
    "sample_panel",
    "sign_permute",
    "signed_permutation",
    "simulate_var",
    "summarize",
    "two_step_csue",
    "two_step_gmm",
    "unvec",
    "vec",
    "wald",
]
