"""Circuit synthesis for discretized Gaussian state preparation.

Two synthesis paths and the classical reference math they are tested
against: a recursive one-dimensional preparation whose rotation angles
are computed by in-superposition fixed-point arithmetic, and a shearing
transform that correlates independent coordinate registers into a
multivariate Gaussian.  ``simulate`` runs the produced circuits exactly;
``reference`` holds the closed-form oracles.
"""

from .angles import SIGMA_HI, SIGMA_LO, AngleApproxPlan, fit_angle_plan
from .baseline import baseline_cnot_formulas, build_real_state_prep
from .circuit import (
    Circuit,
    Gate,
    Register,
    ResourceReport,
    cnot_cost,
    compose,
    export_circuit,
    inverse,
    parse_circuit,
)
from .prep1d import (
    Kw1dConfig,
    RecursionLevelTrace,
    build_kw1d,
    cnot_bound_high_sigma,
    cnot_bound_intermediate,
)
from .reference import (
    CovarianceSpec,
    GaussianSpec1D,
    LdltFactors,
    alpha,
    alpha_tilde,
    exact_xi_state,
    fidelity,
    ldlt,
    optimal_state_1d,
    optimal_state_nd,
    recursive_xi_state,
    scalar_field_covariance,
    theta_norm,
)
from .shear import (
    ShearPlan,
    build_shear,
    classical_shear_oracle,
    frac_bits,
    shear_cnot_bound,
    shear_state,
)
from .simulate import SparseState, simulate, to_dense

__all__ = [
    "AngleApproxPlan",
    "Circuit",
    "CovarianceSpec",
    "Gate",
    "GaussianSpec1D",
    "Kw1dConfig",
    "LdltFactors",
    "RecursionLevelTrace",
    "Register",
    "ResourceReport",
    "SIGMA_HI",
    "SIGMA_LO",
    "ShearPlan",
    "SparseState",
    "alpha",
    "alpha_tilde",
    "baseline_cnot_formulas",
    "build_kw1d",
    "build_real_state_prep",
    "build_shear",
    "classical_shear_oracle",
    "cnot_bound_high_sigma",
    "cnot_bound_intermediate",
    "cnot_cost",
    "compose",
    "exact_xi_state",
    "export_circuit",
    "fidelity",
    "fit_angle_plan",
    "frac_bits",
    "inverse",
    "ldlt",
    "optimal_state_1d",
    "optimal_state_nd",
    "parse_circuit",
    "recursive_xi_state",
    "scalar_field_covariance",
    "shear_cnot_bound",
    "shear_state",
    "simulate",
    "theta_norm",
    "to_dense",
]
