"""Weighted interacting-particle simulation and weak-form verification for
conditional McKean-Vlasov SDEs, the nonlinear Zakai equation and the
conditional Fokker-Planck equation on measure space."""
from __future__ import annotations

from .coefficients import (
    FAMILIES,
    CoefficientSet,
    FrozenMuPath,
    check_lipschitz,
    check_nondegeneracy,
    family_parameters,
    make_coefficients,
)
from .config import RunConfig
from .errors import (
    CMVZakaiError,
    CoefficientError,
    ConfigError,
    DimensionError,
    GridError,
    NumericalBlowup,
    OracleError,
    ParameterError,
    WeightDegeneracy,
)
from .measures import (
    ProbabilityAtomMeasure,
    WeightedAtomMeasure,
    d_infinity,
    metric_d,
    mollified_inner,
    mollified_l2_distance,
    normalize,
    pair,
    project_T,
    wasserstein1,
)
from .particles import (
    SimulationConfig,
    Trajectory,
    girsanov_tilt,
    nu_ensemble,
    observation_path,
    simulate_canonical,
    simulate_frozen_mu,
    simulate_replicas,
)
from .residuals import (
    EmpiricalLaw,
    ResidualReport,
    cfpe_residual,
    ks_identity_check,
    lyapunov_decay,
    martingale_check,
    regularity_phi,
    rinf_sde_residual,
    roundtrip_check,
    zakai_residual,
    zakai_residuals,
)
from .testfunctions import Bump, TestFunctionBasis, dyadic_bump_basis

__version__ = "0.1.0"
