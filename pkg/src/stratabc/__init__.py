"""Likelihood-free inference with stratified-distance sequential samplers.

The package provides rejection ABC and a sequential Monte Carlo ABC sampler
whose Gaussian perturbation kernels follow one of four policies (a shared
global covariance, locally optimal per-particle covariances, or the stratified
variants that condition on the acceptance band a particle's simulated data
landed in), four benchmark simulator models, a KL-based early-stopping
diagnostic, and a CLI harness that reproduces the acceptance-rate and
convergence experiments at desk scale.
"""

from .core import (
    Particle,
    Population,
    RngStream,
    ThresholdSchedule,
    active_strata,
    landing_stratum,
    stratum_of,
    validate_schedule,
)
from .estimators import ABCSMCSampler, RejectionABC
from .kernels import KernelPlan, KernelPolicy, build_kernel_plan
from .models import (
    MODEL_REGISTRY,
    Banana,
    GandK,
    GaussianToy,
    LotkaVolterra,
    SimulatorModel,
    get_model,
    make_observed,
)
from .smc import (
    IterationRecord,
    ProposalBudgetError,
    RunAborted,
    RunRecord,
    SmcConfig,
    StoppingRule,
    rejection_abc,
    run,
    run_model,
    smc_iteration,
)
from .stratify import FrequencyTensor, PredictiveMatrix, predictive_matrix, reweight

__version__ = "0.1.0"

__all__ = [
    "ABCSMCSampler",
    "Banana",
    "FrequencyTensor",
    "GandK",
    "GaussianToy",
    "IterationRecord",
    "KernelPlan",
    "KernelPolicy",
    "LotkaVolterra",
    "MODEL_REGISTRY",
    "Particle",
    "Population",
    "PredictiveMatrix",
    "ProposalBudgetError",
    "RejectionABC",
    "RngStream",
    "RunAborted",
    "RunRecord",
    "SimulatorModel",
    "SmcConfig",
    "StoppingRule",
    "ThresholdSchedule",
    "active_strata",
    "build_kernel_plan",
    "get_model",
    "landing_stratum",
    "make_observed",
    "predictive_matrix",
    "rejection_abc",
    "reweight",
    "run",
    "run_model",
    "smc_iteration",
    "stratum_of",
    "validate_schedule",
]
