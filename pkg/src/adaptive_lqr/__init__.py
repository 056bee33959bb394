"""Certainty-equivalent adaptive LQR for linear systems with unknown time-varying parameters.

Projected LMS estimation feeds a per-step DARE-based LQR; a closed-loop
simulator (planar quadrotor benchmark) and runtime certificates accompany it.
"""

__version__ = "0.1.0"

from .controller import PolicyCache, apply_policy, ce_lqr_gain, estimate_gain_lipschitz
from .dare import (
    DareError,
    DareInputError,
    MarginalStabilityError,
    RiccatiJacobians,
    RiccatiSolution,
    gain_jacobian_chain,
    gain_jacobian_fd,
    riccati_jacobians,
    solve_dare,
)
from .estimator import EstimatorState, lms_update, max_admissible_step, predict
from .model import (
    AffineParametrization,
    ParamBox,
    RegressionForm,
    diameter,
    eval_system,
    project,
    regression_terms,
)
from .sim import SimConfig, TrajectoryLog, quadrotor_config, run, run_batch
