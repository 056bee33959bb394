"""Projected least-mean-square parameter estimator."""

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import spectral_norm
from .model import AffineParametrization, ParamBox, eval_system, project, regression_terms

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorState:
    theta_hat: np.ndarray
    mu: float

    def __post_init__(self):
        theta_hat = np.array(self.theta_hat, dtype=float).reshape(-1)
        if not np.all(np.isfinite(theta_hat)):
            raise ValueError("theta_hat must be finite")
        if not self.mu > 0:
            raise ValueError(f"step size must be positive, got {self.mu}")
        theta_hat.setflags(write=False)
        object.__setattr__(self, "theta_hat", theta_hat)


def predict(par: AffineParametrization, theta_hat, x, u):
    """Nominal one-step prediction ``A(theta_hat) x + B(theta_hat) u``."""
    A, B = eval_system(par, theta_hat)
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape != (par.n,) or u.shape != (par.m,):
        raise ValueError(f"expected x of length {par.n} and u of length {par.m}")
    return A @ x + B @ u


def lms_update(par, state: EstimatorState, box: ParamBox, x_prev, u_prev, x_new):
    """One projected LMS step driven by the transition ``(x_prev, u_prev) -> x_new``.

    ``theta_hat+ = clip(theta_hat + mu * D(x_prev, u_prev)' (x_new - prediction))``.
    """
    delta, D = regression_terms(par, x_prev, u_prev)
    innovation = np.asarray(x_new, dtype=float) - (delta + D @ state.theta_hat)
    raw = state.theta_hat + state.mu * (D.T @ innovation)
    return EstimatorState(project(box, raw), state.mu)


def stepsize_ok(par, mu: float, x, u) -> bool:
    """Pointwise step-size condition ``mu * ||D(x, u)||^2 <= 1`` at one sample."""
    _, D = regression_terms(par, x, u)
    return bool(mu * spectral_norm(D) ** 2 <= 1.0)


def max_admissible_step(par: AffineParametrization, X: float, U: float) -> float:
    """Conservative largest step size for states ``||x|| <= X`` and inputs ``||u|| <= U``.

    Uses ``||D(x, u)||^2 <= sum_i (||A_incr[i]|| X + ||B_incr[i]|| U)^2``. Returns
    ``inf`` when every increment is zero (``D`` vanishes identically).
    """
    if X <= 0 or U <= 0:
        raise ValueError("X and U must be positive")
    bound = sum(
        (spectral_norm(Ai) * X + spectral_norm(Bi) * U) ** 2
        for Ai, Bi in zip(par.A_incr, par.B_incr)
    )
    if bound == 0.0:
        return float("inf")
    return 1.0 / bound
