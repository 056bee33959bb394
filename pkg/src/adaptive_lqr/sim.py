"""Closed-loop runs of the certainty-equivalent adaptive LQR.

Per step ``k`` (adaptive mode): gain from the current estimate, input
``u = K x (+ exploration)``, plant step, then the projected LMS update that
produces the next estimate. ``frozen`` keeps the initial gain and estimate;
``oracle`` uses the true parameter as the estimate.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .controller import PolicyCache, ce_solution
from .dare import DareError
from .estimator import EstimatorState, lms_update
from .linalg import is_symmetric_pd, spectral_norm
from .model import AffineParametrization, ParamBox, eval_system, regression_terms
from .plant import (
    QUADROTOR_BOX,
    DisturbanceModel,
    ParamTrajectory,
    QuadrotorParams,
    case_a_wind,
    case_b_wind,
    disturbance,
    gaussian,
    make_streams,
    quadrotor_linear_disturbance,
    quadrotor_nonlinear_remainder,
    quadrotor_parametrization,
    wind_profile,
)

logger = logging.getLogger(__name__)

PLANTS = ("quadrotor_nonlinear", "quadrotor_linear", "ltv")
MODES = ("adaptive", "frozen", "oracle")


class SimulationError(RuntimeError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SimConfig:
    par: AffineParametrization
    box: ParamBox
    x0: np.ndarray
    theta_hat0: np.ndarray
    mu: float
    Q: np.ndarray
    R: np.ndarray
    trajectory: ParamTrajectory
    disturbance: DisturbanceModel
    T: int = 1000
    plant: str = "ltv"
    quad: QuadrotorParams = QuadrotorParams()
    exploration_std: Optional[np.ndarray] = None
    mode: str = "adaptive"
    seed: int = 0
    divergence_threshold: float = 1e6
    recompute_tol: float = 0.0

    def __post_init__(self):
        for name in ("x0", "theta_hat0", "Q", "R"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        if self.plant not in PLANTS:
            raise ValueError(f"unknown plant {self.plant!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.T < 1:
            raise ValueError("horizon T must be at least 1")
        if self.x0.shape != (self.par.n,):
            raise ValueError(f"x0 must have length {self.par.n}")
        if self.theta_hat0.shape != (self.par.p,) or self.box.p != self.par.p:
            raise ValueError(f"theta_hat0 and the box must have length {self.par.p}")
        if not self.box.contains(self.theta_hat0):
            raise ValueError(f"theta_hat0 {self.theta_hat0} lies outside the parameter box")
        if not self.mu > 0:
            raise ValueError("step size mu must be positive")
        if not (is_symmetric_pd(self.Q) and is_symmetric_pd(self.R)):
            raise ValueError("Q and R must be symmetric positive definite")
        if self.Q.shape != (self.par.n, self.par.n) or self.R.shape != (self.par.m, self.par.m):
            raise ValueError("Q/R dimensions do not match the system")
        if self.exploration_std is not None:
            std = np.array(self.exploration_std, dtype=float).reshape(-1)
            if std.shape != (self.par.m,) or np.any(std < 0):
                raise ValueError(f"exploration_std must be {self.par.m} nonnegative values")
            object.__setattr__(self, "exploration_std", std)
        expected = 2 if self.plant.startswith("quadrotor") else self.par.n
        if self.disturbance.kind != "custom" and self.disturbance.dim != expected:
            raise ValueError(f"disturbance dim must be {expected} for plant {self.plant}")


@dataclass
class TrajectoryLog:
    """Arrays indexed by step. Transition quantities (``u, w, e1, K, stepsize_ok``)
    have one row per executed step; state-like quantities (``x, theta, theta_hat,
    V, P``) have one extra final row.
    """

    x: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    theta_hat: np.ndarray
    w: np.ndarray
    e1: np.ndarray
    V: np.ndarray
    stepsize_ok: np.ndarray
    K: np.ndarray
    P: np.ndarray
    diverged: bool = False
    config: Optional[SimConfig] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.u)

    @property
    def phi(self):
        """Estimation error ``theta_hat - theta`` (steps 0..n_steps)."""
        return self.theta_hat - self.theta

    @property
    def delta_theta(self):
        return np.diff(self.theta, axis=0)

    def slice(self, start: int, stop: int) -> "TrajectoryLog":
        """Sub-log covering transitions ``start..stop-1``."""
        return TrajectoryLog(
            x=self.x[start : stop + 1],
            u=self.u[start:stop],
            theta=self.theta[start : stop + 1],
            theta_hat=self.theta_hat[start : stop + 1],
            w=self.w[start:stop],
            e1=self.e1[start:stop],
            V=self.V[start : stop + 1],
            stepsize_ok=self.stepsize_ok[start:stop],
            K=self.K[start:stop],
            P=self.P[start : stop + 1],
            diverged=self.diverged and stop >= self.n_steps,
            config=self.config,
            meta=dict(self.meta),
        )


def _plant_step(config, par, k, x, u, theta, rng):
    w_raw = disturbance(config.disturbance, k, rng)
    if config.plant == "quadrotor_linear":
        w = quadrotor_linear_disturbance(config.quad, theta, w_raw)
    elif config.plant == "quadrotor_nonlinear":
        w = quadrotor_nonlinear_remainder(config.quad, x, theta, w_raw)
    else:
        w = w_raw
    A, B = eval_system(par, theta)
    return A @ x + B @ u + w, w


def run(config: SimConfig) -> TrajectoryLog:
    """Simulate ``config.T`` closed-loop steps; stops early on divergence."""
    par, T = config.par, config.T
    n, m, p = par.n, par.m, par.p
    rng_dist, rng_explore = make_streams(config.seed)
    cache = PolicyCache(tolerance=config.recompute_tol)

    xs = np.zeros((T + 1, n))
    us = np.zeros((T, m))
    thetas = np.zeros((T + 1, p))
    theta_hats = np.zeros((T + 1, p))
    ws = np.zeros((T, n))
    e1s = np.zeros((T, n))
    Vs = np.zeros(T + 1)
    oks = np.zeros(T, dtype=bool)
    Ks = np.zeros((T, m, n))
    Ps = np.zeros((T + 1, n, n))

    x = config.x0.copy()
    est = EstimatorState(config.theta_hat0, config.mu)
    frozen_sol = None
    diverged = False
    steps = T
    for k in range(T):
        theta = wind_profile(config.trajectory, k)
        theta_hat = theta if config.mode == "oracle" else est.theta_hat
        try:
            if config.mode == "frozen":
                frozen_sol = frozen_sol or ce_solution(par, theta_hat, config.Q, config.R)
                sol = frozen_sol
            else:
                sol = ce_solution(par, theta_hat, config.Q, config.R, cache)
        except DareError as exc:
            raise SimulationError(f"step {k}: {exc}", k) from exc
        u = sol.K @ x
        if config.exploration_std is not None:
            u = u + gaussian(rng_explore, config.exploration_std)
        x_next, w = _plant_step(config, par, k, x, u, theta, rng_dist)

        delta, D = regression_terms(par, x, u)
        e1 = x_next - (delta + D @ theta_hat) - w

        xs[k], us[k], thetas[k], theta_hats[k] = x, u, theta, theta_hat
        ws[k], e1s[k], Ks[k], Ps[k] = w, e1, sol.K, sol.P
        Vs[k] = x @ sol.P @ x
        oks[k] = config.mu * spectral_norm(D) ** 2 <= 1.0

        if config.mode == "adaptive":
            est = lms_update(par, est, config.box, x, u, x_next)
        x = x_next
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > config.divergence_threshold:
            diverged = True
            steps = k + 1
            logger.info("run diverged at step %d (|x| = %.3e)", k + 1, np.linalg.norm(x))
            break

    theta_end = wind_profile(config.trajectory, steps)
    if config.mode == "oracle":
        theta_hat_end = theta_end
    elif config.mode == "frozen":
        theta_hat_end = config.theta_hat0
    else:
        theta_hat_end = est.theta_hat
    xs[steps], thetas[steps], theta_hats[steps] = x, theta_end, theta_hat_end
    if config.mode == "frozen" and frozen_sol is not None:
        P_end = frozen_sol.P
    else:
        try:
            P_end = ce_solution(par, theta_hat_end, config.Q, config.R, cache).P
        except DareError as exc:
            raise SimulationError(f"step {steps}: {exc}", steps) from exc
    Ps[steps] = P_end
    Vs[steps] = x @ P_end @ x if np.all(np.isfinite(x)) else np.inf

    return TrajectoryLog(
        x=xs[: steps + 1],
        u=us[:steps],
        theta=thetas[: steps + 1],
        theta_hat=theta_hats[: steps + 1],
        w=ws[:steps],
        e1=e1s[:steps],
        V=Vs[: steps + 1],
        stepsize_ok=oks[:steps],
        K=Ks[:steps],
        P=Ps[: steps + 1],
        diverged=diverged,
        config=config,
    )


def _run_or_error(config):
    try:
        return run(config)
    except (SimulationError, DareError, ValueError) as exc:
        return exc


def run_batch(configs, workers: int = 0):
    """Run every config; failed runs appear as their exception object in the result list."""
    configs = list(configs)
    if workers and workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_or_error, configs))
    return [_run_or_error(c) for c in configs]


def quadrotor_config(
    case: str = "a",
    plant: str = "quadrotor_nonlinear",
    mode: str = "adaptive",
    T: int = 2000,
    seed: int = 0,
    mu: float = 50.0,
    exploration_std=None,
    qp: QuadrotorParams = QuadrotorParams(),
    **overrides,
) -> SimConfig:
    """Quadrotor experiment: ``p_x = p_z = -2``, estimate ``(0, 100)``, ``Q = I``, ``R = 10 I``."""
    wind = {"a": case_a_wind, "b": case_b_wind}[case]()
    base = SimConfig(
        par=quadrotor_parametrization(qp),
        box=QUADROTOR_BOX,
        x0=np.array([-2.0, -2.0, 0.0, 0.0, 0.0, 0.0]),
        theta_hat0=np.array([0.0, 100.0]),
        mu=mu,
        Q=np.eye(6),
        R=10.0 * np.eye(2),
        trajectory=wind,
        disturbance=DisturbanceModel(kind="uniform_decaying", amplitude=1.0, decay=0.001, dim=2),
        T=T,
        plant=plant,
        quad=qp,
        exploration_std=exploration_std,
        mode=mode,
        seed=seed,
    )
    return replace(base, **overrides) if overrides else base
