"""Runtime certificates evaluated on completed trajectory logs.

Checked inequalities, per step ``k`` with ``phi = theta_hat - theta``:

* estimator energy:  ||phi+||^2 - ||phi||^2 <= -mu ||e1||^2 + mu ||w||^2 + 2 d ||dtheta||
* estimate motion:   ||theta_hat+ - theta_hat|| <= sqrt(mu) ||e1 + w||
* prediction error:  sum ||e1||^2 <= ||phi_0||^2 / mu + sum (||w||^2 + (2d/mu) ||dtheta||)
* frozen LQR decrease: V(x+) - V(x) = -x'(Q + K'RK)x   (exact, no disturbance)

The first three are guaranteed at steps where ``mu ||D(x_k, u_k)||^2 <= 1``
(logged as ``stepsize_ok``); slacks at other steps are reported but never
counted as violations.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import ce_solution
from .model import ParamBox, diameter
from .sim import TrajectoryLog

DEFAULT_TOLERANCE = 1e-8


class CertificateInputError(ValueError):
    """The log does not meet the preconditions of a certificate."""


@dataclass
class CertificateCheck:
    """Per-step slack (``rhs - lhs``) of one inequality and its preconditions."""

    name: str
    slack: np.ndarray
    precondition: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def violations(self):
        return np.flatnonzero(self.precondition & (self.slack < -self.tolerance))

    @property
    def passed(self) -> bool:
        return self.violations.size == 0

    @property
    def first_violation(self) -> Optional[int]:
        v = self.violations
        return int(v[0]) if v.size else None

    @property
    def min_slack(self) -> float:
        """Worst slack over steps whose preconditions held (``inf`` if none did)."""
        s = self.slack[self.precondition]
        return float(np.min(s)) if s.size else float("inf")

    @property
    def precondition_fraction(self) -> float:
        return float(np.mean(self.precondition)) if self.precondition.size else 1.0

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "min_slack": self.min_slack,
            "first_violation": self.first_violation,
            "precondition_fraction": self.precondition_fraction,
            "steps": int(self.slack.size),
        }


def _require_truth(log: TrajectoryLog):
    if log.theta is None or not np.all(np.isfinite(log.theta)):
        raise CertificateInputError("log lacks the true parameter sequence")


def _sq(a):
    return np.sum(np.asarray(a) ** 2, axis=-1)


def check_prop1a(log: TrajectoryLog, mu: float, d: float, tolerance=DEFAULT_TOLERANCE):
    """Estimator energy inequality; slack = rhs - lhs per step."""
    _require_truth(log)
    phi = log.phi
    dtheta = np.linalg.norm(log.delta_theta, axis=1)
    rhs = -mu * _sq(log.e1) + mu * _sq(log.w) + 2.0 * d * dtheta
    lhs = _sq(phi[1:]) - _sq(phi[:-1])
    return CertificateCheck("lms_energy", rhs - lhs, log.stepsize_ok.copy(), tolerance)


def check_prop1b(log: TrajectoryLog, mu: float, tolerance=DEFAULT_TOLERANCE):
    """Estimate motion bound; slack = sqrt(mu)||e1 + w|| - ||theta_hat+ - theta_hat||."""
    moved = np.linalg.norm(np.diff(log.theta_hat, axis=0), axis=1)
    bound = np.sqrt(mu) * np.linalg.norm(log.e1 + log.w, axis=1)
    return CertificateCheck("estimate_motion", bound - moved, log.stepsize_ok.copy(), tolerance)


@dataclass
class PrefixCheck(CertificateCheck):
    lhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))


def check_prop1c(log: TrajectoryLog, mu: float, d: float, phi0=None, tolerance=DEFAULT_TOLERANCE):
    """Prediction-error budget for every prefix ``0..T``.

    A prefix counts toward pass/fail only if the step-size condition held at
    every step inside it.
    """
    _require_truth(log)
    phi0 = log.phi[0] if phi0 is None else np.asarray(phi0, dtype=float)
    dtheta = np.linalg.norm(log.delta_theta, axis=1)
    lhs = np.cumsum(_sq(log.e1))
    rhs = float(phi0 @ phi0) / mu + np.cumsum(_sq(log.w) + (2.0 * d / mu) * dtheta)
    all_ok = np.cumprod(log.stepsize_ok).astype(bool)
    return PrefixCheck("prediction_budget", rhs - lhs, all_ok, tolerance, lhs=lhs, rhs=rhs)


def check_frozen_lqr_decrease(log: TrajectoryLog, Q=None, R=None, rel_tol: float = 1e-9):
    """Exact Lyapunov decrease of the LQR on a disturbance-free, exactly-known run.

    Slack is ``rel_tol * (1 + V(x_k)) - |V(x+) - V(x) + x'(Q + K'RK)x|``.

    Raises:
        CertificateInputError: disturbance present, estimate differs from the
            truth, or the parameter changes along the run.
    """
    cfg = log.config
    Q = cfg.Q if Q is None else np.asarray(Q, dtype=float)
    R = cfg.R if R is None else np.asarray(R, dtype=float)
    if np.any(log.w != 0.0):
        raise CertificateInputError("frozen decrease identity needs w = 0")
    if np.any(np.abs(log.phi[:-1]) > 0.0):
        raise CertificateInputError("frozen decrease identity needs theta_hat = theta")
    if np.any(log.delta_theta[:-1] != 0.0):
        raise CertificateInputError("frozen decrease identity needs a constant parameter")
    if cfg is not None and cfg.exploration_std is not None and np.any(cfg.exploration_std > 0):
        raise CertificateInputError("frozen decrease identity needs u = K x")
    x, xn = log.x[:-1], log.x[1:]
    slack = np.empty(log.n_steps)
    for k in range(log.n_steps):
        P, K = log.P[k], log.K[k]
        V = x[k] @ P @ x[k]
        stage = x[k] @ (Q + K.T @ R @ K) @ x[k]
        err = abs(xn[k] @ P @ xn[k] - V + stage)
        slack[k] = rel_tol * (1.0 + V) - err
    return CertificateCheck("frozen_lqr_decrease", slack, np.ones(log.n_steps, dtype=bool), 0.0)


@dataclass
class CertificateReport:
    checks: dict
    sums: dict
    cumulative: dict
    empirical_gain: float
    tail_fraction: float
    bounded: bool
    l2_converging: bool
    w_l2_empirical: bool
    dtheta_l1_empirical: bool
    diverged: bool
    max_state_norm: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        out = {f"sum_{k}": v for k, v in self.sums.items()}
        out.update(
            empirical_gain=self.empirical_gain,
            tail_fraction=self.tail_fraction,
            bounded=self.bounded,
            l2_converging=self.l2_converging,
            w_l2_empirical=self.w_l2_empirical,
            dtheta_l1_empirical=self.dtheta_l1_empirical,
            diverged=self.diverged,
            max_state_norm=self.max_state_norm,
            certificates_passed=self.passed,
        )
        for name, check in self.checks.items():
            for key, value in check.summary().items():
                out[f"{name}.{key}"] = value
        return out


def tail_fraction(cumulative) -> float:
    """Share of the final total accumulated over the last quarter of the run."""
    cumulative = np.asarray(cumulative, dtype=float)
    if cumulative.size == 0 or cumulative[-1] == 0.0:
        return 0.0
    start = cumulative[(3 * cumulative.size) // 4 - 1] if cumulative.size >= 4 else 0.0
    return float((cumulative[-1] - start) / cumulative[-1])


def l2_gain_report(log: TrajectoryLog, mu=None, d=None, tail_threshold: float = 1e-2,
                   tolerance=DEFAULT_TOLERANCE) -> CertificateReport:
    """Empirical l2 accounting plus (when ``mu`` and ``d`` are given) the estimator certificates.

    ``bounded`` means the run did not diverge. ``l2_converging`` means the
    partial sums of ||x||^2 have a tail fraction below ``tail_threshold``.
    Analogous tail tests on ||w||^2 and ||dtheta|| report whether the run
    empirically satisfied the square-summable / summable hypotheses.
    """
    x_sq = _sq(log.x[:-1])
    w_sq = _sq(log.w)
    dth = np.linalg.norm(log.delta_theta, axis=1)
    e_sq = _sq(log.e1)
    cumulative = {
        "x_sq": np.cumsum(x_sq),
        "w_sq": np.cumsum(w_sq),
        "dtheta": np.cumsum(dth),
        "e1_sq": np.cumsum(e_sq),
    }
    sums = {k: float(v[-1]) if v.size else 0.0 for k, v in cumulative.items()}
    diverged = bool(log.diverged)
    gain = float("inf") if diverged else sums["x_sq"] / (sums["w_sq"] + sums["dtheta"] + 1.0)
    tail = tail_fraction(cumulative["x_sq"])
    checks = {}
    if mu is not None and d is not None and log.theta is not None:
        checks["lms_energy"] = check_prop1a(log, mu, d, tolerance)
        checks["estimate_motion"] = check_prop1b(log, mu, tolerance)
        checks["prediction_budget"] = check_prop1c(log, mu, d, tolerance=tolerance)
    return CertificateReport(
        checks=checks,
        sums=sums,
        cumulative=cumulative,
        empirical_gain=gain,
        tail_fraction=tail,
        bounded=not diverged,
        l2_converging=(not diverged) and tail < tail_threshold,
        w_l2_empirical=tail_fraction(cumulative["w_sq"]) < tail_threshold,
        dtheta_l1_empirical=tail_fraction(cumulative["dtheta"]) < tail_threshold,
        diverged=diverged,
        max_state_norm=float(np.max(np.linalg.norm(log.x, axis=1))),
    )


@dataclass
class VTildeTrace:
    value: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    q_min: float
    p_max: float


def p_norm_grid_max(par, box: ParamBox, Q, R, grid_per_dim: int = 15) -> float:
    """Largest ||P(theta)|| over a tensor grid of the box (corners included)."""
    import itertools

    axes = box.grid(grid_per_dim)
    best = 0.0
    for point in itertools.product(*axes):
        P = ce_solution(par, np.array(point), Q, R).P
        best = max(best, float(np.linalg.eigvalsh(P)[-1]))
    return best


def vtilde_trace(log: TrajectoryLog, beta_over_mu: float, grid_per_dim: int = 15, p_max=None):
    """Joint Lyapunov candidate ``x'P(theta_hat)x + (beta/mu)||phi||^2`` with its sandwich bounds.

    ``lower = q_min ||x||^2 + (beta/mu)||phi||^2`` uses the smallest eigenvalue
    of Q; ``upper`` uses the grid maximum of ||P|| over the box.
    """
    _require_truth(log)
    cfg = log.config
    q_min = float(np.linalg.eigvalsh(cfg.Q)[0])
    if p_max is None:
        p_max = p_norm_grid_max(cfg.par, cfg.box, cfg.Q, cfg.R, grid_per_dim)
    x_sq = _sq(log.x)
    phi_sq = _sq(log.phi)
    V = np.einsum("ki,kij,kj->k", log.x, log.P, log.x)
    value = V + beta_over_mu * phi_sq
    return VTildeTrace(
        value=value,
        lower=q_min * x_sq + beta_over_mu * phi_sq,
        upper=p_max * x_sq + beta_over_mu * phi_sq,
        q_min=q_min,
        p_max=p_max,
    )


def certify(log: TrajectoryLog, mu: float, box: ParamBox, tolerance=DEFAULT_TOLERANCE, **kw):
    """Full report for a linear-plant log with known true parameters."""
    return l2_gain_report(log, mu=mu, d=diameter(box), tolerance=tolerance, **kw)
