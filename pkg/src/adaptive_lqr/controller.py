"""Certainty-equivalent LQR policy and a grid probe of its Lipschitz constant."""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dare import DareError, RiccatiSolution, solve_dare
from .linalg import spectral_norm
from .model import AffineParametrization, ParamBox, eval_system


@dataclass
class PolicyCache:
    """Last solved estimate; reused while the estimate moves less than ``tolerance``.

    The default tolerance of 0 re-solves on every change of the estimate.
    """

    tolerance: float = 0.0
    theta_hat: Optional[np.ndarray] = None
    solution: Optional[RiccatiSolution] = None


def ce_solution(par: AffineParametrization, theta_hat, Q, R, cache: PolicyCache = None):
    """Riccati solution for the system frozen at ``theta_hat``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    if cache is not None and cache.solution is not None:
        if np.linalg.norm(theta_hat - cache.theta_hat) <= cache.tolerance:
            return cache.solution
    A, B = eval_system(par, theta_hat)
    try:
        sol = solve_dare(A, B, Q, R)
    except DareError as exc:
        exc.theta = theta_hat.copy()
        raise DareError(f"{exc} at theta_hat={theta_hat}", exc.residual, exc.theta) from exc
    if cache is not None:
        cache.theta_hat = theta_hat.copy()
        cache.solution = sol
    return sol


def ce_lqr_gain(par, theta_hat, Q, R, cache: PolicyCache = None):
    """Certainty-equivalent gain ``K_LQR(theta_hat)``."""
    return ce_solution(par, theta_hat, Q, R, cache).K


def apply_policy(K, x):
    return np.asarray(K, dtype=float) @ np.asarray(x, dtype=float)


def _grid_gains(par, box, Q, R, grid_per_dim, workers):
    axes = box.grid(grid_per_dim)
    index = list(itertools.product(range(grid_per_dim), repeat=box.p))

    def solve(idx):
        theta = np.array([axes[d][i] for d, i in enumerate(idx)])
        try:
            return ce_lqr_gain(par, theta, Q, R)
        except DareError as exc:
            raise DareError(
                f"DARE failed at grid point theta={theta}", exc.residual, theta
            ) from exc

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            gains = list(pool.map(solve, index))
    else:
        gains = [solve(idx) for idx in index]
    return axes, dict(zip(index, gains))


def estimate_gain_lipschitz(
    par: AffineParametrization,
    box: ParamBox,
    Q,
    R,
    grid_per_dim: int = 15,
    workers: int = 0,
) -> float:
    """Largest slope ``||K(theta') - K(theta)|| / ||theta' - theta||`` over adjacent grid points.

    This is a lower bound on the true Lipschitz constant of the gain over the box.
    Axes of zero width are skipped.
    """
    if grid_per_dim < 2:
        raise ValueError("grid_per_dim must be at least 2")
    axes, gains = _grid_gains(par, box, Q, R, grid_per_dim, workers)
    best = 0.0
    for idx, K in gains.items():
        for d in range(box.p):
            if idx[d] + 1 >= grid_per_dim:
                continue
            step = axes[d][idx[d] + 1] - axes[d][idx[d]]
            if step == 0.0:
                continue
            nxt = idx[:d] + (idx[d] + 1,) + idx[d + 1 :]
            best = max(best, spectral_norm(gains[nxt] - K) / step)
    return best
