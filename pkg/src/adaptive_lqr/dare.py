"""Discrete-time algebraic Riccati equation: solver, LQR gain, sensitivities.

The solver is a structure-preserving doubling algorithm (SDA). When doubling
stalls or blows up, a stabilizing gain is found by Riccati value iteration and
refined with Kleinman-Hewer Newton steps. Every accepted solution is polished
by at most a few Newton steps until the Frobenius residual is below
``1e-10 * (1 + ||P||)``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .linalg import is_symmetric_pd, spectral_radius, symmetrize, vec, vec_permutation
from .model import AffineParametrization, eval_system

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
MAX_DOUBLING_STEPS = 200
MAX_VALUE_ITERATIONS = 20_000
MAX_NEWTON_STEPS = 50
Z1_COND_LIMIT = 1e12


class DareInputError(ValueError):
    """Raised for malformed weights or mismatched dimensions."""


class DareError(RuntimeError):
    """DARE did not converge (typically a non-stabilizable pair)."""

    def __init__(self, message, residual=float("nan"), theta=None):
        super().__init__(message)
        self.residual = residual
        self.theta = theta


class MarginalStabilityError(DareError):
    """The Riccati sensitivity system is numerically singular."""


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int
    method: str = "doubling"
    closed_loop_radius: float = float("nan")


@dataclass(frozen=True)
class RiccatiJacobians:
    """``dP_dA = d vec(P) / d vec(A)`` (n^2 x n^2), ``dP_dB`` (n^2 x nm)."""

    dP_dA: np.ndarray
    dP_dB: np.ndarray


def _validate(A, B, Q, R):
    A = np.array(A, dtype=float, ndmin=2)
    B = np.array(B, dtype=float, ndmin=2)
    Q = np.array(Q, dtype=float, ndmin=2)
    R = np.array(R, dtype=float, ndmin=2)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DareInputError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DareInputError(f"B must have {n} rows, got {B.shape}")
    m = B.shape[1]
    if Q.shape != (n, n) or R.shape != (m, m):
        raise DareInputError(f"Q must be {n}x{n} and R {m}x{m}, got {Q.shape}, {R.shape}")
    for name, M in (("A", A), ("B", B)):
        if not np.all(np.isfinite(M)):
            raise DareInputError(f"{name} has non-finite entries")
    if not is_symmetric_pd(Q):
        raise DareInputError("Q must be symmetric positive definite")
    if not is_symmetric_pd(R):
        raise DareInputError("R must be symmetric positive definite")
    return A, B, Q, R


def lqr_gain(A, B, R, P):
    """``K = -(R + B'PB)^{-1} B'PA``."""
    BtP = B.T @ P
    return -np.linalg.solve(R + BtP @ B, BtP @ A)


def dare_residual(A, B, Q, R, P) -> float:
    """Frobenius norm of ``A'PA - A'PB(R+B'PB)^{-1}B'PA + Q - P``."""
    BtPA = B.T @ P @ A
    rhs = A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA) + Q
    return float(np.linalg.norm(rhs - P))


def _doubling(A, B, Q, R):
    n = A.shape[0]
    I = np.eye(n)
    Ak = A.copy()
    G = symmetrize(B @ np.linalg.solve(R, B.T))
    H = Q.copy()
    for it in range(1, MAX_DOUBLING_STEPS + 1):
        W = I + G @ H
        try:
            WiAG = np.linalg.solve(W, np.hstack((Ak, G)))
        except np.linalg.LinAlgError:
            return None, it
        WiA, WiG = WiAG[:, :n], WiAG[:, n:]
        H_new = symmetrize(H + Ak.T @ H @ WiA)
        G = symmetrize(G + Ak @ WiG @ Ak.T)
        Ak = Ak @ WiA
        if not np.all(np.isfinite(H_new)) or np.max(np.abs(H_new)) > 1e150:
            return None, it
        change = np.linalg.norm(H_new - H)
        H = H_new
        if change <= 1e-15 * np.linalg.norm(H):
            return H, it
        if it > 4 and np.linalg.norm(Ak) < 1e-300:
            return H, it
    return H, MAX_DOUBLING_STEPS


def _newton(A, B, Q, R, K, max_steps=MAX_NEWTON_STEPS, tol=RESIDUAL_TOL):
    """Kleinman-Hewer iteration from a stabilizing ``K``; returns (P, K, steps)."""
    P = None
    for step in range(1, max_steps + 1):
        Acl = A + B @ K
        if spectral_radius(Acl) >= 1.0:
            return None, K, step
        P = symmetrize(solve_discrete_lyapunov(Acl.T, Q + K.T @ R @ K))
        K = lqr_gain(A, B, R, P)
        if dare_residual(A, B, Q, R, P) <= tol * (1.0 + np.linalg.norm(P)):
            return P, K, step
    return P, K, max_steps


def _value_iteration_gain(A, B, Q, R):
    """Riccati recursion from ``P = Q`` until the induced gain is stabilizing."""
    P = Q.copy()
    for it in range(1, MAX_VALUE_ITERATIONS + 1):
        K = lqr_gain(A, B, R, P)
        if spectral_radius(A + B @ K) < 1.0:
            return K, it
        P = symmetrize(A.T @ P @ (A + B @ K) + Q)
        if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > 1e150:
            break
    return None, it


def solve_dare(A, B, Q, R) -> RiccatiSolution:
    """Stabilizing solution of the DARE and the associated LQR gain.

    Raises:
        DareInputError: Q or R not symmetric positive definite, or bad shapes.
        DareError: no stabilizing solution found (e.g. ``(A, B)`` not
            stabilizable); carries the last residual.
    """
    A, B, Q, R = _validate(A, B, Q, R)
    tol = RESIDUAL_TOL
    P, iterations = _doubling(A, B, Q, R)
    method = "doubling"
    K = None
    if P is not None:
        K = lqr_gain(A, B, R, P)
        if spectral_radius(A + B @ K) >= 1.0:
            P = None
    if P is None:
        logger.debug("doubling stalled after %d steps, switching to Newton", iterations)
        K0, vi_steps = _value_iteration_gain(A, B, Q, R)
        iterations += vi_steps
        if K0 is None:
            raise DareError("DARE did not converge: no stabilizing gain found", float("inf"))
        P, K, steps = _newton(A, B, Q, R, K0)
        iterations += steps
        method = "newton"
        if P is None:
            raise DareError("DARE did not converge: Newton lost stability", float("inf"))
    residual = dare_residual(A, B, Q, R, P)
    if residual > tol * (1.0 + np.linalg.norm(P)):
        P_pol, K_pol, steps = _newton(A, B, Q, R, K, max_steps=5)
        iterations += steps
        if P_pol is not None:
            P, K = P_pol, K_pol
            residual = dare_residual(A, B, Q, R, P)
    if not np.isfinite(residual) or residual > tol * (1.0 + np.linalg.norm(P)):
        raise DareError(f"DARE did not converge: residual {residual:.3e}", residual)
    rho = spectral_radius(A + B @ K)
    if rho >= 1.0 or np.linalg.eigvalsh(P)[0] <= 0.0:
        raise DareError(f"DARE did not converge: closed-loop radius {rho:.6f}", residual)
    return RiccatiSolution(
        P=P, K=K, residual=residual, iterations=iterations, method=method, closed_loop_radius=rho
    )


def z_matrices(A, B, Q, R, sol: RiccatiSolution):
    """The three Kronecker-form matrices of the implicit-function argument.

    Returns ``(Z1, Z2, Z3)`` such that ``Z1 dvec(P) = Z2 dvec(A) + Z3 dvec(B)``.
    """
    A, B, Q, R = _validate(A, B, Q, R)
    P = sol.P
    n, m = B.shape
    In, Im = np.eye(n), np.eye(m)
    In2, Im2 = np.eye(n * n), np.eye(m * m)
    Vnn = vec_permutation(n, n)
    Vmm = vec_permutation(m, m)
    M3 = R + B.T @ P @ B
    M2 = np.linalg.inv(M3)
    M1 = P - P @ B @ M2 @ B.T @ P
    PB = P @ B
    X = PB @ M2 @ B.T
    AtA = np.kron(A.T, A.T)
    PBPB_M2M2 = np.kron(PB, PB) @ np.kron(M2, M2)
    Z1 = In2 - AtA @ (In2 - np.kron(X, In) - np.kron(In, X) + PBPB_M2M2 @ np.kron(B.T, B.T))
    Z2 = (Vnn + In2) @ np.kron(In, A.T @ M1)
    Z3 = AtA @ (
        PBPB_M2M2 @ (Im2 + Vmm) @ np.kron(Im, B.T @ P)
        - (In2 + Vnn) @ np.kron(PB @ M2, P)
    )
    return Z1, Z2, Z3


def riccati_jacobians(A, B, Q, R, sol: RiccatiSolution) -> RiccatiJacobians:
    """Closed-form ``d vec(P)/d vec(A)`` and ``d vec(P)/d vec(B)``.

    Raises:
        MarginalStabilityError: if ``Z1`` has condition number above 1e12.
    """
    Z1, Z2, Z3 = z_matrices(A, B, Q, R, sol)
    cond = np.linalg.cond(Z1)
    if not np.isfinite(cond) or cond > Z1_COND_LIMIT:
        raise MarginalStabilityError(
            f"closed loop marginally stable: cond(Z1) = {cond:.3e}", sol.residual
        )
    return RiccatiJacobians(dP_dA=np.linalg.solve(Z1, Z2), dP_dB=np.linalg.solve(Z1, Z3))


def _gain(par, theta, Q, R):
    A, B = eval_system(par, theta)
    try:
        return solve_dare(A, B, Q, R).K
    except DareError as exc:
        exc.theta = np.asarray(theta, dtype=float)
        raise


def gain_jacobian_fd(par: AffineParametrization, theta, Q, R, h: float = 1e-6):
    """Central-difference ``d vec(K)/d theta``, shape ``(m*n, p)``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.asarray(theta, dtype=float)
    J = np.zeros((par.m * par.n, par.p))
    for i in range(par.p):
        e = np.zeros(par.p)
        e[i] = h
        J[:, i] = (vec(_gain(par, theta + e, Q, R)) - vec(_gain(par, theta - e, Q, R))) / (2 * h)
    return J


def gain_jacobian_chain(par: AffineParametrization, theta, Q, R):
    """``d vec(K)/d theta`` from the closed-form Riccati sensitivities.

    Differentiating ``K = -M2 B'PA`` gives ``dK = -M2 (dM3 K + dB'PA + B'dP A + B'P dA)``
    with ``dM3 = dB'PB + B'dP B + B'P dB``.
    """
    A, B = eval_system(par, theta)
    sol = solve_dare(A, B, Q, R)
    jac = riccati_jacobians(A, B, Q, R, sol)
    P, K = sol.P, sol.K
    n, m = par.n, par.m
    M2 = np.linalg.inv(R + B.T @ P @ B)
    J = np.zeros((m * n, par.p))
    for i in range(par.p):
        dA, dB = par.A_incr[i], par.B_incr[i]
        dP = (jac.dP_dA @ vec(dA) + jac.dP_dB @ vec(dB)).reshape((n, n), order="F")
        dM3 = dB.T @ P @ B + B.T @ dP @ B + B.T @ P @ dB
        dN = dB.T @ P @ A + B.T @ dP @ A + B.T @ P @ dA
        J[:, i] = vec(-M2 @ (dM3 @ K + dN))
    return J
