import math

import numpy as np
import pytest

from adaptive_lqr.dare import (
    DareError,
    DareInputError,
    MarginalStabilityError,
    RiccatiSolution,
    dare_residual,
    gain_jacobian_chain,
    gain_jacobian_fd,
    riccati_jacobians,
    solve_dare,
    z_matrices,
)
from adaptive_lqr.linalg import spectral_radius, unvec, vec
from adaptive_lqr.model import AffineParametrization, eval_system

from conftest import random_stabilizable_systems

GOLDEN = (1 + math.sqrt(5)) / 2


def fd_riccati(A, B, Q, R, h=1e-6):
    """Central differences of the solver output, independent of the closed form."""
    n, m = B.shape
    dA = np.zeros((n * n, n * n))
    for j in range(n * n):
        E = unvec(np.eye(n * n)[j] * h, n, n)
        dA[:, j] = (vec(solve_dare(A + E, B, Q, R).P) - vec(solve_dare(A - E, B, Q, R).P)) / (2 * h)
    dB = np.zeros((n * n, n * m))
    for j in range(n * m):
        E = unvec(np.eye(n * m)[j] * h, n, m)
        dB[:, j] = (vec(solve_dare(A, B + E, Q, R).P) - vec(solve_dare(A, B - E, Q, R).P)) / (2 * h)
    return dA, dB


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_scalar_golden_ratio():
    sol = solve_dare(1.0, 1.0, 1.0, 1.0)
    assert sol.P[0, 0] == pytest.approx(GOLDEN, abs=1e-12)
    assert sol.K[0, 0] == pytest.approx(-1 / GOLDEN, abs=1e-12)
    assert sol.K[0, 0] == pytest.approx(-0.6180339887, abs=1e-10)


def test_zero_dynamics_gives_Q():
    Q = np.diag([2.0, 3.0])
    sol = solve_dare(np.zeros((2, 2)), np.ones((2, 1)), Q, np.eye(1))
    np.testing.assert_allclose(sol.P, Q, atol=1e-14)
    np.testing.assert_allclose(sol.K, 0.0, atol=1e-14)


def test_quadrotor_solution(quad_par, quad_weights):
    A, B = eval_system(quad_par, [0.0, 250.0])
    sol = solve_dare(A, B, *quad_weights)
    assert sol.residual <= 1e-10
    assert spectral_radius(A + B @ sol.K) < 1
    np.testing.assert_allclose(sol.P, sol.P.T, atol=1e-10)
    assert np.linalg.eigvalsh(sol.P)[0] > 0


def test_solution_invariants_on_random_systems():
    for A, B, Q, R in random_stabilizable_systems(10, seed=5):
        sol = solve_dare(A, B, Q, R)
        assert isinstance(sol, RiccatiSolution)
        assert sol.residual <= 1e-10 * (1 + np.linalg.norm(sol.P))
        assert dare_residual(A, B, Q, R, sol.P) == pytest.approx(sol.residual)
        assert spectral_radius(A + B @ sol.K) < 1
        # exact LQR decrease for the frozen closed loop
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.normal(size=A.shape[0])
            xn = (A + B @ sol.K) @ x
            lhs = xn @ sol.P @ xn - x @ sol.P @ x
            rhs = -x @ (Q + sol.K.T @ R @ sol.K) @ x
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * (x @ sol.P @ x))


def test_monotone_in_Q():
    for A, B, Q, R in random_stabilizable_systems(6, seed=9):
        low = np.linalg.eigvalsh(solve_dare(A, B, Q, R).P)[0]
        high = np.linalg.eigvalsh(solve_dare(A, B, 3.0 * Q, R).P)[0]
        assert high >= low - 1e-10


def test_not_stabilizable_raises():
    with pytest.raises(DareError, match="did not converge") as info:
        solve_dare(2.0, 0.0, 1.0, 1.0)
    assert info.value.residual == math.inf or info.value.residual > 0
    # an uncontrollable unstable mode in a larger system
    A = np.diag([1.5, 0.5])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(DareError):
        solve_dare(A, B, np.eye(2), np.eye(1))


def test_invalid_weights():
    with pytest.raises(DareInputError):
        solve_dare(1.0, 1.0, -1.0, 1.0)
    with pytest.raises(DareInputError):
        solve_dare(np.eye(2), np.ones((2, 1)), np.eye(2), np.zeros((1, 1)))
    with pytest.raises(DareInputError):
        solve_dare(np.eye(2), np.ones((2, 1)), np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))


def test_unstable_but_stabilizable_uses_valid_solution():
    # marginal open loop, plain doubling converges
    sol = solve_dare(np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[0.0], [1.0]]), np.eye(2), np.eye(1))
    assert sol.closed_loop_radius < 1


def test_scalar_jacobian_matches_fd():
    sol = solve_dare(1.0, 1.0, 1.0, 1.0)
    jac = riccati_jacobians(1.0, 1.0, 1.0, 1.0, sol)
    dA, dB = fd_riccati(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    assert rel_err(jac.dP_dA, dA) <= 1e-5
    assert rel_err(jac.dP_dB, dB) <= 1e-5


def test_first_order_taylor_at_zero_dynamics():
    A = np.zeros((2, 2))
    B = np.array([[1.0], [0.5]])
    Q, R = np.diag([1.0, 2.0]), np.eye(1)
    sol = solve_dare(A, B, Q, R)
    jac = riccati_jacobians(A, B, Q, R, sol)
    E = np.array([[0.3, -0.2], [0.1, 0.4]])
    errors = []
    for h in (1e-2, 5e-3, 2.5e-3):
        predicted = sol.P + h * unvec(jac.dP_dA @ vec(E), 2, 2)
        errors.append(np.linalg.norm(solve_dare(A + h * E, B, Q, R).P - predicted))
    # the remainder is o(h): halving h should shrink it by about four
    assert errors[1] < errors[0] / 3 and errors[2] < errors[1] / 3


def test_two_forms_of_Z1_agree():
    for A, B, Q, R in random_stabilizable_systems(10, seed=21, max_n=2, max_m=2):
        sol = solve_dare(A, B, Q, R)
        Z1, _, _ = z_matrices(A, B, Q, R, sol)
        Acl = A + B @ sol.K
        alt = np.eye(A.shape[0] ** 2) - np.kron(Acl.T, Acl.T)
        np.testing.assert_allclose(Z1, alt, atol=1e-10)


def test_jacobians_match_fd_on_random_systems():
    for A, B, Q, R in random_stabilizable_systems(10, seed=42):
        sol = solve_dare(A, B, Q, R)
        jac = riccati_jacobians(A, B, Q, R, sol)
        dA, dB = fd_riccati(A, B, Q, R)
        assert rel_err(jac.dP_dA, dA) <= 1e-5
        assert rel_err(jac.dP_dB, dB) <= 1e-5


def test_marginal_stability_detected():
    # an uncontrollable mode just inside the unit circle makes Z1 nearly singular
    A = np.diag([1.0 - 1e-14, 0.5])
    B = np.array([[0.0], [1.0]])
    sol = solve_dare(A, B, np.eye(2), np.eye(1))
    with pytest.raises(MarginalStabilityError, match="marginally stable"):
        riccati_jacobians(A, B, np.eye(2), np.eye(1), sol)


def test_gain_jacobian_fd_zero_for_constant_par():
    par = AffineParametrization(A0=[[1.0]], A_incr=np.zeros((2, 1, 1)), B0=[[1.0]],
                                B_incr=np.zeros((2, 1, 1)))
    J = gain_jacobian_fd(par, [0.3, 0.1], np.eye(1), np.eye(1), h=1e-4)
    np.testing.assert_array_equal(J, 0.0)


def test_gain_jacobian_scalar_matches_chain():
    par = AffineParametrization(A0=[[0.0]], A_incr=[[[1.0]]], B0=[[1.0]], B_incr=[[[0.0]]])
    fd = gain_jacobian_fd(par, [0.5], np.eye(1), np.eye(1), h=1e-5)
    chain = gain_jacobian_chain(par, [0.5], np.eye(1), np.eye(1))
    assert rel_err(fd, chain) <= 1e-4


def test_gain_jacobian_quadrotor_richardson(quad_par, quad_weights):
    J1 = gain_jacobian_fd(quad_par, [0.0, 250.0], *quad_weights, h=1e-4)
    J2 = gain_jacobian_fd(quad_par, [0.0, 250.0], *quad_weights, h=5e-5)
    assert np.all(np.isfinite(J1))
    assert rel_err(J1, J2) <= 1e-3
    chain = gain_jacobian_chain(quad_par, [0.0, 250.0], *quad_weights)
    assert rel_err(J1, chain) <= 1e-4


def test_gain_jacobian_rejects_bad_step(quad_par, quad_weights):
    with pytest.raises(ValueError):
        gain_jacobian_fd(quad_par, [0.0, 250.0], *quad_weights, h=0.0)
