import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaptive_lqr.model import (
    AffineParametrization,
    ParamBox,
    RegressionForm,
    diameter,
    eval_system,
    project,
    regression_terms,
)
from adaptive_lqr.plant import QUADROTOR_BOX

vals = st.floats(-100, 100, allow_nan=False)


def random_par(rng, n=3, m=2, p=2):
    return AffineParametrization(
        A0=rng.normal(size=(n, n)),
        A_incr=rng.normal(size=(p, n, n)),
        B0=rng.normal(size=(n, m)),
        B_incr=rng.normal(size=(p, n, m)),
    )


def test_eval_system_base_point(quad_par):
    A, B = eval_system(quad_par, [0.0, 0.0])
    np.testing.assert_array_equal(A, quad_par.A0)
    np.testing.assert_array_equal(B, quad_par.B0)


def test_quadrotor_entries(quad_par):
    A, B = eval_system(quad_par, [0.0, 250.0])
    assert A[4, 2] == 0.0
    assert B[5, 0] == pytest.approx(0.1 * 0.25 * 250)
    assert B[5, 0] == pytest.approx(6.25)


def test_eval_system_is_affine():
    rng = np.random.default_rng(3)
    par = random_par(rng)
    t1, t2 = rng.normal(size=2), rng.normal(size=2)
    for lam in (0.5, 0.2, 0.9):
        A1, B1 = eval_system(par, t1)
        A2, B2 = eval_system(par, t2)
        Am, Bm = eval_system(par, lam * t1 + (1 - lam) * t2)
        np.testing.assert_allclose(Am, lam * A1 + (1 - lam) * A2, atol=1e-13)
        np.testing.assert_allclose(Bm, lam * B1 + (1 - lam) * B2, atol=1e-13)


def test_eval_system_dimension_mismatch(quad_par):
    with pytest.raises(ValueError):
        eval_system(quad_par, [1.0, 2.0, 3.0])


def test_regression_terms_zero():
    par = random_par(np.random.default_rng(0))
    delta, D = regression_terms(RegressionForm(par), np.zeros(3), np.zeros(2))
    assert not delta.any() and not D.any()
    assert D.shape == (3, 2)


def test_regression_identity_random():
    rng = np.random.default_rng(7)
    for _ in range(50):
        par = random_par(rng)
        x, u, theta = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)
        delta, D = regression_terms(par, x, u)
        A, B = eval_system(par, theta)
        np.testing.assert_allclose(delta + D @ theta, A @ x + B @ u, atol=1e-13)


def test_regression_quadrotor_pitch_column(quad_par):
    x = np.zeros(6)
    x[2] = 1.0
    _, D = regression_terms(quad_par, x, np.zeros(2))
    np.testing.assert_allclose(D[:, 0], [0, 0, 0, 0, -0.1, 0])


def test_regression_dimension_mismatch(quad_par):
    with pytest.raises(ValueError):
        regression_terms(quad_par, np.zeros(5), np.zeros(2))


def test_project_examples():
    assert np.array_equal(project(QUADROTOR_BOX, [1.0, 100.0]), [1.0, 100.0])
    np.testing.assert_array_equal(project(QUADROTOR_BOX, [-12.0, 700.0]), [-10.0, 500.0])


def test_project_is_nearest_point_sampled():
    rng = np.random.default_rng(11)
    box = QUADROTOR_BOX
    for _ in range(20):
        theta = rng.normal(size=2) * [20, 400] + [0, 275]
        proj = project(box, theta)
        samples = rng.uniform(box.lower, box.upper, size=(1000, 2))
        dist = np.linalg.norm(samples - theta, axis=1)
        assert np.linalg.norm(proj - theta) <= dist.min() + 1e-12


@settings(max_examples=100)
@given(arrays(float, 2, elements=vals), arrays(float, 2, elements=vals))
def test_project_idempotent_nonexpansive(a, b):
    box = ParamBox([-1.0, 0.0], [1.0, 5.0])
    pa, pb = project(box, a), project(box, b)
    np.testing.assert_array_equal(project(box, pa), pa)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
    assert box.contains(pa)


def test_diameter():
    assert diameter(ParamBox([0, 0], [1, 1])) == pytest.approx(math.sqrt(2))
    assert diameter(QUADROTOR_BOX) == pytest.approx(math.sqrt(202900.0))
    assert diameter(QUADROTOR_BOX) == pytest.approx(450.444, abs=1e-3)
    assert diameter(ParamBox([2.0], [2.0])) == 0.0


def test_box_validation():
    with pytest.raises(ValueError):
        ParamBox([1.0], [0.0])
    with pytest.raises(ValueError):
        ParamBox([0.0, 1.0], [1.0])
