"""Affinely parametrized LTV system class, parameter boxes, regression form."""

from dataclasses import dataclass

import numpy as np


def _as_matrix(M, shape, name):
    M = np.array(M, dtype=float, ndmin=2)
    if M.shape != shape:
        raise ValueError(f"{name} has shape {M.shape}, expected {shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class AffineParametrization:
    """``A(theta) = A0 + sum_i theta_i A_incr[i]``, same for ``B``."""

    A0: np.ndarray
    A_incr: np.ndarray
    B0: np.ndarray
    B_incr: np.ndarray

    def __post_init__(self):
        A0 = np.array(self.A0, dtype=float, ndmin=2)
        n = A0.shape[0]
        B0 = np.array(self.B0, dtype=float, ndmin=2)
        m = B0.shape[1]
        A0 = _as_matrix(A0, (n, n), "A0")
        B0 = _as_matrix(B0, (n, m), "B0")
        A_incr = np.array(self.A_incr, dtype=float)
        B_incr = np.array(self.B_incr, dtype=float)
        p = A_incr.shape[0] if A_incr.ndim == 3 else len(self.A_incr)
        A_incr = A_incr.reshape(p, n, n) if p else np.zeros((0, n, n))
        B_incr = B_incr.reshape(p, n, m) if p else np.zeros((0, n, m))
        if not (np.all(np.isfinite(A_incr)) and np.all(np.isfinite(B_incr))):
            raise ValueError("increments must be finite")
        for arr in (A0, B0, A_incr, B_incr):
            arr.setflags(write=False)
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "B0", B0)
        object.__setattr__(self, "A_incr", A_incr)
        object.__setattr__(self, "B_incr", B_incr)

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    @property
    def m(self) -> int:
        return self.B0.shape[1]

    @property
    def p(self) -> int:
        return self.A_incr.shape[0]

    def _theta(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.p,):
            raise ValueError(f"theta has length {theta.size}, expected {self.p}")
        return theta


def eval_system(par: AffineParametrization, theta):
    """Return ``(A(theta), B(theta))``."""
    theta = par._theta(theta)
    A = par.A0 + np.tensordot(theta, par.A_incr, axes=1)
    B = par.B0 + np.tensordot(theta, par.B_incr, axes=1)
    return A, B


@dataclass(frozen=True)
class RegressionForm:
    """View of a parametrization as ``x+ = delta(x, u) + D(x, u) @ theta``."""

    par: AffineParametrization

    def terms(self, x, u):
        return regression_terms(self, x, u)


def regression_terms(rf, x, u):
    """Return ``(delta, D)`` with ``delta + D @ theta == A(theta) x + B(theta) u``.

    ``rf`` may be a :class:`RegressionForm` or a bare parametrization.
    """
    par = rf.par if isinstance(rf, RegressionForm) else rf
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape != (par.n,) or u.shape != (par.m,):
        raise ValueError(
            f"expected x of length {par.n} and u of length {par.m}, "
            f"got {x.size} and {u.size}"
        )
    delta = par.A0 @ x + par.B0 @ u
    # column i is A_incr[i] x + B_incr[i] u
    D = (par.A_incr @ x + par.B_incr @ u).T
    return delta, D.reshape(par.n, par.p)


@dataclass(frozen=True)
class ParamBox:
    """Hyperrectangle ``[lower, upper]`` holding the unknown parameter."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError(f"empty box: lower {lo} exceeds upper {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def p(self) -> int:
        return self.lower.size

    def contains(self, theta, tol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower - tol) and np.all(theta <= self.upper + tol))

    def grid(self, per_dim: int):
        """Tensor grid with ``per_dim`` points per axis (corners included)."""
        axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(self.lower, self.upper)]
        return axes


def project(box: ParamBox, theta):
    """Euclidean projection onto the box, i.e. elementwise clipping."""
    return np.clip(np.asarray(theta, dtype=float), box.lower, box.upper)


def diameter(box: ParamBox) -> float:
    return float(np.linalg.norm(box.upper - box.lower))
