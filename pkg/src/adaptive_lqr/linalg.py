"""Dense linear-algebra helpers used by the Riccati sensitivities.

Matrices are plain ``numpy.ndarray`` objects. Vectorization is column-major
(Fortran order) everywhere in this package: ``vec(M)`` stacks the columns of
``M``. Every identity involving :func:`vec_permutation` relies on that choice.
"""

import numpy as np


def vec(M):
    """Stack the columns of ``M`` into a 1-D array."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return M.reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def kron(A, B):
    """Kronecker product; ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def vec_permutation(n: int, m: int) -> np.ndarray:
    """Permutation ``V`` with ``V @ vec(A) == vec(A.T)`` for every n-by-m ``A``."""
    if n < 1 or m < 1:
        raise ValueError(f"dimensions must be positive, got n={n}, m={m}")
    V = np.zeros((n * m, n * m))
    for i in range(n):
        for j in range(m):
            # A[i, j] sits at j*n + i in vec(A) and at i*m + j in vec(A.T)
            V[i * m + j, j * n + i] = 1.0
    return V


def spectral_norm(M) -> float:
    """Largest singular value of ``M`` (SVD based)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def spectral_radius(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def symmetrize(M):
    return 0.5 * (M + M.T)


def is_symmetric_pd(M, tol: float = 0.0) -> bool:
    """True if ``M`` is symmetric and its smallest eigenvalue exceeds ``tol``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        return False
    scale = max(1.0, float(np.max(np.abs(M))))
    if not np.allclose(M, M.T, atol=1e-10 * scale, rtol=0.0):
        return False
    return bool(np.linalg.eigvalsh(symmetrize(M))[0] > tol)
