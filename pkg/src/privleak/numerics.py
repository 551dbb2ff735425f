"""Dense linear-algebra kernels.

Everything here works on plain ``numpy`` arrays as storage but does the
factorizations itself (Cholesky, pivoted Gaussian elimination, cyclic Jacobi),
so the analysis code has no dependency on LAPACK behaviour for its decisions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by the library, the tests and the CLI."""

    symmetry: float = 1e-12
    cholesky_pivot: float = 1e-14
    singular_pivot: float = 1e-14
    jacobi_offdiag: float = 1e-12
    jacobi_max_sweeps: int = 100
    rank: float = 1e-10
    stability_margin: float = 1e-9
    exponent_overflow: float = 700.0
    exponent_underflow: float = 1e-300
    fully_private: float = 1e-10
    tie: float = 1e-12
    already_private: float = 1e-14


TOL = Tolerances()


class NumericalError(ArithmeticError):
    """Base class for numerical failures (mapped to exit code 3 by the CLI)."""


class NotPositiveDefinite(NumericalError, ValueError):
    pass


class NotSymmetric(NumericalError, ValueError):
    pass


class Singular(NumericalError):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _check_symmetric(S: np.ndarray, tol: float) -> None:
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > tol * scale:
        raise NotSymmetric("matrix is not symmetric")


def cholesky(S, tol: Tolerances = TOL) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == S``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot drops to ``tol.cholesky_pivot * max(diag(S))`` or below.
    """
    S = np.asarray(S, dtype=float)
    _check_symmetric(S, tol.symmetry)
    n = S.shape[0]
    floor = tol.cholesky_pivot * max(float(np.max(np.diag(S))), 0.0)
    L = np.zeros_like(S)
    for j in range(n):
        pivot = S[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > floor:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3g}; matrix is not positive definite")
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution for lower-triangular ``L``; ``b`` may hold many columns."""
    b = np.asarray(b, dtype=float)
    x = np.array(b, dtype=float, copy=True)
    for i in range(L.shape[0]):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def solve_linear(A, b, tol: Tolerances = TOL) -> np.ndarray:
    """Solve ``A x = b`` by Gaussian elimination with row pivoting.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = np.array(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if b.shape[0] != n:
        raise ValueError(f"b has {b.shape[0]} rows, A has {n}")
    x = np.array(b, dtype=float, copy=True)
    row_norm = float(np.max(np.linalg.norm(A, axis=1))) if n else 0.0
    floor = tol.singular_pivot * row_norm
    for j in range(n):
        piv = j + int(np.argmax(np.abs(A[j:, j])))
        if not abs(A[piv, j]) > floor:
            raise Singular(f"pivot {j} below {floor:.3g}; matrix is singular")
        if piv != j:
            A[[j, piv]] = A[[piv, j]]
            x[[j, piv]] = x[[piv, j]]
        factors = A[j + 1:, j] / A[j, j]
        A[j + 1:, j:] -= np.outer(factors, A[j, j:])
        x[j + 1:] -= np.multiply.outer(factors, x[j])
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def smallest(self) -> tuple[float, np.ndarray]:
        return float(self.eigenvalues[0]), self.eigenvectors[:, 0]


def sym_eig(S, tol: Tolerances = TOL) -> EigenDecomposition:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues come back in ascending order with matching unit-norm columns.
    """
    S = np.asarray(S, dtype=float)
    _check_symmetric(S, tol.symmetry)
    a = (S + S.T) / 2.0
    n = a.shape[0]
    V = np.eye(n)
    threshold = tol.jacobi_offdiag * float(np.linalg.norm(S))
    for _ in range(tol.jacobi_max_sweeps):
        off = np.abs(a - np.diag(np.diag(a)))
        if n < 2 or off.max() < threshold or off.max() == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NumericalError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], V[:, order])


def rank_and_nullspace(M, rel_tol: float = TOL.rank) -> tuple[int, np.ndarray]:
    """Numerical rank and an orthonormal basis of the right null space.

    The basis comes from the eigenvectors of ``M.T @ M``. Singular values are
    then re-measured as ``||M v||`` instead of taking square roots of the
    eigenvalues, because forming ``M.T @ M`` squares the condition number and
    would otherwise hide singular values below about ``1e-8 * sigma_max``.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    cols = M.shape[1]
    V = sym_eig(M.T @ M).eigenvectors
    sigma = np.linalg.norm(M @ V, axis=0)
    sigma_max = float(sigma.max()) if cols else 0.0
    null = sigma <= rel_tol * sigma_max
    return int(cols - null.sum()), V[:, null]


def spectral_radius(A: np.ndarray) -> float:
    """Spectral radius from Gelfand's formula on repeated squaring.

    ``||A^(2^k)||^(1/2^k)`` decreases towards rho(A); the squared iterate is
    rescaled every step so it cannot overflow.
    """
    A = np.asarray(A, dtype=float)
    P = A.copy()
    log_scale = 0.0
    estimate = float(np.linalg.norm(A, 2)) if A.size else 0.0
    for k in range(1, 40):
        nrm = float(np.linalg.norm(P, 2))
        if nrm == 0.0:
            return 0.0
        P = P / nrm
        log_scale = 2.0 * (log_scale + np.log(nrm))
        P = P @ P
        power = 2.0 ** k
        nrm_p = float(np.linalg.norm(P, 2))
        if nrm_p == 0.0:
            return 0.0
        new = float(np.exp((log_scale + np.log(nrm_p)) / power))
        if abs(new - estimate) <= 1e-13 * max(new, 1e-300):
            return new
        estimate = min(estimate, new)
    return estimate
