"""Random test systems and brute-force reference computations.

The reference routines here use explicit matrix powers and explicit inverses
on purpose: they must not share code paths with the library.
"""

import numpy as np

from privleak import SystemModel


def random_spd(rng, m, floor=0.5):
    G = rng.normal(size=(m, m))
    return G @ G.T + floor * np.eye(m)


def random_stable(rng, n, p, m, radius=None):
    A = rng.normal(size=(n, n))
    rho = max(abs(np.linalg.eigvals(A)))
    A *= (rng.uniform(0.3, 0.95) if radius is None else radius) / rho
    return SystemModel(A, rng.normal(size=(n, p)), rng.normal(size=(m, n)), random_spd(rng, m))


def brute_a_tilde(A, k, tau, k_star):
    n = A.shape[0]
    total = np.zeros((n, n))
    for l in range(k_star, min(k_star + tau - 1, k - 1) + 1):
        total += np.linalg.matrix_power(A, k - 1 - l)
    return total


def brute_s_matrix(model, tau, k_star, N):
    W = np.linalg.inv(np.asarray(model.sigma_e))
    p = model.p
    S = np.zeros((p, p))
    for k in range(k_star + 1, N + 1):
        M = model.C @ brute_a_tilde(model.A, k, tau, k_star) @ model.B
        S += M.T @ W @ M
    return S


def principal_angle(U, V):
    """Largest principal angle between the column spans of U and V.

    Uses the sine form ||(I - Qu Qu') Qv||; arccos of the cosines cannot
    resolve angles below ~1e-8.
    """
    if U.shape[1] == 0 and V.shape[1] == 0:
        return 0.0
    if U.shape[1] != V.shape[1]:
        return float(np.pi / 2)
    Qu, _ = np.linalg.qr(U)
    Qv, _ = np.linalg.qr(V)
    resid = Qv - Qu @ (Qu.T @ Qv)
    return float(np.arcsin(min(1.0, np.linalg.norm(resid, 2))))


def rank_deficient_system(rng, n=3, m=2):
    """Two input columns that are exact opposites, so (1, 1) is never seen."""
    A = rng.normal(size=(n, n))
    A *= 0.8 / max(abs(np.linalg.eigvals(A)))
    b = rng.normal(size=(n, 1))
    B = np.hstack([b, -b, rng.normal(size=(n, 1))])
    return SystemModel(A, B, rng.normal(size=(m, n)), random_spd(rng, m))
