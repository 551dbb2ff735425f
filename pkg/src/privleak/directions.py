"""Most-private and fully-private input directions.

A direction is fully private when the step never shows up in the output, i.e.
it lies in the null space of the stacked Markov parameters
``[CB; CAB; ...; CA^(N-1)B]``. Short of that, the most private unit direction
is the eigenvector for the smallest eigenvalue of ``S(tau)`` at the shift that
maximises the resulting bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bound import _tau_range, bound, candidate_bound, s_matrices
from .lti import StepScenario, SystemModel
from .numerics import TOL, rank_and_nullspace, sym_eig


class TauEigen(NamedTuple):
    tau: int
    smallest_eigenvalue: float
    candidate: float


@dataclass(frozen=True, eq=False)
class DirectionResult:
    u_star: np.ndarray
    tau_star: int
    lambda_min: float
    bound_at_norm: float
    fully_private: bool
    per_tau_eigs: tuple[TauEigen, ...]
    norm: float = 1.0


@dataclass(frozen=True, eq=False)
class ZeroDirection:
    """Candidate transmission zero ``z0`` with state and input directions."""

    z0: complex
    x_zero: np.ndarray
    u_zero: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x_zero, dtype=complex))
        u = np.atleast_1d(np.asarray(self.u_zero, dtype=complex))
        if not (np.any(x != 0) or np.any(u != 0)):
            raise ValueError("x_zero and u_zero cannot both be zero")
        object.__setattr__(self, "z0", complex(self.z0))
        object.__setattr__(self, "x_zero", x)
        object.__setattr__(self, "u_zero", u)


class ZeroCheck(NamedTuple):
    is_zero_direction: bool
    is_fully_private: bool
    state_residual: float
    output_residual: float
    observability_residual: float


def input_observability(model: SystemModel, N: int) -> np.ndarray:
    """Stack ``CB, CAB, ..., CA^(N-1)B`` into an ``(N*m, p)`` matrix."""
    if N < 1:
        raise ValueError("N must be at least 1")
    blocks = []
    AkB = model.B
    for _ in range(N):
        blocks.append(model.C @ AkB)
        AkB = model.A @ AkB
    return np.vstack(blocks)


def state_observability(model: SystemModel) -> np.ndarray:
    blocks = []
    CAk = model.C
    for _ in range(model.n):
        blocks.append(CAk)
        CAk = CAk @ model.A
    return np.vstack(blocks)


def fully_private_directions(model: SystemModel, N: int, rel_tol: float = TOL.rank) -> np.ndarray:
    """Orthonormal basis (``p x d``, possibly ``d = 0``) of inputs the output never sees."""
    _, basis = rank_and_nullspace(input_observability(model, N), rel_tol)
    return basis


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-14 * np.max(np.abs(v)))
    return -v if nz.size and v[nz[0]] < 0 else v


def most_private_direction(model: SystemModel, k_star: int, N: int, norm: float = 1.0) -> DirectionResult:
    """Unit input direction whose step of size ``norm`` is hardest to time.

    Every shift ``tau`` is tried: the smallest eigenpair of ``S(tau)`` gives
    the best direction for that shift, and the shift whose candidate bound
    ``tau^2 / expm1(norm^2 * lambda)`` is largest wins (smallest ``tau`` on
    ties).
    """
    if not norm > 0:
        raise ValueError("norm must be positive")
    taus = _tau_range(k_star, N)
    S = s_matrices(model, k_star, N)
    rows, vectors = [], []
    lam_max = 0.0
    for tau, S_tau in zip(taus, S):
        eig = sym_eig(S_tau)
        lam, v = eig.smallest
        lam = max(lam, 0.0)
        top = max(float(eig.eigenvalues[-1]), 0.0)
        lam_max = max(lam_max, top)
        floor = TOL.fully_private * norm**2 * top
        rows.append(TauEigen(tau, lam, candidate_bound(tau, norm**2 * lam, floor)))
        vectors.append(v)
    best = 0
    for i, row in enumerate(rows):
        if row.candidate > rows[best].candidate:
            best = i
    u_star = _canonical_sign(vectors[best])
    u_star = u_star / np.linalg.norm(u_star)
    lambda_min = rows[best].smallest_eigenvalue
    fully_private = lambda_min <= TOL.fully_private * lam_max
    bound_at_norm = math.inf if fully_private else bound(model, StepScenario(norm * u_star, k_star, N)).bound
    return DirectionResult(u_star, rows[best].tau, lambda_min, bound_at_norm,
                           bool(fully_private), tuple(rows), float(norm))


def verify_zero_direction(model: SystemModel, zd: ZeroDirection, tol: float = 1e-9) -> ZeroCheck:
    """Check a supplied ``(z0, x0, u0)`` against the Rosenbrock zero equations.

    ``(A - z0 I) x0 + B u0 = 0`` and ``C x0 = 0`` make it a zero direction; it
    is additionally fully private when ``x0`` is unobservable. The latter
    conclusion needs a horizon longer than the state dimension, which is the
    caller's responsibility.
    """
    x, u = zd.x_zero, zd.u_zero
    if x.shape != (model.n,) or u.shape != (model.p,):
        raise ValueError(f"zero direction needs x_zero of length {model.n} and u_zero of length {model.p}")
    state_res = float(np.linalg.norm((model.A - zd.z0 * np.eye(model.n)) @ x + model.B @ u))
    out_res = float(np.linalg.norm(model.C @ x))
    obs_res = float(np.linalg.norm(state_observability(model) @ x))
    is_zero = state_res <= tol and out_res <= tol
    return ZeroCheck(bool(is_zero), bool(is_zero and obs_res <= tol), state_res, out_res, obs_res)
