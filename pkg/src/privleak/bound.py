"""Chapman-Robbins lower bound on the variance of change-time estimators.

For a step of size ``u`` switched on at ``k_star`` and a candidate shift
``tau``, the output means under change times ``k_star`` and ``k_star + tau``
differ by ``C Atilde(k, tau) B u`` at each sample ``k``. The whitened energy of
that difference is the exponent ``u' S(tau) u`` and every unbiased estimator
of the change time satisfies

    Var >= max_tau  tau^2 / (exp(u' S(tau) u) - 1),    tau = 1 .. N - k_star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lti import StepScenario, SystemModel, _check_input, simulate_noiseless
from .numerics import TOL, solve_lower


class EmptyTauRange(ValueError):
    """The horizon ends at the change time, so no shift can be compared."""


class TauCandidate(NamedTuple):
    tau: int
    exponent: float
    candidate: float


@dataclass(frozen=True, eq=False)
class BoundResult:
    tau_star: int
    bound: float
    per_tau: tuple[TauCandidate, ...]

    @property
    def exponents(self) -> np.ndarray:
        return np.array([c.exponent for c in self.per_tau])

    @property
    def candidates(self) -> np.ndarray:
        return np.array([c.candidate for c in self.per_tau])


def candidate_bound(tau: int, exponent: float, zero_floor: float = 0.0) -> float:
    """``tau^2 / expm1(exponent)`` with IEEE-safe handling of both extremes.

    Exponents at or below ``zero_floor`` are roundoff on an exactly private
    input and count as zero, giving an infinite bound.
    """
    if exponent > TOL.exponent_overflow:
        return 0.0
    if exponent < TOL.exponent_underflow or exponent <= zero_floor:
        return math.inf
    return tau * tau / math.expm1(exponent)


def select_tau(taus, exponents, zero_floors=None) -> BoundResult:
    if zero_floors is None:
        zero_floors = [0.0] * len(exponents)
    per_tau = tuple(TauCandidate(int(t), float(e), candidate_bound(int(t), float(e), float(z)))
                    for t, e, z in zip(taus, exponents, zero_floors))
    best = per_tau[0]
    for c in per_tau[1:]:
        if c.candidate > best.candidate:
            best = c
    return BoundResult(best.tau, best.candidate, per_tau)


def _tau_range(k_star: int, N: int) -> range:
    if N <= k_star:
        raise EmptyTauRange(f"no tau candidates: N={N} must exceed k_star={k_star}")
    return range(1, N - k_star + 1)


def a_tilde(model: SystemModel, k: int, tau: int, k_star: int) -> np.ndarray:
    """``sum_{l=k_star}^{min(k_star+tau-1, k-1)} A^(k-1-l)``."""
    if k <= k_star:
        raise IndexError(f"a_tilde needs k > k_star, got k={k}, k_star={k_star}")
    if tau < 1:
        raise ValueError("tau must be positive")
    j = k - k_star
    lo = max(j - tau, 0)
    power = np.eye(model.n)
    for _ in range(lo):
        power = model.A @ power
    total = np.zeros((model.n, model.n))
    for _ in range(lo, j):
        total += power
        power = model.A @ power
    return total


def whitened_step_sums(model: SystemModel, count: int) -> np.ndarray:
    """``L^-1 C (I + A + ... + A^(j-1)) B`` for ``j = 0..count``, shape ``(count+1, m, p)``.

    ``L`` is the Cholesky factor of the noise covariance; entry ``j`` is the
    whitened output deviation ``j`` samples after a unit step switches on.
    """
    out = np.zeros((count + 1, model.m, model.p))
    AiB = model.B.copy()
    acc = np.zeros((model.n, model.p))
    for j in range(1, count + 1):
        acc += AiB
        AiB = model.A @ AiB
        out[j] = model.C @ acc
    flat = out.transpose(1, 0, 2).reshape(model.m, -1)
    flat = solve_lower(model.noise_chol, flat)
    return flat.reshape(model.m, count + 1, model.p).transpose(1, 0, 2)


def s_matrices(model: SystemModel, k_star: int, N: int) -> np.ndarray:
    """``S(tau)`` for every ``tau`` in ``1..N-k_star``, stacked as ``(N-k_star, p, p)``.

    ``C Atilde(k, tau) B`` is the difference of two step-response sums, so all
    shifts are assembled from one pass over the Markov parameters.
    """
    J = len(_tau_range(k_star, N))
    Z = whitened_step_sums(model, J)
    j = np.arange(1, J + 1)
    out = np.empty((J, model.p, model.p))
    for tau in range(1, J + 1):
        D = Z[j] - Z[np.maximum(j - tau, 0)]
        S = np.einsum("kmp,kmq->pq", D, D)
        out[tau - 1] = (S + S.T) / 2.0
    return out


def s_matrix(model: SystemModel, tau: int, k_star: int, N: int) -> np.ndarray:
    if not 1 <= tau <= N - k_star:
        raise ValueError(f"tau={tau} outside 1..{N - k_star}")
    Z = whitened_step_sums(model, N - k_star)
    j = np.arange(1, N - k_star + 1)
    D = Z[j] - Z[np.maximum(j - tau, 0)]
    S = np.einsum("kmp,kmq->pq", D, D)
    return (S + S.T) / 2.0


def bound(model: SystemModel, scenario: StepScenario) -> BoundResult:
    """Chapman-Robbins bound for an unbiased estimator of ``scenario.k_star``."""
    _check_input(model, scenario.u)
    taus = _tau_range(scenario.k_star, scenario.N)
    S = s_matrices(model, scenario.k_star, scenario.N)
    u = scenario.u
    exponents = np.einsum("p,tpq,q->t", u, S, u)
    # trace(S) bounds the largest eigenvalue, so this is a relative zero test
    floors = TOL.fully_private * float(u @ u) * np.trace(S, axis1=1, axis2=2)
    return select_tau(taus, exponents, floors)


def bound_oracle(model: SystemModel, scenario: StepScenario) -> BoundResult:
    """Same bound, computed straight from the two competing mean trajectories.

    For each ``tau`` the noiseless outputs for change times ``k_star`` and
    ``k_star + tau`` are simulated, their difference is whitened sample by
    sample and the squared norms are summed. Kept as an independent check on
    :func:`bound`; it is O(N^2) simulations and not meant for production use.
    """
    taus = _tau_range(scenario.k_star, scenario.N)
    base = simulate_noiseless(model, scenario)
    exponents = []
    for tau in taus:
        shifted = simulate_noiseless(model, scenario.with_change_time(scenario.k_star + tau))
        exponent = 0.0
        for diff in base - shifted:
            w = solve_lower(model.noise_chol, diff)
            exponent += float(w @ w)
        exponents.append(exponent)
    return select_tau(taus, exponents)
