"""Steady-state input design with a privacy regulariser.

The nominal design picks the cheapest equilibrium meeting a reference,

    min  x'Qx + u'Ru   s.t.  x = Ax + Bu,  C1 x = r,

and the private design adds ``mu * u' S(tau*) u`` to the cost, where
``tau*`` is the maximising shift of the bound at the nominal input. Comparing
the two solutions gives the certificate

    mu * u*' S u*  >=  mu * delta  >=  epsilon,

with ``epsilon`` the cost increase and ``delta`` the exponent reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bound import bound, candidate_bound, s_matrix
from .lti import ShapeError, StepScenario, SystemModel, steady_state_gain
from .numerics import TOL, NumericalError, as_matrix, cholesky, rank_and_nullspace, solve_linear

CHAIN_SLACK = 1e-8
EPSILON_SLACK = 1e-9
KKT_RESIDUAL = 1e-9


class Infeasible(NumericalError):
    pass


class AlreadyFullyPrivate(ValueError):
    """The nominal input leaks nothing, so there is no privacy cost to budget."""


@dataclass(frozen=True, eq=False)
class SteadyStateProgram:
    Q: np.ndarray
    R: np.ndarray
    C1: np.ndarray
    r: np.ndarray
    mu: float = 0.0

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R, "R")
        C1 = np.atleast_2d(np.asarray(self.C1, dtype=float))
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        cholesky(Q)
        cholesky(R)
        if C1.shape[0] != r.size:
            raise ShapeError(f"C1 has {C1.shape[0]} rows but r has {r.size} entries")
        if C1.shape[1] != Q.shape[0]:
            raise ShapeError(f"C1 has {C1.shape[1]} columns but Q is {Q.shape[0]}x{Q.shape[0]}")
        if C1.shape[0] >= R.shape[0]:
            raise ValueError(f"C1 must have fewer rows than there are inputs (q={C1.shape[0]}, p={R.shape[0]})")
        mu = float(self.mu)
        if not (mu >= 0 and math.isfinite(mu)):
            raise ValueError("mu must be a finite non-negative number")
        for name, value in (("Q", Q), ("R", R), ("C1", C1), ("r", r), ("mu", mu)):
            object.__setattr__(self, name, value)

    def with_mu(self, mu: float) -> "SteadyStateProgram":
        return SteadyStateProgram(self.Q, self.R, self.C1, self.r, mu)

    def cost(self, x: np.ndarray, u: np.ndarray) -> float:
        return float(x @ self.Q @ x + u @ self.R @ u)


@dataclass(frozen=True, eq=False)
class SteadyStateSolution:
    x: np.ndarray
    u: np.ndarray
    J: float


def _check_dims(program: SteadyStateProgram, model: SystemModel) -> None:
    if program.Q.shape != (model.n, model.n):
        raise ShapeError(f"Q must be {model.n}x{model.n}, got {program.Q.shape}")
    if program.R.shape != (model.p, model.p):
        raise ShapeError(f"R must be {model.p}x{model.p}, got {program.R.shape}")


def _reduced(program: SteadyStateProgram, model: SystemModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``G = (I-A)^-1 B``, the input-space Hessian ``G'QG + R`` and ``E = C1 G``."""
    _check_dims(program, model)
    G = steady_state_gain(model)
    E = program.C1 @ G
    rank, _ = rank_and_nullspace(E.T)
    if rank < E.shape[0]:
        raise Infeasible(f"C1 (I-A)^-1 B has rank {rank} < {E.shape[0]}; the reference cannot be met")
    return G, G.T @ program.Q @ G + program.R, E


def _kkt(H: np.ndarray, E: np.ndarray, top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    """Primal part of ``[[H, E'], [E, 0]] [u; lam] = [top; bottom]``."""
    q, p = E.shape
    H = (H + H.T) / 2.0
    K = np.block([[H, E.T], [E, np.zeros((q, q))]])
    rhs = np.concatenate([top, bottom])
    sol = solve_linear(K, rhs)
    residual = np.linalg.norm(K @ sol - rhs)
    if residual > KKT_RESIDUAL * max(1.0, np.linalg.norm(K) * np.linalg.norm(sol)):
        raise NumericalError(f"KKT residual {residual:.3g} too large")
    return sol[:p]


def _solve(program: SteadyStateProgram, model: SystemModel, extra: np.ndarray | None) -> SteadyStateSolution:
    G, H, E = _reduced(program, model)
    if extra is not None:
        H = H + extra
    u = _kkt(H, E, np.zeros(model.p), program.r)
    x = G @ u
    return SteadyStateSolution(x, u, float(u @ H @ u) if extra is not None else program.cost(x, u))


def solve_nominal(program: SteadyStateProgram, model: SystemModel) -> SteadyStateSolution:
    """Cheapest equilibrium ``(x, u)`` meeting ``C1 x = r``; ``J = x'Qx + u'Ru``."""
    return _solve(program, model, None)


def solve_private(program: SteadyStateProgram, model: SystemModel, S_tau_star) -> SteadyStateSolution:
    """Regularised equilibrium; the returned ``J`` includes ``mu * u' S u``."""
    S = np.asarray(S_tau_star, dtype=float)
    if S.shape != (model.p, model.p):
        raise ShapeError(f"S must be {model.p}x{model.p}, got {S.shape}")
    return _solve(program, model, program.mu * S)


@dataclass(frozen=True, eq=False)
class TradeoffReport:
    x_star: np.ndarray
    u_star: np.ndarray
    x_p: np.ndarray
    u_p: np.ndarray
    J_star: float
    J_p: float
    epsilon: float
    delta: float
    mu: float
    privacy_cost: float
    tau_star_nominal: int
    bound_nominal: float
    bound_private_fixed_tau: float
    bound_private_full_search: float
    tau_star_private: int

    @property
    def tradeoff_ratio(self) -> float:
        """``epsilon / delta``; NaN when there was no privacy gain."""
        return self.epsilon / self.delta if self.delta > 0 else math.nan

    def certificates(self) -> dict[str, bool]:
        return {
            "epsilon_nonnegative": self.epsilon >= -EPSILON_SLACK,
            "cost_dominates_gain": self.mu * self.privacy_cost >= self.mu * self.delta - CHAIN_SLACK,
            "gain_dominates_loss": self.mu * self.delta >= self.epsilon - CHAIN_SLACK,
        }

    @property
    def certified(self) -> bool:
        return all(self.certificates().values())


def tradeoff_report(model: SystemModel, program: SteadyStateProgram, k_star: int, N: int) -> TradeoffReport:
    """Solve both programs and compare them through the privacy bound.

    ``tau*`` is frozen at the maximiser for the nominal input. The private
    input is also re-scored with a fresh search over all shifts because the
    maximising shift can move once the input direction changes.
    """
    G, H, E = _reduced(program, model)
    nominal = solve_nominal(program, model)
    b_nom = bound(model, StepScenario(nominal.u, k_star, N))
    tau = b_nom.tau_star
    S = s_matrix(model, tau, k_star, N)
    # The shift d = u_p - u* lives in null(E); with d = Z w the private design
    # is the reduced SPD system Z'(H + mu S)Z w = -mu Z'S u*. Optimality of u*
    # makes d'Hu* vanish, so epsilon = d'Hd and delta = -2 d'Su* - d'Sd are
    # small quadratic forms rather than differences of large costs, and
    # mu*delta - epsilon = d'(H + mu S)d >= 0 survives roundoff.
    Su = S @ nominal.u
    _, Z = rank_and_nullspace(E)
    w = solve_linear(Z.T @ (H + program.mu * S) @ Z, -program.mu * (Z.T @ Su))
    d = Z @ w
    u_p = nominal.u + d
    x_p = G @ u_p
    J_p = program.cost(x_p, u_p)
    cost_star = float(nominal.u @ Su)
    cost_p = float(u_p @ S @ u_p)
    epsilon = float(d @ H @ d)
    delta = float(-2.0 * (d @ Su) - d @ S @ d)
    b_priv = bound(model, StepScenario(u_p, k_star, N))
    return TradeoffReport(
        x_star=nominal.x, u_star=nominal.u, x_p=x_p, u_p=u_p,
        J_star=nominal.J, J_p=J_p,
        epsilon=epsilon,
        delta=delta,
        mu=program.mu,
        privacy_cost=cost_star,
        tau_star_nominal=tau,
        bound_nominal=b_nom.bound,
        bound_private_fixed_tau=candidate_bound(tau, cost_p, TOL.fully_private * float(u_p @ u_p) * np.trace(S)),
        bound_private_full_search=b_priv.bound,
        tau_star_private=b_priv.tau_star,
    )


def tradeoff_respected(mu: float, epsilon: float, delta: float, slack: float = CHAIN_SLACK) -> bool:
    """``mu * delta >= epsilon``: mu caps the utility lost per unit of privacy gained."""
    return mu * delta >= epsilon - slack


def mu_for_budget(epsilon_bar: float, S_tau_star, u_star) -> float:
    """Regularisation weight that keeps the cost increase within ``epsilon_bar``."""
    if epsilon_bar < 0:
        raise ValueError("epsilon_bar must be non-negative")
    u = np.asarray(u_star, dtype=float)
    cost = float(u @ np.asarray(S_tau_star, dtype=float) @ u)
    if not math.isfinite(cost):
        raise ValueError("privacy cost u' S u is not finite")
    if cost <= TOL.already_private:
        raise AlreadyFullyPrivate(f"u' S u = {cost:.3g}; the nominal input is already fully private")
    return epsilon_bar / cost
