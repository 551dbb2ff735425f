"""Discrete-time LTI plant with additive Gaussian measurement noise.

    x[k+1] = A x[k] + B u[k]
    y[k]   = C x[k] + e[k],    e[k] ~ N(0, sigma_e)

The input is a step: ``u[k] = 0`` before the change time ``k_star`` and ``u``
from then on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import TOL, NumericalError, as_matrix, cholesky, solve_linear, spectral_radius


class ShapeError(ValueError):
    pass


class Unstable(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sigma_e: np.ndarray
    stable: bool = field(init=False)
    noise_chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        S = as_matrix(self.sigma_e, "sigma_e")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ShapeError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ShapeError(f"B has {B.shape[0]} rows but A is {n}x{n}")
        if C.shape[1] != n:
            raise ShapeError(f"C has {C.shape[1]} columns but A is {n}x{n}")
        m = C.shape[0]
        if S.shape != (m, m):
            raise ShapeError(f"sigma_e must be {m}x{m} to match C, got {S.shape}")
        for name, value in (("A", A), ("B", B), ("C", C), ("sigma_e", S)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        L = cholesky(S)
        L.setflags(write=False)
        object.__setattr__(self, "noise_chol", L)
        rho = spectral_radius(A)
        object.__setattr__(self, "stable", bool(rho < 1.0 - TOL.stability_margin))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True, eq=False)
class StepScenario:
    u: np.ndarray
    k_star: int
    N: int
    x0: np.ndarray | None = None

    def __post_init__(self):
        u = np.atleast_1d(np.array(self.u, dtype=float))
        if u.ndim != 1 or not np.all(np.isfinite(u)):
            raise ValueError("u must be a finite vector")
        k_star, N = int(self.k_star), int(self.N)
        if k_star < 0:
            raise ValueError("k_star must be non-negative")
        if N < k_star:
            raise ValueError(f"horizon N={N} is shorter than k_star={k_star}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "k_star", k_star)
        object.__setattr__(self, "N", N)
        if self.x0 is not None:
            x0 = np.atleast_1d(np.array(self.x0, dtype=float))
            if not np.all(np.isfinite(x0)):
                raise ValueError("x0 must be finite")
            object.__setattr__(self, "x0", x0)

    def initial_state(self, n: int) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(n)
        if self.x0.shape != (n,):
            raise ShapeError(f"x0 has length {self.x0.size}, model has {n} states")
        return self.x0

    def with_change_time(self, k_star: int) -> "StepScenario":
        return StepScenario(self.u, k_star, max(self.N, k_star), self.x0)


def _check_input(model: SystemModel, u: np.ndarray) -> None:
    if u.shape != (model.p,):
        raise ShapeError(f"u has length {u.size}, model has {model.p} inputs")


def simulate_noiseless(model: SystemModel, scenario: StepScenario) -> np.ndarray:
    """Outputs ``y[0..N]`` as an ``(N+1, m)`` array with the noise switched off."""
    _check_input(model, scenario.u)
    x = scenario.initial_state(model.n).copy()
    Bu = model.B @ scenario.u
    y = np.empty((scenario.N + 1, model.m))
    for k in range(scenario.N + 1):
        y[k] = model.C @ x
        x = model.A @ x
        if k >= scenario.k_star:
            x = x + Bu
    return y


def noise_generator(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed``.

    Draws are taken row by row, so the noise sample at time ``k`` depends only
    on ``(seed, k)`` and the output dimension.
    """
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**128 - 1)))


def measurement_noise(model: SystemModel, length: int, seed: int) -> np.ndarray:
    z = noise_generator(seed).standard_normal((length, model.m))
    return z @ model.noise_chol.T


def simulate_noisy(model: SystemModel, scenario: StepScenario, seed: int) -> np.ndarray:
    y = simulate_noiseless(model, scenario)
    return y + measurement_noise(model, y.shape[0], seed)


def _solve_steady(model: SystemModel, rhs: np.ndarray) -> np.ndarray:
    # an integrator makes I - A singular; report that before the generic stability refusal
    x = solve_linear(np.eye(model.n) - model.A, rhs)
    if not model.stable:
        raise Unstable("steady state requires a stable A (spectral radius < 1)")
    return x


def steady_state(model: SystemModel, u) -> np.ndarray:
    """Equilibrium state ``(I - A)^-1 B u`` of a stable plant."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    _check_input(model, u)
    return _solve_steady(model, model.B @ u)


def steady_state_gain(model: SystemModel) -> np.ndarray:
    """``G = (I - A)^-1 B``, the map from a constant input to its equilibrium state."""
    return _solve_steady(model, model.B)
