"""Monte Carlo check of the bound against a maximum-likelihood attacker.

The attacker knows the model, the initial state and the step value and only
has to find the change time. With Gaussian noise the likelihood of change time
``k`` is a whitened least-squares fit of the output to the noiseless response
for ``k``, so the estimator scores every ``k`` in ``0..N`` and keeps the best.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bound import bound
from .lti import ShapeError, StepScenario, SystemModel, _check_input, measurement_noise, simulate_noiseless
from .numerics import TOL, solve_lower

log = logging.getLogger(__name__)

CHUNK = 256


class LengthMismatch(ValueError):
    pass


class ChangeTimeEstimator:
    """Exhaustive maximum-likelihood estimator of the change time over ``0..N``."""

    def __init__(self, model: SystemModel, u, x0, N: int):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        _check_input(model, u)
        x0 = np.zeros(model.n) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
        if x0.shape != (model.n,):
            raise ShapeError(f"x0 has length {x0.size}, model has {model.n} states")
        self.model = model
        self.N = int(N)
        T = self.N + 1
        means = np.empty((T, T, model.m))
        for k in range(T):
            means[k] = simulate_noiseless(model, StepScenario(u, k, self.N, x0))
        self._means = self.whiten(means.reshape(T * T, model.m)).reshape(T, T * model.m)

    def whiten(self, Y: np.ndarray) -> np.ndarray:
        """Rows of ``Y`` (length ``m``) mapped to unit-covariance coordinates."""
        return solve_lower(self.model.noise_chol, np.asarray(Y, dtype=float).T).T

    def scores(self, Y: np.ndarray) -> np.ndarray:
        """Negative log-likelihood (up to constants) of each change time.

        ``Y`` is a single ``(N+1, m)`` output record or a batch of shape
        ``(trials, N+1, m)``; the result has the batch shape plus ``N+1``.
        """
        Y = np.asarray(Y, dtype=float)
        single = Y.ndim == 2
        Yb = Y[None] if single else Y
        if Yb.shape[1:] != (self.N + 1, self.model.m):
            raise LengthMismatch(f"expected records of shape {(self.N + 1, self.model.m)}, got {Yb.shape[1:]}")
        W = self.whiten(Yb.reshape(-1, self.model.m)).reshape(Yb.shape[0], -1)
        s = np.einsum("bkd,bkd->bk", W[:, None, :] - self._means[None], W[:, None, :] - self._means[None])
        return s[0] if single else s

    @staticmethod
    def pick(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Smallest index within the tie band of the minimum, and whether a tie occurred."""
        scores = np.atleast_2d(scores)
        best = scores.min(axis=1, keepdims=True)
        band = scores <= best + TOL.tie * np.maximum(best, 1.0)
        return band.argmax(axis=1), band.sum(axis=1) >= 2

    def estimate(self, Y) -> tuple[int, bool]:
        k, tie = self.pick(self.scores(Y))
        return int(k[0]), bool(tie[0])


def ml_change_time(model: SystemModel, Y, u, x0=None) -> tuple[int, bool]:
    """Maximum-likelihood change time for one output record ``Y`` of length ``N+1``."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[1] != model.m:
        raise LengthMismatch(f"Y must have {model.m} columns, got shape {Y.shape}")
    return ChangeTimeEstimator(model, u, x0, Y.shape[0] - 1).estimate(Y)


def trial_seed(seed: int, index: int) -> int:
    """128-bit key for trial ``index``; independent of how trials are scheduled."""
    words = np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]).generate_state(2, dtype=np.uint64)
    return (int(words[0]) << 64) | int(words[1])


@dataclass(frozen=True, eq=False)
class TrialReport:
    trials: int
    estimates: np.ndarray
    ties: np.ndarray
    empirical_variance: float
    empirical_bias: float
    tie_count: int
    bound: float
    k_star: int

    @property
    def mse(self) -> float:
        return float(np.mean((self.estimates - self.k_star) ** 2.0))


def run_trials(model: SystemModel, scenario: StepScenario, trials: int, seed: int, workers: int = 1) -> TrialReport:
    """Simulate ``trials`` noisy records, estimate the change time in each, summarise.

    Trial ``i`` draws its noise from :func:`trial_seed` ``(seed, i)``, so the
    report is identical for any ``workers`` count.
    """
    if trials < 2:
        raise ValueError("need at least two trials for a variance")
    est = ChangeTimeEstimator(model, scenario.u, scenario.x0, scenario.N)
    clean = simulate_noiseless(model, scenario)
    T = scenario.N + 1

    def chunk(start: int) -> tuple[np.ndarray, np.ndarray]:
        idx = range(start, min(start + CHUNK, trials))
        Y = np.stack([clean + measurement_noise(model, T, trial_seed(seed, i)) for i in idx])
        return est.pick(est.scores(Y))

    starts = range(0, trials, CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    k_hat = np.concatenate([p[0] for p in parts]).astype(int)
    ties = np.concatenate([p[1] for p in parts])
    if ties.any():
        log.info("%d of %d trials had a flat likelihood", int(ties.sum()), trials)
    b = bound(model, scenario).bound if scenario.N > scenario.k_star else float("inf")
    return TrialReport(
        trials=trials,
        estimates=k_hat,
        ties=ties,
        empirical_variance=float(np.var(k_hat, ddof=1)),
        empirical_bias=float(np.mean(k_hat) - scenario.k_star),
        tie_count=int(ties.sum()),
        bound=b,
        k_star=scenario.k_star,
    )
