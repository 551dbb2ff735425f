import math

import numpy as np
import pytest

from privleak import StepScenario, SystemModel, bound, ml_change_time, run_trials, simulate_noiseless, simulate_noisy
from privleak.montecarlo import LengthMismatch, trial_seed

from _systems import random_stable, rank_deficient_system


def brute_ml(model, Y, u, x0, N):
    W = np.linalg.inv(np.asarray(model.sigma_e))
    scores = []
    for k in range(N + 1):
        r = Y - simulate_noiseless(model, StepScenario(u, k, N, x0))
        scores.append(sum(float(e @ W @ e) for e in r))
    return int(np.argmin(scores))


def test_noiseless_record_recovers_change_time():
    rng = np.random.default_rng(0)
    model = random_stable(rng, 3, 2, 2)
    u, x0 = rng.normal(size=2), rng.normal(size=3)
    Y = simulate_noiseless(model, StepScenario(u, 3, 12, x0))
    assert ml_change_time(model, Y, u, x0) == (3, False)


def test_fully_private_input_ties():
    model = rank_deficient_system(np.random.default_rng(1))
    u = np.array([1.0, 1.0, 0.0])
    for Y in (simulate_noiseless(model, StepScenario(u, 4, 15)), simulate_noisy(model, StepScenario(u, 4, 15), 3)):
        assert ml_change_time(model, Y, u) == (0, True)


def test_seeded_regression():
    model = SystemModel(0.0, 1.0, 1.0, 4.0)
    Y = simulate_noisy(model, StepScenario([1.0], 5, 15), 123)
    assert ml_change_time(model, Y, [1.0]) == (10, False)


@pytest.mark.parametrize("seed", range(20))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    model = random_stable(rng, 3, 2, 2)
    u, x0 = rng.normal(size=2), rng.normal(size=3)
    Y = simulate_noisy(model, StepScenario(u, 6, 20, x0), seed)
    assert ml_change_time(model, Y, u, x0)[0] == brute_ml(model, Y, u, x0, 20)


def test_scalar_output_accepts_flat_record():
    model = SystemModel(0.5, 1.0, 1.0, 1.0)
    Y = simulate_noiseless(model, StepScenario([1.0], 2, 8))[:, 0]
    assert ml_change_time(model, Y, [1.0]) == (2, False)


def test_length_mismatch():
    model = random_stable(np.random.default_rng(2), 2, 1, 2)
    with pytest.raises(LengthMismatch):
        ml_change_time(model, np.zeros((10, 3)), [1.0])


def test_trial_seeds_are_distinct():
    keys = {trial_seed(7, i) for i in range(1000)}
    assert len(keys) == 1000
    assert trial_seed(7, 3) == trial_seed(7, 3) != trial_seed(8, 3)


def test_near_perfect_estimation():
    model = SystemModel(0.5, 1.0, 1.0, 1e-8)
    rep = run_trials(model, StepScenario([1.0], 5, 20), 200, 0)
    assert rep.empirical_variance == 0.0
    assert rep.empirical_bias == 0.0
    assert np.all(rep.estimates == 5)


def test_report_fields():
    model = SystemModel(0.7, 1.0, 1.0, 2.0)
    sc = StepScenario([1.0], 6, 30)
    rep = run_trials(model, sc, 500, 4)
    assert rep.trials == 500 == rep.estimates.size
    assert rep.empirical_variance == pytest.approx(np.var(rep.estimates, ddof=1))
    assert rep.empirical_bias == pytest.approx(rep.estimates.mean() - 6)
    assert rep.mse == pytest.approx(np.mean((rep.estimates - 6.0) ** 2))
    assert rep.bound == bound(model, sc).bound
    assert rep.estimates.min() >= 0 and rep.estimates.max() <= 30
    assert rep.tie_count == 0


def test_deterministic_across_workers():
    rng = np.random.default_rng(5)
    model = random_stable(rng, 3, 2, 2)
    sc = StepScenario(rng.normal(size=2), 5, 25)
    a = run_trials(model, sc, 1000, 42)
    b = run_trials(model, sc, 1000, 42, workers=4)
    c = run_trials(model, sc, 1000, 42, workers=3)
    assert a.estimates.tobytes() == b.estimates.tobytes() == c.estimates.tobytes()
    assert a.empirical_variance == b.empirical_variance


def test_tied_trials_are_counted():
    model = rank_deficient_system(np.random.default_rng(6))
    rep = run_trials(model, StepScenario([1.0, 1.0, 0.0], 4, 15), 50, 1)
    assert rep.tie_count == 50
    assert rep.bound == math.inf


def test_needs_two_trials():
    with pytest.raises(ValueError):
        run_trials(SystemModel(0.5, 1.0, 1.0, 1.0), StepScenario([1.0], 2, 10), 1, 0)


@pytest.mark.parametrize(
    "a, sigma, k_star, N",
    [(0.5, 1.0, 5, 30), (0.8, 4.0, 8, 40), (-0.6, 2.0, 6, 30)],
)
def test_mse_dominates_half_bound(a, sigma, k_star, N):
    model = SystemModel(a, 1.0, 1.0, sigma)
    rep = run_trials(model, StepScenario([1.0], k_star, N), 10_000, 11)
    assert rep.empirical_variance + rep.empirical_bias**2 >= 0.5 * rep.bound
    assert rep.empirical_variance >= rep.bound


def test_mimo_variance_exceeds_bound():
    rng = np.random.default_rng(9)
    model = random_stable(rng, 3, 2, 2)
    u = rng.normal(size=2)
    # scale the step so the first exponent is about one
    e1 = bound(model, StepScenario(u, 6, 30)).exponents[0]
    sc = StepScenario(u / np.sqrt(e1), 6, 30)
    rep = run_trials(model, sc, 10_000, 3)
    assert rep.empirical_variance >= rep.bound
