"""Chaotic population map with Poisson observations of the latent abundance."""

from __future__ import annotations

import numpy as np

from .base import Dataset, Model, Prior

N_STEPS = 100
OBS_START = 51  # observations are counts at t = 51..100
MAX_TRAINING_ZEROS = 45  # zero-heavy datasets are unusable for regression training


def ricker_simulate(theta, rng):
    """Iterate N_{t+1} = r N_t exp(-N_t + e_t) from N_0 = 1 for 100 steps and
    emit Poisson(phi * N_t) counts over the final 50 steps.

    theta = (log r, sigma_e, phi).
    """
    log_r, sigma_e, phi = (float(v) for v in np.asarray(theta, dtype=float).ravel())
    if sigma_e < 0 or phi < 0:
        raise ValueError("sigma_e and phi must be nonnegative")
    shocks = rng.normal(0.0, sigma_e, N_STEPS) if sigma_e > 0 else np.zeros(N_STEPS)
    traj = np.empty(N_STEPS + 1)
    traj[0] = 1.0
    state = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.exp(log_r)
        for t in range(N_STEPS):
            state = r * state * np.exp(-state + shocks[t])
            traj[t + 1] = state
    if not np.all(np.isfinite(traj)):
        raise FloatingPointError("population state became non-finite")
    means = phi * traj[OBS_START:]
    counts = rng.poisson(means)
    times = np.arange(OBS_START, N_STEPS + 1, dtype=float)
    return Dataset(counts.astype(np.int64), times=times, info={"latent": traj})


class RickerPrior(Prior):
    """Improper product prior: flat on log r >= 0 and phi >= 0, with
    log sigma_e uniform on [log 0.1, 0].

    Sampling is impossible (infinite mass); use a box truncation first.
    """

    dim = 3
    proper = False

    def sample(self, rng):
        raise RuntimeError(
            "improper prior has no sampling distribution; truncate it to a finite box first"
        )

    def log_density(self, theta):
        log_r, sigma_e, phi = (float(v) for v in np.asarray(theta, dtype=float).ravel())
        if log_r < 0 or phi < 0 or not 0.1 <= sigma_e <= 1.0:
            return -np.inf
        return -np.log(sigma_e)  # uniform in log sigma_e

    @property
    def support(self):
        return np.array([0.0, 0.1, 0.0]), np.array([np.inf, 1.0, np.inf])

    def density_upper_bound(self, lows, highs):
        lo_sigma = max(float(np.asarray(lows).ravel()[1]), 0.1)
        return 1.0 / lo_sigma


class RickerModel(Model):
    """50 Poisson counts from the chaotic map; zero-heavy simulations are
    flagged invalid for training and auto-rejected in ABC runs."""

    name = "ricker"
    param_names = ("log_r", "sigma_e", "phi")

    def __init__(self, max_zeros: int = MAX_TRAINING_ZEROS):
        self.max_zeros = int(max_zeros)
        self.prior = RickerPrior()
        self.descriptor = "chaotic-map Poisson counts, n=50"

    def simulate(self, theta, rng):
        return ricker_simulate(theta, rng)

    def training_ok(self, dataset):
        if dataset.overflow:
            return False
        return int(np.sum(np.asarray(dataset.values) == 0)) < self.max_zeros
