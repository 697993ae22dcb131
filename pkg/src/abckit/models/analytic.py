"""Analytically tractable toy models used as exact references in tests."""

from __future__ import annotations

import numpy as np

from .base import Dataset, DiscreteUniformPrior, IndependentNormalPrior, Model, Prior


class NormalMeanModel(Model):
    """y_1..y_n iid N(theta, noise_sd^2) with a conjugate N(m0, sd0^2) prior on theta."""

    name = "normal_mean"
    param_names = ("mu",)

    def __init__(self, n_obs: int = 10, noise_sd: float = 1.0,
                 prior_mean: float = 0.0, prior_sd: float = 1.0):
        if n_obs < 1 or noise_sd <= 0 or prior_sd <= 0:
            raise ValueError("need n_obs >= 1 and positive standard deviations")
        self.n_obs = int(n_obs)
        self.noise_sd = float(noise_sd)
        self.prior = IndependentNormalPrior([prior_mean], [prior_sd])
        self.descriptor = f"iid normal location, n={n_obs}"

    def simulate(self, theta, rng):
        mu = float(np.asarray(theta).ravel()[0])
        return Dataset(rng.normal(mu, self.noise_sd, self.n_obs))

    def posterior_mean_var(self, ybar: float, extra_var: float = 0.0):
        """Exact posterior moments given the sample mean, with optional extra
        variance added to the sample-mean noise (a smoothing bandwidth enters
        this way for a Gaussian acceptance kernel on the mean)."""
        prior_mean = float(self.prior.means[0])
        prior_var = float(self.prior.sds[0] ** 2)
        mean_var = self.noise_sd**2 / self.n_obs + extra_var
        post_var = 1.0 / (1.0 / prior_var + 1.0 / mean_var)
        post_mean = post_var * (prior_mean / prior_var + ybar / mean_var)
        return post_mean, post_var


class NormalVarianceModel(Model):
    """y_1..y_m iid N(0, theta): scale estimation with a box-uniform prior.

    The mean of squares is sufficient; with measurement noise of variance
    ``tau`` added to each observation the same statistic targets theta + tau,
    which is what makes this model a sharp probe of uncorrected smoothing.
    """

    name = "normal_variance"
    param_names = ("variance",)

    def __init__(self, n_obs: int = 200, lo: float = 0.05, hi: float = 5.0):
        from .base import BoxUniformPrior

        self.n_obs = int(n_obs)
        self.prior = BoxUniformPrior([lo], [hi])
        self.descriptor = f"iid normal scale, n={n_obs}"

    def simulate(self, theta, rng):
        var = float(np.asarray(theta).ravel()[0])
        if var <= 0:
            raise ValueError("variance parameter must be positive")
        return Dataset(rng.normal(0.0, np.sqrt(var), self.n_obs))


# ---------------------------------------------------------------------------
# discrete toy model: exact posterior by enumeration
# ---------------------------------------------------------------------------

# Row t-1 gives P(y = 1..5 | theta = t); every row sums to one.
DISCRETE_TOY_TABLE = np.array(
    [
        [0.45, 0.25, 0.15, 0.10, 0.05],
        [0.10, 0.40, 0.25, 0.15, 0.10],
        [0.05, 0.20, 0.45, 0.20, 0.10],
        [0.10, 0.15, 0.25, 0.35, 0.15],
        [0.05, 0.10, 0.15, 0.25, 0.45],
    ]
)


class DiscreteToyModel(Model):
    """theta uniform on {1..5}; one observation y | theta from a fixed 5x5 table.

    Everything is enumerable, so ABC output can be checked against exact
    posterior probabilities with no Monte Carlo slack on the target side.
    """

    name = "discrete_toy"
    param_names = ("level",)

    def __init__(self, table: np.ndarray | None = None):
        table = DISCRETE_TOY_TABLE if table is None else np.asarray(table, dtype=float)
        if table.shape != (5, 5) or np.any(table < 0):
            raise ValueError("table must be 5x5 and nonnegative")
        if not np.allclose(table.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("table rows must sum to one")
        self.table = table
        self.prior: Prior = DiscreteUniformPrior()
        self.descriptor = "finite 5-level toy"
        self._cum = np.cumsum(table, axis=1)

    def simulate(self, theta, rng):
        level = int(round(float(np.asarray(theta).ravel()[0])))
        if not 1 <= level <= 5:
            raise ValueError("level must be in 1..5")
        y = int(np.searchsorted(self._cum[level - 1], rng.random(), side="right")) + 1
        return Dataset(np.array([float(y)]))

    def exact_posterior(self, y_obs: int) -> np.ndarray:
        """P(theta = 1..5 | y = y_obs) under the uniform prior."""
        if not 1 <= y_obs <= 5:
            raise ValueError("observation must be in 1..5")
        lik = self.table[:, y_obs - 1]
        return lik / lik.sum()
