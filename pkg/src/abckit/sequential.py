"""Sequential ABC particle samplers for state-space models.

Each observation step propagates every particle's state with the model's
exact simulator, weights particles by a Gaussian acceptance kernel on the
(optionally noise-calibrated) observation discrepancy, and refreshes the
parameter cloud by shrinkage-plus-jitter kernel-density resampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import GAUSSIAN, DensityKernel, WeightedSample
from .models.base import BoxUniformPrior, Prior
from .models.lotka_volterra import TRUE_THETA, lv_gillespie, lv_propagate_particles

DEFAULT_SHRINKAGE = 0.98


# ---------------------------------------------------------------------------
# resampling and rejuvenation
# ---------------------------------------------------------------------------

def systematic_resample(weights, rng, n_out: int | None = None) -> np.ndarray:
    """Systematic resampling: returns particle indices with expected counts
    proportional to the weights and single-uniform low variance."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights sum to zero; nothing to resample")
    n = w.size if n_out is None else int(n_out)
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(w / total), positions).clip(max=w.size - 1)


@dataclass
class RejuvenationResult:
    thetas: np.ndarray
    states: np.ndarray | None
    indices: np.ndarray
    jitter_skipped: bool


def weighted_mean_cov(points, weights):
    """Weighted mean and covariance of a particle cloud."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    wn = w / w.sum()
    mean = wn @ pts
    centered = pts - mean
    cov = (centered * wn[:, None]).T @ centered
    return mean, cov


def liu_west_rejuvenate(thetas, weights, rng, shrinkage: float = DEFAULT_SHRINKAGE,
                        log_space: bool = False, states=None,
                        support=None, max_redraws: int = 50) -> RejuvenationResult:
    """Shrink resampled particles toward the weighted mean by factor
    ``shrinkage`` and jitter with covariance (1 - shrinkage^2) C, preserving
    the cloud's first two moments; carried states follow their particles.

    ``log_space`` applies the same construction to log-parameters so strictly
    positive parameters stay positive.  A degenerate covariance skips the
    jitter and sets ``jitter_skipped``.  ``support`` is an optional vectorized
    predicate on parameter rows; jitter draws landing outside it are redrawn,
    and any row still outside after ``max_redraws`` rounds falls back to its
    unjittered shrunk value (inside any convex support).
    """
    if not 0.0 < shrinkage < 1.0:
        raise ValueError("shrinkage factor must be in (0, 1)")
    pts = np.atleast_2d(np.asarray(thetas, dtype=float))
    if log_space:
        if np.any(pts <= 0):
            raise ValueError("log-space rejuvenation needs strictly positive parameters")
        work = np.log(pts)
    else:
        work = pts
    mean, cov = weighted_mean_cov(work, weights)
    indices = systematic_resample(weights, rng, pts.shape[0])
    shrunk = shrinkage * work[indices] + (1.0 - shrinkage) * mean

    def back(w):
        return np.exp(w) if log_space else w

    jitter_skipped = False
    try:
        chol = np.linalg.cholesky((1.0 - shrinkage**2) * cov)
    except np.linalg.LinAlgError:
        jitter_skipped = True
        chol = None
    if chol is None:
        new_work = shrunk
    else:
        new_work = shrunk + rng.standard_normal(shrunk.shape) @ chol.T
        if support is not None:
            bad = ~np.asarray(support(back(new_work)), dtype=bool)
            for _ in range(max_redraws):
                if not bad.any():
                    break
                redraw = shrunk[bad] + rng.standard_normal((int(bad.sum()), pts.shape[1])) @ chol.T
                new_work[bad] = redraw
                bad[bad] = ~np.asarray(support(back(redraw)), dtype=bool)
            if bad.any():
                new_work[bad] = shrunk[bad]
    new_thetas = back(new_work)
    new_states = None if states is None else np.asarray(states)[indices]
    return RejuvenationResult(new_thetas, new_states, indices, jitter_skipped)


def _prior_support(prior):
    """Vectorized in-support predicate for a prior; None when unrestricted."""
    lows = getattr(prior, "lows", None)
    highs = getattr(prior, "highs", None)
    if lows is not None and highs is not None:
        lo = np.asarray(lows, dtype=float)
        hi = np.asarray(highs, dtype=float)
        return lambda pts: np.all((pts >= lo) & (pts <= hi), axis=-1)
    return None


# ---------------------------------------------------------------------------
# particle system and per-step trace
# ---------------------------------------------------------------------------

@dataclass
class ParticleSystem:
    """Parameter particles with carried latent states and current weights."""

    thetas: np.ndarray  # (N, p)
    states: np.ndarray  # (N, state_dim); state_dim may be 0
    weights: np.ndarray  # (N,)
    step_index: int
    shrinkage: float = DEFAULT_SHRINKAGE

    @property
    def n_particles(self) -> int:
        return self.thetas.shape[0]


@dataclass
class StepRecord:
    step: int
    posterior_mean: np.ndarray  # weighted mean before rejuvenation
    posterior_cov: np.ndarray
    ess: float
    perturbation: np.ndarray | None  # shared noise draw x_j (noisy mode only)
    jitter_skipped: bool
    n_invalid: int


@dataclass
class SequentialConfig:
    n_particles: int
    h: float
    noisy: bool = False
    noisy_h: float | None = None  # defaults to h; 0 disables the perturbation
    shrinkage: float = DEFAULT_SHRINKAGE
    log_rejuvenation: bool = False
    observation_mask: Sequence[bool] | None = None
    kernel_metric: np.ndarray | None = None
    keep_history: bool = False

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("need at least two particles")
        if not self.h > 0:
            raise ValueError("kernel bandwidth must be strictly positive")


@dataclass
class SequentialResult:
    final_sample: WeightedSample  # last step's weighted cloud, pre-rejuvenation
    system: ParticleSystem  # post-rejuvenation equal-weight cloud
    trace: list  # one StepRecord per observation step
    history: list = field(default_factory=list)  # per-step clouds if requested

    @property
    def posterior_mean(self) -> np.ndarray:
        return self.trace[-1].posterior_mean


def seq_abc(model, observations, config: SequentialConfig, rng) -> SequentialResult:
    """Run the sequential sampler over the observation rows.

    ``model`` supplies ``prior``, ``obs_dim``, ``init_states(n)``,
    ``initial_observation()`` and ``step(thetas, states, y_prev, j, rng) ->
    (y_sim, new_states, invalid)``.  The Gaussian kernel is required: a
    bounded kernel can zero out every weight in a single step.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    if obs.ndim != 2 or obs.shape[1] != model.obs_dim:
        raise ValueError(f"observations have {obs.shape[1]} columns, model expects {model.obs_dim}")
    mask = config.observation_mask
    if mask is None:
        mask = getattr(model, "default_mask", None)
    mask = np.ones(model.obs_dim, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != (model.obs_dim,) or not mask.any():
        raise ValueError("observation mask must select at least one component")
    d = int(mask.sum())
    metric = np.eye(d) if config.kernel_metric is None else np.atleast_2d(config.kernel_metric)
    kernel = DensityKernel(GAUSSIAN, metric, config.h)
    noisy_h = config.h if config.noisy_h is None else float(config.noisy_h)

    n = config.n_particles
    support = _prior_support(model.prior)
    # separate stream for the shared per-step perturbations so standard and
    # noisy runs consume identical randomness everywhere else
    noise_rng = rng.spawn(1)[0]
    thetas = np.asarray([model.prior.sample(rng) for _ in range(n)], dtype=float)
    states = np.asarray(model.init_states(n))
    y_prev = model.initial_observation()
    if y_prev is not None:
        y_prev = np.asarray(y_prev, dtype=float)

    trace: list[StepRecord] = []
    history: list[WeightedSample] = []
    final_sample = None
    for j in range(obs.shape[0]):
        y_obs = obs[j]
        x_j = kernel.sample(noise_rng) if config.noisy else None
        y_sim, states, invalid = model.step(thetas, states, y_prev, j, rng)
        disc = np.atleast_2d(np.asarray(y_sim, dtype=float))[:, mask] - y_obs[mask]
        if x_j is not None:
            disc = disc - noisy_h * x_j
        weights = kernel.evaluate(disc / config.h)
        if invalid is not None:
            weights = np.where(invalid, 0.0, weights)
        if not np.any(weights > 0):
            raise RuntimeError(
                f"all {n} particle weights are zero at step {j}; "
                "increase the bandwidth h or the particle count"
            )
        mean, cov = weighted_mean_cov(thetas, weights)
        wn = weights / weights.sum()
        ess = float(1.0 / np.sum(wn * wn))
        n_invalid = int(np.count_nonzero(invalid)) if invalid is not None else 0
        if config.keep_history:
            history.append(WeightedSample(thetas.copy(), weights.copy()))
        if j == obs.shape[0] - 1:
            final_sample = WeightedSample(thetas.copy(), weights.copy())
        rejuv = liu_west_rejuvenate(thetas, weights, rng, shrinkage=config.shrinkage,
                                    log_space=config.log_rejuvenation, states=states,
                                    support=support)
        trace.append(StepRecord(j, mean, cov, ess,
                                None if x_j is None else np.array(x_j, copy=True),
                                rejuv.jitter_skipped, n_invalid))
        thetas, states = rejuv.thetas, rejuv.states
        y_prev = y_obs

    system = ParticleSystem(thetas, states, np.full(n, 1.0 / n), obs.shape[0],
                            config.shrinkage)
    return SequentialResult(final_sample, system, trace, history)


# ---------------------------------------------------------------------------
# sequential state-space models
# ---------------------------------------------------------------------------

class LvSequential:
    """Predator-prey counts observed on a regular time grid.

    ``mode="full"`` conditions each propagation on the full observed previous
    count vector; ``mode="prey_only"`` observes only the prey count and lets
    every particle carry its own predator count.
    """

    def __init__(self, tau: float = 0.1, mode: str = "full",
                 event_cap: int = 100_000, initial_state=(100, 100),
                 prior: Prior | None = None):
        if mode not in ("full", "prey_only"):
            raise ValueError("mode must be 'full' or 'prey_only'")
        self.tau = float(tau)
        self.mode = mode
        self.event_cap = int(event_cap)
        self.initial_state = np.asarray(initial_state, dtype=np.int64)
        self.prior = prior if prior is not None else BoxUniformPrior(
            [0.0, 0.0, 0.0], [1.0, 0.01, 1.0])
        self.obs_dim = 2
        self.default_mask = np.array([True, mode == "full"])

    def init_states(self, n_particles: int) -> np.ndarray:
        if self.mode == "full":
            return np.zeros((n_particles, 0), dtype=np.int64)
        return np.full((n_particles, 1), self.initial_state[1], dtype=np.int64)

    def initial_observation(self):
        return self.initial_state.astype(float)

    def step(self, thetas, states, y_prev, j, rng):
        n = thetas.shape[0]
        if self.mode == "full":
            start = np.tile(np.round(y_prev).astype(np.int64), (n, 1))
        else:
            prey = np.full(n, np.round(y_prev[0]), dtype=np.int64)
            start = np.column_stack([prey, states[:, 0]])
        new_states, overflow = lv_propagate_particles(thetas, start, self.tau, rng,
                                                      event_cap=self.event_cap)
        carried = new_states[:, 1:2] if self.mode == "prey_only" else np.zeros((n, 0), dtype=np.int64)
        return new_states.astype(float), carried, overflow

    def simulate_observations(self, theta, n_obs: int, rng):
        """One full trajectory observed at tau-spaced times (row 0 excluded)."""
        times = self.tau * np.arange(n_obs + 1)
        ds = lv_gillespie(np.asarray(theta, dtype=float), self.initial_state, times, rng)
        return ds.values[1:].astype(float), ds.overflow


class NormalVarianceSequential:
    """One new N(0, theta) observation per step; no latent state."""

    def __init__(self, lo: float = 0.05, hi: float = 5.0):
        self.prior = BoxUniformPrior([lo], [hi])
        self.obs_dim = 1

    def init_states(self, n_particles: int) -> np.ndarray:
        return np.zeros((n_particles, 0))

    def initial_observation(self):
        return None

    def step(self, thetas, states, y_prev, j, rng):
        y = np.sqrt(thetas[:, 0]) * rng.standard_normal(thetas.shape[0])
        return y[:, None], states, None


class LinearGaussianSequential:
    """Random-walk state with additive Gaussian observation noise.

    The state-noise variance is known; the parameter is the observation-noise
    variance.  With a Gaussian acceptance kernel of bandwidth h the target is
    the exact Kalman posterior with observation variance theta + h^2, which a
    grid integration can evaluate to machine precision.
    """

    def __init__(self, state_noise_var: float = 0.3, lo: float = 0.1, hi: float = 2.0,
                 x0: float = 0.0):
        self.state_noise_var = float(state_noise_var)
        self.x0 = float(x0)
        self.prior = BoxUniformPrior([lo], [hi])
        self.obs_dim = 1

    def init_states(self, n_particles: int) -> np.ndarray:
        return np.full((n_particles, 1), self.x0)

    def initial_observation(self):
        return None

    def step(self, thetas, states, y_prev, j, rng):
        n = thetas.shape[0]
        x = states[:, 0] + math.sqrt(self.state_noise_var) * rng.standard_normal(n)
        y = x + np.sqrt(thetas[:, 0]) * rng.standard_normal(n)
        return y[:, None], x[:, None], None

    def simulate_observations(self, theta, n_obs: int, rng):
        x = self.x0
        ys = np.empty(n_obs)
        for t in range(n_obs):
            x += math.sqrt(self.state_noise_var) * rng.standard_normal()
            ys[t] = x + math.sqrt(float(theta)) * rng.standard_normal()
        return ys[:, None]


# ---------------------------------------------------------------------------
# bias-versus-series-length experiment
# ---------------------------------------------------------------------------

def bias_experiment(n_obs_grid, n_reps: int, rng, n_particles: int = 1000,
                    tau: float = 0.1, mode: str = "full", h: float | None = None,
                    true_theta=TRUE_THETA, event_cap: int = 100_000,
                    log_rejuvenation: bool = True, max_dataset_tries: int = 50):
    """Absolute bias and root-mean quadratic loss of the sequential posterior
    mean, per series length and per parameter, standard versus noise-calibrated.

    Each replication simulates one trajectory at the true parameters and runs
    both variants once over the longest grid entry, reading intermediate
    estimates off the per-step trace.  Returns a list of row dicts with keys
    (n_obs, param, method, abs_bias, rmse).
    """
    grid = sorted(int(v) for v in n_obs_grid)
    if not grid or grid[0] < 1:
        raise ValueError("need a nonempty grid of positive series lengths")
    n_max = grid[-1]
    true_theta = np.asarray(true_theta, dtype=float)
    h = math.sqrt(tau) if h is None else float(h)
    model = LvSequential(tau=tau, mode=mode, event_cap=event_cap)
    param_names = ("theta1", "theta2", "theta3")

    estimates = {(n, method): [] for n in grid for method in ("standard", "noisy")}
    for _ in range(n_reps):
        observations = None
        for _ in range(max_dataset_tries):
            candidate, overflow = model.simulate_observations(true_theta, n_max, rng)
            if not overflow:
                observations = candidate
                break
        if observations is None:
            raise RuntimeError("could not simulate a non-overflowing trajectory")
        for method, noisy in (("standard", False), ("noisy", True)):
            config = SequentialConfig(n_particles=n_particles, h=h, noisy=noisy,
                                      log_rejuvenation=log_rejuvenation)
            result = seq_abc(model, observations, config, rng)
            for n in grid:
                estimates[(n, method)].append(result.trace[n - 1].posterior_mean)

    rows = []
    for n in grid:
        for method in ("standard", "noisy"):
            block = np.asarray(estimates[(n, method)])  # (R, 3)
            err = block - true_theta
            for k, name in enumerate(param_names):
                rows.append({
                    "n_obs": n,
                    "param": name,
                    "method": method,
                    "abs_bias": float(abs(err[:, k].mean())),
                    "rmse": float(np.sqrt(np.mean(err[:, k] ** 2))),
                })
    return rows
