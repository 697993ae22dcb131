"""Comparison methods: regression-corrected ABC output, synthetic-likelihood
MCMC, and indirect inference by auxiliary-statistic matching."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .engines import DEFAULT_CHUNK_SIZE, McmcConfig, McmcResult, _simulate_valid
from .kernels import WeightedSample

STABILITY_FACTOR = 10  # minimum acceptances per regression coefficient block
DEFAULT_SYNTHLIK_REPLICATES = 500
DEFAULT_COV_REG_FACTOR = 1e-8


# ---------------------------------------------------------------------------
# local-linear regression correction of accepted draws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionCorrection:
    """Fitted correction diagnostics: slope is (p, d), one row per parameter."""

    slope: np.ndarray
    intercept: np.ndarray
    n_accepted: int
    condition_number: float
    applied: bool


def beaumont_correct(sample: WeightedSample, s_obs, weighting: str = "sample",
                     stability_factor: int = STABILITY_FACTOR):
    """Regression-correct accepted parameter draws toward the observed summary.

    Fits weighted least squares theta = alpha + B (s - s_obs) + eps over the
    accepted draws and returns the sample with points theta_i - B (s_i -
    s_obs).  ``weighting`` is "sample" to reuse the sample's weights or
    "uniform".  When fewer than ``stability_factor * (p + 1)`` draws carry
    positive weight the correction is considered unstable: the original sample
    is returned unchanged with a warning and ``applied=False``.
    """
    if sample.summaries is None:
        raise ValueError("regression correction needs the accepted summaries stored on the sample")
    if weighting not in ("sample", "uniform"):
        raise ValueError("weighting must be 'sample' or 'uniform'")
    points = np.asarray(sample.points, dtype=float)
    summaries = np.asarray(sample.summaries, dtype=float)
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    if s_obs.shape[0] != summaries.shape[1]:
        raise ValueError("s_obs dimension does not match the stored summaries")
    p = points.shape[1]
    d = summaries.shape[1]
    w = np.asarray(sample.weights, dtype=float)
    if weighting == "uniform":
        w = np.ones_like(w)
    n_accepted = int(np.count_nonzero(w > 0))

    if n_accepted < stability_factor * (p + 1):
        warnings.warn(
            f"regression correction skipped: only {n_accepted} accepted draws, "
            f"need at least {stability_factor * (p + 1)} for a stable fit",
            RuntimeWarning,
        )
        correction = RegressionCorrection(np.zeros((p, d)), points.mean(axis=0)
                                          if points.size else np.zeros(p),
                                          n_accepted, np.inf, False)
        return sample, correction

    centered = summaries - s_obs
    design = np.column_stack([np.ones(points.shape[0]), centered])
    scale = np.sqrt(w / w.mean())
    coef, _, _, _ = np.linalg.lstsq(design * scale[:, None], points * scale[:, None],
                                    rcond=None)
    intercept = coef[0]
    slope = coef[1:].T  # (p, d)
    cond = float(np.linalg.cond(design * scale[:, None]))
    corrected = points - centered @ slope.T
    out = WeightedSample(corrected, sample.weights.copy(),
                         None if sample.summaries is None else summaries.copy())
    return out, RegressionCorrection(slope, intercept, n_accepted, cond, True)


# ---------------------------------------------------------------------------
# synthetic-likelihood MCMC
# ---------------------------------------------------------------------------

def synthetic_log_density(stats, s_obs, cov_reg_factor: float = DEFAULT_COV_REG_FACTOR):
    """Log density of s_obs under a Gaussian fitted to simulated summary rows.

    The estimated covariance is regularized by adding eps * I with eps =
    cov_reg_factor * trace / d (or cov_reg_factor itself when the rows are
    constant), so a zero-variance summary still yields a finite density.
    """
    x = np.atleast_2d(np.asarray(stats, dtype=float))
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    n, d = x.shape
    if s_obs.shape[0] != d:
        raise ValueError("s_obs dimension does not match the summary rows")
    if n < d + 2:
        raise ValueError(f"need more than d+2 = {d + 2} replicates, got {n}")
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / (n - 1)
    trace = float(np.trace(cov))
    eps = cov_reg_factor * (trace / d) if trace > 0 else cov_reg_factor
    cov = cov + eps * np.eye(d)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        raise RuntimeError("summary covariance is singular even after regularization")
    diff = s_obs - mu
    maha = float(diff @ np.linalg.solve(cov, diff))
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)


def _replicate_stats(model, summary, theta, n_replicates, rng, threads,
                     chunk_size=DEFAULT_CHUNK_SIZE):
    """Summary rows from n_replicates simulations at theta; invalid draws are
    dropped.  Chunked child generators keep the result identical across thread
    counts."""
    n_chunks = max(1, -(-n_replicates // chunk_size))
    counts = [chunk_size] * (n_chunks - 1) + [n_replicates - chunk_size * (n_chunks - 1)]
    child_rngs = rng.spawn(n_chunks)

    def run_chunk(args):
        count, child = args
        rows = []
        for _ in range(count):
            ds = _simulate_valid(model, theta, child, getattr(model, "training_ok", None))
            if ds is not None:
                rows.append(summary.apply(ds))
        return rows

    jobs = list(zip(counts, child_rngs))
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_chunk, jobs))
    else:
        chunks = [run_chunk(j) for j in jobs]
    rows = [row for chunk in chunks for row in chunk]
    return np.asarray(rows, dtype=float).reshape(len(rows), summary.dim)


def synthetic_likelihood_mcmc(model, summary, s_obs, config: McmcConfig, rng,
                              n_replicates: int = DEFAULT_SYNTHLIK_REPLICATES,
                              cov_reg_factor: float = DEFAULT_COV_REG_FACTOR,
                              threads: int = 1) -> McmcResult:
    """Metropolis-Hastings on the Gaussian synthetic log-likelihood plus log
    prior.  Each evaluated parameter simulates ``n_replicates`` datasets and
    fits a Gaussian to their summaries.  ``config.s0`` and ``config.init_tries``
    are unused here: the target is evaluated directly at ``config.theta0``.
    """
    d = summary.dim
    if n_replicates <= d + 2:
        raise ValueError(f"n_replicates must exceed d+2 = {d + 2}")
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    if s_obs.shape[0] != d or not np.all(np.isfinite(s_obs)):
        raise ValueError("s_obs must be a finite vector matching the summary dimension")
    prior = model.prior
    transform = config.transform

    def to_theta(t):
        return transform.inverse(t) if transform is not None else t

    def log_prior_work(theta, t):
        lp = prior.log_density(theta)
        if transform is not None and np.isfinite(lp):
            lp += transform.log_abs_det_jacobian(t)
        return lp

    def log_synth(theta):
        stats = _replicate_stats(model, summary, theta, n_replicates, rng, threads)
        if stats.shape[0] <= d + 2:
            return -np.inf
        return synthetic_log_density(stats, s_obs, cov_reg_factor)

    theta0 = np.asarray(config.theta0, dtype=float).ravel()
    t_cur = transform.forward(theta0) if transform is not None else theta0.copy()
    theta_cur = theta0.copy()
    lp_cur = log_prior_work(theta_cur, t_cur)
    if not np.isfinite(lp_cur):
        raise ValueError("the starting point has zero prior density")
    ll_cur = log_synth(theta_cur)
    if not np.isfinite(ll_cur):
        raise RuntimeError("synthetic likelihood is degenerate at the starting point")

    p = theta0.shape[0]
    chol = None
    if config.proposal_cov is not None:
        chol = np.linalg.cholesky(np.atleast_2d(np.asarray(config.proposal_cov, dtype=float)))
    chain = np.empty((config.n_steps, p))
    flags = np.zeros(config.n_steps, dtype=bool)
    for i in range(config.n_steps):
        step = (config.proposal_sampler(rng) if config.proposal_sampler is not None
                else chol @ rng.standard_normal(p))
        t_prop = t_cur + np.asarray(step, dtype=float).ravel()
        theta_prop = np.asarray(to_theta(t_prop), dtype=float).ravel()
        lp_prop = log_prior_work(theta_prop, t_prop)
        if np.isfinite(lp_prop):
            ll_prop = log_synth(theta_prop)
            if np.isfinite(ll_prop):
                log_ratio = (ll_prop + lp_prop) - (ll_cur + lp_cur)
                if log_ratio >= 0 or rng.random() < np.exp(log_ratio):
                    t_cur, theta_cur = t_prop, theta_prop
                    lp_cur, ll_cur = lp_prop, ll_prop
                    flags[i] = True
        chain[i] = theta_cur
    burn_in = int(np.floor(config.burn_in_fraction * config.n_steps))
    kept = chain[burn_in:]
    sample = WeightedSample(kept.copy(), np.ones(kept.shape[0]))
    return McmcResult(sample, flags, burn_in, config.n_steps)


# ---------------------------------------------------------------------------
# indirect inference
# ---------------------------------------------------------------------------

@dataclass
class IndirectConfig:
    """Settings for auxiliary-statistic matching."""

    n_replicates: int = 100
    metric: np.ndarray | None = None  # PD distance metric on auxiliary space
    theta0: np.ndarray | None = None
    max_evals: int = 500
    xatol: float = 1e-4
    fatol: float = 1e-8
    penalty: float = 1e12
    flat_tol: float = 1e-12

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError("need at least one replicate")
        if self.max_evals < 2:
            raise ValueError("max_evals must allow at least two evaluations")


@dataclass
class IndirectResult:
    theta_hat: np.ndarray
    best_value: float
    converged: bool
    flat_objective: bool
    n_evals: int
    trace: list = field(default_factory=list)


def indirect_inference(model, aux_map, observed, config: IndirectConfig, rng) -> IndirectResult:
    """Match simulated to observed auxiliary statistics by simplex search.

    Minimizes the Mahalanobis distance between the observed auxiliary vector
    and the mean auxiliary vector over ``n_replicates`` simulations at each
    candidate parameter.  Every evaluation reuses the same per-replicate
    random streams (common random numbers), so the objective is a fixed
    deterministic function of theta and the search is reproducible.  Hitting
    the evaluation budget, or a flat objective, returns the best point found
    with ``converged=False``.
    """
    a_obs = np.asarray(aux_map.apply(observed), dtype=float)
    d = a_obs.shape[0]
    metric = np.eye(d) if config.metric is None else np.atleast_2d(np.asarray(config.metric, dtype=float))
    if metric.shape != (d, d):
        raise ValueError("metric shape does not match the auxiliary dimension")
    try:
        np.linalg.cholesky(metric)
    except np.linalg.LinAlgError:
        raise ValueError("distance metric must be positive definite") from None

    if config.theta0 is not None:
        theta0 = np.asarray(config.theta0, dtype=float).ravel()
    else:
        theta0 = np.mean([model.prior.sample(rng) for _ in range(100)], axis=0)
    replicate_seeds = rng.bit_generator.seed_seq.spawn(config.n_replicates)

    trace = []
    validity = getattr(model, "training_ok", None)

    def objective(theta):
        theta = np.asarray(theta, dtype=float)
        if not np.isfinite(model.prior.log_density(theta)):
            value = config.penalty
        else:
            rows = []
            for seed in replicate_seeds:
                child = np.random.default_rng(seed)
                try:
                    ds = _simulate_valid(model, theta, child, validity)
                except ValueError:
                    ds = None
                if ds is not None:
                    rows.append(aux_map.apply(ds))
            if len(rows) < max(2, config.n_replicates // 2):
                value = config.penalty
            else:
                diff = np.mean(rows, axis=0) - a_obs
                value = float(diff @ metric @ diff)
        trace.append((theta.copy(), value))
        return value

    result = minimize(objective, theta0, method="Nelder-Mead",
                      options={"maxfev": config.max_evals, "xatol": config.xatol,
                               "fatol": config.fatol, "disp": False})
    thetas, values = zip(*trace)
    best_idx = int(np.argmin(values))
    best_theta, best_value = np.asarray(thetas[best_idx]), float(values[best_idx])

    real = [v for v in values if v < config.penalty / 2]
    flat = (len(real) >= 2
            and max(real) - min(real) <= config.flat_tol * (1.0 + abs(min(real))))
    converged = bool(result.success) and not flat
    return IndirectResult(best_theta, best_value, converged, flat, len(trace), trace)
