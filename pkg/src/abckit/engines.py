"""Single-dataset ABC engines: importance/rejection sampling, MCMC sampling,
the noisy-observation variant, and acceptance-rate bandwidth tuning."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .kernels import UNIFORM_ELLIPSOID, DensityKernel, WeightedSample
from .models.base import Prior

DEFAULT_CHUNK_SIZE = 1024


# ---------------------------------------------------------------------------
# problem definition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbcProblem:
    """A model, a summary map, an observed summary, and an acceptance kernel.

    ``prior`` defaults to the model's own prior; passing a truncated prior
    restricts both proposal sampling and density evaluation.
    """

    model: object
    summary: object
    s_obs: np.ndarray
    kernel: DensityKernel
    prior: Prior | None = None

    def __post_init__(self):
        object.__setattr__(self, "s_obs", np.asarray(self.s_obs, dtype=float).ravel())
        if self.s_obs.size != self.summary.dim:
            raise ValueError(
                f"observed summary has {self.s_obs.size} entries, map declares {self.summary.dim}"
            )
        if self.kernel.dim != self.s_obs.size:
            raise ValueError(
                f"kernel dimension {self.kernel.dim} does not match summary dimension {self.s_obs.size}"
            )
        if not np.all(np.isfinite(self.s_obs)):
            raise ValueError("observed summary must be finite")

    @classmethod
    def from_observed(cls, model, summary, observed_dataset, kernel, prior=None):
        return cls(model, summary, summary.apply(observed_dataset), kernel, prior)

    @property
    def effective_prior(self) -> Prior:
        return self.prior if self.prior is not None else self.model.prior

    def with_bandwidth(self, h: float) -> "AbcProblem":
        return replace(self, kernel=self.kernel.with_bandwidth(h))

    def with_s_obs(self, s_obs) -> "AbcProblem":
        return replace(self, s_obs=np.asarray(s_obs, dtype=float).ravel())


@dataclass(frozen=True)
class NoisyObservation:
    """Record of the single observation perturbation: s_eff = original + h*x."""

    original: np.ndarray
    perturbation: np.ndarray
    bandwidth_h: float

    @property
    def effective(self) -> np.ndarray:
        return self.original + self.bandwidth_h * self.perturbation


def make_noisy(problem: AbcProblem, rng, h: float | None = None):
    """Perturb the observed summary by h*x with x drawn once from the kernel.

    Returns (noisy problem, NoisyObservation).  h defaults to the problem
    kernel's bandwidth; h = 0 leaves the observation unchanged.
    """
    if h is None:
        h = problem.kernel.bandwidth_h
    if h < 0:
        raise ValueError("bandwidth must be nonnegative")
    x = problem.kernel.sample(rng)
    record = NoisyObservation(problem.s_obs.copy(), np.asarray(x, dtype=float), float(h))
    return problem.with_s_obs(record.effective), record


# ---------------------------------------------------------------------------
# importance / rejection sampling
# ---------------------------------------------------------------------------

@dataclass
class AbcResult:
    """Weighted ABC output plus proposal accounting."""

    sample: WeightedSample
    n_proposals: int
    n_accepted: int
    n_invalid: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposals if self.n_proposals else 0.0


def _simulate_valid(model, theta, rng, validity):
    """One dataset, or None when the simulator overflowed or the model's
    validity rule discards the draw."""
    ds = model.simulate(theta, rng)
    if ds.overflow:
        return None
    if validity is not None and not validity(ds):
        return None
    return ds


def _importance_chunk(problem, proposal, count, child_rng):
    model = problem.model
    summary = problem.summary
    kernel = problem.kernel
    h = kernel.bandwidth_h
    s_obs = problem.s_obs
    prior = problem.effective_prior
    validity = getattr(model, "training_ok", None)
    rejection_mode = proposal is None
    sampler = prior if rejection_mode else proposal
    thetas, weights, stats = [], [], []
    n_invalid = 0
    for _ in range(count):
        theta = sampler.sample(child_rng)
        ds = _simulate_valid(model, theta, child_rng, validity)
        if ds is None:
            n_invalid += 1
            continue
        s = summary.apply(ds)
        k = kernel.evaluate((s - s_obs) / h)
        if k <= 0.0:
            continue
        if k < 1.0 and child_rng.random() >= k:
            continue
        if rejection_mode:
            w = 1.0
        else:
            log_prior = prior.log_density(theta)
            log_prop = proposal.log_density(theta)
            if log_prop == -np.inf:
                raise RuntimeError(
                    "proposal density is zero at one of its own draws; "
                    "the proposal must cover the prior support"
                )
            w = float(np.exp(log_prior - log_prop))
        thetas.append(theta)
        weights.append(w)
        stats.append(s)
    return thetas, weights, stats, n_invalid


def abc_importance(problem: AbcProblem, n_proposals: int, rng, proposal: Prior | None = None,
                   chunk_size: int = DEFAULT_CHUNK_SIZE, threads: int = 1) -> AbcResult:
    """Accept each proposal with probability K((s - s_obs)/h) and weight the
    kept draws by prior/proposal density ratios (1 in rejection mode).

    Work is split into fixed-size chunks, each driven by its own child
    generator spawned from ``rng``, and chunk outputs are concatenated in
    chunk order — so results are identical for any ``threads`` value.
    """
    n_proposals = int(n_proposals)
    if n_proposals < 1:
        raise ValueError("need at least one proposal")
    if chunk_size < 1:
        raise ValueError("chunk size must be positive")
    prior = problem.effective_prior
    n_chunks = -(-n_proposals // chunk_size)
    counts = [chunk_size] * (n_chunks - 1) + [n_proposals - chunk_size * (n_chunks - 1)]
    child_rngs = rng.spawn(n_chunks)

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda args: _importance_chunk(problem, proposal, *args),
                    zip(counts, child_rngs),
                )
            )
    else:
        parts = [
            _importance_chunk(problem, proposal, count, child)
            for count, child in zip(counts, child_rngs)
        ]

    thetas = [t for part in parts for t in part[0]]
    weights = [w for part in parts for w in part[1]]
    stats = [s for part in parts for s in part[2]]
    n_invalid = sum(part[3] for part in parts)
    p_dim = prior.dim
    s_dim = problem.summary.dim
    sample = WeightedSample(
        np.asarray(thetas, dtype=float).reshape(len(thetas), p_dim),
        np.asarray(weights, dtype=float),
        np.asarray(stats, dtype=float).reshape(len(stats), s_dim),
    )
    return AbcResult(sample, n_proposals, len(thetas), n_invalid)


def abc_rejection(problem: AbcProblem, n_proposals: int, rng,
                  chunk_size: int = DEFAULT_CHUNK_SIZE, threads: int = 1) -> AbcResult:
    """Importance sampling with the prior as proposal: all weights are 1."""
    return abc_importance(problem, n_proposals, rng, proposal=None,
                          chunk_size=chunk_size, threads=threads)


# ---------------------------------------------------------------------------
# working transforms for MCMC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Transform:
    """Bijection between parameter space and an unconstrained working space.

    ``log_abs_det_jacobian`` is log|d inverse(t) / dt| at a working point t;
    it enters the MCMC prior ratio so chains in working space target the
    correct distribution in parameter space.
    """

    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    log_abs_det_jacobian: Callable[[np.ndarray], float]


LOG_TRANSFORM = Transform(
    name="log",
    forward=lambda theta: np.log(np.asarray(theta, dtype=float)),
    inverse=lambda t: np.exp(np.asarray(t, dtype=float)),
    log_abs_det_jacobian=lambda t: float(np.sum(t)),
)


# ---------------------------------------------------------------------------
# MCMC sampling
# ---------------------------------------------------------------------------

@dataclass
class McmcConfig:
    """Random-walk MCMC settings.

    Exactly one of ``proposal_cov`` (Gaussian walk covariance, applied in the
    working space) or ``proposal_sampler`` (a symmetric proposal callable
    ``f(point, rng) -> point``) must be given.  ``s0`` may supply the initial
    accepted summary; otherwise it is found by simulating at ``theta0``.
    """

    n_steps: int
    theta0: np.ndarray
    proposal_cov: np.ndarray | None = None
    proposal_sampler: Callable | None = None
    s0: np.ndarray | None = None
    burn_in_fraction: float = 0.1
    transform: Transform | None = None
    init_tries: int = 10_000

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float).ravel()
        if (self.proposal_cov is None) == (self.proposal_sampler is None):
            raise ValueError("give exactly one of proposal_cov or proposal_sampler")
        if self.proposal_cov is not None:
            self.proposal_cov = np.atleast_2d(np.asarray(self.proposal_cov, dtype=float))
            if self.proposal_cov.shape != (self.theta0.size, self.theta0.size):
                raise ValueError("proposal covariance shape must match the parameter count")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn-in fraction must be in [0, 1)")
        if self.n_steps < 1:
            raise ValueError("need at least one step")


@dataclass
class McmcResult:
    sample: WeightedSample  # post-burn-in states, unit weights
    accepted_flags: np.ndarray  # per-step accept indicator, full chain
    burn_in: int
    n_steps: int

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted_flags.mean())


def _mcmc_log_target(prior, transform, theta, t_work):
    lp = prior.log_density(theta)
    if lp == -np.inf:
        return -np.inf
    if transform is not None:
        lp += transform.log_abs_det_jacobian(t_work)
    return lp


def abc_mcmc(problem: AbcProblem, config: McmcConfig, rng) -> McmcResult:
    """Random-walk ABC MCMC: accept a proposed theta with probability
    min{1, [K(s')/K(s)] * [prior(theta') / prior(theta)]} (symmetric
    proposal), keeping the previous accepted summary on rejection."""
    model = problem.model
    summary = problem.summary
    kernel = problem.kernel
    h = kernel.bandwidth_h
    s_obs = problem.s_obs
    prior = problem.effective_prior
    validity = getattr(model, "training_ok", None)
    transform = config.transform

    theta = config.theta0.copy()
    t_work = transform.forward(theta) if transform is not None else theta.copy()
    log_target = _mcmc_log_target(prior, transform, theta, t_work)
    if log_target == -np.inf:
        raise ValueError("initial parameter value has zero prior density")

    if config.s0 is not None:
        s_cur = np.asarray(config.s0, dtype=float).ravel()
        k_cur = kernel.evaluate((s_cur - s_obs) / h)
    else:
        k_cur = 0.0
        s_cur = None
        for _ in range(config.init_tries):
            ds = _simulate_valid(model, theta, rng, validity)
            if ds is None:
                continue
            s_try = summary.apply(ds)
            k_try = kernel.evaluate((s_try - s_obs) / h)
            if k_try > 0.0:
                s_cur, k_cur = s_try, k_try
                break
        if s_cur is None:
            raise RuntimeError(
                f"no positive kernel value in {config.init_tries} simulations at the "
                "initial point; increase the bandwidth h or start elsewhere"
            )
    if k_cur <= 0.0:
        raise ValueError("initial summary has zero kernel value; increase the bandwidth h")

    chol = None
    if config.proposal_cov is not None:
        try:
            chol = np.linalg.cholesky(config.proposal_cov)
        except np.linalg.LinAlgError as err:
            raise ValueError("proposal covariance must be positive definite") from err

    n_steps = config.n_steps
    p = theta.size
    chain = np.empty((n_steps, p))
    s_chain = np.empty((n_steps, problem.summary.dim))
    flags = np.zeros(n_steps, dtype=bool)

    for step in range(n_steps):
        if chol is not None:
            t_prop = t_work + chol @ rng.standard_normal(p)
        else:
            t_prop = np.asarray(config.proposal_sampler(t_work, rng), dtype=float).ravel()
        theta_prop = transform.inverse(t_prop) if transform is not None else t_prop
        log_target_prop = _mcmc_log_target(prior, transform, theta_prop, t_prop)
        accept = False
        if log_target_prop > -np.inf:
            ds = _simulate_valid(model, theta_prop, rng, validity)
            if ds is not None:
                s_prop = summary.apply(ds)
                k_prop = kernel.evaluate((s_prop - s_obs) / h)
                if k_prop > 0.0:
                    log_ratio = (
                        math.log(k_prop) - math.log(k_cur) + log_target_prop - log_target
                    )
                    if log_ratio >= 0.0 or rng.random() < math.exp(log_ratio):
                        accept = True
        if accept:
            theta, t_work = theta_prop, t_prop
            s_cur, k_cur = s_prop, k_prop
            log_target = log_target_prop
        chain[step] = theta
        s_chain[step] = s_cur
        flags[step] = accept

    burn = int(config.burn_in_fraction * n_steps)
    sample = WeightedSample(chain[burn:], np.ones(n_steps - burn), s_chain[burn:])
    return McmcResult(sample, flags, burn, n_steps)


# ---------------------------------------------------------------------------
# bandwidth tuning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandwidthTune:
    bandwidth_h: float
    achieved_rate: float
    degenerate: bool
    n_valid: int


def tune_bandwidth(problem: AbcProblem, target_rate: float, pilot_n: int, rng) -> BandwidthTune:
    """Choose h from ``pilot_n`` prior-predictive simulations so the expected
    acceptance rate is close to ``target_rate``.

    Uniform-ellipsoid kernel: h is the target-rate quantile of the
    metric-whitened distances (upper-quantile convention, max for rate 1).
    Gaussian kernel: h solves mean kernel value = target by bisection.
    """
    if not 0.0 < target_rate <= 1.0:
        raise ValueError("target rate must be in (0, 1]")
    pilot_n = int(pilot_n)
    if pilot_n < 10:
        raise ValueError("need at least 10 pilot simulations")
    model = problem.model
    prior = problem.effective_prior
    validity = getattr(model, "training_ok", None)
    stats = []
    for _ in range(pilot_n):
        theta = prior.sample(rng)
        ds = _simulate_valid(model, theta, rng, validity)
        if ds is None:
            continue
        stats.append(problem.summary.apply(ds))
    if len(stats) < 10:
        raise ValueError("fewer than 10 valid pilot simulations")
    quad = problem.kernel.quad_form(np.asarray(stats) - problem.s_obs)
    dist = np.sqrt(quad)
    n_nonzero = int(np.count_nonzero(dist))
    if n_nonzero == 0:
        # every pilot summary equals the observation exactly
        return BandwidthTune(np.finfo(float).tiny, 1.0, True, len(stats))
    if n_nonzero < 10:
        raise ValueError("fewer than 10 nonzero pilot distances; cannot tune a bandwidth")

    if problem.kernel.shape == UNIFORM_ELLIPSOID:
        if target_rate >= 1.0:
            h = float(dist.max()) * (1.0 + 1e-12)
        else:
            h = float(np.quantile(dist, target_rate, method="higher"))
            if h <= 0.0:
                h = float(dist[dist > 0].min())
        achieved = float(np.mean(dist < h))
        return BandwidthTune(h, achieved, False, len(stats))

    # Gaussian kernel: expected acceptance is mean exp(-q / (2 h^2)),
    # increasing in h, so bisection brackets the target.
    def mean_accept(h):
        return float(np.mean(np.exp(-quad / (2.0 * h * h))))

    hi = max(float(np.sqrt(quad.max())), 1e-12)
    for _ in range(200):
        if mean_accept(hi) >= target_rate:
            break
        hi *= 2.0
    lo = hi * 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_accept(mid) < target_rate:
            lo = mid
        else:
            hi = mid
    h = 0.5 * (lo + hi)
    return BandwidthTune(h, mean_accept(h), False, len(stats))
