"""Regression-trained summary statistics.

Pipeline: a pilot ABC run locates the posterior region, the prior is
truncated to that region, simulated (parameter, dataset) pairs train
per-parameter linear regressions on candidate feature sets, an information
criterion picks the feature set, and the fitted conditional-mean predictions
become the summary statistics for a final ABC run on the truncated prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engines import (
    AbcProblem,
    AbcResult,
    McmcConfig,
    abc_importance,
    abc_mcmc,
    make_noisy,
    tune_bandwidth,
)
from .kernels import UNIFORM_ELLIPSOID, DensityKernel, WeightedSample
from .models.base import Dataset, Prior, SummaryMap, TruncatedPrior

TUNE_FRACTION = 0.2  # share of each ABC stage's simulation budget spent picking h


# ---------------------------------------------------------------------------
# feature maps: SummaryMap plus combinators
# ---------------------------------------------------------------------------

FeatureMap = SummaryMap  # features and summaries share one interface


def feature_union(*maps: SummaryMap) -> SummaryMap:
    """Concatenate several feature maps into one."""
    if not maps:
        raise ValueError("need at least one feature map")
    name = "+".join(m.name for m in maps)
    dim = sum(m.dim for m in maps)
    return SummaryMap(name, dim, lambda ds: np.concatenate([m.apply(ds) for m in maps]))


def power_expansion(base: SummaryMap, max_power: int) -> SummaryMap:
    """Features (f, f^2, ..., f^max_power) built from a base map."""
    if max_power < 1:
        raise ValueError("max power must be at least 1")
    if max_power == 1:
        return base

    def fn(ds, _base=base, _l=max_power):
        f = _base.apply(ds)
        return np.concatenate([f**k for k in range(1, _l + 1)])

    return SummaryMap(f"{base.name}_pow{max_power}", base.dim * max_power, fn)


# ---------------------------------------------------------------------------
# training region and training sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingRegion:
    """Axis-aligned hypercube of parameter values used to truncate the prior."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lows", np.asarray(self.lows, dtype=float).ravel())
        object.__setattr__(self, "highs", np.asarray(self.highs, dtype=float).ravel())
        if self.lows.shape != self.highs.shape:
            raise ValueError("region bounds must have matching shapes")
        if not np.all(self.lows < self.highs):
            raise ValueError("region must have strictly positive volume in every coordinate")

    @property
    def dim(self) -> int:
        return self.lows.size

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lows) & (pts <= self.highs), axis=1)


def pilot_region(pilot_sample: WeightedSample) -> TrainingRegion:
    """Componentwise range of the positively weighted pilot draws."""
    keep = pilot_sample.weights > 0
    if not np.any(keep):
        raise ValueError("pilot sample has no positively weighted draws")
    pts = pilot_sample.points[keep]
    lows = pts.min(axis=0)
    highs = pts.max(axis=0)
    if np.any(lows >= highs):
        raise ValueError(
            "pilot range is degenerate in at least one coordinate; "
            "enlarge the pilot run or raise its acceptance rate"
        )
    return TrainingRegion(lows, highs)


@dataclass
class TrainingSet:
    """Simulated (theta, dataset) pairs drawn from the truncated prior."""

    thetas: np.ndarray  # (M, p)
    datasets: list
    n_discarded: int = 0
    region: TrainingRegion | None = None

    @property
    def size(self) -> int:
        return len(self.datasets)


def generate_training(model, region: TrainingRegion | None, m_pairs: int, rng,
                      max_attempt_factor: int = 20) -> TrainingSet:
    """Simulate ``m_pairs`` valid training pairs from the region-truncated prior.

    ``region=None`` samples the (proper) prior directly.  Draws failing the
    model's validity rule (overflow, or a model-attached discard rule) are
    regenerated and counted in ``n_discarded``.
    """
    if m_pairs < 0:
        raise ValueError("number of training pairs must be nonnegative")
    if region is None:
        prior = model.prior
        if not getattr(prior, "proper", True):
            raise ValueError("cannot sample an improper prior directly; provide a region")
    else:
        prior = TruncatedPrior(model.prior, region.lows, region.highs)
    validity = getattr(model, "training_ok", None)
    thetas, datasets = [], []
    n_discarded = 0
    max_attempts = max_attempt_factor * max(m_pairs, 1) + 100
    attempts = 0
    while len(datasets) < m_pairs:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"only {len(datasets)} of {m_pairs} training pairs were valid after "
                f"{attempts} attempts; the discard rate is too high"
            )
        attempts += 1
        theta = prior.sample(rng)
        ds = model.simulate(theta, rng)
        if ds.overflow or (validity is not None and not validity(ds)):
            n_discarded += 1
            continue
        thetas.append(theta)
        datasets.append(ds)
    p = prior.dim
    return TrainingSet(np.asarray(thetas, dtype=float).reshape(len(datasets), p),
                       datasets, n_discarded, region)


# ---------------------------------------------------------------------------
# least-squares summary fitting
# ---------------------------------------------------------------------------

@dataclass
class LearnedSummary:
    """Per-parameter linear predictions used as summary statistics.

    ``apply`` returns B z(f(y)) where z standardizes features by the stored
    training means/sds; the fitted intercepts are dropped (they shift every
    summary by a constant, which cancels in the ABC discrepancy).
    """

    feature_map: SummaryMap
    coef: np.ndarray  # (p, q) on the standardized feature scale
    intercepts: np.ndarray  # (p,)
    feature_means: np.ndarray  # (q,)
    feature_sds: np.ndarray  # (q,)
    rss: np.ndarray  # (p,)
    bic: np.ndarray  # (p,)
    n_training: int
    rank_deficient: bool = False
    constant_features: tuple = ()
    response_transform: Callable | None = None

    @property
    def dim(self) -> int:
        return self.coef.shape[0]

    @property
    def name(self) -> str:
        return f"learned[{self.feature_map.name}]"

    @property
    def mean_bic(self) -> float:
        return float(np.mean(self.bic))

    def standardize(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.feature_means) / self.feature_sds

    def raw_coefficients(self) -> np.ndarray:
        """Coefficients on the unstandardized feature scale."""
        return self.coef / self.feature_sds

    def apply(self, dataset) -> np.ndarray:
        f = self.feature_map.apply(dataset)
        return self.coef @ self.standardize(f)

    def predict(self, features) -> np.ndarray:
        """Fitted conditional means (intercepts included) for a feature batch."""
        z = self.standardize(np.atleast_2d(features))
        return self.intercepts + z @ self.coef.T


def fit_summaries(training: TrainingSet, feature_map: SummaryMap,
                  response_transform: Callable | None = None) -> LearnedSummary:
    """Least squares of each parameter on standardized features.

    ``response_transform`` optionally maps the (M, p) parameter draws to the
    regression targets (for reparameterized analyses); the learned summary
    then predicts the transformed parameters.
    """
    m_size = training.size
    if m_size == 0:
        raise ValueError("training set is empty; nothing to fit")
    targets = training.thetas
    if response_transform is not None:
        targets = np.asarray(response_transform(training.thetas), dtype=float)
        if targets.shape[0] != m_size:
            raise ValueError("response transform changed the number of rows")
    features = np.asarray([feature_map.apply(ds) for ds in training.datasets])
    q = feature_map.dim
    means = features.mean(axis=0)
    sds = features.std(axis=0)
    constant = tuple(int(j) for j in np.flatnonzero(sds == 0))
    sds = np.where(sds == 0, 1.0, sds)
    design = np.column_stack([np.ones(m_size), (features - means) / sds])

    solution, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    rank_deficient = rank < design.shape[1]
    if rank_deficient:
        # collinear columns: refit with a small ridge penalty on the feature
        # coefficients (never the intercept) so the fit stays well defined
        gram = design.T @ design
        lam = 1e-8 * np.trace(gram) / max(q, 1)
        penalty = lam * np.eye(q + 1)
        penalty[0, 0] = 0.0
        solution = np.linalg.solve(gram + penalty, design.T @ targets)

    residuals = targets - design @ solution
    rss = np.sum(residuals**2, axis=0)
    bic = m_size * np.log(np.maximum(rss, 1e-300) / m_size) + (q + 1) * math.log(m_size)
    return LearnedSummary(
        feature_map=feature_map,
        coef=solution[1:].T.copy(),
        intercepts=solution[0].copy(),
        feature_means=means,
        feature_sds=sds,
        rss=rss,
        bic=bic,
        n_training=m_size,
        rank_deficient=rank_deficient,
        constant_features=constant,
        response_transform=response_transform,
    )


@dataclass
class FeatureSelection:
    best: LearnedSummary
    table: list  # (name, mean BIC) per candidate, in candidate order


def select_features(training: TrainingSet, candidates: Sequence[SummaryMap],
                    response_transform: Callable | None = None) -> FeatureSelection:
    """Fit every candidate on the same training simulations and return the
    one with the lowest parameter-averaged information criterion."""
    if not candidates:
        raise ValueError("need at least one candidate feature map")
    fits = [fit_summaries(training, fmap, response_transform) for fmap in candidates]
    table = [(fit.feature_map.name, fit.mean_bic) for fit in fits]
    best = min(range(len(fits)), key=lambda i: fits[i].mean_bic)
    return FeatureSelection(fits[best], table)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class SemiAutoConfig:
    """Budget split and engine settings for the four-stage pipeline.

    ``budget`` counts simulated datasets.  With a pilot the split is
    pilot/training/final = pilot_fraction/training_fraction/rest; without one
    (``pilot_summary=None`` and a box-supported proper prior, or an explicit
    ``region``) the pilot share goes to the final run.  Each ABC stage spends
    TUNE_FRACTION of its share on bandwidth tuning unless a bandwidth is
    given explicitly.
    """

    budget: int
    pilot_summary: SummaryMap | None = None
    region: TrainingRegion | None = None
    pilot_fraction: float = 0.25
    training_fraction: float = 0.25
    pilot_target_rate: float = 0.01
    final_target_rate: float = 0.01
    kernel_shape: str = UNIFORM_ELLIPSOID
    pilot_metric: np.ndarray | None = None
    loss_metric: np.ndarray | None = None
    pilot_h: float | None = None
    final_h: float | None = None
    pilot_mcmc: McmcConfig | None = None
    noisy: bool = False
    response_transform: Callable | None = None
    threads: int = 1


@dataclass
class SemiAutoResult:
    sample: WeightedSample
    learned: LearnedSummary
    region: TrainingRegion
    selection_table: list
    final: AbcResult
    pilot: object = None  # AbcResult or McmcResult when a pilot ran
    pilot_bandwidth: float | None = None
    final_bandwidth: float | None = None
    n_training: int = 0
    n_training_discarded: int = 0
    noisy_record: object = None
    n_simulations: int = 0


def _stage_problem(model, summary, observed, shape, metric, h, prior=None):
    s_obs = summary.apply(observed)
    metric = np.eye(summary.dim) if metric is None else np.atleast_2d(metric)
    return AbcProblem(model, summary, s_obs, DensityKernel(shape, metric, h), prior)


def _run_pilot(model, observed, config, rng):
    """Pilot stage: returns (pilot result, region, simulations used)."""
    budget = int(config.budget * config.pilot_fraction)
    summary = config.pilot_summary
    if config.pilot_mcmc is not None:
        if config.pilot_h is None:
            raise ValueError("an MCMC pilot needs an explicit pilot bandwidth")
        problem = _stage_problem(model, summary, observed, config.kernel_shape,
                                 config.pilot_metric, config.pilot_h)
        mcmc_config = config.pilot_mcmc
        if mcmc_config.n_steps > budget:
            raise ValueError("MCMC pilot chain length exceeds the pilot budget")
        result = abc_mcmc(problem, mcmc_config, rng)
        return result, pilot_region(result.sample), budget, config.pilot_h

    if config.pilot_h is not None:
        h = config.pilot_h
        run_n = budget
    else:
        tune_n = max(10, int(TUNE_FRACTION * budget))
        run_n = budget - tune_n
        problem = _stage_problem(model, summary, observed, config.kernel_shape,
                                 config.pilot_metric, 1.0)
        h = tune_bandwidth(problem, config.pilot_target_rate, tune_n, rng).bandwidth_h
    problem = _stage_problem(model, summary, observed, config.kernel_shape,
                             config.pilot_metric, h)
    result = abc_importance(problem, run_n, rng, threads=config.threads)
    if result.n_accepted == 0:
        raise RuntimeError(
            f"pilot run accepted none of {run_n} proposals at h={h:.6g}; "
            "raise the pilot target rate or budget"
        )
    return result, pilot_region(result.sample), budget, h


def _prior_box_region(prior: Prior) -> TrainingRegion:
    lows, highs = prior.support
    if not (np.all(np.isfinite(lows)) and np.all(np.isfinite(highs))):
        raise ValueError(
            "cannot skip the pilot stage: the prior support is unbounded, "
            "so no training region exists without a pilot run"
        )
    return TrainingRegion(lows, highs)


def semiauto_run(model, observed: Dataset, candidates: Sequence[SummaryMap],
                 config: SemiAutoConfig, rng) -> SemiAutoResult:
    """Pilot -> training region -> fitted summaries -> final truncated-prior ABC."""
    if config.budget < 40:
        raise ValueError("budget too small to split across stages")
    pilot_result = None
    pilot_h = None
    pilot_sims = 0
    if config.region is not None:
        region = config.region
    elif config.pilot_summary is not None:
        pilot_result, region, pilot_sims, pilot_h = _run_pilot(model, observed, config, rng)
    else:
        region = _prior_box_region(model.prior)

    m_train = int(config.budget * config.training_fraction)
    training = generate_training(model, region, m_train, rng)
    selection = select_features(training, candidates, config.response_transform)
    learned = selection.best

    final_budget = config.budget - pilot_sims - m_train - training.n_discarded
    if final_budget < 20:
        raise RuntimeError(
            "training discards consumed the final-run budget; "
            "increase the budget or loosen the discard rule"
        )
    truncated = TruncatedPrior(model.prior, region.lows, region.highs)
    if config.final_h is not None:
        final_h = config.final_h
        run_n = final_budget
    else:
        tune_n = max(10, int(TUNE_FRACTION * final_budget))
        run_n = final_budget - tune_n
        problem = _stage_problem(model, learned, observed, config.kernel_shape,
                                 config.loss_metric, 1.0, prior=truncated)
        final_h = tune_bandwidth(problem, config.final_target_rate, tune_n, rng).bandwidth_h
    problem = _stage_problem(model, learned, observed, config.kernel_shape,
                             config.loss_metric, final_h, prior=truncated)
    noisy_record = None
    if config.noisy:
        problem, noisy_record = make_noisy(problem, rng)
    final = abc_importance(problem, run_n, rng, threads=config.threads)

    return SemiAutoResult(
        sample=final.sample,
        learned=learned,
        region=region,
        selection_table=selection.table,
        final=final,
        pilot=pilot_result,
        pilot_bandwidth=pilot_h,
        final_bandwidth=final_h,
        n_training=training.size,
        n_training_discarded=training.n_discarded,
        noisy_record=noisy_record,
        n_simulations=pilot_sims + training.size + training.n_discarded + final_budget,
    )


# ---------------------------------------------------------------------------
# two-parameter rotation for strongly correlated posteriors
# ---------------------------------------------------------------------------

@dataclass
class RotationResult:
    """Orthogonal reparameterization (u, v) = M (a, d) with v along the fitted
    ridge of the pilot sample and u constant on it."""

    matrix: np.ndarray  # 2x2, det +1
    slope: float  # fitted d-vs-a slope (or a-vs-d slope when swapped)
    swapped: bool  # True when the ridge was essentially vertical
    low_anisotropy: bool  # True when the cloud shows little correlation

    def rotate_points(self, points) -> np.ndarray:
        return np.atleast_2d(np.asarray(points, dtype=float)) @ self.matrix.T

    def unrotate_points(self, uv) -> np.ndarray:
        return np.atleast_2d(np.asarray(uv, dtype=float)) @ self.matrix


def tb_rotation(pilot_sample: WeightedSample, anisotropy_threshold: float = 0.2) -> RotationResult:
    """Weighted least-squares line through a 2-d pilot cloud, returned as the
    rotation sending the line direction to the second coordinate."""
    pts = pilot_sample.points
    w = pilot_sample.weights
    if pts.shape[1] != 2:
        raise ValueError("rotation construction needs exactly 2 parameters")
    keep = w > 0
    if np.count_nonzero(keep) < 2:
        raise ValueError("need at least two positively weighted pilot draws")
    pts, w = pts[keep], w[keep]
    wsum = w.sum()
    a = pts[:, 0] - np.sum(w * pts[:, 0]) / wsum
    d = pts[:, 1] - np.sum(w * pts[:, 1]) / wsum
    var_a = np.sum(w * a * a) / wsum
    var_d = np.sum(w * d * d) / wsum
    cov_ad = np.sum(w * a * d) / wsum
    if var_a == 0 and var_d == 0:
        raise ValueError("pilot cloud is a single point; no direction to fit")
    corr = abs(cov_ad) / np.sqrt(var_a * var_d) if var_a > 0 and var_d > 0 else 0.0
    low_anisotropy = corr < anisotropy_threshold

    if var_a <= 1e-12 * var_d:
        # vertical ridge: regress a on d instead; direction is (slope, 1)
        slope = cov_ad / var_d
        scale = math.sqrt(1.0 + slope * slope)
        matrix = np.array([[1.0, -slope], [slope, 1.0]]) / scale
        return RotationResult(matrix, float(slope), True, low_anisotropy)

    slope = cov_ad / var_a  # d ~ slope * a; line direction (1, slope)
    scale = math.sqrt(1.0 + slope * slope)
    matrix = np.array([[slope, -1.0], [1.0, slope]]) / scale
    return RotationResult(matrix, float(slope), False, low_anisotropy)
