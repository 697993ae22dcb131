"""Tests for the single-dataset ABC engines.

Reference values come from closed-form conjugate posteriors, exact finite
enumeration, and direct Monte Carlo error bounds computed in the tests.
"""

import numpy as np
import pytest

from abckit.engines import (
    LOG_TRANSFORM,
    AbcProblem,
    McmcConfig,
    abc_importance,
    abc_mcmc,
    abc_rejection,
    make_noisy,
    tune_bandwidth,
)
from abckit.kernels import gaussian_kernel, uniform_kernel
from abckit.models.analytic import DiscreteToyModel, NormalMeanModel
from abckit.models.base import BoxUniformPrior, Dataset
from abckit.models.summaries import identity_stats, sample_mean_stat


def weighted_level_probs(sample, levels):
    """Weighted frequencies of each level with ratio-estimator standard errors."""
    w = sample.weights
    wsum = w.sum()
    probs, ses = [], []
    for level in levels:
        delta = (np.abs(sample.points[:, 0] - level) < 1e-9).astype(float)
        p = float((w * delta).sum() / wsum)
        var = float(np.sum(w**2 * (delta - p) ** 2) / wsum**2)
        probs.append(p)
        ses.append(np.sqrt(var))
    return np.array(probs), np.array(ses)


class WeightedLevelProposal:
    """Independent proposal over the five toy levels with chosen probabilities."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        self._cum = np.cumsum(self.probs)
        self.dim = 1
        self.proper = True

    def sample(self, rng):
        return np.array([float(np.searchsorted(self._cum, rng.random() * self._cum[-1], side="right") + 1)])

    def log_density(self, theta):
        level = int(round(float(np.asarray(theta).ravel()[0])))
        if not 1 <= level <= 5:
            return -np.inf
        return float(np.log(self.probs[level - 1] / self._cum[-1]))


class ConstantSummaryModel:
    """simulate() always returns the same data vector (kernel value is max)."""

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def simulate(self, theta, rng):
        return Dataset(self.value.copy())


class OverflowModel:
    """Every simulation reports overflow, so every proposal must be rejected."""

    def simulate(self, theta, rng):
        return Dataset(np.zeros(1), overflow=True)


def toy_problem(y_obs=2, h=0.5):
    model = DiscreteToyModel()
    return model, AbcProblem(model, identity_stats(1), np.array([float(y_obs)]),
                             uniform_kernel([[1.0]], h))


class TestRejectionAndImportance:
    def test_rejection_matches_enumeration(self):
        # uniform kernel with h = 0.5 on integer data accepts exact matches only
        model, problem = toy_problem(y_obs=2)
        rng = np.random.default_rng(1001)
        result = abc_rejection(problem, 120_000, rng)
        assert result.n_accepted > 20_000
        assert np.all(result.sample.weights == 1.0)
        exact = model.exact_posterior(2)
        probs, ses = weighted_level_probs(result.sample, [1, 2, 3, 4, 5])
        assert np.all(np.abs(probs - exact) < 3 * ses + 1e-4)
        # accepted summaries are stored and all equal the observation here
        assert np.all(result.sample.summaries == 2.0)

    def test_importance_weights_correct_for_biased_proposal(self):
        model, problem = toy_problem(y_obs=4)
        q = np.array([0.30, 0.10, 0.20, 0.15, 0.25])
        rng = np.random.default_rng(1002)
        result = abc_importance(problem, 120_000, rng, proposal=WeightedLevelProposal(q))
        # prior is uniform (unnormalised density 1), so each weight is 1/q_level
        levels = result.sample.points[:, 0].astype(int)
        assert np.allclose(result.sample.weights, 1.0 / q[levels - 1], rtol=1e-12)
        exact = model.exact_posterior(4)
        probs, ses = weighted_level_probs(result.sample, [1, 2, 3, 4, 5])
        assert np.all(np.abs(probs - exact) < 3 * ses + 1e-4)

    def test_zero_acceptances_reported_not_fatal(self):
        model = NormalMeanModel(n_obs=1, noise_sd=1.0)
        problem = AbcProblem(model, sample_mean_stat(), np.array([50.0]),
                             uniform_kernel([[1.0]], 1e-9))
        result = abc_rejection(problem, 300, np.random.default_rng(3))
        assert result.n_accepted == 0
        assert result.sample.points.shape == (0, 1)
        assert result.acceptance_rate == 0.0

    def test_overflow_counts_as_invalid(self):
        problem = AbcProblem(OverflowModel(), identity_stats(1), np.array([0.0]),
                             uniform_kernel([[1.0]], 1.0), prior=BoxUniformPrior([0.0], [1.0]))
        result = abc_rejection(problem, 400, np.random.default_rng(4))
        assert result.n_invalid == 400
        assert result.n_accepted == 0

    def test_thread_count_does_not_change_output(self):
        model = NormalMeanModel(n_obs=1, noise_sd=0.5)
        problem = AbcProblem(model, sample_mean_stat(), np.array([0.4]),
                             gaussian_kernel([[1.0]], 0.5))
        res_a = abc_rejection(problem, 5000, np.random.default_rng(77), chunk_size=256, threads=1)
        res_b = abc_rejection(problem, 5000, np.random.default_rng(77), chunk_size=256, threads=4)
        assert np.array_equal(res_a.sample.points, res_b.sample.points)
        assert np.array_equal(res_a.sample.weights, res_b.sample.weights)
        assert np.array_equal(res_a.sample.summaries, res_b.sample.summaries)
        assert res_a.n_invalid == res_b.n_invalid

    def test_problem_validates_dimensions(self):
        model = NormalMeanModel()
        with pytest.raises(ValueError):
            AbcProblem(model, sample_mean_stat(), np.array([0.0, 1.0]), uniform_kernel([[1.0]], 1.0))
        with pytest.raises(ValueError):
            AbcProblem(model, sample_mean_stat(), np.array([0.0]),
                       uniform_kernel(np.eye(2), 1.0))


class TestPosteriorAccuracy:
    def test_gaussian_kernel_posterior_matches_conjugate_formula(self):
        # Gaussian kernel with bandwidth h on the sample mean is exactly a
        # conjugate model with extra observation variance h^2
        model = NormalMeanModel(n_obs=1, noise_sd=0.1)
        h = 0.3
        problem = AbcProblem(model, sample_mean_stat(), np.array([1.5]),
                             gaussian_kernel([[1.0]], h))
        result = abc_rejection(problem, 60_000, np.random.default_rng(2024))
        pts = result.sample.points[:, 0]
        expected_mean, expected_var = model.posterior_mean_var(1.5, extra_var=h * h)
        se = pts.std(ddof=1) / np.sqrt(pts.size)
        assert abs(pts.mean() - expected_mean) < 3.5 * se
        assert abs(pts.var(ddof=1) - expected_var) < 0.1 * expected_var

    def test_error_shrinks_as_bandwidth_shrinks(self):
        # fixed observed mean, exact posterior known; at each replicate the
        # absolute error of the ABC posterior mean should drop with h
        model = NormalMeanModel(n_obs=1, noise_sd=0.1)
        s_obs = 1.5
        truth = model.posterior_mean_var(s_obs)[0]
        h_grid = [1.0, 0.3, 0.1, 0.03]
        n_reps = 30
        rng = np.random.default_rng(42)
        errors = np.zeros((n_reps, len(h_grid)))
        for rep in range(n_reps):
            for j, h in enumerate(h_grid):
                problem = AbcProblem(model, sample_mean_stat(), np.array([s_obs]),
                                     gaussian_kernel([[1.0]], h))
                result = abc_rejection(problem, 20_000, rng)
                errors[rep, j] = abs(result.sample.points[:, 0].mean() - truth)
        mean_err = errors.mean(axis=0)
        assert np.all(np.diff(mean_err) < 0), f"mean errors not decreasing: {mean_err}"
        for j in range(len(h_grid) - 1):
            wins = int(np.sum(errors[:, j + 1] < errors[:, j]))
            assert wins >= 18, f"h={h_grid[j + 1]} beat h={h_grid[j]} only {wins}/30 times"

    def test_acceptance_rate_scales_linearly_in_h_for_scalar_summary(self):
        # log acceptance vs log h has slope ~ summary dimension (here 1)
        model = NormalMeanModel(n_obs=1, noise_sd=1.0)
        h_grid = np.geomspace(0.05, 0.5, 5)
        rng = np.random.default_rng(555)
        rates = []
        for h in h_grid:
            problem = AbcProblem(model, sample_mean_stat(), np.array([0.3]),
                                 uniform_kernel([[1.0]], h))
            result = abc_rejection(problem, 150_000, rng)
            rates.append(result.acceptance_rate)
        slope = np.polyfit(np.log(h_grid), np.log(rates), 1)[0]
        assert 0.9 < slope < 1.1, f"acceptance slope {slope} outside 1 +/- 10%"


class TestNoisyObservation:
    def test_zero_bandwidth_leaves_observation_unchanged(self):
        _, problem = toy_problem()
        noisy, record = make_noisy(problem, np.random.default_rng(6), h=0.0)
        assert np.array_equal(noisy.s_obs, problem.s_obs)
        assert record.bandwidth_h == 0.0

    def test_perturbation_bounded_by_uniform_kernel_support(self):
        model = NormalMeanModel()
        problem = AbcProblem(model, sample_mean_stat(), np.array([1.0]),
                             uniform_kernel([[4.0]], 0.4))
        rng = np.random.default_rng(7)
        for _ in range(200):
            noisy, record = make_noisy(problem, rng)
            # metric 4 means |2x| < 1, so the shift h*x stays within h/2
            assert abs(record.perturbation[0]) < 0.5
            assert abs(noisy.s_obs[0] - 1.0) < 0.2
            assert np.array_equal(noisy.s_obs, record.effective)

    def test_perturbation_mean_zero(self):
        model = NormalMeanModel()
        problem = AbcProblem(model, sample_mean_stat(), np.array([0.0]),
                             uniform_kernel([[1.0]], 1.0))
        rng = np.random.default_rng(8)
        shifts = np.array([make_noisy(problem, rng)[1].perturbation[0] for _ in range(10_000)])
        # x is uniform on (-1, 1): sd = 1/sqrt(3)
        assert abs(shifts.mean()) < 3 * (1 / np.sqrt(3)) / np.sqrt(10_000)


class TestMcmc:
    def test_matches_enumeration(self):
        model, problem = toy_problem(y_obs=2)
        config = McmcConfig(
            n_steps=150_000,
            theta0=np.array([3.0]),
            proposal_sampler=lambda t, rng: np.array([float(rng.integers(1, 6))]),
        )
        result = abc_mcmc(problem, config, np.random.default_rng(2023))
        exact = model.exact_posterior(2)
        pts = result.sample.points[:, 0]
        n_batches = 54
        batches = pts[: (pts.size // n_batches) * n_batches].reshape(n_batches, -1)
        for level in range(1, 6):
            freq = np.mean(np.abs(pts - level) < 1e-9)
            batch_freqs = np.mean(np.abs(batches - level) < 1e-9, axis=1)
            se = batch_freqs.std(ddof=1) / np.sqrt(n_batches)
            assert abs(freq - exact[level - 1]) < 3 * se + 3e-3

    def test_rejected_step_keeps_previous_summary_and_state(self):
        # every proposal simulates an overflow, so the chain never moves and
        # the supplied initial summary is carried through every step
        problem = AbcProblem(OverflowModel(), identity_stats(1), np.array([0.0]),
                             uniform_kernel([[1.0]], 1.0), prior=BoxUniformPrior([-5.0], [5.0]))
        config = McmcConfig(n_steps=200, theta0=np.array([1.25]),
                            proposal_cov=np.array([[1.0]]), s0=np.array([0.0]))
        result = abc_mcmc(problem, config, np.random.default_rng(9))
        assert not result.accepted_flags.any()
        assert np.all(result.sample.points == 1.25)
        assert np.all(result.sample.summaries == 0.0)

    def test_always_accepts_when_ratio_is_one(self):
        # constant summary + flat prior + symmetric proposal => ratio exactly 1
        model = ConstantSummaryModel([0.0])
        problem = AbcProblem(model, identity_stats(1), np.array([0.0]),
                             uniform_kernel([[1.0]], 1.0), prior=BoxUniformPrior([-1e9], [1e9]))
        config = McmcConfig(n_steps=500, theta0=np.array([0.0]), proposal_cov=np.array([[1.0]]))
        result = abc_mcmc(problem, config, np.random.default_rng(10))
        assert result.accepted_flags.all()
        assert result.burn_in == 50
        assert result.sample.n == 450

    def test_init_failure_suggests_larger_bandwidth(self):
        model = NormalMeanModel(n_obs=1, noise_sd=1.0)
        problem = AbcProblem(model, sample_mean_stat(), np.array([100.0]),
                             uniform_kernel([[1.0]], 1e-6))
        config = McmcConfig(n_steps=10, theta0=np.array([0.0]),
                            proposal_cov=np.array([[1.0]]), init_tries=300)
        with pytest.raises(RuntimeError, match="bandwidth"):
            abc_mcmc(problem, config, np.random.default_rng(11))

    def test_log_transform_jacobian_gives_correct_target(self):
        # prior density 1/phi on [1, e^2]; in working coordinates t = log(phi)
        # the chain should be exactly uniform on [0, 2] -- a missing Jacobian
        # term would tilt the working density to exp(t) instead
        class ReciprocalPrior:
            dim = 1
            proper = True

            def sample(self, rng):
                return np.exp(rng.uniform(0.0, 2.0, 1))

            def log_density(self, theta):
                phi = float(np.asarray(theta).ravel()[0])
                if 1.0 <= phi <= np.exp(2.0):
                    return -np.log(phi)
                return -np.inf

        model = ConstantSummaryModel([0.0])
        problem = AbcProblem(model, identity_stats(1), np.array([0.0]),
                             uniform_kernel([[1.0]], 1.0), prior=ReciprocalPrior())
        config = McmcConfig(n_steps=40_000, theta0=np.array([np.exp(1.0)]),
                            proposal_cov=np.array([[0.8]]), transform=LOG_TRANSFORM)
        result = abc_mcmc(problem, config, np.random.default_rng(12))
        t = np.log(result.sample.points[:, 0])
        assert t.min() >= 0.0 and t.max() <= 2.0
        n_batches = 40
        batches = t[: (t.size // n_batches) * n_batches].reshape(n_batches, -1).mean(axis=1)
        se = batches.std(ddof=1) / np.sqrt(n_batches)
        assert abs(t.mean() - 1.0) < 3 * se
        # uniform on [0, 2] has variance 1/3; exp-tilted density would give 0.26
        assert abs(t.var(ddof=1) - 1.0 / 3.0) < 0.025

    def test_config_validation(self):
        with pytest.raises(ValueError):
            McmcConfig(n_steps=10, theta0=np.zeros(1))  # no proposal given
        with pytest.raises(ValueError):
            McmcConfig(n_steps=10, theta0=np.zeros(1), proposal_cov=np.eye(1),
                       proposal_sampler=lambda t, rng: t)
        with pytest.raises(ValueError):
            McmcConfig(n_steps=10, theta0=np.zeros(2), proposal_cov=np.eye(1))


class TestBandwidthTuning:
    def test_uniform_kernel_hits_target_rate_on_fresh_run(self):
        model = NormalMeanModel(n_obs=1, noise_sd=1.0)
        problem = AbcProblem(model, sample_mean_stat(), np.array([0.3]),
                             uniform_kernel([[1.0]], 1.0))
        rng = np.random.default_rng(21)
        tune = tune_bandwidth(problem, target_rate=0.01, pilot_n=20_000, rng=rng)
        assert not tune.degenerate
        fresh = abc_rejection(problem.with_bandwidth(tune.bandwidth_h), 100_000, rng)
        assert 0.005 < fresh.acceptance_rate < 0.02

    def test_gaussian_kernel_hits_target_rate_on_fresh_run(self):
        model = NormalMeanModel(n_obs=1, noise_sd=1.0)
        problem = AbcProblem(model, sample_mean_stat(), np.array([0.3]),
                             gaussian_kernel([[1.0]], 1.0))
        rng = np.random.default_rng(22)
        tune = tune_bandwidth(problem, target_rate=0.05, pilot_n=20_000, rng=rng)
        assert abs(tune.achieved_rate - 0.05) < 1e-3
        fresh = abc_rejection(problem.with_bandwidth(tune.bandwidth_h), 100_000, rng)
        assert 0.025 < fresh.acceptance_rate < 0.1

    def test_target_rate_one_accepts_all_pilot_points(self):
        model = NormalMeanModel(n_obs=1, noise_sd=1.0)
        problem = AbcProblem(model, sample_mean_stat(), np.array([0.3]),
                             uniform_kernel([[1.0]], 1.0))
        tune = tune_bandwidth(problem, target_rate=1.0, pilot_n=500,
                              rng=np.random.default_rng(23))
        assert tune.achieved_rate == 1.0
        half = tune_bandwidth(problem, target_rate=0.5, pilot_n=500,
                              rng=np.random.default_rng(23))
        assert tune.bandwidth_h > half.bandwidth_h

    def test_identical_summaries_degenerate_flag(self):
        model = ConstantSummaryModel([0.7])
        problem = AbcProblem(model, identity_stats(1), np.array([0.7]),
                             uniform_kernel([[1.0]], 1.0), prior=BoxUniformPrior([0.0], [1.0]))
        tune = tune_bandwidth(problem, target_rate=0.1, pilot_n=50,
                              rng=np.random.default_rng(24))
        assert tune.degenerate
        assert 0 < tune.bandwidth_h < 1e-300
        assert tune.achieved_rate == 1.0

    def test_too_few_nonzero_distances_is_an_error(self):
        class MostlyExactModel:
            def __init__(self):
                self.calls = 0

            def simulate(self, theta, rng):
                self.calls += 1
                if self.calls <= 5:
                    return Dataset(np.array([0.7 + 0.1 * self.calls]))
                return Dataset(np.array([0.7]))

        problem = AbcProblem(MostlyExactModel(), identity_stats(1), np.array([0.7]),
                             uniform_kernel([[1.0]], 1.0), prior=BoxUniformPrior([0.0], [1.0]))
        with pytest.raises(ValueError, match="nonzero"):
            tune_bandwidth(problem, target_rate=0.1, pilot_n=100,
                           rng=np.random.default_rng(25))
