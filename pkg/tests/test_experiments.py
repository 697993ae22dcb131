"""Tests for loss tables, coverage studies, and bandwidth-expansion checks."""

import numpy as np
import pytest
from scipy.stats import binom

from abckit import (
    LossMethod,
    WeightedSample,
    abc_rejection,
    binomial_band,
    calibration_study,
    estimator_dominance_check,
    gaussian_kernel,
    loss_expansion_check,
    loss_table,
    make_noisy,
    semiauto_method,
    standard_abc_method,
    uniform_kernel,
)
from abckit.engines import AbcProblem
from abckit.models.analytic import NormalMeanModel
from abckit.models.summaries import sample_mean_stat

UNIT_KERNEL = uniform_kernel([[4.0]])  # unit-bandwidth support [-1/2, 1/2]


def constant_method(name, value):
    return LossMethod(name, lambda model, observed, budget, rng: np.atleast_1d(value))


class TestLossTable:
    def test_exact_estimator_scores_zero_loss(self):
        model = NormalMeanModel(n_obs=4)
        table = loss_table([constant_method("truth", 0.3)], model, 6,
                           lambda rng: np.array([0.3]), 10, np.random.default_rng(0))
        assert np.all(table.mean_loss == 0.0)
        assert np.all(table.median_loss == 0.0)
        assert table.n_failures[0] == 0 and table.n_used[0] == 6

    def test_prior_mean_estimator_loss_is_the_prior_variance(self):
        # squared error of a constant at the prior mean averages to the prior
        # variance over parameters drawn from the prior
        model = NormalMeanModel(n_obs=2, prior_mean=0.0, prior_sd=1.0)
        table = loss_table([constant_method("prior_mean", 0.0)], model, 500,
                           None, 10, np.random.default_rng(1))
        assert abs(table.mean_loss[0, 0] - 1.0) < 0.2

    def test_method_order_does_not_change_the_table(self):
        model = NormalMeanModel(n_obs=3)
        noisy_a = LossMethod("a", lambda m, obs, budget, rng: np.array([rng.normal()]))
        noisy_b = LossMethod("b", lambda m, obs, budget, rng: np.array([rng.normal(2.0)]))
        first = loss_table([noisy_a, noisy_b], model, 8, None, 10, np.random.default_rng(7))
        second = loss_table([noisy_b, noisy_a], model, 8, None, 10, np.random.default_rng(7))
        assert first.mean_loss[0, 0] == second.mean_loss[1, 0]
        assert first.mean_loss[1, 0] == second.mean_loss[0, 0]

    def test_all_methods_see_identical_datasets(self):
        model = NormalMeanModel(n_obs=5)
        seen = {"a": [], "b": []}

        def recorder(name):
            def run(m, observed, budget, rng):
                seen[name].append(observed.values.copy())
                return np.array([0.0])
            return LossMethod(name, run)

        loss_table([recorder("a"), recorder("b")], model, 5, None, 10,
                   np.random.default_rng(3))
        assert all(np.array_equal(x, y) for x, y in zip(seen["a"], seen["b"]))

    def test_failures_are_recorded_and_excluded(self):
        model = NormalMeanModel(n_obs=2)
        first_values = []

        def run(m, observed, budget, rng):
            v = float(observed.values[0])
            first_values.append(v)
            if v > 0:
                raise RuntimeError("positive first observation")
            return np.array([v])

        table = loss_table([LossMethod("picky", run)], model, 12,
                           lambda rng: np.array([0.0]), 10, np.random.default_rng(4))
        survivors = [v for v in first_values if v <= 0]
        n_bad = 12 - len(survivors)
        assert n_bad > 0, "seed must produce at least one failure"
        assert table.n_failures[0] == n_bad and table.n_used[0] == len(survivors)
        assert np.isclose(table.mean_loss[0, 0], np.mean(np.square(survivors)))
        assert all(name == "picky" for name, _, _ in table.failures)
        assert "positive first observation" in table.failures[0][2]

    def test_weighted_mean_and_median_scored_separately(self):
        sample = WeightedSample(np.array([[0.0], [10.0]]), np.array([0.9, 0.1]))
        method = LossMethod("skewed", lambda m, obs, budget, rng: sample)
        table = loss_table([method], NormalMeanModel(n_obs=2), 3,
                           lambda rng: np.array([0.0]), 10, np.random.default_rng(5))
        assert np.isclose(table.mean_loss[0, 0], 1.0)   # weighted mean is 1
        assert table.median_loss[0, 0] == 0.0           # weighted median is 0

    def test_thread_count_is_irrelevant(self):
        model = NormalMeanModel(n_obs=3)
        methods = [LossMethod("a", lambda m, o, b, rng: np.array([rng.normal()])),
                   LossMethod("b", lambda m, o, b, rng: np.array([rng.normal()]))]
        serial = loss_table(methods, model, 10, None, 10, np.random.default_rng(6))
        threaded = loss_table(methods, model, 10, None, 10, np.random.default_rng(6),
                              threads=3)
        assert np.array_equal(serial.mean_loss, threaded.mean_loss)
        assert np.array_equal(serial.median_loss, threaded.median_loss)

    def test_csv_rows_carry_the_loss_table_schema(self):
        table = loss_table([constant_method("m", 0.0)], NormalMeanModel(n_obs=2), 4,
                           None, 10, np.random.default_rng(8))
        rows = table.csv_rows()
        assert len(rows) == 1
        assert set(rows[0]) == {"method", "parameter", "mean_loss", "n_datasets", "n_failures"}
        assert rows[0]["parameter"] == "mu"
        assert rows[0]["n_datasets"] == 4 and rows[0]["n_failures"] == 0

    def test_validation(self):
        model = NormalMeanModel(n_obs=2)
        with pytest.raises(ValueError, match="at least one method"):
            loss_table([], model, 3, None, 10, np.random.default_rng(0))
        with pytest.raises(ValueError, match="unique"):
            loss_table([constant_method("m", 0.0), constant_method("m", 1.0)],
                       model, 3, None, 10, np.random.default_rng(0))
        with pytest.raises(ValueError, match="at least one dataset"):
            loss_table([constant_method("m", 0.0)], model, 0, None, 10,
                       np.random.default_rng(0))


class TestMethodWrappers:
    def test_standard_abc_method_runs_end_to_end(self):
        model = NormalMeanModel(n_obs=10)
        method = standard_abc_method(sample_mean_stat(), target_rate=0.1)
        assert method.name == "abc_sample_mean"
        table = loss_table([method], model, 3, lambda rng: np.array([0.4]), 400,
                           np.random.default_rng(9))
        assert table.n_failures[0] == 0
        assert np.isfinite(table.mean_loss[0, 0])
        # posterior mass should sit well inside the prior scale
        assert table.mean_loss[0, 0] < 1.0

    def test_noisy_wrapper_is_named_and_runs(self):
        method = standard_abc_method(sample_mean_stat(), noisy=True, target_rate=0.1)
        assert method.name == "noisy_abc_sample_mean"
        output = method.run(NormalMeanModel(n_obs=10),
                            NormalMeanModel(n_obs=10).simulate([0.2], np.random.default_rng(1)),
                            300, np.random.default_rng(2))
        assert output.n > 0

    def test_semiauto_method_runs_end_to_end(self):
        model = NormalMeanModel(n_obs=10)
        method = semiauto_method([sample_mean_stat()], pilot_summary=sample_mean_stat(),
                                 pilot_target_rate=0.1, final_target_rate=0.1)
        observed = model.simulate([0.5], np.random.default_rng(3))
        sample = method.run(model, observed, 600, np.random.default_rng(4))
        assert sample.n > 0 and np.isfinite(sample.points).all()

    def test_budget_too_small_to_tune(self):
        method = standard_abc_method(sample_mean_stat())
        with pytest.raises(ValueError, match="too small"):
            method.run(NormalMeanModel(n_obs=2),
                       NormalMeanModel(n_obs=2).simulate([0.0], np.random.default_rng(0)),
                       10, np.random.default_rng(0))


class TestBinomialBand:
    def test_matches_the_direct_binomial_quantiles(self):
        lo, hi = binomial_band(0.95, 200, 0.99)
        assert lo == binom.ppf(0.005, 200, 0.95) / 200
        assert hi == binom.ppf(0.995, 200, 0.95) / 200
        assert lo < 0.95 < hi

    def test_validation(self):
        with pytest.raises(ValueError, match="level"):
            binomial_band(1.0, 100)
        with pytest.raises(ValueError, match="confidence"):
            binomial_band(0.5, 100, confidence=1.0)
        with pytest.raises(ValueError, match="replication"):
            binomial_band(0.5, 0)


class TestCalibrationStudy:
    def test_prior_sample_is_calibrated_at_any_level(self):
        # intervals read off the prior itself cover prior-drawn parameters at
        # exactly the nominal rate in expectation
        model = NormalMeanModel(n_obs=2)

        def prior_engine(m, observed, rng):
            points = np.array([m.prior.sample(rng) for _ in range(600)])
            return WeightedSample(points, np.ones(len(points)))

        result = calibration_study(model, prior_engine, 0.8, 300,
                                   np.random.default_rng(10), band_confidence=0.999)
        assert result.calibrated.all()
        assert result.counts[0] == round(result.coverage[0] * 300)

    def test_point_mass_engine_fails_calibration(self):
        model = NormalMeanModel(n_obs=2)

        def point_engine(m, observed, rng):
            return WeightedSample(np.array([[0.0]]), np.array([1.0]))

        result = calibration_study(model, point_engine, 0.9, 60,
                                   np.random.default_rng(11))
        assert result.coverage[0] == 0.0
        assert not result.calibrated.any()
        assert result.band[0] > 0.0

    def test_noisy_rejection_intervals_are_calibrated(self):
        # perturbing the observed summary by one kernel draw makes the
        # smoothed posterior calibrated at any bandwidth
        model = NormalMeanModel(n_obs=10)
        summary = sample_mean_stat()
        kernel = uniform_kernel([[1.0]], 0.6)

        def noisy_engine(m, observed, rng):
            problem = AbcProblem.from_observed(m, summary, observed, kernel)
            problem, _ = make_noisy(problem, rng)
            return abc_rejection(problem, 2000, rng).sample

        result = calibration_study(model, noisy_engine, 0.95, 120,
                                   np.random.default_rng(12))
        assert result.calibrated.all(), f"coverage {result.coverage} outside {result.band}"

    def test_thread_count_is_irrelevant(self):
        model = NormalMeanModel(n_obs=2)

        def engine(m, observed, rng):
            points = np.array([m.prior.sample(rng) for _ in range(80)])
            return WeightedSample(points, np.ones(len(points)))

        serial = calibration_study(model, engine, 0.7, 24, np.random.default_rng(13))
        threaded = calibration_study(model, engine, 0.7, 24, np.random.default_rng(13),
                                     threads=3)
        assert np.array_equal(serial.counts, threaded.counts)

    def test_engine_errors_propagate(self):
        def broken(m, observed, rng):
            raise RuntimeError("engine exploded")

        with pytest.raises(RuntimeError, match="engine exploded"):
            calibration_study(NormalMeanModel(n_obs=2), broken, 0.9, 3,
                              np.random.default_rng(14))

    def test_csv_rows_schema(self):
        def engine(m, observed, rng):
            return WeightedSample(np.array([[0.0]]), np.array([1.0]))

        result = calibration_study(NormalMeanModel(n_obs=2), engine, 0.9, 4,
                                   np.random.default_rng(15))
        row = result.csv_rows()[0]
        assert set(row) == {"parameter", "level", "coverage", "standard_error",
                            "n_replications", "band_low", "band_high"}


class TestLossExpansionCheck:
    def test_zero_bandwidth_has_zero_excess(self):
        result = loss_expansion_check(NormalMeanModel(n_obs=10), UNIT_KERNEL, [0.0],
                                      np.random.default_rng(16), n_replications=4,
                                      n_proposals=100)
        row = result.rows[0]
        assert row.noisy_excess == 0.0 and row.standard_excess == 0.0
        assert row.predicted_excess == 0.0 and not row.mc_error_large

    def test_uniform_kernel_excess_tracks_h_squared_over_twelve(self):
        # second moment of the uniform density on [-1/2, 1/2] is 1/12, so the
        # perturbed-observation excess should be close to h^2/12 while the
        # unperturbed run stays an order smaller
        model = NormalMeanModel(n_obs=10)
        result = loss_expansion_check(model, UNIT_KERNEL, [0.2, 0.4],
                                      np.random.default_rng(11))
        for row in result.rows:
            assert np.isclose(row.predicted_excess, row.h ** 2 / 12.0, rtol=1e-12)
            assert abs(row.noisy_excess / row.predicted_excess - 1.0) < 0.2
            assert not row.mc_error_large
        last = result.rows[-1]
        assert last.standard_excess < 0.5 * last.noisy_excess
        assert result.base_loss == pytest.approx(1.0 / 11.0)

    def test_monte_carlo_flag_raises_on_thin_replication(self):
        result = loss_expansion_check(NormalMeanModel(n_obs=10), UNIT_KERNEL, [0.1],
                                      np.random.default_rng(5), n_replications=4,
                                      n_proposals=500)
        assert result.rows[0].mc_error_large

    def test_validation(self):
        model = NormalMeanModel(n_obs=10)
        with pytest.raises(ValueError, match="one-dimensional"):
            loss_expansion_check(model, uniform_kernel(np.eye(2)), [0.1],
                                 np.random.default_rng(0))
        with pytest.raises(TypeError, match="posterior"):
            loss_expansion_check(object(), UNIT_KERNEL, [0.1], np.random.default_rng(0))
        with pytest.raises(ValueError, match="nonnegative"):
            loss_expansion_check(model, UNIT_KERNEL, [-0.1], np.random.default_rng(0),
                                 n_replications=2, n_proposals=100)


class TestEstimatorDominanceCheck:
    def test_self_comparison_ties_exactly(self):
        result = estimator_dominance_check(NormalMeanModel(n_obs=10), None,
                                           np.random.default_rng(21),
                                           n_replications=50, n_proposals=4000)
        assert result.loss_difference == 0.0
        assert result.dominates and result.competitor_name == "self"

    def test_constant_zero_estimator_is_dominated(self):
        result = estimator_dominance_check(NormalMeanModel(n_obs=10), lambda s: 0.0,
                                           np.random.default_rng(21))
        assert result.dominates
        assert result.loss_difference < -0.5

    def test_raw_summary_estimator_ties_within_noise(self):
        # the summary here is the exact posterior mean, so the two estimators
        # agree in the small-bandwidth limit
        result = estimator_dominance_check(NormalMeanModel(n_obs=10), lambda s: s,
                                           np.random.default_rng(21))
        assert result.dominates
        assert abs(result.loss_difference) < 0.005

    def test_inflated_summary_estimator_is_beaten(self):
        result = estimator_dominance_check(NormalMeanModel(n_obs=10),
                                           lambda s: 1.1 * s,
                                           np.random.default_rng(21))
        assert result.dominates
        assert result.loss_difference < -0.004

    def test_validation(self):
        model = NormalMeanModel(n_obs=10)
        with pytest.raises(ValueError, match="strictly positive"):
            estimator_dominance_check(model, None, np.random.default_rng(0),
                                      bandwidth_h=0.0)
        with pytest.raises(ValueError, match="one-dimensional"):
            estimator_dominance_check(model, None, np.random.default_rng(0),
                                      kernel=gaussian_kernel(np.eye(3)))
