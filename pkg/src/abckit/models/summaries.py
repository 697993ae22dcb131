"""Built-in summary-statistic maps."""

from __future__ import annotations

import warnings

import numpy as np

from .base import Dataset, SummaryMap
from .gk import gk_order_stat_indices
from .mg1 import mg1_auxiliaries
from .tb import tb_summaries

DEGENERATE_COEF_MESSAGE = "degenerate regression design: returning zero coefficients"


def _values(dataset) -> np.ndarray:
    if isinstance(dataset, Dataset):
        return np.asarray(dataset.values)
    return np.asarray(dataset)


def identity_stats(dim: int) -> SummaryMap:
    """The raw data vector itself (flattened)."""
    return SummaryMap("identity", int(dim), lambda ds: _values(ds).ravel().astype(float))


def sample_mean_stat() -> SummaryMap:
    return SummaryMap("sample_mean", 1, lambda ds: np.array([_values(ds).mean()]))


def second_moment_stat() -> SummaryMap:
    """Mean of squared observations (sufficient for a centered normal scale)."""
    return SummaryMap(
        "second_moment", 1, lambda ds: np.array([np.mean(_values(ds).astype(float) ** 2)])
    )


def full_order_stats(n: int) -> SummaryMap:
    """All n order statistics (the sorted sample)."""
    return SummaryMap("full_order_stats", int(n), lambda ds: np.sort(_values(ds).astype(float)))


def order_stat_subset(n: int, m: int, powers=(1,)) -> SummaryMap:
    """Evenly spaced order statistics raised to the given powers, concatenated
    power-block by power-block."""
    ranks = gk_order_stat_indices(n, m)
    powers = tuple(int(p) for p in powers)
    if not powers or any(p < 1 for p in powers):
        raise ValueError("powers must be positive integers")

    def apply(ds):
        picked = np.sort(_values(ds).astype(float))[ranks - 1]
        return np.concatenate([picked**p for p in powers])

    name = f"order_stats_m{m}_p{'_'.join(map(str, powers))}"
    return SummaryMap(name, m * len(powers), apply)


def mg1_quantiles(n_quantiles: int = 20) -> SummaryMap:
    """Evenly spaced quantiles including the minimum and maximum."""
    if n_quantiles < 2:
        raise ValueError("need at least two quantile levels")
    levels = np.linspace(0.0, 1.0, int(n_quantiles))
    return SummaryMap(
        f"quantiles_{n_quantiles}",
        int(n_quantiles),
        lambda ds: np.quantile(_values(ds).astype(float), levels),
    )


def tb_pair() -> SummaryMap:
    """(relative cluster count g/n, genotype diversity H)."""
    return SummaryMap("tb_pair", 2, lambda ds: np.array(tb_summaries(_values(ds))))


def mg1_aux_stats(theta2_estimator: str = "max") -> SummaryMap:
    """Queue auxiliary vector (mean, min, theta2 estimate).

    ``theta2_estimator`` is "max" for the cheap surrogate or "mle" for the
    equilibrium-likelihood profile estimate (slower).
    """
    if theta2_estimator not in ("max", "mle"):
        raise ValueError("theta2_estimator must be 'max' or 'mle'")
    return SummaryMap(
        f"mg1_aux_{theta2_estimator}",
        3,
        lambda ds: mg1_auxiliaries(_values(ds).astype(float), theta2_estimator),
    )


# ---------------------------------------------------------------------------
# time-series statistics for the chaotic-map count data
# ---------------------------------------------------------------------------

def autocovariances(y, max_lag: int = 5) -> np.ndarray:
    """Autocovariances at lags 0..max_lag with 1/n normalization (lag 0 is the
    population variance)."""
    y = np.asarray(y, dtype=float)
    n = y.size
    centered = y - y.mean()
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = np.dot(centered[: n - lag], centered[lag:]) / n
    return out


def _lstsq_or_zeros(design, response):
    """Least squares coefficients, or zeros with a warning when the design is
    rank deficient (constant data produces such designs)."""
    design = np.asarray(design, dtype=float)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        warnings.warn(DEGENERATE_COEF_MESSAGE)
        return np.zeros(design.shape[1])
    coef, *_ = np.linalg.lstsq(design, np.asarray(response, dtype=float), rcond=None)
    return coef


def _safe_log(x):
    return np.log(np.maximum(x, 1e-300))


def _cubic_design(observed):
    d_obs = np.sort(np.diff(np.asarray(observed, dtype=float)))
    return np.column_stack([np.ones_like(d_obs), d_obs, d_obs**2, d_obs**3])


def _basic_block(y, cubic_design):
    """Autocovariances to lag 5; cubic regression of the sorted differences on
    those of the observed data; the two growth-power regression coefficients
    (y_{t+1}^0.3 on y_t^0.3 and y_t^0.6); the mean; the zero count."""
    acov = autocovariances(y, 5)
    d_sim = np.sort(np.diff(y))
    cubic = _lstsq_or_zeros(cubic_design, d_sim)
    power_design = np.column_stack([y[:-1] ** 0.3, y[:-1] ** 0.6])
    power = _lstsq_or_zeros(power_design, y[1:] ** 0.3)
    return np.concatenate([acov, cubic, power, [y.mean()], [np.sum(y == 0)]])


def _extended_block(y):
    """Small-count indicators, log moments, and autocorrelations to lag 5."""
    indicators = [np.sum(y == j) for j in range(1, 5)]
    log_moments = [_safe_log(np.sum(y**j)) for j in range(2, 7)]
    acov = autocovariances(y, 5)
    autocorr = np.divide(acov[1:], acov[0], out=np.zeros(5), where=acov[0] > 0)
    return np.concatenate(
        [indicators, [_safe_log(y.mean()), _safe_log(np.var(y, ddof=1))], log_moments, autocorr]
    )


def _full_block(y):
    """Raw, sorted, squared, and log-transformed observations plus squared
    differences in both time and magnitude order."""
    y_sorted = np.sort(y)
    d = np.diff(y)
    d_sorted = np.sort(d)
    return np.concatenate(
        [y, y_sorted, y**2, y_sorted**2, np.log1p(y), np.log1p(y_sorted), d**2, d_sorted**2]
    )


def ricker_stats_basic(observed_values) -> SummaryMap:
    """14 statistics; the cubic-regression block is anchored to the observed
    dataset's sorted differences, so the map is observation-specific."""
    design = _cubic_design(_values(observed_values).astype(float))

    def apply(ds):
        return _basic_block(_values(ds).astype(float), design)

    return SummaryMap("ricker_basic", 14, apply)


def ricker_stats_extended(observed_values) -> SummaryMap:
    """The 14 basic statistics plus 16 count/log-moment/autocorrelation terms."""
    design = _cubic_design(_values(observed_values).astype(float))

    def apply(ds):
        y = _values(ds).astype(float)
        return np.concatenate([_basic_block(y, design), _extended_block(y)])

    return SummaryMap("ricker_extended", 30, apply)


def ricker_stats_full(observed_values) -> SummaryMap:
    """The 30 extended statistics plus 398 elementwise transforms (dim 428)."""
    design = _cubic_design(_values(observed_values).astype(float))

    def apply(ds):
        y = _values(ds).astype(float)
        return np.concatenate([_basic_block(y, design), _extended_block(y), _full_block(y)])

    return SummaryMap("ricker_full", 428, apply)


def default_summary(model, observed_values=None) -> SummaryMap:
    """The conventional summary map for each built-in model."""
    name = getattr(model, "name", "")
    if name == "normal_mean":
        return sample_mean_stat()
    if name == "normal_variance":
        return second_moment_stat()
    if name == "discrete_toy":
        return identity_stats(1)
    if name == "gk":
        return full_order_stats(model.n_obs)
    if name == "lv":
        return identity_stats(2 * (model.n_obs + 1))
    if name == "ricker":
        if observed_values is None:
            raise ValueError("chaotic-map statistics need the observed dataset")
        return ricker_stats_basic(observed_values)
    if name == "mg1":
        return mg1_quantiles(20)
    if name == "tb":
        return tb_pair()
    raise KeyError(f"no default summary for model {name!r}")
