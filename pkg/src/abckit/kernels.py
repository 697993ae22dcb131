"""Acceptance kernels, quadratic losses, and weighted posterior samples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNIFORM_ELLIPSOID = "uniform_ellipsoid"
GAUSSIAN = "gaussian"
_KERNEL_SHAPES = (UNIFORM_ELLIPSOID, GAUSSIAN)


def _cholesky_spd(matrix, name):
    """Validate a symmetric positive-definite matrix and return its Cholesky factor."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc


@dataclass(frozen=True)
class DensityKernel:
    """Unnormalised acceptance kernel K with max K = K(0) = 1.

    Parameters
    ----------
    shape : str
        "uniform_ellipsoid" for the indicator of ``x' A x < 1`` or
        "gaussian" for ``exp(-x' A x / 2)``.
    metric : array_like
        Symmetric positive-definite matrix A defining the norm on the
        (whitened) summary discrepancy.
    bandwidth_h : float
        Strictly positive bandwidth.  ``evaluate`` and ``sample`` work on the
        unit scale; callers divide discrepancies by ``bandwidth_h`` first.
    """

    shape: str
    metric: np.ndarray
    bandwidth_h: float

    def __post_init__(self):
        if self.shape not in _KERNEL_SHAPES:
            raise ValueError(f"unknown kernel shape {self.shape!r}, expected one of {_KERNEL_SHAPES}")
        chol = _cholesky_spd(self.metric, "kernel metric")
        if not (float(self.bandwidth_h) > 0):
            raise ValueError("kernel bandwidth must be strictly positive")
        metric = np.asarray(self.metric, dtype=float)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "bandwidth_h", float(self.bandwidth_h))
        object.__setattr__(self, "_chol", chol)
        # fast paths for the per-proposal hot loop
        is_diag = np.count_nonzero(metric - np.diag(np.diagonal(metric))) == 0
        object.__setattr__(self, "_diag", np.diagonal(metric).copy() if is_diag else None)
        object.__setattr__(self, "_m00", float(metric[0, 0]) if metric.shape[0] == 1 else None)

    @property
    def dim(self) -> int:
        return self.metric.shape[0]

    def quad_form(self, x):
        """Return ``x' A x`` for one point (d,) or a batch (n, d)."""
        x = np.asarray(x, dtype=float)
        if self._diag is not None:
            return np.sum(self._diag * x * x, axis=-1)
        y = x @ self._chol  # row-wise L' x since (x L)_j = (L' x')_j
        return np.sum(y * y, axis=-1)

    def evaluate(self, x):
        """Kernel value at unit-scale discrepancy x; scalar for (d,), array for (n, d)."""
        if self._m00 is not None and getattr(x, "ndim", None) == 1:
            v = float(x[0])
            q = self._m00 * v * v
            if self.shape == UNIFORM_ELLIPSOID:
                return 1.0 if q < 1.0 else 0.0
            return math.exp(-0.5 * q)
        q = self.quad_form(x)
        if self.shape == UNIFORM_ELLIPSOID:
            out = (q < 1.0).astype(float)
        else:
            out = np.exp(-0.5 * q)
        if np.ndim(q) == 0:
            return float(out)
        return out

    def sample(self, rng, size=None):
        """Draw from the normalised density proportional to ``evaluate``.

        Returns shape (d,) when size is None, else (size, d).
        """
        n = 1 if size is None else int(size)
        d = self.dim
        if self.shape == GAUSSIAN:
            z = rng.standard_normal((n, d))
        else:
            z = rng.standard_normal((n, d))
            norms = np.linalg.norm(z, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            radii = rng.random((n, 1)) ** (1.0 / d)
            z = radii * z / norms
        # map the unit ball / standard normal through A = L L': x = L^{-T} z
        x = np.linalg.solve(self._chol.T, z.T).T
        if size is None:
            return x[0]
        return x

    def with_bandwidth(self, h) -> "DensityKernel":
        return DensityKernel(self.shape, self.metric, h)


def uniform_kernel(metric, bandwidth_h=1.0) -> DensityKernel:
    """Uniform-ellipsoid kernel with the given metric."""
    return DensityKernel(UNIFORM_ELLIPSOID, np.atleast_2d(metric), bandwidth_h)


def gaussian_kernel(metric, bandwidth_h=1.0) -> DensityKernel:
    """Gaussian kernel with the given metric."""
    return DensityKernel(GAUSSIAN, np.atleast_2d(metric), bandwidth_h)


def kernel_loss_moment(kernel: DensityKernel, loss_matrix=None) -> float:
    """The integral of x' A x against the normalised unit-bandwidth kernel.

    With kernel metric M, a draw from the Gaussian kernel has covariance
    M^-1 and a draw from the uniform ellipsoid {x : x' M x < 1} has
    covariance M^-1 / (d + 2), so the integral is trace(A M^-1), divided by
    d + 2 in the uniform case.  A defaults to the identity.
    """
    a = np.eye(kernel.dim) if loss_matrix is None else loss_matrix
    if isinstance(a, LossMatrix):
        a = a.matrix
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape != kernel.metric.shape:
        raise ValueError(f"loss matrix shape {a.shape} does not match kernel dimension {kernel.dim}")
    base = float(np.trace(a @ np.linalg.inv(kernel.metric)))
    if kernel.shape == UNIFORM_ELLIPSOID:
        return base / (kernel.dim + 2)
    return base


@dataclass(frozen=True)
class LossMatrix:
    """Symmetric positive-definite matrix weighting a quadratic loss."""

    matrix: np.ndarray

    def __post_init__(self):
        _cholesky_spd(self.matrix, "loss matrix")
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def quadratic_loss(theta_true, theta_est, loss_matrix=None) -> float:
    """Quadratic loss (t - e)' A (t - e); A defaults to the identity."""
    t = np.atleast_1d(np.asarray(theta_true, dtype=float))
    e = np.atleast_1d(np.asarray(theta_est, dtype=float))
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {e.shape}")
    d = t - e
    if loss_matrix is None:
        return float(d @ d)
    a = loss_matrix.matrix if isinstance(loss_matrix, LossMatrix) else np.asarray(loss_matrix, dtype=float)
    return float(d @ a @ d)


@dataclass
class WeightedSample:
    """Weighted posterior draws: points (n, p), nonnegative weights (n,).

    ``summaries`` optionally stores the accepted summary vector for each point.
    """

    points: np.ndarray
    weights: np.ndarray
    summaries: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be a (n, p) array")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != pts.shape[0]:
            raise ValueError("weights must be one per point")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        self.points = pts
        self.weights = w
        if self.summaries is not None:
            s = np.asarray(self.summaries, dtype=float)
            if s.ndim == 1:
                s = s[:, None]
            if s.shape[0] != pts.shape[0]:
                raise ValueError("summaries must be one per point")
            self.summaries = s

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def param_dim(self) -> int:
        return self.points.shape[1]


def effective_sample_size(weights) -> float:
    """Effective sample size S^2 / sum(w^2).

    Equivalent to normalising the weights to mean 1 and returning
    n / mean(w^2); equal weights give exactly n.
    """
    if isinstance(weights, WeightedSample):
        weights = weights.weights
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("effective sample size of an empty weight vector is undefined")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one weight must be strictly positive")
    return float(total * total / np.sum(w * w))


def weighted_quantile(values, weights, probs):
    """Quantiles by the left-continuous inverse of the weighted empirical CDF.

    Q(q) = smallest sample value whose cumulative weight reaches q of the total.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.ndim != 1 or v.shape != w.shape:
        raise ValueError("values and weights must be matching 1-d arrays")
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one weight must be strictly positive")
    order = np.argsort(v, kind="stable")
    v_sorted = v[order]
    cum = np.cumsum(w[order])
    probs_arr = np.atleast_1d(np.asarray(probs, dtype=float))
    if np.any((probs_arr < 0) | (probs_arr > 1)):
        raise ValueError("quantile levels must lie in [0, 1]")
    idx = np.searchsorted(cum, probs_arr * total, side="left")
    idx = np.minimum(idx, v_sorted.size - 1)
    out = v_sorted[idx]
    if np.ndim(probs) == 0:
        return float(out[0])
    return out


@dataclass(frozen=True)
class PosteriorSummary:
    mean: np.ndarray
    cov: np.ndarray
    intervals: np.ndarray  # (p, 2) central interval per parameter
    level: float
    ess: float


def posterior_summaries(sample: WeightedSample, level: float = 0.95) -> PosteriorSummary:
    """Weighted mean, covariance, and central credible intervals of a sample."""
    if sample.n == 0:
        raise ValueError("cannot summarise an empty sample")
    w = sample.weights
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one weight must be strictly positive")
    if not (0 < level < 1):
        raise ValueError("interval level must lie strictly between 0 and 1")
    pts = sample.points
    mean = (w @ pts) / total
    centred = pts - mean
    keep = w > 0
    if np.unique(pts[keep], axis=0).shape[0] < 2:
        raise ValueError("variance requires at least two distinct points with positive weight")
    cov = (centred.T * w) @ centred / total
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    intervals = np.empty((sample.param_dim, 2))
    for j in range(sample.param_dim):
        intervals[j, 0] = weighted_quantile(pts[:, j], w, lo_q)
        intervals[j, 1] = weighted_quantile(pts[:, j], w, hi_q)
    return PosteriorSummary(mean=mean, cov=cov, intervals=intervals, level=level,
                            ess=effective_sample_size(w))
