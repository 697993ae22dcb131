"""Shared model, prior, dataset, and summary-statistic types."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class Dataset:
    """Simulator output: values plus optional observation times.

    ``overflow`` marks runs that hit a simulator cap (event budget); ABC
    engines treat overflowed datasets as automatic rejections.  ``info``
    carries optional simulator diagnostics (event counts, latent states).
    """

    values: np.ndarray
    times: np.ndarray | None = None
    overflow: bool = False
    info: dict | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)


class Prior(ABC):
    """Unnormalised prior density with sampling and box support."""

    dim: int
    proper: bool = True

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One draw with positive density."""

    @abstractmethod
    def log_density(self, theta) -> float:
        """Unnormalised log density; -inf outside the support."""

    @property
    @abstractmethod
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise (lower, upper) bounds; entries may be infinite."""

    def density(self, theta) -> float:
        return float(np.exp(self.log_density(theta)))

    def density_upper_bound(self, lows, highs) -> float:
        """Upper bound of the unnormalised density over a box (rejection envelopes)."""
        raise NotImplementedError(f"{type(self).__name__} has no box density bound")


class BoxUniformPrior(Prior):
    """Uniform on a box, optionally restricted by an indicator constraint."""

    def __init__(self, lows, highs, constraint: Callable[[np.ndarray], bool] | None = None):
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        if self.lows.shape != self.highs.shape or self.lows.ndim != 1:
            raise ValueError("bounds must be matching 1-d arrays")
        if not np.all(self.lows < self.highs):
            raise ValueError("lower bounds must be strictly below upper bounds")
        if not (np.all(np.isfinite(self.lows)) and np.all(np.isfinite(self.highs))):
            raise ValueError("box-uniform prior needs finite bounds")
        self.constraint = constraint
        self.dim = self.lows.size
        self._widths = self.highs - self.lows

    def sample(self, rng):
        for _ in range(100_000):
            theta = self.lows + self._widths * rng.random(self.dim)
            if self.constraint is None or self.constraint(theta):
                return theta
        raise RuntimeError("prior constraint rejected 100000 consecutive box draws")

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        inside = np.all(theta >= self.lows) and np.all(theta <= self.highs)
        if inside and (self.constraint is None or self.constraint(theta)):
            return 0.0
        return -np.inf

    @property
    def support(self):
        return self.lows.copy(), self.highs.copy()

    def density_upper_bound(self, lows, highs):
        return 1.0


class IndependentNormalPrior(Prior):
    """Independent Normal components."""

    def __init__(self, means, sds):
        self.means = np.atleast_1d(np.asarray(means, dtype=float))
        self.sds = np.atleast_1d(np.asarray(sds, dtype=float))
        if self.means.shape != self.sds.shape or np.any(self.sds <= 0):
            raise ValueError("means/sds must match and sds must be positive")
        self.dim = self.means.size

    def sample(self, rng):
        return self.means + self.sds * rng.standard_normal(self.dim)

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        z = (theta - self.means) / self.sds
        return float(-0.5 * np.sum(z * z))

    @property
    def support(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def density_upper_bound(self, lows, highs):
        mode = np.clip(self.means, lows, highs)
        return float(np.exp(self.log_density(mode)))


class DiscreteUniformPrior(Prior):
    """Uniform on a finite set of scalar levels (stored as 1-vector parameters)."""

    def __init__(self, levels=(1, 2, 3, 4, 5)):
        self.levels = np.asarray(levels, dtype=float)
        self.dim = 1

    def sample(self, rng):
        return np.array([self.levels[rng.integers(self.levels.size)]])

    def log_density(self, theta):
        value = float(np.asarray(theta).ravel()[0])
        return 0.0 if np.any(np.isclose(self.levels, value, atol=1e-9)) else -np.inf

    @property
    def support(self):
        return np.array([self.levels.min()]), np.array([self.levels.max()])


class TruncatedPrior(Prior):
    """A base prior restricted to a finite box, sampled by rejection."""

    def __init__(self, base: Prior, lows, highs, max_tries: int = 200_000):
        lows = np.asarray(lows, dtype=float)
        highs = np.asarray(highs, dtype=float)
        if lows.shape != (base.dim,) or highs.shape != (base.dim,):
            raise ValueError("truncation box must match the prior dimension")
        if not (np.all(np.isfinite(lows)) and np.all(np.isfinite(highs))):
            raise ValueError("truncation box must be finite")
        if not np.all(lows < highs):
            raise ValueError("truncation box must have positive volume")
        base_lo, base_hi = base.support
        self.lows = np.maximum(lows, base_lo)
        self.highs = np.minimum(highs, base_hi)
        if not np.all(self.lows < self.highs):
            raise ValueError("truncation box does not intersect the prior support")
        self.base = base
        self.dim = base.dim
        self.proper = True
        self.max_tries = max_tries
        self._bound = base.density_upper_bound(self.lows, self.highs)
        if not (self._bound > 0):
            raise ValueError("prior density bound on the truncation box is zero")

    def sample(self, rng):
        # envelope: uniform proposals on the box thinned by density / bound
        widths = self.highs - self.lows
        for _ in range(self.max_tries):
            theta = self.lows + widths * rng.random(self.dim)
            log_d = self.base.log_density(theta)
            if log_d == -np.inf:
                continue
            if rng.random() * self._bound <= np.exp(log_d):
                return theta
        raise RuntimeError(
            "truncated-prior rejection rate too high: "
            f"no acceptance in {self.max_tries} proposals"
        )

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.all(theta >= self.lows) and np.all(theta <= self.highs):
            return self.base.log_density(theta)
        return -np.inf

    @property
    def support(self):
        return self.lows.copy(), self.highs.copy()

    def density_upper_bound(self, lows, highs):
        return self.base.density_upper_bound(
            np.maximum(lows, self.lows), np.minimum(highs, self.highs)
        )


class Model(ABC):
    """A simulator with a prior; engines only ever call ``simulate`` and the prior."""

    name: str = "model"
    param_names: tuple[str, ...] = ()
    prior: Prior
    descriptor: str = ""

    @property
    def param_dim(self) -> int:
        return len(self.param_names)

    @abstractmethod
    def simulate(self, theta, rng: np.random.Generator) -> Dataset:
        """Draw one dataset at parameter value theta."""

    def training_ok(self, dataset: Dataset) -> bool:
        """Model-specific validity rule applied to training and final-run simulations."""
        return not dataset.overflow


@dataclass(frozen=True)
class SummaryMap:
    """Named deterministic map from a dataset to a fixed-dimension statistic vector."""

    name: str
    dim: int
    fn: Callable[[Dataset], np.ndarray]

    def apply(self, dataset: Dataset) -> np.ndarray:
        out = np.asarray(self.fn(dataset), dtype=float).ravel()
        if out.shape[0] != self.dim:
            raise ValueError(
                f"summary {self.name!r} returned {out.shape[0]} values, declared {self.dim}"
            )
        return out
