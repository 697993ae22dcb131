"""Birth-death-mutation process for pathogen genotype cluster data.

Each event is a birth (probability a), a death (probability d), or a mutation
to a brand-new genotype (probability 1-a-d); only these ratios matter for the
embedded jump chain.  Simulation runs until the population first reaches
``n_target``, then reports genotype cluster sizes of a simple random sample.
"""

from __future__ import annotations

import numpy as np

from .base import BoxUniformPrior, Dataset, Model

DEFAULT_RESTART_CAP = 100


class ExtinctionError(RuntimeError):
    """Raised when the population died out too many times to condition on survival."""


def _check_tb_theta(theta):
    a, d = (float(v) for v in np.asarray(theta, dtype=float).ravel())
    if not 0 <= d <= a:
        raise ValueError("need 0 <= d <= a")
    if not a + d < 1:
        raise ValueError("need a + d < 1 so mutations have positive probability")
    return a, d


def tb_simulate(theta, n_target, sample_size, rng, restart_cap=DEFAULT_RESTART_CAP):
    """Cluster sizes (descending) from a size-``sample_size`` random sample of
    the population at the first time it reaches ``n_target`` individuals.

    Runs that go extinct restart (conditioning on eventual survival); more
    than ``restart_cap`` restarts raises ExtinctionError.
    """
    a, d = _check_tb_theta(theta)
    n_target = int(n_target)
    sample_size = int(sample_size)
    if not 1 <= sample_size <= n_target:
        raise ValueError("need 1 <= sample_size <= n_target")

    for restarts in range(restart_cap + 1):
        genotypes = np.empty(n_target, dtype=np.int64)
        genotypes[0] = 0
        size = 1
        next_id = 1
        buf = rng.random(4096)
        pos = 0
        while 0 < size < n_target:
            if pos + 2 > buf.size:
                buf = rng.random(4096)
                pos = 0
            u_event = buf[pos]
            idx = int(buf[pos + 1] * size)
            pos += 2
            if u_event < a:
                genotypes[size] = genotypes[idx]
                size += 1
            elif u_event < a + d:
                size -= 1
                genotypes[idx] = genotypes[size]
            else:
                genotypes[idx] = next_id
                next_id += 1
        if size == n_target:
            chosen = rng.choice(n_target, size=sample_size, replace=False)
            counts = np.bincount(genotypes[chosen])
            clusters = np.sort(counts[counts > 0])[::-1]
            return Dataset(clusters.astype(np.int64), info={"restarts": restarts})
    raise ExtinctionError(
        f"population went extinct {restart_cap + 1} times in a row at (a, d) = ({a}, {d})"
    )


def tb_summaries(clusters):
    """(g / n, H): relative genotype-cluster count and genotype diversity
    H = 1 - sum_i (n_i / n)^2 for cluster sizes n_i summing to n."""
    sizes = np.asarray(clusters, dtype=float).ravel()
    if sizes.size == 0:
        raise ValueError("cluster list is empty")
    if np.any(sizes <= 0) or np.any(sizes != np.round(sizes)):
        raise ValueError("cluster sizes must be positive integers")
    n = sizes.sum()
    g = sizes.size
    h = 1.0 - float(np.sum((sizes / n) ** 2))
    return float(g / n), h


# Observed genotype cluster sizes: 282 singletons, 20 pairs, 13 triples,
# 4 clusters of four, 2 of five, and one each of 8, 10, 15, 23, 30 (n = 473).
TB_OBSERVED_CLUSTERS = np.array(
    [30, 23, 15, 10, 8]
    + [5] * 2
    + [4] * 4
    + [3] * 13
    + [2] * 20
    + [1] * 282,
    dtype=np.int64,
)


class TbModel(Model):
    """Genotype cluster-size simulator; prior uniform on {0 <= d <= a, a+d < 1}.

    Desk-scale defaults (n_target=1000, sample_size=100) keep unit tests fast;
    analysis scale is n_target=10000, sample_size=473.
    """

    name = "tb"
    param_names = ("a", "d")

    def __init__(self, n_target: int = 1000, sample_size: int = 100,
                 restart_cap: int = DEFAULT_RESTART_CAP):
        self.n_target = int(n_target)
        self.sample_size = int(sample_size)
        self.restart_cap = int(restart_cap)
        self.prior = BoxUniformPrior(
            [0.0, 0.0], [1.0, 1.0],
            constraint=lambda th: th[1] <= th[0] and th[0] + th[1] < 1.0,
        )
        self.descriptor = f"genotype cluster sizes, sample {sample_size} of {n_target}"

    def simulate(self, theta, rng):
        try:
            return tb_simulate(theta, self.n_target, self.sample_size, rng,
                               restart_cap=self.restart_cap)
        except ExtinctionError:
            # conditioning failed: mark the draw so ABC engines reject it
            return Dataset(np.zeros(0, dtype=np.int64), overflow=True)
