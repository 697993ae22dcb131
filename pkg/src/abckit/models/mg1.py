"""Single-server queue with uniform service times, observed through
inter-departure times only."""

from __future__ import annotations

import numpy as np

from .base import Dataset, Model, Prior


def mg1_simulate(theta, n, rng):
    """Inter-departure times y_i = D_i - D_{i-1} for n customers.

    Arrivals are a Poisson process of rate theta3; service times are
    Uniform[theta1, theta2]; the queue starts empty, so
    D_i = max(D_{i-1}, a_i) + U_i with D_0 = 0.
    """
    th1, th2, th3 = (float(v) for v in np.asarray(theta, dtype=float).ravel())
    if not 0 <= th1 <= th2:
        raise ValueError("need 0 <= theta1 <= theta2")
    if th3 <= 0:
        raise ValueError("arrival rate theta3 must be positive")
    n = int(n)
    arrivals = np.cumsum(rng.exponential(1.0 / th3, n))
    services = rng.uniform(th1, th2, n)
    # D_i = S_i + max_{j<=i}(a_j - S_{j-1}) with S the cumulative service time:
    # the running max replaces the sequential max(D_{i-1}, a_i) recursion.
    cum_service = np.cumsum(services)
    slack = arrivals - np.concatenate(([0.0], cum_service[:-1]))
    departures = cum_service + np.maximum.accumulate(slack)
    return Dataset(np.diff(departures, prepend=0.0))


class Mg1Prior(Prior):
    """(theta1, theta2-theta1, theta3) uniform on [0,10]^2 x [0,1/3];
    flat in (theta1, theta2, theta3) as the reparameterization is unit-Jacobian."""

    dim = 3

    def sample(self, rng):
        th1 = rng.uniform(0.0, 10.0)
        gap = rng.uniform(0.0, 10.0)
        th3 = rng.uniform(0.0, 1.0 / 3.0)
        return np.array([th1, th1 + gap, th3])

    def log_density(self, theta):
        th1, th2, th3 = (float(v) for v in np.asarray(theta, dtype=float).ravel())
        ok = 0.0 <= th1 <= 10.0 and 0.0 <= th2 - th1 <= 10.0 and 0.0 <= th3 <= 1.0 / 3.0
        return 0.0 if ok else -np.inf

    @property
    def support(self):
        return np.array([0.0, 0.0, 0.0]), np.array([10.0, 20.0, 1.0 / 3.0])

    def density_upper_bound(self, lows, highs):
        return 1.0


class Mg1Model(Model):
    name = "mg1"
    param_names = ("theta1", "theta2", "theta3")

    def __init__(self, n_obs: int = 50):
        if n_obs < 1:
            raise ValueError("need at least one customer")
        self.n_obs = int(n_obs)
        self.prior = Mg1Prior()
        self.descriptor = f"queue inter-departure times, n={n_obs}"

    def simulate(self, theta, rng):
        return mg1_simulate(theta, self.n_obs, rng)


# ---------------------------------------------------------------------------
# auxiliary steady-state likelihood (used by the indirect-inference baseline)
# ---------------------------------------------------------------------------

def mg1_steady_state_loglik(values, th1, th2, th3):
    """Log-likelihood of inter-departure times treated as independent draws
    from the queue's equilibrium inter-departure distribution.

    At a departure the server is left busy with probability rho (next gap is a
    service time) or idle with probability 1-rho (next gap is a fresh
    exponential arrival wait convolved with a service time).
    """
    y = np.asarray(values, dtype=float)
    if not 0 <= th1 < th2:
        return -np.inf
    rho = th3 * (th1 + th2) / 2.0
    if not 0 < rho < 1:
        return -np.inf
    width = th2 - th1
    busy = np.where((y >= th1) & (y <= th2), rho / width, 0.0)
    idle = np.where(
        y >= th1,
        (1.0 - rho) * np.exp(-th3 * y) * (np.exp(th3 * np.minimum(th2, y)) - np.exp(th3 * th1)) / width,
        0.0,
    )
    dens = busy + idle
    if np.any(dens <= 0):
        return -np.inf
    return float(np.sum(np.log(dens)))


def _steady_state_loglik_grid(y, th1, th2_grid, th3):
    """Vectorized equilibrium log-likelihood over a grid of theta2 values."""
    th2 = np.asarray(th2_grid, dtype=float)[:, None]
    rho = th3 * (th1 + th2) / 2.0
    width = th2 - th1
    with np.errstate(divide="ignore", invalid="ignore"):
        busy = np.where((y >= th1) & (y <= th2), rho / width, 0.0)
        idle = np.where(
            y >= th1,
            (1.0 - rho) * np.exp(-th3 * y) * (np.exp(th3 * np.minimum(th2, y)) - np.exp(th3 * th1)) / width,
            0.0,
        )
        dens = busy + idle
        ll = np.where(np.all(dens > 0, axis=1), np.sum(np.log(np.maximum(dens, 1e-300)), axis=1), -np.inf)
    valid = (th2[:, 0] > th1) & (rho[:, 0] > 0) & (rho[:, 0] < 1)
    return np.where(valid, ll, -np.inf)


def mg1_theta2_mle(values, n_grid: int = 48, n_refinements: int = 2,
                   min_spacings: float = 5.0):
    """Profile maximum-likelihood estimate of theta2 under the equilibrium
    model, plugging in theta1-hat = min(y) and theta3-hat = 1/mean(y).

    The equilibrium likelihood is unbounded as the service window shrinks
    onto clusters of observed points, so the search is restricted to windows
    spanning at least ``min_spacings`` mean inter-point spacings, which
    selects the interior mode.  Maximizes over a grid that is repeatedly
    narrowed around the incumbent; final precision is
    (hi - lo) / n_grid^(n_refinements + 1)."""
    y = np.asarray(values, dtype=float)
    th1 = float(np.min(y))
    th3 = 1.0 / float(np.mean(y))
    # stationarity bounds the search: rho < 1  <=>  th2 < 2/th3 - th1
    hi = 2.0 / th3 - th1 - 1e-9
    lo = th1 + min_spacings * float(np.ptp(y)) / max(y.size, 1) + 1e-9
    if hi <= lo:
        return th1
    for _ in range(n_refinements + 1):
        grid = np.linspace(lo, hi, n_grid)
        ll = _steady_state_loglik_grid(y, th1, grid, th3)
        k = int(np.argmax(ll))
        cell = grid[1] - grid[0]
        lo = max(lo, grid[k] - cell)
        hi = min(hi, grid[k] + cell)
    return float(grid[k])


def mg1_auxiliaries(values, theta2_estimator: str = "mle"):
    """Auxiliary statistic vector (mean, min, theta2 estimate) for matching
    simulated to observed queue output.  ``theta2_estimator`` is "mle" for the
    equilibrium-likelihood profile estimate or "max" for the cheap surrogate."""
    y = np.asarray(values, dtype=float)
    if theta2_estimator == "mle":
        th2_hat = mg1_theta2_mle(y)
    elif theta2_estimator == "max":
        th2_hat = float(np.max(y))
    else:
        raise ValueError("theta2_estimator must be 'mle' or 'max'")
    return np.array([float(np.mean(y)), float(np.min(y)), th2_hat])
