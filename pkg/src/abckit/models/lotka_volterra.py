"""Prey-predator stochastic kinetic network simulated exactly by Gillespie's method.

State (y1, y2) = (prey, predator); reactions and rates:
birth y1 -> y1+1 at rate theta1*y1; predation (y1-1, y2+1) at rate
theta2*y1*y2; predator death y2 -> y2-1 at rate theta3*y2.
"""

from __future__ import annotations

import numpy as np

from .base import BoxUniformPrior, Dataset, Model

DEFAULT_EVENT_CAP = 10**6
TRUE_THETA = (0.5, 0.0025, 0.3)
DEFAULT_INITIAL_STATE = (100, 100)


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (3,):
        raise ValueError("theta must have three components")
    if np.any(theta < 0):
        raise ValueError("rate parameters must be nonnegative")
    return theta


def lv_first_event(theta, state, rng):
    """One exact reaction step: (waiting time, event index) from the given state.

    Event index 0 = prey birth, 1 = predation, 2 = predator death; an
    absorbing state returns (inf, -1).
    """
    th1, th2, th3 = _check_theta(theta)
    y1, y2 = (int(v) for v in state)
    r1, r2, r3 = th1 * y1, th2 * y1 * y2, th3 * y2
    total = r1 + r2 + r3
    if total <= 0.0:
        return np.inf, -1
    wait = rng.exponential(1.0 / total)
    u = rng.random() * total
    event = 0 if u < r1 else (1 if u < r1 + r2 else 2)
    return wait, event


def lv_gillespie(theta, initial_state, obs_times, rng, event_cap=DEFAULT_EVENT_CAP):
    """Exact simulation recording the state at each requested time.

    Returns a Dataset whose values are integer states of shape
    (len(obs_times), 2), with cumulative reaction counts per observation time
    in ``info["event_counts"]``; ``overflow`` is set when the event budget is
    hit, in which case remaining rows repeat the last simulated state.
    """
    th1, th2, th3 = _check_theta(theta)
    y1, y2 = (int(v) for v in initial_state)
    if y1 < 0 or y2 < 0:
        raise ValueError("initial molecule counts must be nonnegative")
    obs_times = np.asarray(obs_times, dtype=float)
    if obs_times.ndim != 1 or obs_times.size == 0:
        raise ValueError("obs_times must be a nonempty 1-d grid")
    if np.any(np.diff(obs_times) < 0) or obs_times[0] < 0:
        raise ValueError("obs_times must be nonnegative and nondecreasing")

    states = np.zeros((obs_times.size, 2), dtype=np.int64)
    counts = np.zeros(obs_times.size, dtype=np.int64)
    t = 0.0
    k = 0
    n_events = 0
    while k < obs_times.size and obs_times[k] <= t:
        states[k] = (y1, y2)
        k += 1

    # chunked uniforms: two draws per event (waiting time, reaction choice)
    buf = rng.random(4096)
    pos = 0
    overflow = False
    while k < obs_times.size:
        r1 = th1 * y1
        r2 = th2 * y1 * y2
        r3 = th3 * y2
        total = r1 + r2 + r3
        if total <= 0.0:  # absorbing: no reaction can fire
            states[k:] = (y1, y2)
            counts[k:] = n_events
            break
        if pos + 2 > buf.size:
            buf = rng.random(4096)
            pos = 0
        t_next = t - np.log(buf[pos]) / total
        pos += 1
        while k < obs_times.size and obs_times[k] < t_next:
            states[k] = (y1, y2)
            counts[k] = n_events
            k += 1
        if k >= obs_times.size:
            break
        t = t_next
        u = buf[pos] * total
        pos += 1
        if u < r1:
            y1 += 1
        elif u < r1 + r2:
            y1 -= 1
            y2 += 1
        else:
            y2 -= 1
        n_events += 1
        if n_events >= event_cap:
            overflow = True
            states[k:] = (y1, y2)
            counts[k:] = n_events
            break
    return Dataset(states, times=obs_times, overflow=overflow,
                   info={"event_counts": counts})


def lv_propagate_particles(thetas, states, duration, rng, event_cap=100_000):
    """Advance each particle's state by ``duration``, vectorized across particles.

    Returns (new_states, overflow_mask); an overflowed particle stopped at the
    event cap and should be discarded by the caller (zero weight).
    """
    thetas = np.asarray(thetas, dtype=float)
    out = np.array(states, dtype=np.int64, copy=True)
    if thetas.ndim != 2 or thetas.shape[1] != 3 or out.shape != (thetas.shape[0], 2):
        raise ValueError("need thetas (N,3) and states (N,2)")
    if np.any(thetas < 0) or np.any(out < 0):
        raise ValueError("rates and molecule counts must be nonnegative")
    n = out.shape[0]
    time_left = np.full(n, float(duration))
    events = np.zeros(n, dtype=np.int64)
    overflow = np.zeros(n, dtype=bool)
    active = np.arange(n)
    while active.size:
        y1 = out[active, 0].astype(float)
        y2 = out[active, 1].astype(float)
        th = thetas[active]
        r1 = th[:, 0] * y1
        r2 = th[:, 1] * y1 * y2
        r3 = th[:, 2] * y2
        total = r1 + r2 + r3
        alive = total > 0.0
        active = active[alive]
        if not active.size:
            break
        r1, r2, total = r1[alive], r2[alive], total[alive]
        dt = rng.exponential(1.0, active.size) / total
        time_left[active] -= dt
        fired = time_left[active] > 0.0  # events past the horizon never happen
        active = active[fired]
        if not active.size:
            break
        r1, r2, total = r1[fired], r2[fired], total[fired]
        u = rng.random(active.size) * total
        birth = u < r1
        predation = ~birth & (u < r1 + r2)
        death = ~birth & ~predation
        out[active[birth], 0] += 1
        out[active[predation], 0] -= 1
        out[active[predation], 1] += 1
        out[active[death], 1] -= 1
        events[active] += 1
        hit_cap = events[active] >= event_cap
        if np.any(hit_cap):
            overflow[active[hit_cap]] = True
            active = active[~hit_cap]
    return out, overflow


class LvModel(Model):
    """Trajectory simulator on an even grid with a calibration-scale box prior."""

    name = "lv"
    param_names = ("theta1", "theta2", "theta3")

    def __init__(self, n_obs: int = 50, tau: float = 0.1,
                 initial_state=DEFAULT_INITIAL_STATE, event_cap: int = DEFAULT_EVENT_CAP):
        if n_obs < 1 or tau <= 0:
            raise ValueError("need n_obs >= 1 and positive spacing")
        self.n_obs = int(n_obs)
        self.tau = float(tau)
        self.initial_state = tuple(int(v) for v in initial_state)
        self.event_cap = int(event_cap)
        self.prior = BoxUniformPrior([0.0, 0.0, 0.0], [1.0, 0.01, 1.0])
        self.descriptor = f"prey-predator counts at {n_obs} times, spacing {tau}"

    @property
    def obs_times(self) -> np.ndarray:
        return self.tau * np.arange(self.n_obs + 1)

    def simulate(self, theta, rng):
        return lv_gillespie(theta, self.initial_state, self.obs_times, rng,
                            event_cap=self.event_cap)
