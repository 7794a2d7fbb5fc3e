"""Synthetic arrival sequences: homogeneous Poisson and exponential-kernel Hawkes.

All randomness goes through :class:`numpy.random.Generator` (PCG64). A seed may
be an integer, a :class:`numpy.random.SeedSequence` or an existing generator.
Per-run streams for batch experiments are derived with :func:`run_rng`, which
keys a ``SeedSequence`` by ``(run_index, stream, ...)`` under the master seed, so any
run can be regenerated in isolation and in any order.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_count, check_non_negative, check_positive

# stream ids used with run_rng
PARAM_STREAM = 0
ARRIVAL_STREAM = 1
POLICY_STREAM = 2


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def run_rng(master_seed, run_index, stream, *extra):
    """Independent generator for one (run, purpose[, sub-key...]) under a master seed."""
    key = (int(run_index), int(stream), *(int(e) for e in extra))
    seq = np.random.SeedSequence(int(master_seed), spawn_key=key)
    return np.random.default_rng(seq)


@dataclass(frozen=True, eq=False)
class ArrivalSequence:
    """Ordered arrival timestamps for one application.

    Timestamps must be non-decreasing; synthetic generators always produce
    strictly increasing, strictly positive times.
    """

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if np.any(~np.isfinite(times)) or np.any(times < 0):
            raise ValueError("arrival times must be finite and non-negative")
        if np.any(np.diff(times) < 0):
            raise ValueError("arrival times must be non-decreasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def gaps(self):
        return np.diff(self.times)

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, ArrivalSequence):
            return NotImplemented
        return np.array_equal(self.times, other.times)

    @classmethod
    def from_gaps(cls, gaps, start=0.0):
        gaps = np.asarray(gaps, dtype=float)
        return cls(np.concatenate([[start], start + np.cumsum(gaps)]))


@dataclass(frozen=True)
class HawkesParams:
    """Exponential-kernel Hawkes parameters.

    ``lambda0`` is the base rate, ``alpha`` the raw jump added to the intensity
    by each event and ``beta`` the decay rate. Branching ratio ``alpha / beta``
    may exceed one; generation is by event count so explosive draws are fine.
    """

    lambda0: float
    alpha: float
    beta: float

    def __post_init__(self):
        check_positive(self.lambda0, "lambda0")
        check_non_negative(self.alpha, "alpha")
        check_positive(self.beta, "beta")

    @property
    def branching_ratio(self):
        return self.alpha / self.beta


def gen_poisson(rate, count, seed):
    """``count`` arrivals of a homogeneous Poisson process started at 0."""
    rate = check_positive(rate, "rate")
    count = check_count(count, "count")
    rng = make_rng(seed)
    gaps = rng.exponential(1.0 / rate, size=count)
    return ArrivalSequence(np.cumsum(gaps))


def gen_hawkes(params, count, seed):
    """Simulate ``count`` Hawkes arrivals by Ogata thinning.

    The excitation ``sum_j alpha * exp(-beta (t - t_j))`` is tracked recursively.
    Between events the intensity only decays, so the intensity at the current
    candidate time dominates everything after it; the bound is refreshed after
    every candidate, accepted or not.
    """
    count = check_count(count, "count", minimum=1)
    lam0, alpha, beta = params.lambda0, params.alpha, params.beta
    rng = make_rng(seed)

    times = np.empty(count)
    t = 0.0
    excitation = 0.0
    n = 0
    while n < count:
        upper = lam0 + excitation
        w = rng.exponential(1.0 / upper)
        u = rng.random()
        t += w
        excitation *= math.exp(-beta * w)
        if u * upper <= lam0 + excitation:
            times[n] = t
            n += 1
            excitation += alpha
    return ArrivalSequence(times)


def _history_times(history):
    if history is None:
        return np.empty(0)
    if isinstance(history, ArrivalSequence):
        return history.times
    return np.asarray(history, dtype=float).reshape(-1)


def intensity(params, history, t):
    """Conditional intensity at ``t``, counting events at ``t_j <= t``."""
    times = _history_times(history)
    past = times[times <= t]
    if past.size and t < past[-1]:
        raise ValueError("t precedes the last history timestamp")
    return params.lambda0 + params.alpha * float(np.sum(np.exp(-params.beta * (t - past))))


def compensator(params, history, t):
    """Integrated intensity over ``[0, t]`` given events at ``t_j < t``."""
    t = check_non_negative(t, "t", allow_inf=True)
    times = _history_times(history)
    past = times[times < t]
    base = params.lambda0 * t
    if math.isinf(t):
        return base + params.alpha / params.beta * past.size
    decayed = -np.expm1(-params.beta * (t - past))
    return base + params.alpha / params.beta * float(np.sum(decayed))


def rescaled_gaps(params, arrivals):
    """Compensator increments between consecutive events, in O(n).

    The first increment is taken from time 0. Under a correct model these are
    iid Exponential(1).
    """
    times = _history_times(arrivals)
    lam0, alpha, beta = params.lambda0, params.alpha, params.beta
    out = np.empty(times.size)
    prev = 0.0
    excitation = 0.0  # intensity jump mass just after the previous event
    for k, tk in enumerate(times):
        dt = tk - prev
        out[k] = lam0 * dt + excitation * (-math.expm1(-beta * dt)) / beta
        excitation = excitation * math.exp(-beta * dt) + alpha
        prev = tk
    return out
