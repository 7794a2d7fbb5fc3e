"""Exponential-weights keep-alive policy over a finite set of fixed windows.

Every fixed window (an *expert*) is evaluated counterfactually on each
inter-arrival gap, so the learner sees full information. The per-expert
cumulative loss is affine in the reported cold-start cost::

    L(tau_j) = WM(tau_j) + theta_hat * CS(tau_j)

and the policy draws a window with probability proportional to
``exp(-eta * L(tau_j))``. Everything is kept in the log domain.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    as_gap_array,
    check_count,
    check_non_negative,
    check_positive,
)
from .arrivals import ArrivalSequence, make_rng

UNBOUNDED = math.inf

SIM_WINDOWS = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
TRACE_WINDOWS = (5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 90.0, 120.0)


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Strictly increasing keep-alive window lengths; ``inf`` allowed last."""

    windows: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=float).reshape(-1)
        if w.size == 0:
            raise ValueError("window set must be non-empty")
        if np.any(np.isnan(w)) or np.any(w < 0):
            raise ValueError("window lengths must be non-negative")
        if np.any(np.diff(w) <= 0):
            raise ValueError(f"window lengths must be strictly increasing, got {w.tolist()}")
        if np.isinf(w[:-1]).any():
            raise ValueError("an unbounded window may only appear in last position")
        w.setflags(write=False)
        object.__setattr__(self, "windows", w)

    def __len__(self):
        return self.windows.size

    def __iter__(self):
        return iter(self.windows.tolist())

    def __eq__(self, other):
        if not isinstance(other, WindowSet):
            return NotImplemented
        return np.array_equal(self.windows, other.windows)

    def __hash__(self):
        return hash(self.windows.tobytes())

    @property
    def has_unbounded(self):
        return bool(np.isinf(self.windows[-1]))


def as_window_set(windows):
    return windows if isinstance(windows, WindowSet) else WindowSet(windows)


def cold_start(tau, x):
    """1 if the gap outlives the window, else 0. ``x == tau`` is a warm start.

    ``tau`` may be an array of windows, in which case an int array is returned.
    """
    if np.any(np.asarray(x) < 0):
        raise ValueError(f"inter-arrival must be non-negative, got {x!r}")
    out = (np.asarray(x) > np.asarray(tau)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def wasted_memory(tau, x, c_p):
    """Caching cost of holding the image for one gap: ``c_p * min(x, tau)``."""
    if np.any(np.asarray(x) < 0):
        raise ValueError(f"inter-arrival must be non-negative, got {x!r}")
    if np.any(np.asarray(tau) < 0):
        raise ValueError(f"window must be non-negative, got {tau!r}")
    check_positive(c_p, "c_p")
    out = c_p * np.minimum(np.asarray(x, dtype=float), np.asarray(tau, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class ExpertLedger:
    """Cumulative wasted memory and cold starts of every fixed window."""

    window_set: WindowSet
    c_p: float = 1.0
    steps: int = 0
    wm_cum: np.ndarray = field(default=None)
    cs_cum: np.ndarray = field(default=None)

    def __post_init__(self):
        ws = as_window_set(self.window_set)
        object.__setattr__(self, "window_set", ws)
        check_positive(self.c_p, "c_p")
        check_count(self.steps, "steps")
        m = len(ws)
        wm = np.zeros(m) if self.wm_cum is None else np.asarray(self.wm_cum, dtype=float)
        cs = np.zeros(m, dtype=np.int64) if self.cs_cum is None else np.asarray(self.cs_cum)
        if wm.shape != (m,) or cs.shape != (m,):
            raise ValueError("ledger vectors must have one entry per window")
        wm.setflags(write=False)
        cs.setflags(write=False)
        object.__setattr__(self, "wm_cum", wm)
        object.__setattr__(self, "cs_cum", cs)

    @classmethod
    def fresh(cls, windows, c_p=1.0):
        return cls(as_window_set(windows), c_p=c_p)

    @property
    def windows(self):
        return self.window_set.windows

    def __eq__(self, other):
        if not isinstance(other, ExpertLedger):
            return NotImplemented
        return (
            self.window_set == other.window_set
            and self.c_p == other.c_p
            and self.steps == other.steps
            and np.array_equal(self.wm_cum, other.wm_cum)
            and np.array_equal(self.cs_cum, other.cs_cum)
        )


def ledger_update(ledger, x):
    """Charge gap ``x`` to every expert and return the new ledger."""
    x = check_non_negative(x, "x")
    w = ledger.windows
    return replace(
        ledger,
        steps=ledger.steps + 1,
        wm_cum=ledger.wm_cum + wasted_memory(w, x, ledger.c_p),
        cs_cum=ledger.cs_cum + cold_start(w, x),
    )


def ledger_trajectory(windows, gaps, c_p=1.0):
    """Cumulative ledgers for every prefix of ``gaps``.

    Returns ``(wm, cs)`` of shape ``(n + 1, m)``: row ``i`` is the state after
    the first ``i`` gaps, row 0 the fresh ledger.
    """
    ws = as_window_set(windows)
    gaps = as_gap_array(gaps)
    check_positive(c_p, "c_p")
    w = ws.windows[None, :]
    x = gaps[:, None]
    wm_step = wasted_memory(w, x, c_p) if gaps.size else np.zeros((0, len(ws)))
    cs_step = cold_start(w, x) if gaps.size else np.zeros((0, len(ws)), dtype=np.int64)
    wm = np.vstack([np.zeros((1, len(ws))), np.cumsum(wm_step, axis=0)])
    cs = np.vstack([np.zeros((1, len(ws)), dtype=np.int64), np.cumsum(cs_step, axis=0)])
    return wm, cs


def ledger_at(windows, gaps, c_p=1.0):
    """Ledger after processing all of ``gaps``."""
    ledger = ExpertLedger.fresh(windows, c_p)
    for x in as_gap_array(gaps):
        ledger = ledger_update(ledger, float(x))
    return ledger


def expert_losses(ledger, theta_hat):
    theta_hat = check_non_negative(theta_hat, "theta_hat")
    return ledger.wm_cum + theta_hat * ledger.cs_cum


def expert_loss(ledger, j, theta_hat):
    if not 0 <= j < len(ledger.window_set):
        raise IndexError(f"expert index {j} out of range")
    return float(expert_losses(ledger, theta_hat)[j])


@dataclass(frozen=True, eq=False)
class PolicyDistribution:
    log_weights: np.ndarray
    theta_hat: float
    windows: np.ndarray

    @property
    def probabilities(self):
        return np.exp(self.log_weights)


def _log_softmax(scores):
    return scores - logsumexp(scores, axis=-1, keepdims=True)


def policy_distribution(ledger, theta_hat, eta=1.0):
    """Exponential-weights distribution over windows for report ``theta_hat``."""
    eta = check_positive(eta, "eta")
    losses = expert_losses(ledger, theta_hat)
    return PolicyDistribution(
        log_weights=_log_softmax(-eta * losses),
        theta_hat=float(theta_hat),
        windows=ledger.windows,
    )


def _cold_share(scores, cold):
    # shift by the row max and take a plain ratio; going through two large
    # log-sums and exp(difference) loses ~1e-14 absolute on saturated curves
    w = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return np.sum(np.where(cold, w, 0.0), axis=-1) / np.sum(w, axis=-1)


def cold_start_curve(wm_cum, cs_cum, windows, x, eta=1.0):
    """Vectorised ``theta_hat -> Pr(cold start on gap x)`` for a fixed ledger.

    The returned callable accepts scalars or arrays of reports.
    """
    wm_cum = np.asarray(wm_cum, dtype=float)
    cs_cum = np.asarray(cs_cum, dtype=float)
    cold = np.asarray(windows) < x
    if not cold.any():
        return lambda y: np.zeros_like(np.asarray(y, dtype=float))
    if cold.all():
        return lambda y: np.ones_like(np.asarray(y, dtype=float))

    def curve(y):
        y = np.asarray(y, dtype=float)
        scores = -eta * (wm_cum + y[..., None] * cs_cum)
        return _cold_share(scores, cold)

    return curve


def cold_start_curves(wm_rows, cs_rows, windows, xs, eta=1.0):
    """Batched form of :func:`cold_start_curve`.

    Row ``k`` of the ledger arrays pairs with gap ``xs[k]``; the returned
    callable maps ``(k, y)`` arrays to cold-start probabilities.
    """
    wm_rows = np.asarray(wm_rows, dtype=float)
    cs_rows = np.asarray(cs_rows, dtype=float)
    cold = np.asarray(windows)[None, :] < np.asarray(xs, dtype=float)[:, None]

    def curves(k, y):
        scores = -eta * (wm_rows[k] + np.asarray(y, dtype=float)[:, None] * cs_rows[k])
        return _cold_share(scores, cold[k])

    return curves


def cold_start_probability(ledger, theta_hat, x, eta=1.0):
    """Probability that the sampled window is shorter than gap ``x``."""
    theta_hat = check_non_negative(theta_hat, "theta_hat")
    x = check_non_negative(x, "x")
    eta = check_positive(eta, "eta")
    curve = cold_start_curve(ledger.wm_cum, ledger.cs_cum, ledger.windows, x, eta)
    return float(curve(theta_hat))


def sample_window(dist, rng):
    """Draw one window from ``dist`` using generator (or seed) ``rng``."""
    rng = make_rng(rng)
    p = dist.probabilities
    j = int(rng.choice(p.size, p=p / p.sum()))
    return float(dist.windows[j])


def policy_regret(ledger, policy_loss, j, theta):
    """Expected cumulative policy loss minus that of fixed window ``j``."""
    return float(policy_loss) - expert_loss(ledger, j, theta)


class ExpWeightsKeepAlive(BaseEstimator):
    """Exponential-weights keep-alive policy with a scikit-learn style API.

    ``fit`` consumes a sequence of inter-arrival gaps (or an
    :class:`ArrivalSequence`) and builds the expert ledger; the fitted policy
    can then be queried for any report.

    Parameters
    ----------
    windows : sequence of float
        Fixed keep-alive windows, strictly increasing, ``inf`` allowed last.
    c_p : float
        Caching cost per unit time.
    eta : float
        Learning rate applied to cumulative losses.
    """

    def __init__(self, windows=SIM_WINDOWS, c_p=1.0, eta=1.0):
        self.windows = windows
        self.c_p = c_p
        self.eta = eta

    @staticmethod
    def _gaps(X):
        if isinstance(X, ArrivalSequence):
            return X.gaps
        return as_gap_array(X)

    def fit(self, X, y=None):
        check_positive(self.eta, "eta")
        self.ledger_ = ExpertLedger.fresh(self.windows, self.c_p)
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "ledger_"):
            self.ledger_ = ExpertLedger.fresh(self.windows, self.c_p)
        for x in self._gaps(X):
            self.ledger_ = ledger_update(self.ledger_, float(x))
        self.n_steps_ = self.ledger_.steps
        return self

    def predict_proba(self, theta_hat):
        """Window probabilities; one row per report if ``theta_hat`` is an array."""
        check_is_fitted(self, "ledger_")
        thetas = np.atleast_1d(np.asarray(theta_hat, dtype=float))
        rows = np.array([policy_distribution(self.ledger_, t, self.eta).probabilities for t in thetas])
        return rows[0] if np.ndim(theta_hat) == 0 else rows

    def cold_start_proba(self, theta_hat, x):
        check_is_fitted(self, "ledger_")
        return cold_start_probability(self.ledger_, theta_hat, x, self.eta)

    def sample(self, theta_hat, random_state=None):
        check_is_fitted(self, "ledger_")
        return sample_window(policy_distribution(self.ledger_, theta_hat, self.eta), random_state)
