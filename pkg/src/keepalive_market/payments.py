"""Per-gap charges: Myerson (monotone-allocation) payments and externality payments.

Indexing convention
-------------------
``"post-update"`` (default) prices gap ``x_i`` with the distribution built from
the ledger that already includes ``x_i``; this is the convention under which the
two-window closed form holds exactly. ``"pre-update"`` prices it with the
distribution that was in force while the gap elapsed (ledger through
``x_{i-1}``), so the first gap is priced under uniform weights.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_count, check_non_negative, check_positive
from .arrivals import make_rng
from .policy import (
    ExpertLedger,
    as_window_set,
    cold_start_curve,
    cold_start_curves,
    ledger_trajectory,
    policy_distribution,
    sample_window,
    wasted_memory,
)
from .quadrature import adaptive_simpson, adaptive_simpson_many

MYERSON = "myerson"
EXTERNALITY = "externality"
RULES = (MYERSON, EXTERNALITY)
EXPECTED = "expected"
REALIZED = "realized"
POST_UPDATE = "post-update"
PRE_UPDATE = "pre-update"
INDEXINGS = (POST_UPDATE, PRE_UPDATE)
DEFAULT_TOL = 1e-8
MAX_DEPTH = 40


class PaymentConsistencyError(ArithmeticError):
    """A Myerson payment came out materially negative."""


@dataclass(frozen=True)
class PaymentRecord:
    step: int
    rule: str
    amount: float
    expected_cs: float
    expected_wm: float
    sampled_tau: float | None = None


def _check_rule(rule):
    if rule not in RULES:
        raise ValueError(f"unknown payment rule {rule!r}; expected one of {RULES}")
    return rule


def _check_indexing(indexing):
    if indexing not in INDEXINGS:
        raise ValueError(f"unknown payment indexing {indexing!r}; expected one of {INDEXINGS}")
    return indexing


def _clamp(p, tol):
    if p >= 0:
        return p
    if p >= -tol:
        return 0.0
    raise PaymentConsistencyError(
        f"Myerson payment {p:.3e} is below -tol; cold-start probability is not monotone"
    )


def myerson_payment(ledger, theta_hat, x, tol=DEFAULT_TOL, eta=1.0):
    """``int_0^theta_hat P(y) dy - theta_hat * P(theta_hat)`` for cold-start curve ``P``."""
    theta_hat = check_non_negative(theta_hat, "theta_hat")
    x = check_non_negative(x, "x")
    eta = check_positive(eta, "eta")
    if theta_hat == 0.0:
        return 0.0
    curve = cold_start_curve(ledger.wm_cum, ledger.cs_cum, ledger.windows, x, eta)
    area = adaptive_simpson(curve, 0.0, theta_hat, tol=tol, max_depth=MAX_DEPTH)
    return _clamp(area - theta_hat * float(curve(theta_hat)), tol)


def myerson_payments_on_grid(wm_rows, cs_rows, windows, xs, thetas, tol=DEFAULT_TOL, eta=1.0):
    """Myerson payments for many (ledger, gap) steps and an ascending report grid.

    Row ``k`` of the ledger arrays is the state that prices gap ``xs[k]``.
    Each step's integral is accumulated segment by segment between consecutive
    grid points, each segment to ``tol / n_segments``. Returns an array of
    shape ``(len(xs), len(thetas))``.
    """
    thetas = np.asarray(thetas, dtype=float)
    xs = np.asarray(xs, dtype=float)
    n, k = xs.size, thetas.size
    curves = cold_start_curves(wm_rows, cs_rows, windows, xs, eta)
    edges = np.concatenate([[0.0], thetas])
    n_seg = max(int(np.count_nonzero(np.diff(edges) > 0)), 1)
    steps = np.repeat(np.arange(n), k)
    seg_area = adaptive_simpson_many(
        lambda panel, y: curves(steps[panel], y),
        np.tile(edges[:-1], n),
        np.tile(edges[1:], n),
        tol=tol / n_seg,
        max_depth=MAX_DEPTH,
    ).reshape(n, k)
    area = np.cumsum(seg_area, axis=1)
    at_report = curves(steps, np.tile(thetas, n)).reshape(n, k)
    raw = area - thetas[None, :] * at_report
    out = np.where(raw >= 0, raw, 0.0)
    bad = raw < -tol
    if bad.any():
        raise PaymentConsistencyError(
            f"Myerson payment {raw[bad].min():.3e} is below -tol; "
            "cold-start probability is not monotone"
        )
    out[:, thetas == 0] = 0.0
    return out


def myerson_two_expert_closed_form(i, sum_x, theta_hat, c_p=1.0):
    """Closed-form Myerson payment for windows ``{0, inf}`` after ``i`` gaps.

    Evaluated with log-domain primitives so large ``i * theta_hat`` cannot
    overflow.
    """
    i = check_count(i, "i", minimum=1)
    sum_x = check_non_negative(sum_x, "sum_x")
    theta_hat = check_non_negative(theta_hat, "theta_hat")
    c_p = check_positive(c_p, "c_p")
    z = i * theta_hat - c_p * sum_x
    sigmoid = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    log_ratio = math.log1p(math.exp(-c_p * sum_x)) - np.logaddexp(0.0, z)
    return theta_hat * sigmoid + float(log_ratio) / i


def externality_payment(ledger, theta_hat, x, mode=EXPECTED, sampled_tau=None, eta=1.0):
    """Charge the wasted memory: expected under the policy, or of the sampled window."""
    x = check_non_negative(x, "x")
    if mode == REALIZED:
        if sampled_tau is None:
            raise ValueError("realized externality payment requires sampled_tau")
        return wasted_memory(sampled_tau, x, ledger.c_p)
    if mode != EXPECTED:
        raise ValueError(f"unknown externality mode {mode!r}")
    probs = policy_distribution(ledger, theta_hat, eta).probabilities
    return float(probs @ wasted_memory(ledger.windows, x, ledger.c_p))


def step_quantities(wm_cum, cs_cum, windows, x, c_p, thetas, eta=1.0):
    """Per-report expected cold start, expected wasted memory and log-weights.

    Vectorised over ``thetas``; returns ``(p_cs, exp_wm, log_w)`` with
    ``log_w`` of shape ``(len(thetas), m)``.
    """
    thetas = np.asarray(thetas, dtype=float)
    scores = -eta * (np.asarray(wm_cum, dtype=float) + thetas[:, None] * np.asarray(cs_cum))
    log_w = scores - np.logaddexp.reduce(scores, axis=1, keepdims=True)
    p = np.exp(log_w)
    p_cs = cold_start_curve(wm_cum, cs_cum, windows, x, eta)(thetas)
    exp_wm = p @ wasted_memory(windows, x, c_p)
    return p_cs, exp_wm, log_w


def _ledger_rows(n_gaps, indexing):
    offset = 1 if indexing == POST_UPDATE else 0
    return np.arange(n_gaps) + offset


def payment_schedule(
    arrivals,
    window_set,
    c_p,
    theta_hat,
    rule,
    mode=EXPECTED,
    tol=DEFAULT_TOL,
    indexing=POST_UPDATE,
    eta=1.0,
    rng=None,
):
    """One :class:`PaymentRecord` per inter-arrival of ``arrivals``.

    In realized mode a window is drawn per gap from the governing distribution
    (``rng`` seeds the draws); the externality charge is then that window's
    wasted memory. Myerson charges are always computed in expectation.
    """
    _check_rule(rule)
    _check_indexing(indexing)
    if mode not in (EXPECTED, REALIZED):
        raise ValueError(f"unknown externality mode {mode!r}")
    theta_hat = check_non_negative(theta_hat, "theta_hat")
    if len(arrivals) < 2:
        raise ValueError("a payment schedule needs at least 2 arrivals")
    ws = as_window_set(window_set)
    gaps = arrivals.gaps
    wm, cs = ledger_trajectory(ws, gaps, c_p)
    gen = make_rng(rng) if mode == REALIZED else None

    records = []
    for step, (row, x) in enumerate(zip(_ledger_rows(gaps.size, indexing), gaps), start=1):
        x = float(x)
        ledger = ExpertLedger(ws, c_p=c_p, steps=int(row), wm_cum=wm[row], cs_cum=cs[row])
        p_cs, exp_wm, _ = step_quantities(wm[row], cs[row], ws.windows, x, c_p, [theta_hat], eta)
        sampled = None
        if gen is not None:
            sampled = sample_window(policy_distribution(ledger, theta_hat, eta), gen)
        if rule == MYERSON:
            amount = myerson_payment(ledger, theta_hat, x, tol=tol, eta=eta)
        elif mode == EXPECTED:
            amount = float(exp_wm[0])
        else:
            amount = externality_payment(ledger, theta_hat, x, REALIZED, sampled, eta)
        records.append(
            PaymentRecord(
                step=step,
                rule=rule,
                amount=amount,
                expected_cs=float(p_cs[0]),
                expected_wm=float(exp_wm[0]),
                sampled_tau=sampled,
            )
        )
    return records
