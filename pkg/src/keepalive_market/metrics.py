"""Run-level evaluation: totals, customer cost and regret, cost recovery,
(wasted memory, cold starts) trade-off points, D(theta) and Pareto frontiers.

All accounting is in expectation over the policy's randomness.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_non_negative, check_sorted_grid
from .payments import (
    DEFAULT_TOL,
    MYERSON,
    POST_UPDATE,
    RULES,
    _check_indexing,
    _check_rule,
    _ledger_rows,
    myerson_payments_on_grid,
    payment_schedule,
    step_quantities,
)
from .policy import as_window_set, ledger_trajectory

REPORT = "report"
WINDOW = "window"


@dataclass(frozen=True)
class RunRecord:
    """Expected totals for one (arrival sequence, report, rule) evaluation.

    Totals are ``math.fsum`` of the per-step values, so they are exact
    functions of ``steps`` independent of summation order.
    """

    theta_hat: float
    rule: str
    total_payment: float
    total_expected_cs: float
    total_expected_wm: float
    payments: tuple
    expected_cs: tuple
    expected_wm: tuple

    @classmethod
    def from_steps(cls, theta_hat, rule, payments, expected_cs, expected_wm):
        payments = tuple(float(v) for v in payments)
        expected_cs = tuple(float(v) for v in expected_cs)
        expected_wm = tuple(float(v) for v in expected_wm)
        return cls(
            theta_hat=float(theta_hat),
            rule=rule,
            total_payment=math.fsum(payments),
            total_expected_cs=math.fsum(expected_cs),
            total_expected_wm=math.fsum(expected_wm),
            payments=payments,
            expected_cs=expected_cs,
            expected_wm=expected_wm,
        )

    @property
    def n_steps(self):
        return len(self.payments)

    @property
    def offset(self):
        """First inter-arrival's payment."""
        return self.payments[0] if self.payments else 0.0

    def cumulative_payments(self, offset=False):
        cum = np.cumsum(self.payments)
        return cum - self.offset if offset else cum


@dataclass(frozen=True)
class KappaPoint:
    """Cumulative (wasted memory, cold starts) for a report or a fixed window."""

    label: float
    wm_total: float
    cs_total: float
    kind: str = REPORT

    def __post_init__(self):
        if self.wm_total < 0 or self.cs_total < 0:
            raise ValueError("kappa coordinates must be non-negative")


def run_market(
    arrivals,
    window_set,
    c_p,
    theta_hat,
    rule,
    tol=DEFAULT_TOL,
    indexing=POST_UPDATE,
    eta=1.0,
):
    """Evaluate one report under one payment rule, in expectation."""
    records = payment_schedule(
        arrivals, window_set, c_p, theta_hat, rule, tol=tol, indexing=indexing, eta=eta
    )
    return RunRecord.from_steps(
        theta_hat,
        rule,
        [r.amount for r in records],
        [r.expected_cs for r in records],
        [r.expected_wm for r in records],
    )


def run_market_grid(
    arrivals,
    window_set,
    c_p,
    thetas,
    rules=RULES,
    tol=DEFAULT_TOL,
    indexing=POST_UPDATE,
    eta=1.0,
):
    """Evaluate every report in ``thetas`` under every rule in one pass.

    The expert ledger does not depend on the report, so it is built once; the
    Myerson integral for all reports of a step is accumulated across grid
    segments. Returns ``{(rule, theta_hat): RunRecord}``.
    """
    thetas = check_sorted_grid(thetas, "theta grid")
    if thetas[0] < 0:
        raise ValueError("reports must be non-negative")
    for rule in rules:
        _check_rule(rule)
    _check_indexing(indexing)
    if len(arrivals) < 2:
        raise ValueError("a market run needs at least 2 arrivals")
    ws = as_window_set(window_set)
    gaps = arrivals.gaps
    wm, cs = ledger_trajectory(ws, gaps, c_p)
    n, k = gaps.size, thetas.size
    rows = _ledger_rows(n, indexing)
    p_cs = np.empty((n, k))
    e_wm = np.empty((n, k))
    for i, (row, x) in enumerate(zip(rows, gaps)):
        p_cs[i], e_wm[i], _ = step_quantities(
            wm[row], cs[row], ws.windows, float(x), c_p, thetas, eta
        )
    myer = None
    if MYERSON in rules:
        myer = myerson_payments_on_grid(wm[rows], cs[rows], ws.windows, gaps, thetas, tol, eta)

    out = {}
    for rule in rules:
        pay = myer if rule == MYERSON else e_wm
        for j, t in enumerate(thetas):
            out[(rule, float(t))] = RunRecord.from_steps(t, rule, pay[:, j], p_cs[:, j], e_wm[:, j])
    return out


def customer_cost(record, theta):
    theta = check_non_negative(theta, "theta")
    return record.total_payment + theta * record.total_expected_cs


def customer_regret(records, theta):
    """Truthful cost minus the cheapest cost over the reports in ``records``.

    ``records`` holds one :class:`RunRecord` per report for a single rule and
    must include the report ``theta`` itself.
    """
    records = list(records.values()) if isinstance(records, dict) else list(records)
    truthful = [r for r in records if r.theta_hat == theta]
    if not truthful:
        raise ValueError(f"report grid does not contain the true type {theta}")
    costs = [customer_cost(r, theta) for r in records]
    return customer_cost(truthful[0], theta) - min(costs)


def cost_recovery_gap(record):
    """Expected wasted memory not covered by payments (negative = over-recovery)."""
    return record.total_expected_wm - record.total_payment


def kappa_curves(
    arrivals, window_set, c_p, thetas, indexing=POST_UPDATE, eta=1.0
):
    """Trade-off points for each report on the grid and each fixed window."""
    thetas = check_sorted_grid(thetas, "theta grid")
    ws = as_window_set(window_set)
    gaps = arrivals.gaps
    wm, cs = ledger_trajectory(ws, gaps, c_p)
    n = gaps.size
    cs_steps, wm_steps = [], []
    for row, x in zip(_ledger_rows(n, indexing), gaps):
        p, e, _ = step_quantities(wm[row], cs[row], ws.windows, float(x), c_p, thetas, eta)
        cs_steps.append(p)
        wm_steps.append(e)
    points = []
    for j, t in enumerate(thetas):
        wm_t = math.fsum(s[j] for s in wm_steps)
        cs_t = math.fsum(s[j] for s in cs_steps)
        points.append(KappaPoint(float(t), wm_t, cs_t, REPORT))
    for j, tau in enumerate(ws.windows):
        points.append(KappaPoint(float(tau), float(wm[-1, j]), float(cs[-1, j]), WINDOW))
    return points


def kappa_from_records(records, arrivals, window_set, c_p):
    """Trade-off points reusing already computed run records of one rule."""
    ws = as_window_set(window_set)
    wm, cs = ledger_trajectory(ws, arrivals.gaps, c_p)
    pts = [
        KappaPoint(r.theta_hat, r.total_expected_wm, r.total_expected_cs, REPORT)
        for r in sorted(records, key=lambda r: r.theta_hat)
    ]
    pts += [
        KappaPoint(float(t), float(wm[-1, j]), float(cs[-1, j]), WINDOW)
        for j, t in enumerate(ws.windows)
    ]
    return pts


def _split(points):
    reports = [p for p in points if p.kind == REPORT]
    windows = [p for p in points if p.kind == WINDOW]
    if not reports or not windows:
        raise ValueError("need at least one report point and one window point")
    return reports, windows


def d_theta(points, thetas):
    """``max(0, max_report min_window (kappa(window) - kappa(report)) . (1, theta))``.

    Evaluated exactly on the given points, one value per ``theta``.
    """
    reports, windows = _split(points)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    r_wm = np.array([p.wm_total for p in reports])
    r_cs = np.array([p.cs_total for p in reports])
    w_wm = np.array([p.wm_total for p in windows])
    w_cs = np.array([p.cs_total for p in windows])
    out = np.empty(thetas.size)
    for k, th in enumerate(thetas):
        # rows: reports, cols: windows
        gain = (w_wm[None, :] - r_wm[:, None]) + th * (w_cs[None, :] - r_cs[:, None])
        out[k] = max(0.0, float(gain.min(axis=1).max()))
    return out


def pareto_frontier(points):
    """Points not dominated in (wm_total, cs_total); duplicates kept once."""
    unique = {}
    for p in points:
        unique.setdefault((p.wm_total, p.cs_total), p)
    ordered = sorted(unique.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    frontier = []
    best_cs = math.inf
    for (wm, cs), p in ordered:
        if cs < best_cs:
            frontier.append(p)
            best_cs = cs
    return frontier


def ic_bound(policy_regrets, d_values, thetas, n):
    """Per-arrival IC slack of externality payments.

    ``(R_n + max_theta theta * D(theta)) / n`` with ``R_n`` the largest
    (non-negative) policy regret supplied.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    r_n = max(0.0, float(np.max(policy_regrets)))
    weighted = np.asarray(thetas, dtype=float) * np.asarray(d_values, dtype=float)
    return (r_n + max(0.0, float(np.max(weighted)))) / n
