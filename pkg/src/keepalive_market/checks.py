"""Self-check suite behind ``keepalive-market validate``.

Each check runs with fixed seeds and returns a :class:`CheckResult` carrying
the worst observed margin. Checks compare the implementation against an
independent route: closed forms, brute-force quadrature or dominance filters,
the time-rescaling theorem, or recomputation from emitted CSVs.
"""

import csv
from dataclasses import dataclass
import math
import tempfile

import numpy as np
from scipy import stats

from . import policy
from .arrivals import HawkesParams, gen_hawkes, gen_poisson, rescaled_gaps
from .experiments import ExperimentConfig, cmd_simulate, summarize
from .metrics import (
    KappaPoint,
    cost_recovery_gap,
    customer_regret,
    d_theta,
    pareto_frontier,
    run_market_grid,
)
from .payments import EXTERNALITY, MYERSON, myerson_payment, myerson_two_expert_closed_form
from .policy import SIM_WINDOWS, ExpertLedger, WindowSet, cold_start_probability
from .quadrature import trapezoid

SIM_THETAS = (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _two_expert_ledger(i, sum_x, c_p=1.0):
    return ExpertLedger(
        WindowSet([0.0, math.inf]), c_p=c_p, steps=i, wm_cum=[0.0, c_p * sum_x], cs_cum=[i, 0]
    )


def check_closed_form(n=40, seed=101):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n):
        i = int(rng.integers(1, 181))
        if k % 4 == 0:
            # overflow regime: i * theta_hat - sum_x > 700
            theta = float(rng.uniform(32, 64))
            sum_x = float(rng.uniform(0, min(500.0, i * theta - 701.0))) if i * theta > 701 else 0.0
        else:
            theta = float(rng.uniform(0, 64))
            sum_x = float(rng.uniform(0, 500))
        x = float(rng.uniform(0.01, 10))
        numeric = myerson_payment(_two_expert_ledger(i, sum_x), theta, x)
        closed = myerson_two_expert_closed_form(i, sum_x, theta)
        worst = max(worst, abs(numeric - closed))
    return CheckResult("closed_form_agreement", worst <= 1e-6, f"max |diff| = {worst:.3e} (tol 1e-6)")


def random_ledger(rng, max_len=200):
    size = int(rng.integers(2, 9))
    windows = np.sort(rng.choice(np.arange(65), size=size, replace=False)).astype(float)
    gaps = rng.exponential(rng.uniform(0.5, 20), size=int(rng.integers(0, max_len + 1)))
    return policy.ledger_at(windows, gaps)


def check_monotonicity(n_ledgers=30, n_x=20, seed=102):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_ledgers):
        ledger = random_ledger(rng)
        for x in rng.uniform(0, 70, size=n_x):
            probs = [cold_start_probability(ledger, t, x) for t in SIM_THETAS]
            worst = max(worst, max(b - a for a, b in zip(probs, probs[1:])))
    return CheckResult("monotonicity_sweep", worst <= 1e-12, f"max increase = {worst:.3e} (tol 1e-12)")


def check_quadrature(n=10, seed=103):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        ledger = random_ledger(rng, max_len=100)
        x = float(rng.uniform(0, 70))
        theta = float(rng.uniform(0, 64))
        curve = policy.cold_start_curve(ledger.wm_cum, ledger.cs_cum, ledger.windows, x)
        brute = trapezoid(curve, 0.0, theta) - theta * float(curve(theta)) if theta > 0 else 0.0
        got = myerson_payment(ledger, theta, x)
        worst = max(worst, abs(got - max(brute, 0.0)))
    return CheckResult("quadrature_oracle", worst <= 1e-6, f"max |diff| = {worst:.3e} (tol 1e-6)")


def check_time_rescaling(seeds=(0, 1, 2, 3, 4), count=5000):
    worst_p = 1.0
    for s in seeds:
        rng = np.random.default_rng(1000 + s)
        beta = float(rng.uniform(0.5, 5))
        params = HawkesParams(float(rng.uniform(0.1, 1)), beta * float(rng.uniform(0, 0.9)), beta)
        arrivals = gen_hawkes(params, count, s)
        p = stats.kstest(rescaled_gaps(params, arrivals), "expon").pvalue
        worst_p = min(worst_p, p)
    return CheckResult("hawkes_time_rescaling", worst_p >= 0.01, f"min KS p-value = {worst_p:.3g} (>= 0.01)")


def check_poisson_reduction(count=5000, seed=104):
    hawkes = gen_hawkes(HawkesParams(1.0, 0.0, 1.0), count, seed)
    poisson = gen_poisson(1.0, count, seed + 1)
    p = stats.ks_2samp(np.diff(hawkes.times), np.diff(poisson.times)).pvalue
    return CheckResult("poisson_reduction", p >= 0.01, f"two-sample KS p-value = {p:.3g} (>= 0.01)")


def brute_force_frontier(points):
    keep = {}
    for p in points:
        dominated = any(
            q.wm_total <= p.wm_total
            and q.cs_total <= p.cs_total
            and (q.wm_total, q.cs_total) != (p.wm_total, p.cs_total)
            for q in points
        )
        if not dominated:
            keep.setdefault((p.wm_total, p.cs_total), p)
    return sorted(keep)


def check_pareto(n=50, seed=105):
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n):
        size = int(rng.integers(1, 60))
        pts = [
            KappaPoint(float(k), float(a), float(b))
            for k, (a, b) in enumerate(rng.integers(0, 15, size=(size, 2)))
        ]
        fast = [(p.wm_total, p.cs_total) for p in pareto_frontier(pts)]
        mismatches += fast != brute_force_frontier(pts)
    return CheckResult("pareto_bruteforce", mismatches == 0, f"{mismatches} mismatching sets of {n}")


def check_d_theta():
    windows = [KappaPoint(0.0, 0.0, 2.0, "window"), KappaPoint(1.0, 2.0, 0.0, "window")]
    cases = [
        (windows + [KappaPoint(0.0, 0.5, 0.5, "report")], 1.0, 1.0),
        (windows + [KappaPoint(0.0, 0.0, 2.0, "report")], 1.0, 0.0),
        (windows + [KappaPoint(0.0, 3.0, 3.0, "report")], 0.5, 0.0),
        (windows + [KappaPoint(0.0, 0.5, 0.5, "report")], 0.5, 0.25),
    ]
    worst = max(abs(float(d_theta(pts, [th])[0]) - want) for pts, th, want in cases)
    return CheckResult("d_theta_enumeration", worst == 0.0, f"max |diff| = {worst:.3e} (exact)")


def _sample_runs(n_runs, seed):
    for r in range(n_runs):
        rng = np.random.default_rng(seed + r)
        yield gen_poisson(float(rng.uniform(0.05, 1.0)), 120, rng)


def check_incentives_and_recovery(n_runs=3, seed=106):
    worst_rho, worst_cr = 0.0, 0.0
    for arrivals in _sample_runs(n_runs, seed):
        recs = run_market_grid(arrivals, SIM_WINDOWS, 1.0, SIM_THETAS)
        myer = [recs[(MYERSON, t)] for t in SIM_THETAS]
        for t in SIM_THETAS:
            total = recs[(MYERSON, t)].total_payment + t * recs[(MYERSON, t)].total_expected_cs
            worst_rho = max(worst_rho, customer_regret(myer, t) / max(total, 1.0))
            ext = recs[(EXTERNALITY, t)]
            worst_cr = max(worst_cr, abs(cost_recovery_gap(ext)) / max(ext.total_expected_wm, 1.0))
    return [
        CheckResult("myerson_ic_identity", worst_rho <= 1e-6, f"max rho/cost = {worst_rho:.3e} (tol 1e-6)"),
        CheckResult(
            "externality_cost_recovery", worst_cr <= 1e-9, f"max |gap|/wm = {worst_cr:.3e} (tol 1e-9)"
        ),
    ]


def check_boundary_consistency(seed=107):
    """Expected cold starts must equal the expert mixture of cold-start indicators,
    including gaps that land exactly on a window length."""
    rng = np.random.default_rng(seed)
    windows = np.array(SIM_WINDOWS)
    gaps = rng.choice([0.0, 1.0, 2.0, 3.0, 4.0, 8.0, 16.0], size=60)
    worst = 0.0
    ordered = True
    ledger = ExpertLedger.fresh(windows)
    for x in gaps:
        ledger = policy.ledger_update(ledger, float(x))
        ordered &= bool(np.all(np.diff(ledger.cs_cum) <= 0) and np.all(np.diff(ledger.wm_cum) >= 0))
        for t in (0.0, 1.0, 8.0):
            dist = policy.policy_distribution(ledger, t)
            mix = float(dist.probabilities @ policy.cold_start(windows, float(x)))
            worst = max(worst, abs(mix - cold_start_probability(ledger, t, float(x))))
    return CheckResult(
        "boundary_consistency",
        worst <= 1e-12 and ordered,
        f"max |mixture - P_cs| = {worst:.3e} (tol 1e-12); expert ordering {'ok' if ordered else 'violated'}",
    )


def check_summary_consistency(seed=108):
    config = ExperimentConfig(process="poisson", runs=2, arrivals=40, seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        paths = cmd_simulate(config, tmp)
        with open(paths["runs"], newline="") as fh:
            rows = list(csv.DictReader(fh))
        with open(paths["summary"], newline="") as fh:
            emitted = list(csv.DictReader(fh))
    numeric = [
        {k: (v if k in ("process", "rule") else float(v)) for k, v in row.items()} for row in rows
    ]
    recomputed = summarize(numeric)
    worst = 0.0
    for got, want in zip(emitted, recomputed):
        for key, value in want.items():
            if isinstance(value, float):
                worst = max(worst, abs(float(got[key]) - value) / max(abs(value), 1.0))
    return CheckResult("summary_consistency", worst <= 1e-9, f"max relative diff = {worst:.3e} (tol 1e-9)")


def run_all():
    results = [
        check_closed_form(),
        check_monotonicity(),
        check_quadrature(),
        check_time_rescaling(),
        check_poisson_reduction(),
        check_pareto(),
        check_d_theta(),
        *check_incentives_and_recovery(),
        check_boundary_consistency(),
        check_summary_consistency(),
    ]
    return results
