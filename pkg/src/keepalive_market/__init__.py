"""Market-based keep-alive caching for serverless functions.

Exponential weights over fixed keep-alive windows, priced with Myerson or
externality payments, evaluated on synthetic Poisson/Hawkes arrivals or
per-minute invocation traces.
"""

from .arrivals import ArrivalSequence, HawkesParams, gen_hawkes, gen_poisson, rescaled_gaps, run_rng
from .metrics import (
    KappaPoint,
    RunRecord,
    cost_recovery_gap,
    customer_cost,
    customer_regret,
    d_theta,
    ic_bound,
    kappa_curves,
    pareto_frontier,
    run_market,
    run_market_grid,
)
from .payments import (
    EXTERNALITY,
    MYERSON,
    PaymentConsistencyError,
    PaymentRecord,
    externality_payment,
    myerson_payment,
    myerson_two_expert_closed_form,
    payment_schedule,
)
from .policy import (
    SIM_WINDOWS,
    TRACE_WINDOWS,
    ExpertLedger,
    ExpWeightsKeepAlive,
    PolicyDistribution,
    WindowSet,
    cold_start,
    cold_start_probability,
    ledger_update,
    policy_distribution,
    wasted_memory,
)
from .quadrature import QuadratureError
from .trace import AppSeries, TraceFormatError, filter_apps, parse_trace, to_arrivals

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
