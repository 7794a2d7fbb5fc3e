"""Batch experiment drivers: synthetic sweeps, trace runs and trade-off points.

Each *unit* (a simulated run or a trace application) is evaluated for every
(rule, report) pair on the report grid. Rows in the run-level table are the
truthful cells: for true type ``theta`` the row holds the totals obtained when
reporting ``theta``, plus the customer regret ``rho`` against the best report
on the grid.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, fields
import json
import logging
import math
import os
from pathlib import Path

import numpy as np

from .arrivals import (
    ARRIVAL_STREAM,
    PARAM_STREAM,
    POLICY_STREAM,
    HawkesParams,
    gen_hawkes,
    gen_poisson,
    run_rng,
)
from .metrics import (
    RunRecord,
    cost_recovery_gap,
    customer_cost,
    customer_regret,
    kappa_from_records,
    pareto_frontier,
    run_market_grid,
)
from .payments import (
    DEFAULT_TOL,
    EXPECTED,
    EXTERNALITY,
    INDEXINGS,
    MYERSON,
    POST_UPDATE,
    REALIZED,
    RULES,
    payment_schedule,
)
from .policy import SIM_WINDOWS, TRACE_WINDOWS, WindowSet
from .trace import DEFAULT_APP_COLUMN, filter_apps, parse_traces, read_allow_list, to_arrivals

log = logging.getLogger(__name__)

SIM_THETAS = (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
TRACE_THETAS = (0.0, 5.0, 10.0, 20.0, 30.0, 45.0, 60.0)
PROCESSES = ("poisson", "hawkes", "trace")
RATE_FLOOR = 1e-3
RHO_EPS = 1e-9
OUT_ENV = "KEEPALIVE_MARKET_OUT"

DEFAULT_PROCESS_PARAMS = {
    "poisson": {"rate": [0.0, 1.0]},
    "hawkes": {"lambda0": [0.0, 1.0], "alpha": [0.0, 5.0], "beta": [0.0, 5.0]},
    "trace": {},
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Experiment settings; JSON keys are exactly these field names.

    Process parameters are either a number (fixed) or a ``[low, high]`` pair
    (drawn uniformly per run). Rates, ``lambda0`` and ``beta`` draws are
    floored at ``1e-3``. ``window_set`` and ``theta_grid`` default to the
    synthetic grids, or to the minute grids for ``process == "trace"``.
    """

    process: str = "poisson"
    process_params: dict = field(default_factory=dict)
    trace_paths: list = field(default_factory=list)
    allow_list: str | None = None
    app_column: str = DEFAULT_APP_COLUMN
    max_arrivals: int = 180
    runs: int = 100
    arrivals: int = 200
    window_set: list | None = None
    theta_grid: list | None = None
    c_p: float = 1.0
    eta: float = 1.0
    rules: list = field(default_factory=lambda: list(RULES))
    payment_indexing: str = POST_UPDATE
    externality_mode: str = EXPECTED
    seed: int = 0
    tol: float = DEFAULT_TOL
    offset: bool = False

    def __post_init__(self):
        if self.process not in PROCESSES:
            raise ConfigError(f"process: expected one of {PROCESSES}, got {self.process!r}")
        params = dict(DEFAULT_PROCESS_PARAMS[self.process])
        params.update(self.process_params or {})
        self.process_params = params
        if self.window_set is None:
            self.window_set = list(TRACE_WINDOWS if self.process == "trace" else SIM_WINDOWS)
        if self.theta_grid is None:
            self.theta_grid = list(TRACE_THETAS if self.process == "trace" else SIM_THETAS)
        self.validate()

    def validate(self):
        def bad(name, why):
            raise ConfigError(f"{name}: {why}")

        if isinstance(self.runs, bool) or not isinstance(self.runs, int) or self.runs < 1:
            bad("runs", "must be an integer >= 1")
        if isinstance(self.arrivals, bool) or not isinstance(self.arrivals, int) or self.arrivals < 2:
            bad("arrivals", "must be an integer >= 2")
        if not isinstance(self.max_arrivals, int) or self.max_arrivals < 1:
            bad("max_arrivals", "must be an integer >= 1")
        try:
            WindowSet([math.inf if w in ("inf", "Infinity") else w for w in self.window_set])
        except (ValueError, TypeError) as exc:
            bad("window_set", str(exc))
        grid = self.theta_grid
        if not grid or any(not isinstance(t, (int, float)) or t < 0 for t in grid):
            bad("theta_grid", "must be a non-empty list of non-negative numbers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            bad("theta_grid", "must be strictly increasing")
        for name in ("c_p", "eta", "tol"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
                bad(name, "must be a finite positive number")
        if not self.rules or any(r not in RULES for r in self.rules):
            bad("rules", f"must be a non-empty subset of {list(RULES)}")
        if self.payment_indexing not in INDEXINGS:
            bad("payment_indexing", f"expected one of {list(INDEXINGS)}")
        if self.externality_mode not in (EXPECTED, REALIZED):
            bad("externality_mode", f"expected {EXPECTED!r} or {REALIZED!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            bad("seed", "must be a non-negative integer")
        if self.process == "trace" and not self.trace_paths:
            bad("trace_paths", "required when process is 'trace'")
        for key, value in self.process_params.items():
            if isinstance(value, (list, tuple)):
                if len(value) != 2 or not value[0] <= value[1]:
                    bad(f"process_params.{key}", "range must be [low, high] with low <= high")
            elif not isinstance(value, (int, float)):
                bad(f"process_params.{key}", "must be a number or a [low, high] pair")

    @property
    def windows(self):
        return WindowSet([math.inf if w in ("inf", "Infinity") else w for w in self.window_set])

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)


def _draw(value, rng, floor=0.0):
    if isinstance(value, (list, tuple)):
        lo, hi = max(value[0], floor), max(value[1], floor)
        return float(rng.uniform(lo, hi))
    return float(value)


def draw_unit(config, run_index):
    """Process parameters and arrivals of simulated run ``run_index``.

    Parameters come from stream ``(run_index, 0)`` of the master seed and
    arrivals from stream ``(run_index, 1)``.
    """
    prng = run_rng(config.seed, run_index, PARAM_STREAM)
    arng = run_rng(config.seed, run_index, ARRIVAL_STREAM)
    pp = config.process_params
    if config.process == "poisson":
        rate = _draw(pp["rate"], prng, RATE_FLOOR)
        return {"rate": rate}, gen_poisson(rate, config.arrivals, arng)
    if config.process == "hawkes":
        params = HawkesParams(
            lambda0=_draw(pp["lambda0"], prng, RATE_FLOOR),
            alpha=_draw(pp["alpha"], prng),
            beta=_draw(pp["beta"], prng, RATE_FLOOR),
        )
        return asdict(params), gen_hawkes(params, config.arrivals, arng)
    raise ConfigError(f"process {config.process!r} is not simulated")


def evaluate_unit(config, arrivals, run_index=0):
    """All (rule, report) records for one arrival sequence."""
    thetas = [float(t) for t in config.theta_grid]
    rules = tuple(config.rules)
    grid_rules = rules
    if config.externality_mode == REALIZED:
        grid_rules = tuple(r for r in rules if r != EXTERNALITY) or (MYERSON,)
    records = run_market_grid(
        arrivals,
        config.windows,
        config.c_p,
        thetas,
        rules=grid_rules,
        tol=config.tol,
        indexing=config.payment_indexing,
        eta=config.eta,
    )
    if config.externality_mode == REALIZED and EXTERNALITY in rules:
        for j, t in enumerate(thetas):
            rng = run_rng(config.seed, run_index, POLICY_STREAM, j)
            steps = payment_schedule(
                arrivals,
                config.windows,
                config.c_p,
                t,
                EXTERNALITY,
                mode=REALIZED,
                tol=config.tol,
                indexing=config.payment_indexing,
                eta=config.eta,
                rng=rng,
            )
            records[(EXTERNALITY, t)] = RunRecord.from_steps(
                t,
                EXTERNALITY,
                [s.amount for s in steps],
                [s.expected_cs for s in steps],
                [s.expected_wm for s in steps],
            )
    return {k: v for k, v in records.items() if k[0] in rules}


def truthful_rows(records, thetas, rules):
    """One row per (rule, true type) with the regret against the report grid."""
    rows = []
    for rule in rules:
        per_report = [records[(rule, float(t))] for t in thetas]
        for t in thetas:
            rec = records[(rule, float(t))]
            rows.append(
                {
                    "rule": rule,
                    "theta": float(t),
                    "total_payment": rec.total_payment,
                    "total_expected_cs": rec.total_expected_cs,
                    "total_expected_wm": rec.total_expected_wm,
                    "customer_cost": customer_cost(rec, t),
                    "rho": customer_regret(per_report, t),
                    "cost_recovery_gap": cost_recovery_gap(rec),
                    "offset": rec.offset,
                    "offset_adjusted_payment": rec.total_payment - rec.offset,
                }
            )
    return rows


def _simulate_one(args):
    config, run_index = args
    params, arrivals = draw_unit(config, run_index)
    records = evaluate_unit(config, arrivals, run_index)
    rows = truthful_rows(records, config.theta_grid, config.rules)
    head = {"run": run_index, "process": config.process, **params, "n_arrivals": len(arrivals)}
    return [{**head, **row} for row in rows]


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _stats(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def summarize(rows, group_keys=("process", "rule")):
    """Table-style statistics per group: mean and sample std over cells."""
    groups = {}
    for row in rows:
        key = tuple(row[k] for k in group_keys)
        groups.setdefault(key, []).append(row)
    out = []
    for key, cells in groups.items():
        rho = np.array([c["rho"] for c in cells])
        pos = rho[rho > RHO_EPS]
        summary = dict(zip(group_keys, key))
        summary["cells"] = len(cells)
        summary["pct_rho_pos"] = 100.0 * pos.size / len(cells)
        summary["mean_pos_rho"], summary["std_pos_rho"] = _stats(pos)
        for name in (
            "customer_cost",
            "cost_recovery_gap",
            "total_payment",
            "total_expected_wm",
            "total_expected_cs",
        ):
            summary[f"mean_{name}"], summary[f"std_{name}"] = _stats([c[name] for c in cells])
        out.append(summary)
    return out


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_csv(path, rows, columns=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for row in rows:
            for k in row:
                if k not in columns:
                    columns.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])
    return path


def default_out_dir():
    return Path(os.environ.get(OUT_ENV, "results"))


def cmd_simulate(config, out_dir, jobs=1):
    """Run ``config.runs`` simulated units; write ``runs.csv`` and ``summary.csv``."""
    if config.process == "trace":
        raise ConfigError("process: use the trace command for trace configs")
    out_dir = Path(out_dir)
    per_run = _map(_simulate_one, [(config, i) for i in range(config.runs)], jobs)
    rows = [row for run_rows in per_run for row in run_rows]
    runs_path = write_csv(out_dir / "runs.csv", rows)
    summary_path = write_csv(out_dir / "summary.csv", summarize(rows))
    log.info("simulated %d runs -> %s", config.runs, out_dir)
    return {"runs": runs_path, "summary": summary_path}


def load_trace_units(config):
    apps = parse_traces(config.trace_paths, app_column=config.app_column)
    allow = read_allow_list(config.allow_list) if config.allow_list else None
    kept = filter_apps(apps, config.max_arrivals, allow)
    return apps, kept


def _trace_one(args):
    config, index, app = args
    arrivals = to_arrivals(app)
    records = evaluate_unit(config, arrivals, index)
    rows = truthful_rows(records, config.theta_grid, config.rules)
    head = {"app_id": app.app_id, "process": "trace", "n_arrivals": len(arrivals)}
    cumulative = []
    if config.offset:
        for t in config.theta_grid:
            cum = {r: records[(r, float(t))].cumulative_payments() for r in config.rules}
            ext = records.get((EXTERNALITY, float(t)))
            adj = ext.cumulative_payments(offset=True) if ext else None
            rec0 = records[(config.rules[0], float(t))]
            cs = np.cumsum(rec0.expected_cs)
            for step in range(rec0.n_steps):
                entry = {
                    "app_id": app.app_id,
                    "theta_hat": float(t),
                    "step": step + 1,
                    "cumulative_expected_cs": float(cs[step]),
                }
                for r in config.rules:
                    entry[f"{r}_cumulative"] = float(cum[r][step])
                if adj is not None:
                    entry["externality_offset_adjusted"] = float(adj[step])
                cumulative.append(entry)
    return [{**head, **row} for row in rows], cumulative


def cmd_trace(config, out_dir, jobs=1):
    """Ingest, filter and evaluate trace applications (minute units)."""
    if config.process != "trace":
        raise ConfigError("process: trace command requires process 'trace'")
    out_dir = Path(out_dir)
    apps, kept = load_trace_units(config)
    log.info("trace: %d applications, %d after filtering", len(apps), len(kept))
    results = _map(_trace_one, [(config, i, app) for i, app in enumerate(kept)], jobs)
    rows = [r for unit_rows, _ in results for r in unit_rows]
    paths = {
        "runs": write_csv(out_dir / "runs.csv", rows),
        "summary": write_csv(out_dir / "summary.csv", summarize(rows)),
    }
    if config.offset:
        cumulative = [c for _, unit_cum in results for c in unit_cum]
        paths["cumulative"] = write_csv(out_dir / "cumulative.csv", cumulative)
    paths["n_apps"] = len(kept)
    return paths


def frontier_points(config, arrivals, run_index=0):
    """Trade-off rows for one unit: per report and per fixed window."""
    thetas = [float(t) for t in config.theta_grid]
    records = run_market_grid(
        arrivals,
        config.windows,
        config.c_p,
        thetas,
        rules=RULES,
        tol=config.tol,
        indexing=config.payment_indexing,
        eta=config.eta,
    )
    ext = [records[(EXTERNALITY, t)] for t in thetas]
    points = kappa_from_records(ext, arrivals, config.windows, config.c_p)
    on_frontier = {(p.kind, p.label) for p in pareto_frontier(points)}
    rows = []
    for p in points:
        row = {
            "kind": p.kind,
            "label": p.label,
            "cs_total": p.cs_total,
            "wm_total": p.wm_total,
            "on_frontier": (p.kind, p.label) in on_frontier,
        }
        if p.kind == "report":
            m, e = records[(MYERSON, p.label)], records[(EXTERNALITY, p.label)]
            row["myerson_payment"] = m.total_payment
            row["externality_payment"] = e.total_payment
            row["externality_offset_adjusted"] = e.total_payment - e.offset
        rows.append(row)
    gap = max(
        abs(records[(MYERSON, t)].total_payment - records[(EXTERNALITY, t)].total_payment)
        for t in thetas
    )
    return rows, gap


FRONTIER_COLUMNS = [
    "kind",
    "label",
    "cs_total",
    "wm_total",
    "myerson_payment",
    "externality_payment",
    "externality_offset_adjusted",
    "on_frontier",
]


def cmd_frontier(config, out_dir, run=0, app=None):
    """Write ``frontier.csv`` for one simulated run or one trace application."""
    out_dir = Path(out_dir)
    if config.process == "trace":
        _, kept = load_trace_units(config)
        if app is None:
            if not kept:
                raise ConfigError("trace: no applications left after filtering")
            chosen = kept[0]
        else:
            matches = [a for a in kept if a.app_id == app]
            if not matches:
                raise ConfigError(f"app {app!r} not found among filtered applications")
            chosen = matches[0]
        arrivals = to_arrivals(chosen)
    else:
        _, arrivals = draw_unit(config, run)
    rows, gap = frontier_points(config, arrivals, run)
    path = write_csv(out_dir / "frontier.csv", rows, FRONTIER_COLUMNS)
    return {"frontier": path, "max_payment_gap": gap}
