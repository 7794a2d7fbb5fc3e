"""Azure-style invocation trace ingestion.

A trace file is a CSV with a header row, one application-id column (default
``HashApp``), optional grouping columns such as ``HashOwner``/``HashFunction``/
``Trigger``, and numbered minute-bin columns ``"1"``, ``"2"``, ... holding
invocation counts. Rows of the same application are summed element-wise.
Several day files are stitched bin-wise in the order given.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrivals import ArrivalSequence
from ._validation import check_count

DEFAULT_APP_COLUMN = "HashApp"


class TraceFormatError(ValueError):
    """Raised for unreadable or malformed trace files."""


@dataclass(frozen=True, eq=False)
class AppSeries:
    app_id: str
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if counts.size < 1:
            raise ValueError(f"app {self.app_id!r}: counts must have at least one bin")
        if np.any(counts < 0):
            raise ValueError(f"app {self.app_id!r}: counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        if not isinstance(other, AppSeries):
            return NotImplemented
        return self.app_id == other.app_id and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash((self.app_id, self.counts.tobytes()))


def _bin_columns(header):
    bins = []
    for pos, name in enumerate(header):
        name = name.strip()
        if name.isdigit():
            bins.append((int(name), pos))
    bins.sort()
    if bins and [b for b, _ in bins] != list(range(1, len(bins) + 1)):
        raise TraceFormatError("minute-bin columns must be numbered consecutively from 1")
    return [pos for _, pos in bins]


def parse_trace(path, app_column=DEFAULT_APP_COLUMN):
    """Read one trace file into a list of per-application series.

    Applications appear in order of first occurrence.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise TraceFormatError(f"{path}: cannot open trace file ({exc.strerror})") from exc

    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        if app_column not in header:
            raise TraceFormatError(
                f"{path}: missing application-id column {app_column!r} in header"
            )
        app_pos = header.index(app_column)
        bin_pos = _bin_columns(header)
        if not bin_pos:
            raise TraceFormatError(f"{path}: no numbered minute-bin columns in header")

        totals = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise TraceFormatError(
                    f"{path}: line {line}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                counts = np.array([int(row[p]) for p in bin_pos], dtype=np.int64)
            except ValueError as exc:
                raise TraceFormatError(f"{path}: line {line}: non-integer count ({exc})") from None
            if np.any(counts < 0):
                raise TraceFormatError(f"{path}: line {line}: negative count")
            app_id = row[app_pos].strip()
            if app_id in totals:
                totals[app_id] += counts
            else:
                totals[app_id] = counts
    return [AppSeries(app_id, counts) for app_id, counts in totals.items()]


def parse_traces(paths, app_column=DEFAULT_APP_COLUMN):
    """Parse several day files and concatenate each application's bins.

    An application missing from a day contributes zeros for that day.
    """
    days = [parse_trace(p, app_column=app_column) for p in paths]
    if len(days) == 1:
        return days[0]
    widths = []
    for day, path in zip(days, paths):
        if day:
            widths.append(day[0].counts.size)
        else:
            with open(path, newline="") as fh:
                widths.append(len(_bin_columns(next(csv.reader(fh)))))
    order = []
    for day in days:
        for s in day:
            if s.app_id not in order:
                order.append(s.app_id)
    lookup = [{s.app_id: s.counts for s in day} for day in days]
    out = []
    for app_id in order:
        parts = [
            lk.get(app_id, np.zeros(w, dtype=np.int64)) for lk, w in zip(lookup, widths)
        ]
        out.append(AppSeries(app_id, np.concatenate(parts)))
    return out


def to_arrivals(series):
    """One arrival per non-empty bin, stamped with its 1-based minute index."""
    idx = np.flatnonzero(series.counts > 0) + 1
    return ArrivalSequence(idx.astype(float))


def to_counts(arrivals, n_bins):
    """Inverse binning: 0/1 counts per minute bin for integer-minute arrivals."""
    counts = np.zeros(n_bins, dtype=np.int64)
    idx = np.asarray(arrivals.times, dtype=np.int64) - 1
    np.add.at(counts, idx, 1)
    return counts


def filter_apps(apps, max_arrivals, allow_list=None):
    """Keep apps with between 2 and ``max_arrivals`` arrivals, in input order."""
    max_arrivals = check_count(max_arrivals, "max_arrivals", minimum=1)
    allowed = None if allow_list is None else set(allow_list)
    kept = []
    for app in apps:
        if allowed is not None and app.app_id not in allowed:
            continue
        n = int(np.count_nonzero(app.counts))
        if 2 <= n <= max_arrivals:
            kept.append(app)
    return kept


def read_allow_list(path):
    """Newline-delimited application ids; blank lines and ``#`` comments skipped."""
    ids = set()
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                ids.add(line)
    return ids
