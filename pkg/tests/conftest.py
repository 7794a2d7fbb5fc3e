import numpy as np
import pytest


def write_trace(path, rows, n_bins, extra_cols=("HashOwner", "HashFunction")):
    """rows: list of (app_id, counts); counts shorter than n_bins are zero padded."""
    header = ["HashApp", *extra_cols, *map(str, range(1, n_bins + 1))]
    lines = [",".join(header)]
    for k, (app, counts) in enumerate(rows):
        counts = list(counts) + [0] * (n_bins - len(counts))
        lines.append(",".join([app, *(f"x{k}" for _ in extra_cols), *map(str, counts)]))
    path.write_text("\r\n".join(lines) + "\r\n")
    return path


@pytest.fixture
def three_app_trace(tmp_path):
    """Apps a (5 arrivals), b (200 arrivals, over the 180 cap) and c (2 functions, 4 arrivals)."""
    n_bins = 400
    a = np.zeros(n_bins, int)
    a[[0, 3, 10, 11, 50]] = [1, 2, 1, 5, 1]
    b = np.zeros(n_bins, int)
    b[np.arange(0, 400, 2)] = 1
    c1 = np.zeros(n_bins, int)
    c1[[4, 9]] = 1
    c2 = np.zeros(n_bins, int)
    c2[[9, 19, 29]] = [2, 1, 1]
    rows = [("a", a), ("b", b), ("c", c1), ("c", c2)]
    return write_trace(tmp_path / "day1.csv", rows, n_bins)
