"""Adaptive Simpson quadrature for vectorised integrands.

The core routine integrates many independent panels at once: panels are
refined level by level and the integrand is called once per level on every
open abscissa, tagged by the panel it belongs to.
"""

import numpy as np

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class QuadratureError(ArithmeticError):
    """Subdivision hit the depth cap before meeting the tolerance."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


def _simpson(h, fa, fm, fb):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson_many(f, a, b, tol=1e-8, max_depth=40, min_depth=2):
    """Integrate ``f(k, y)`` over ``[a[k], b[k]]`` for every panel ``k``.

    ``f`` receives an int array of panel indices and a float array of
    abscissae of the same length. ``tol`` is an absolute tolerance per panel
    (scalar or array). A sub-panel at depth ``d`` must meet ``tol / 2**d``;
    nothing is accepted before ``min_depth`` so that a coarse panel cannot
    look flat by accident. Requires ``a <= b`` elementwise.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("a and b must have the same length")
    if np.any(b < a):
        raise ValueError("adaptive_simpson_many requires a <= b")
    result = np.zeros(a.size)
    live = np.flatnonzero(b > a)
    if live.size == 0:
        return result

    owner = live
    lo, hi = a[live], b[live]
    mid = 0.5 * (lo + hi)
    n = owner.size
    fv = f(np.concatenate([owner, owner, owner]), np.concatenate([lo, mid, hi]))
    f_lo, f_mid, f_hi = fv[:n], fv[n : 2 * n], fv[2 * n :]
    whole = _simpson(hi - lo, f_lo, f_mid, f_hi)
    panel_tol = np.broadcast_to(np.asarray(tol, dtype=float), a.shape)[live].copy()

    for depth in range(max_depth + 1):
        mid = 0.5 * (lo + hi)
        n = owner.size
        fq = f(np.concatenate([owner, owner]), np.concatenate([0.5 * (lo + mid), 0.5 * (mid + hi)]))
        f_lq, f_rq = fq[:n], fq[n:]
        half = 0.5 * (hi - lo)
        s_left = _simpson(half, f_lo, f_lq, f_mid)
        s_right = _simpson(half, f_mid, f_rq, f_hi)
        refined = s_left + s_right
        delta = refined - whole

        if depth >= min_depth:
            done = np.abs(delta) <= 15.0 * panel_tol
        else:
            done = np.zeros(n, dtype=bool)
        np.add.at(result, owner[done], refined[done] + delta[done] / 15.0)
        keep = ~done
        if not keep.any():
            return result
        if depth == max_depth:
            estimate = result.copy()
            np.add.at(estimate, owner[keep], refined[keep])
            raise QuadratureError(
                f"adaptive Simpson did not converge within depth {max_depth} "
                f"({int(keep.sum())} sub-panels open)",
                estimate if estimate.size > 1 else float(estimate[0]),
            )

        owner = np.concatenate([owner[keep], owner[keep]])
        lo, mid_k, hi = lo[keep], mid[keep], hi[keep]
        f_lo_k, f_mid_k, f_hi_k = f_lo[keep], f_mid[keep], f_hi[keep]
        lo, hi = np.concatenate([lo, mid_k]), np.concatenate([mid_k, hi])
        f_lo = np.concatenate([f_lo_k, f_mid_k])
        f_mid = np.concatenate([f_lq[keep], f_rq[keep]])
        f_hi = np.concatenate([f_mid_k, f_hi_k])
        whole = np.concatenate([s_left[keep], s_right[keep]])
        child_tol = panel_tol[keep] / 2.0
        panel_tol = np.concatenate([child_tol, child_tol])
    raise AssertionError("unreachable")


def adaptive_simpson(f, a, b, tol=1e-8, max_depth=40, min_depth=2):
    """Integrate a vectorised ``f(y)`` over ``[a, b]`` to absolute tolerance ``tol``."""
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0
    if a > b:
        return -adaptive_simpson(f, b, a, tol, max_depth, min_depth)
    out = adaptive_simpson_many(lambda _, y: f(y), [a], [b], tol, max_depth, min_depth)
    return float(out[0])


def trapezoid(f, a, b, nodes=100_001):
    """Composite trapezoid rule on a uniform grid; used as a brute-force check."""
    x = np.linspace(a, b, nodes)
    return float(_trapezoid(f(x), x))
