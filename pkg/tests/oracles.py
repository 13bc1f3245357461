"""Independent brute-force oracles shared by the unit and acceptance suites.

These deliberately re-derive expected values from first principles (loops
over definitions) rather than reusing any library code path they check.
"""

import numpy as np


def smoothed_p_brute(calib, test):
    count = sum(1 for s in calib if s <= test)
    return (count + 1) / (len(calib) + 1)


def bh_reject_brute(p, alpha):
    """Literal step-up scan: largest k with p_(k) <= k * alpha / m.

    The comparison is evaluated in the p_(k) * (m/k) <= alpha form, the
    canonical floatization used across the library.
    """
    p = np.asarray(p, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    p_sorted = p[order]
    k_star = 0
    for k in range(1, m + 1):
        if p_sorted[k - 1] * (m / k) <= alpha:
            k_star = k
    out = np.zeros(m, dtype=bool)
    out[order[:k_star]] = True
    return out


def bh_adjust_brute(p):
    """Direct suffix-minimum evaluation on the sorted sequence."""
    p = np.asarray(p, dtype=float)
    m = p.size
    order = np.argsort(p, kind="stable")
    p_sorted = p[order]
    adjusted = np.empty(m)
    for i in range(m):
        adjusted[i] = min(1.0, min(m * p_sorted[j] / (j + 1) for j in range(i, m)))
    out = np.empty(m)
    out[order] = adjusted
    return out
