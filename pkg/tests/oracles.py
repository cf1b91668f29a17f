"""Independent reference computations used only by the tests."""

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.optimize import linprog


def union_masses(mu, nu):
    pts = np.union1d(mu.points, nu.points)
    c = np.zeros(pts.size)
    np.add.at(c, np.searchsorted(pts, mu.points), mu.weights)
    np.subtract.at(c, np.searchsorted(pts, nu.points), nu.weights)
    return pts, c


def bl_linprog(mu, nu):
    """Bounded-Lipschitz distance from the full pairwise LP (every pair constrained)."""
    pts, c = union_masses(mu, nu)
    k = pts.size
    rows, rhs = [], []
    for i in range(k):
        for j in range(i + 1, k):
            for sign in (1.0, -1.0):
                row = np.zeros(k)
                row[i], row[j] = sign, -sign
                rows.append(row)
                rhs.append(abs(pts[i] - pts[j]))
    res = linprog(-c, A_ub=np.array(rows) if rows else None, b_ub=np.array(rhs) if rhs else None,
                  bounds=[(-1, 1)] * k, method="highs")
    assert res.status == 0
    return -res.fun


def bl_grid_search(mu, nu, step=2.5e-4):
    """Maximize sum c_i g_i over g restricted to a uniform grid on [-1, 1].

    Exhaustive over the grid: dynamic programming with a sliding-window
    maximum enumerates every admissible grid assignment.
    """
    pts, c = union_masses(mu, nu)
    g = np.linspace(-1.0, 1.0, int(round(2.0 / step)) + 1)
    value = c[0] * g
    for i in range(1, pts.size):
        reach = int(np.floor((pts[i] - pts[i - 1]) / step + 1e-9))
        value = maximum_filter1d(value, size=2 * reach + 1, mode="nearest") + c[i] * g
    return float(value.max())
