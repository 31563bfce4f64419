"""Independent reference computations used by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def vertex_enumeration(c, G, h, lower, upper):
    """Best objective of ``max c x, G x <= h, lower <= x <= upper`` over basic feasible points.

    Bounds must be finite. Returns ``(value, x)`` or ``(None, None)`` when infeasible.
    """
    c, G, h = np.asarray(c, float), np.asarray(G, float).reshape(-1, len(c)), np.asarray(h, float)
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    k = c.size
    rows = np.vstack([G, np.eye(k), -np.eye(k)])
    rhs = np.concatenate([h, upper, -lower])
    subsets = np.array(list(itertools.combinations(range(rows.shape[0]), k)))
    M, b = rows[subsets], rhs[subsets]
    ok = np.abs(np.linalg.det(M)) > 1e-10
    x = np.linalg.solve(M[ok], b[ok][..., None])[..., 0]
    # tolerance scaled by each row's own magnitude, so tiny rows still bind
    scale = np.abs(x) @ np.abs(rows).T + np.abs(rhs)
    feasible = np.all(x @ rows.T <= rhs + 1e-9 * scale + 1e-12, axis=1)
    if not feasible.any():
        return None, None
    vals = x[feasible] @ c
    j = int(np.argmax(vals))
    return float(vals[j]), x[feasible][j]


def integer_hindsight(A, r, m, counts):
    """Best revenue over integer acceptance vectors, by exhaustive search."""
    A, r, m = np.asarray(A, float), np.asarray(r, float), np.asarray(m, float)
    best = 0.0
    for y in itertools.product(*(range(int(c) + 1) for c in counts)):
        y = np.asarray(y, float)
        if np.all(y @ A <= m + 1e-9):
            best = max(best, float(y @ r))
    return best
