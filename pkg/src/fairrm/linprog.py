"""Dense two-phase simplex with Bland's rule, and the programs built on it.

The solver targets the small programs that appear in this package (a few
dozen variables at most), so it works on a full numpy tableau and recomputes
reduced costs from scratch every pivot.
"""

from __future__ import annotations

import dataclasses
import enum
import io

import numpy as np

from .model import Instance

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclasses.dataclass(frozen=True)
class LinearProgram:
    """maximize ``c @ x`` subject to ``G @ x <= h`` and ``lower <= x <= upper``."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        k = c.size
        G = np.asarray(self.G, dtype=float).reshape(-1, k)
        h = np.asarray(self.h, dtype=float).reshape(-1)
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (k,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (k,)).copy()
        if G.shape[0] != h.size:
            raise ValueError("G and h disagree on the number of rows")
        if np.any(~np.isfinite(lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        for name, val in zip("c G h lower upper".split(), (c, G, h, lower, upper)):
            object.__setattr__(self, name, val)

    @property
    def k(self) -> int:
        return self.c.size

    @property
    def p(self) -> int:
        return self.h.size


@dataclasses.dataclass(frozen=True)
class LPSolution:
    status: Status
    x_star: np.ndarray | None = None
    theta_star: np.ndarray | None = None
    objective_value: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Tableau:
    def __init__(self, M: np.ndarray, b: np.ndarray):
        rows, cols = M.shape
        self.n_struct = cols
        neg = b < 0
        n_art = int(neg.sum())
        self.slack0 = cols
        self.art0 = cols + rows
        width = cols + rows + n_art
        tab = np.zeros((rows, width))
        tab[:, :cols] = M
        tab[:, cols:cols + rows] = np.eye(rows)
        rhs = b.astype(float).copy()
        tab[neg] *= -1.0
        rhs[neg] *= -1.0
        basis = np.arange(cols, cols + rows)
        for a, row in enumerate(np.flatnonzero(neg)):
            tab[row, self.art0 + a] = 1.0
            basis[row] = self.art0 + a
        self.tab, self.rhs, self.basis = tab, rhs, basis
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        tab, rhs = self.tab, self.rhs
        piv = tab[row, col]
        tab[row] /= piv
        rhs[row] /= piv
        others = np.arange(tab.shape[0]) != row
        factor = tab[others, col].copy()
        tab[others] -= np.outer(factor, tab[row])
        rhs[others] -= factor * rhs[row]
        tab[row, col] = 1.0
        tab[others, col] = 0.0
        self.basis[row] = col
        self.iterations += 1

    def run(self, cost: np.ndarray, allowed: np.ndarray) -> bool:
        """Maximize ``cost`` over the current tableau; False means unbounded."""
        while True:
            reduced = cost - cost[self.basis] @ self.tab
            scale = 1.0 + np.abs(cost).max()
            entering = np.flatnonzero(allowed & (reduced > PIVOT_TOL * scale))
            if entering.size == 0:
                return True
            col = entering[0]  # Bland: lowest index
            column = self.tab[:, col]
            rows = np.flatnonzero(column > PIVOT_TOL)
            if rows.size == 0:
                return False
            ratios = self.rhs[rows] / column[rows]
            best = ratios.min()
            tied = rows[ratios <= best + PIVOT_TOL * (1.0 + abs(best))]
            row = tied[np.argmin(self.basis[tied])]  # Bland: lowest basic index leaves
            self.pivot(row, col)

    def drop_artificials(self) -> None:
        """Pivot zero-level artificials out of the basis, deleting redundant rows."""
        keep = np.ones(self.tab.shape[0], dtype=bool)
        for row in range(self.tab.shape[0]):
            if self.basis[row] < self.art0:
                continue
            cand = np.flatnonzero(np.abs(self.tab[row, :self.art0]) > PIVOT_TOL)
            if cand.size:
                self.pivot(row, cand[0])
            else:
                keep[row] = False
        self.tab, self.rhs, self.basis = self.tab[keep], self.rhs[keep], self.basis[keep]


def solve_lp(lp: LinearProgram) -> LPSolution:
    """Solve ``lp`` and return primal and resource-row dual solutions."""
    finite_ub = np.flatnonzero(np.isfinite(lp.upper))
    k = lp.k
    # substitute x = lower + y, y >= 0; finite upper bounds become rows
    M = np.vstack([lp.G, np.eye(k)[finite_ub]])
    b = np.concatenate([lp.h - lp.G @ lp.lower, (lp.upper - lp.lower)[finite_ub]])
    tab = _Tableau(M, b)
    width = tab.tab.shape[1]
    allowed = np.ones(width, dtype=bool)

    if tab.art0 < width:
        phase1 = np.zeros(width)
        phase1[tab.art0:] = -1.0
        tab.run(phase1, allowed)
        if phase1[tab.basis] @ tab.rhs < -FEAS_TOL * (1.0 + np.abs(b).max()):
            return LPSolution(Status.INFEASIBLE, iterations=tab.iterations)
        tab.drop_artificials()
        allowed[tab.art0:] = False

    cost = np.zeros(width)
    cost[:k] = lp.c
    if not tab.run(cost, allowed):
        return LPSolution(Status.UNBOUNDED, iterations=tab.iterations)

    y = np.zeros(width)
    y[tab.basis] = tab.rhs
    x = lp.lower + y[:k]
    x = np.clip(x, lp.lower, lp.upper)
    duals = cost[tab.basis] @ tab.tab[:, tab.slack0:tab.slack0 + M.shape[0]]
    theta = np.maximum(duals[:lp.p], 0.0)
    return LPSolution(
        Status.OPTIMAL,
        x_star=x,
        theta_star=theta,
        objective_value=float(lp.c @ x),
        iterations=tab.iterations,
    )


def dual_objective(lp: LinearProgram, theta: np.ndarray) -> float:
    """Value of the Lagrangian dual at resource prices ``theta``.

    Bound multipliers are set to their optimal values given ``theta``, so this
    is an upper bound on the primal optimum for any ``theta >= 0``.
    """
    reduced = lp.c - lp.G.T @ theta
    upper_part = np.where(reduced > 0, reduced * lp.upper, 0.0)
    lower_part = np.where(reduced < 0, reduced * lp.lower, 0.0)
    return float(lp.h @ theta + upper_part.sum() + lower_part.sum())


def format_lp(lp: LinearProgram, solution: LPSolution | None = None) -> str:
    """Plain-text dump of an LP, one constraint per line."""
    out = io.StringIO()
    fmt = lambda v: " ".join(f"{x:+.10g}" for x in v)  # noqa: E731
    out.write(f"max  {fmt(lp.c)}\n")
    for j in range(lp.p):
        out.write(f"row{j}  {fmt(lp.G[j])}  <=  {lp.h[j]:.10g}\n")
    for i in range(lp.k):
        out.write(f"bound x{i}  {lp.lower[i]:.10g} .. {lp.upper[i]:.10g}\n")
    if solution is not None:
        out.write(f"status {solution.status.value}\n")
        if solution.optimal:
            out.write(f"x  {fmt(solution.x_star)}\n")
            out.write(f"theta  {fmt(solution.theta_star)}\n")
            out.write(f"objective  {solution.objective_value:.12g}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# programs

def build_dlp(inst: Instance, remaining_capacity=None, remaining_rounds: int | None = None) -> LinearProgram:
    """Fluid program over per-round acceptance rates ``x_i``.

    Objective ``remaining_rounds * r @ x``; resource rows ``A.T @ x <=
    capacity / remaining_rounds``; box ``0 <= x_i <= lambda_i``.
    """
    cap = inst.m if remaining_capacity is None else np.asarray(remaining_capacity, dtype=float)
    rounds = inst.T if remaining_rounds is None else int(remaining_rounds)
    if rounds < 1:
        raise ValueError("remaining_rounds must be at least 1")
    if np.any(cap < 0):
        raise ValueError("remaining capacity must be nonnegative")
    return LinearProgram(
        c=rounds * inst.r,
        G=inst.A.T,
        h=cap / rounds,
        lower=np.zeros(inst.n),
        upper=inst.rates,
    )


def build_hindsight(inst: Instance, counts, capacity=None) -> LinearProgram:
    """Offline program with realized arrival counts as upper bounds."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    cap = inst.m if capacity is None else np.asarray(capacity, dtype=float)
    return LinearProgram(c=inst.r, G=inst.A.T, h=cap, lower=np.zeros(inst.n), upper=counts)


def solve_dlp(inst: Instance, remaining_capacity=None, remaining_rounds=None) -> LPSolution:
    return solve_lp(build_dlp(inst, remaining_capacity, remaining_rounds))
