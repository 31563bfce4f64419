"""Baseline admission policies for stochastic arrivals."""

from __future__ import annotations

import math

import numpy as np

from .linprog import solve_dlp
from .model import Instance
from .simulate import Policy

# slack used when comparing a reward with a bid price, so that types sitting
# exactly on the threshold (fractional in the LP) are treated as ties
PRICE_TOL = 1e-9


def acceptance_probabilities(inst: Instance, x_star: np.ndarray) -> np.ndarray:
    """``x*_i / lambda_i`` with the convention 0/0 = 0."""
    lam = inst.rates
    x_star = np.asarray(x_star, dtype=float)
    if np.any((lam <= 0) & (x_star > 1e-12)):
        raise ValueError("x*_i > 0 for a type that never arrives")
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(lam > 0, x_star / np.where(lam > 0, lam, 1.0), 0.0)
    return np.clip(p, 0.0, 1.0)


def bid_prices(inst: Instance, remaining_capacity=None, remaining_rounds=None) -> np.ndarray:
    """Revenue value of one unit of each resource, from the fluid program's duals.

    The fluid program scales its objective by the number of rounds and its
    resource rows by the inverse, so the row duals are divided back.
    """
    rounds = inst.T if remaining_rounds is None else int(remaining_rounds)
    sol = solve_dlp(inst, remaining_capacity, rounds)
    return sol.theta_star / rounds


def priced_in(inst: Instance, theta: np.ndarray) -> np.ndarray:
    """Types whose reward strictly beats the aggregated bid price."""
    threshold = inst.A @ np.asarray(theta, dtype=float)
    return inst.r > threshold + PRICE_TOL * (1.0 + np.abs(threshold))


class FCFS(Policy):
    """Accept every customer whose request still fits."""

    name = "fcfs"
    skip_settled = True

    def decide(self, t, idx, arrived, fits):
        return arrived


class RejectAll(Policy):
    """Reject every customer; its regret is the full hindsight value."""

    name = "reject_all"

    def decide(self, t, idx, arrived, fits):
        return np.zeros_like(arrived)

    def finished(self):
        return True


class DLPPA(Policy):
    """Accept a fitting type-i customer with probability ``x*_i / lambda_i``."""

    name = "dlp_pa"

    def __init__(self, inst: Instance, x_star=None, tag=None):
        super().__init__(inst, tag)
        if x_star is None:
            x_star = solve_dlp(inst).x_star
        self.x_star = np.asarray(x_star, dtype=float)
        self.p0 = acceptance_probabilities(inst, self.x_star)

    def setup(self):
        self.coins = self.bank.uniforms((self.T,), f"{self.tag}:coins")
        self.p = np.tile(self.p0, (self.R, 1))

    def decide(self, t, idx, arrived, fits):
        return arrived & (self.coins[:, t] < self.p[self.rows, idx])


class RDLPPA(DLPPA):
    """DLP-PA that re-solves the fluid program once, at round ``t_star``.

    The default resolve time leaves ``T**(2/3)`` rounds after the re-solve.
    """

    name = "rdlp_pa"

    def __init__(self, inst: Instance, t_star: int | None = None, x_star=None, tag=None):
        super().__init__(inst, x_star, tag)
        self.t_star = default_resolve_time(inst.T) if t_star is None else int(t_star)
        if not 0 < self.t_star < inst.T:
            raise ValueError("t_star must lie strictly inside the horizon")

    def decide(self, t, idx, arrived, fits):
        if t == self.t_star:
            self.p = resolve_probabilities(self.inst, self.capacity, self.T - t)
        return super().decide(t, idx, arrived, fits)


def default_resolve_time(T: int) -> int:
    return max(1, T - int(round(T ** (2.0 / 3.0))))


def resolve_probabilities(inst: Instance, capacity: np.ndarray, rounds: int) -> np.ndarray:
    """Re-solved acceptance probabilities for every row of ``capacity``.

    Rows with identical remaining capacity share one LP solve.
    """
    out = np.zeros(capacity.shape[:1] + (inst.n,))
    cache: dict[bytes, np.ndarray] = {}
    for k, cap in enumerate(capacity):
        key = cap.tobytes()
        if key not in cache:
            sol = solve_dlp(inst, cap, rounds)
            cache[key] = acceptance_probabilities(inst, sol.x_star) if sol.optimal else np.zeros(inst.n)
        out[k] = cache[key]
    return out


class SBPC(Policy):
    """Static bid-price control: accept iff ``r_i > sum_j theta_j A_ij``.

    ``theta_star`` is in revenue per unit of resource; see :func:`bid_prices`.
    """

    name = "sbpc"

    def __init__(self, inst: Instance, theta_star=None, tag=None):
        super().__init__(inst, tag)
        if theta_star is None:
            theta_star = bid_prices(inst)
        self.theta_star = np.asarray(theta_star, dtype=float)
        self.open_types = priced_in(inst, self.theta_star)

    def decide(self, t, idx, arrived, fits):
        return arrived & self.open_types[idx]

    skip_settled = True

    def settled_types(self):
        return super().settled_types() | ~self.open_types[None, :]


class BPCOGD(Policy):
    """Bid-price control with prices learned by projected online gradient descent.

    Prices start at zero and move by ``eta = D / (G sqrt(T))`` along
    ``-(m(t)/T - y_t A_i)``, where ``y_t`` is the committed acceptance, then
    are clipped to ``[0, theta_bar]``.
    """

    name = "bpc_ogd"
    full_horizon = True

    def __init__(self, inst: Instance, D=None, G=None, theta_bar=None, record_prices=False, tag=None):
        super().__init__(inst, tag)
        self.theta_bar = float(theta_bar) if theta_bar is not None else inst.r_max / inst.a_lo
        root_L = math.sqrt(inst.L)
        self.D = float(D) if D is not None else root_L * self.theta_bar
        self.G = float(G) if G is not None else root_L * (1.0 + inst.a_hi)
        self.record_prices = record_prices

    @property
    def eta(self) -> float:
        return self.D / (self.G * math.sqrt(self.inst.T))

    def setup(self):
        self.theta = np.zeros((self.R, self.L))
        self.price_path = np.zeros((self.R, self.T + 1, self.L)) if self.record_prices else None

    def decide(self, t, idx, arrived, fits):
        threshold = np.einsum("rl,rl->r", self.A[idx], self.theta)
        return arrived & (self.r[idx] > threshold)

    def after(self, t, idx, arrived, accept, capacity_before):
        grad = capacity_before / self.inst.T - accept[:, None] * self.A[idx]
        self.theta = np.clip(self.theta - self.eta * grad, 0.0, self.theta_bar)
        if self.price_path is not None:
            self.price_path[:, t + 1] = self.theta

    def diagnostics(self):
        return {} if self.price_path is None else {"theta_path": self.price_path}
