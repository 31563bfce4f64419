"""Grace periods and the grace-period enhanced stochastic policies.

A grace period turns the per-type accept/reject decision into a two-state
Markov chain driven by the previous decision for the same type:

* decreasing: after an accept, accept again with probability ``1 - alpha``;
  a reject is absorbing.
* increasing: after a reject, accept with probability ``alpha``; an accept is
  absorbing.

Adjacent same-type customers are then treated differently with probability at
most ``alpha``, which is what keeps the policies individually fair.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.stats import binom

from .linprog import solve_dlp
from .model import Instance
from .simulate import ACCEPTED, CAP_TOL, NONE, REJECTED, Policy
from .stochastic import (
    BPCOGD,
    acceptance_probabilities,
    bid_prices,
    default_resolve_time,
    priced_in,
    resolve_probabilities,
)

NORMAL, DECREASING, INCREASING = 0, 1, 2
MODE_NAMES = {NORMAL: "normal", DECREASING: "decreasing", INCREASING: "increasing"}


def gamma_of(alpha: float, delta: float) -> float:
    """Grace-period length scale ``log(delta) / log(1 - alpha)``."""
    if not (0.0 < alpha < 1.0 and 0.0 < delta < 1.0):
        raise ValueError("alpha and delta must lie strictly between 0 and 1")
    return math.log(delta) / math.log1p(-alpha)


@dataclasses.dataclass(frozen=True)
class GraceConfig:
    alpha: float
    delta: float

    def __post_init__(self):
        gamma_of(self.alpha, self.delta)

    @property
    def gamma(self) -> float:
        return gamma_of(self.alpha, self.delta)

    @classmethod
    def for_horizon(cls, alpha: float, T: int, delta: float | None = None) -> "GraceConfig":
        """Config with the default ``delta = 1/T``."""
        return cls(alpha, 1.0 / T if delta is None else delta)


def _previous_accept(last, none_accepts):
    last = np.asarray(last)
    return (last == ACCEPTED) | ((last == NONE) & np.asarray(none_accepts))


def decreasing_step(last, u, alpha: float, none_accepts=True):
    """Accept after an accept with probability ``1 - alpha``; reject is absorbing.

    ``last`` holds previous-decision codes, ``u`` uniforms in [0, 1). With no
    previous decision the chain starts from accept unless ``none_accepts`` is
    false.
    """
    return _previous_accept(last, none_accepts) & (np.asarray(u) < 1.0 - alpha)


def increasing_step(last, u, alpha: float, none_accepts=True):
    """Accept after a reject with probability ``alpha``; accept is absorbing."""
    return _previous_accept(last, none_accepts) | (np.asarray(u) < alpha)


class GraceState:
    """Per-(replication, type) grace mode with an optional transition log."""

    def __init__(self, R: int, n: int, log: bool = False):
        self.mode = np.full((R, n), NORMAL, dtype=np.int8)
        self.since = np.full((R, n), -1, dtype=np.int64)
        self.events: list[tuple] | None = [] if log else None

    def enter(self, mask: np.ndarray, mode: int, t: int, reason: str) -> None:
        """Switch the (replication, type) cells in ``mask`` to ``mode``."""
        change = mask & (self.mode != mode)
        if not change.any():
            return
        if self.events is not None:
            for k, i in zip(*np.nonzero(change)):
                self.events.append((int(k), t, int(i) + 1, int(self.mode[k, i]), mode, reason))
        self.mode[change] = mode
        self.since[change] = t

    def decide(self, rows, cols, last, u, alpha, none_accepts=True) -> np.ndarray:
        mode = self.mode[rows, cols]
        if np.any(mode == NORMAL):
            raise RuntimeError("grace decision requested outside a grace period")
        dec = decreasing_step(last, u, alpha, none_accepts)
        inc = increasing_step(last, u, alpha, none_accepts)
        return np.where(mode == DECREASING, dec, inc)

    def event_rows(self, replication: int) -> list[tuple]:
        return [e[1:] for e in (self.events or []) if e[0] == replication]


def gp_log_csv(events: list[tuple]) -> str:
    """CSV with columns t,type,mode_transition,trigger."""
    lines = ["t,type,mode_transition,trigger"]
    for t, i, old, new, reason in events:
        lines.append(f"{t},{i},\"({MODE_NAMES[old]},{MODE_NAMES[new]})\",{reason}")
    return "\n".join(lines) + "\n"


class GracePolicy(Policy):
    """Shared plumbing: chain coins, the global capacity trigger and depletion flags."""

    name = "gp"

    def __init__(self, inst: Instance, cfg: GraceConfig, log_events: bool = False, tag=None):
        super().__init__(inst, tag)
        self.cfg = cfg
        self.alpha = cfg.alpha
        self.gamma = cfg.gamma
        self.reserve = inst.a_hi * inst.n * self.gamma
        self.log_events = log_events

    def setup(self):
        self.coins = self.bank.uniforms((self.T,), f"{self.tag}:coins")
        self.grace = GraceState(self.R, self.n, self.log_events)
        self.triggered = np.zeros(self.R, dtype=bool)
        self.trigger_time = np.full(self.R, -1, dtype=np.int64)

    def global_trigger(self, t: int, types_mask: np.ndarray | None = None) -> None:
        """Start a decreasing period for good once the scarcest resource hits the reserve."""
        hit = ~self.triggered & (self.capacity.min(axis=1) <= self.reserve)
        if not hit.any():
            return
        self.triggered |= hit
        self.trigger_time[hit] = t
        cells = np.repeat(hit[:, None], self.n, axis=1)
        if types_mask is not None:
            cells &= types_mask[None, :]
        self.grace.enter(cells, DECREASING, t, "capacity")

    def chain(self, t, idx, mask, none_accepts=True) -> np.ndarray:
        rows = self.rows[mask]
        cols = idx[mask]
        na = none_accepts if np.ndim(none_accepts) == 0 else none_accepts[mask]
        return self.grace.decide(rows, cols, self.last[rows, cols], self.coins[rows, t], self.alpha, na)

    def in_grace(self, idx, arrived) -> np.ndarray:
        return arrived & (self.grace.mode[self.rows, idx] != NORMAL)

    def nothing_fits(self) -> np.ndarray:
        return ~self.fits_types().any(axis=1)

    def chain_dead(self) -> np.ndarray:
        """``(R, n)``: a decreasing chain that last rejected never accepts again."""
        return (self.grace.mode == DECREASING) & (self.last == REJECTED)

    def settled_types(self) -> np.ndarray:
        # Running out of room alone does not settle a type: a chain that still
        # wants to accept produces a depletion event when it is blocked.
        return self.chain_dead()

    def absorbed(self) -> np.ndarray:
        """Replications in which every type rejects from now on."""
        return self.settled_types().all(axis=1)

    def finished(self) -> bool:
        return bool(self.absorbed().all())

    @property
    def events(self):
        return self.grace.events


class GPFCFS(GracePolicy):
    """First come first served, then a decreasing period for every type.

    The period starts the first round the scarcest resource has at most
    ``a_hi * n * gamma`` units left.
    """

    name = "gp_fcfs"

    def decide(self, t, idx, arrived, fits):
        self.global_trigger(t)
        want = arrived.copy()
        gp = self.in_grace(idx, arrived)
        if gp.any():
            want[gp] = self.chain(t, idx, gp)
            self.depleted |= gp & want & ~fits
        return want


class GPSBPC(GracePolicy):
    """Static bid prices with a decreasing period for the types that are priced in."""

    name = "gp_sbpc"

    def __init__(self, inst: Instance, cfg: GraceConfig, theta_star=None, log_events=False, tag=None):
        super().__init__(inst, cfg, log_events, tag)
        if theta_star is None:
            theta_star = bid_prices(inst)
        self.theta_star = np.asarray(theta_star, dtype=float)
        self.open_types = priced_in(inst, self.theta_star)

    def decide(self, t, idx, arrived, fits):
        self.global_trigger(t, self.open_types)
        want = arrived & self.open_types[idx]
        gp = self.in_grace(idx, want)
        if gp.any():
            want[gp] = self.chain(t, idx, gp)
            self.depleted |= gp & want & ~fits
        return want

    def settled_types(self):
        return self.chain_dead() | ~self.open_types[None, :]


# segment kinds
FRACTIONAL, ALWAYS, NEVER = 0, 1, 2


class SegmentedGrace(GracePolicy):
    """Probabilistic allocation smoothed by grace periods inside fixed segments.

    The horizon after ``start`` is cut into segments of ``seg_len`` rounds.
    In each segment, type ``i`` gets a target ``y_i = z_i + Binomial(round(lambda_i
    * len), p_i)``, where ``z_i`` carries the previous segment's shortfall.
    Arrivals before the handover index ``ceil(y_i - a_hi n gamma)`` are
    accepted (first segment) or handled by an increasing period (later
    segments); the rest of the segment is a decreasing period. Types with
    ``p_i = 1`` spend the whole segment in an increasing period and types with
    ``p_i = 0`` in a decreasing one. A global decreasing period starts once the
    scarcest resource falls to ``a_hi n gamma``.

    The shortfall ``w_i`` of a segment is ``y_i`` minus the acceptances among
    its first ``y_i`` type-i arrivals: rejections within that range count, and
    so do slots for customers who never arrived. Rejections after the
    ``y_i``-th arrival do not.
    """

    name = "gp_rdlp"

    def __init__(self, inst: Instance, cfg: GraceConfig, seg_len: int, start: int = 0,
                 first_plain: bool = True, resolve_segment: int | None = None,
                 x_star=None, record_segments: bool = False, log_events: bool = False, tag=None):
        super().__init__(inst, cfg, log_events, tag)
        self.seg_len = max(1, int(seg_len))
        self.start = int(start)
        self.first_plain = first_plain
        self.n_segments = max(0, math.ceil((inst.T - self.start) / self.seg_len))
        self.resolve_segment = resolve_segment
        if x_star is None:
            x_star = solve_dlp(inst).x_star
        self.x_star = np.asarray(x_star, dtype=float)
        self.record_segments = record_segments

    # -- segment bookkeeping ------------------------------------------------
    def setup(self):
        super().setup()
        R, n, K = self.R, self.n, max(self.n_segments, 1)
        self.seg_coins = self.bank.uniforms((K, n), f"{self.tag}:segments")
        self.p = np.tile(acceptance_probabilities(self.inst, self.x_star), (R, 1))
        self.seg_rates = np.tile(self.inst.rates, (R, 1))
        self.seg_index = -1
        self.z = np.zeros((R, n))
        self.y = np.zeros((R, n))
        self.handover = np.zeros((R, n))
        self.kind = np.zeros((R, n), dtype=np.int8)
        self.seg_count = np.zeros((R, n), dtype=np.int64)
        self.seg_acc = np.zeros((R, n), dtype=np.int64)
        self.early_acc = np.zeros((R, n), dtype=np.int64)
        self.w = np.zeros((R, n))
        self.history = {key: [] for key in ("y", "w", "accepted", "arrivals")}

    def segment_length(self, k: int) -> int:
        lo = self.start + k * self.seg_len
        return min(self.seg_len, self.inst.T - lo)

    def close_segment(self) -> None:
        # unfilled slots among the first y customers; slots whose customer
        # never arrived count as unfilled
        self.w = np.maximum(self.y - self.early_acc, 0.0)
        if self.record_segments:
            self.history["y"].append(self.y.copy())
            self.history["w"].append(self.w.copy())
            self.history["accepted"].append(self.seg_acc.copy())
            self.history["arrivals"].append(self.seg_count.copy())
        # a type the plan no longer serves carries no debt forward
        self.z = np.where(self.kind == NEVER, 0.0, self.w)

    def refresh_rates(self, t: int, k: int) -> None:
        """Hook to update ``p`` and ``seg_rates`` when segment ``k`` opens."""
        if self.resolve_segment is not None and k == self.resolve_segment:
            self.p = resolve_probabilities(self.inst, self.capacity, self.inst.T - t)

    def open_segment(self, t: int, k: int) -> None:
        if k > 0:
            self.close_segment()
        self.refresh_rates(t, k)
        # cumulative rounding keeps the total number of trials within 1/2 of
        # its expectation instead of letting per-segment rounding drift
        lo = k * self.seg_len
        hi = lo + self.segment_length(k)
        trials = np.rint(self.seg_rates * hi) - np.rint(self.seg_rates * lo)
        draws = binom.ppf(self.seg_coins[:, k, :], trials, self.p)
        draws = np.maximum(np.nan_to_num(draws, nan=0.0), 0.0)
        self.kind = np.where(self.p >= 1.0 - 1e-12, ALWAYS, np.where(self.p <= 1e-12, NEVER, FRACTIONAL))
        self.y = np.where(self.kind == NEVER, 0.0, self.z + draws)
        self.handover = np.ceil(self.y - self.reserve - 1e-9)
        self.seg_count[:] = 0
        self.seg_acc[:] = 0
        self.early_acc[:] = 0
        free = ~self.triggered[:, None]
        opening = INCREASING if (k > 0 or not self.first_plain) else NORMAL
        frac = free & (self.kind == FRACTIONAL)
        self.grace.enter(frac & (self.handover > 1), opening, t, "segment")
        self.grace.enter(frac & (self.handover <= 1), DECREASING, t, "segment")
        self.grace.enter(free & (self.kind == ALWAYS), INCREASING, t, "segment")
        self.grace.enter(free & (self.kind == NEVER), DECREASING, t, "segment")

    def settled_types(self):
        # untriggered rows reopen their chains at the next segment
        return self.chain_dead() & self.triggered[:, None]

    # -- rounds --------------------------------------------------------------
    def warmup(self, t, idx, arrived, fits) -> np.ndarray:
        return np.zeros(self.R, dtype=bool)

    def decide(self, t, idx, arrived, fits):
        if t < self.start:
            return self.warmup(t, idx, arrived, fits)
        k = (t - self.start) // self.seg_len
        if k != self.seg_index:
            self.seg_index = k
            self.open_segment(t, k)
        self.global_trigger(t)

        rows = self.rows[arrived]
        cols = idx[arrived]
        self.seg_count[rows, cols] += 1
        v = self.seg_count[rows, cols]
        free = ~self.triggered[rows]
        hand = free & (self.kind[rows, cols] == FRACTIONAL) & (v >= self.handover[rows, cols])
        if hand.any():
            cells = np.zeros((self.R, self.n), dtype=bool)
            cells[rows[hand], cols[hand]] = True
            self.grace.enter(cells, DECREASING, t, "handover")

        want = arrived.copy()
        gp = self.in_grace(idx, arrived)
        if gp.any():
            never_fresh = self.kind[self.rows, idx] != NEVER
            want[gp] = self.chain(t, idx, gp, none_accepts=never_fresh)
            self.depleted |= gp & want & ~fits
        return want

    def after(self, t, idx, arrived, accept, capacity_before):
        if t < self.start:
            return
        rows = self.rows[arrived]
        cols = idx[arrived]
        acc = accept[arrived]
        self.seg_acc[rows, cols] += acc
        early = acc & (self.seg_count[rows, cols] <= self.y[rows, cols])
        self.early_acc[rows[early], cols[early]] += 1

    def diagnostics(self):
        if not self.record_segments:
            return {}
        self.close_segment()
        out = {}
        for key, vals in self.history.items():
            out[f"segment_{key}"] = np.stack(vals, axis=1) if vals else np.zeros((self.R, 0, self.n))
        return out


def gp_enhanced_rdlp(inst: Instance, cfg: GraceConfig, beta: float = 1.0 / 3.0,
                     t_star: int | None = None, resolve: bool | None = None, **kwargs) -> SegmentedGrace:
    """Segments of length ``round(T**beta)``; one re-solve when ``beta < 1/2``.

    The re-solve happens at the segment boundary closest to ``t_star``
    (default: ``T - T**(2/3)`` rounds).
    """
    T = inst.T
    seg_len = max(1, int(round(T ** beta)))
    if resolve is None:
        resolve = beta < 0.5 - 1e-9
    resolve_segment = None
    if resolve:
        t_star = default_resolve_time(T) if t_star is None else int(t_star)
        K = math.ceil(T / seg_len)
        resolve_segment = min(max(1, int(round(t_star / seg_len))), K - 1)
    tag = kwargs.pop("tag", None) or ("gp_rdlp" if resolve else "gp_dlp")
    return SegmentedGrace(inst, cfg, seg_len, resolve_segment=resolve_segment, tag=tag, **kwargs)


class GPBPCOGD(SegmentedGrace):
    """Reject everything while a shadow price learner estimates the plan, then segment.

    For the first ``P = round(T**(2/3))`` rounds all customers are rejected and
    a shadow bid-price learner records the customers it would have accepted
    (``u_i``) and the arrivals (``Lambda_i``). The rest of the horizon runs the
    segmented grace-period scheme with segment length ``P``, estimated rates
    ``Lambda_i / P`` and acceptance probabilities ``u_i / Lambda_i``.
    """

    name = "gp_bpc_ogd"

    def __init__(self, inst: Instance, cfg: GraceConfig, D=None, G=None, theta_bar=None,
                 record_segments=False, log_events=False, tag=None):
        P = max(1, int(round(inst.T ** (2.0 / 3.0))))
        super().__init__(inst, cfg, seg_len=P, start=P, first_plain=False, resolve_segment=None,
                         x_star=np.zeros(inst.n), record_segments=record_segments,
                         log_events=log_events, tag=tag)
        self.warmup_len = P
        self.learner = BPCOGD(inst, D=D, G=G, theta_bar=theta_bar)

    def setup(self):
        super().setup()
        self.shadow_theta = np.zeros((self.R, self.L))
        self.shadow_capacity = np.tile(self.inst.m.astype(float), (self.R, 1))
        self.shadow_u = np.zeros((self.R, self.n), dtype=np.int64)
        self.shadow_seen = np.zeros((self.R, self.n), dtype=np.int64)

    def warmup(self, t, idx, arrived, fits):
        need = self.A[idx]
        shadow_fits = arrived & np.all(need <= self.shadow_capacity + CAP_TOL, axis=1)
        threshold = np.einsum("rl,rl->r", need, self.shadow_theta)
        take = shadow_fits & (self.r[idx] > threshold)
        before = self.shadow_capacity.copy()
        self.shadow_capacity -= need * take[:, None]
        grad = before / self.inst.T - take[:, None] * need
        self.shadow_theta = np.clip(self.shadow_theta - self.learner.eta * grad, 0.0, self.learner.theta_bar)
        rows, cols = self.rows[arrived], idx[arrived]
        self.shadow_seen[rows, cols] += 1
        self.shadow_u[rows, cols] += take[arrived]
        return np.zeros(self.R, dtype=bool)

    def refresh_rates(self, t, k):
        if k == 0:
            seen = self.shadow_seen.astype(float)
            self.seg_rates = seen / self.warmup_len
            with np.errstate(divide="ignore", invalid="ignore"):
                self.p = np.where(seen > 0, self.shadow_u / np.where(seen > 0, seen, 1.0), 0.0)

    def estimates(self) -> tuple[np.ndarray, np.ndarray]:
        """Shadow estimates ``(x_hat, lambda_hat)`` per replication."""
        P = float(self.warmup_len)
        return self.shadow_u / P, self.shadow_seen / P

    def diagnostics(self):
        out = super().diagnostics()
        out["shadow_u"] = self.shadow_u.copy()
        out["shadow_arrivals"] = self.shadow_seen.copy()
        return out
