"""Batched simulation of admission policies.

Every policy in this package advances all replications of an experiment in
lock-step: ``step(t, types)`` receives the arriving type of each replication
in round ``t`` and returns one decision per replication. A single run is just
a batch of size one. Per-replication randomness is pre-drawn from that
replication's own stream, so results never depend on the batch size.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from pathlib import Path
from typing import Callable

import numpy as np

from .model import Instance, StreamBank, sample_arrival_matrix

CAP_TOL = 1e-9


class Decision(enum.IntEnum):
    NOOP = 0
    ACCEPT = 1
    REJECT = 2


# last-decision codes kept per (replication, type)
NONE, REJECTED, ACCEPTED = -1, 0, 1


class Policy:
    """Base class holding the state every admission policy shares.

    Subclasses implement :meth:`decide`, returning which arriving customers
    they would like to accept; the base class enforces capacity, updates the
    counters and produces the decision codes.
    """

    name = "policy"

    def __init__(self, inst: Instance, tag: str | None = None):
        self.inst = inst
        self.tag = tag or self.name
        self.A = inst.A
        self.r = inst.r
        self.n, self.L = inst.A.shape

    # -- lifecycle ---------------------------------------------------------
    def reset(self, bank: StreamBank, T: int) -> None:
        R = len(bank)
        self.R, self.T, self.bank = R, T, bank
        self.rows = np.arange(R)
        self.capacity = np.tile(self.inst.m.astype(float), (R, 1))
        self.arrived = np.zeros((R, self.n), dtype=np.int64)
        self.accepted = np.zeros((R, self.n), dtype=np.int64)
        self.last = np.full((R, self.n), NONE, dtype=np.int8)
        self.depleted = np.zeros(R, dtype=bool)
        self.setup()

    def setup(self) -> None:
        """Per-reset initialisation hook for subclasses."""

    def decide(self, t: int, idx: np.ndarray, arrived: np.ndarray, fits: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def after(self, t: int, idx: np.ndarray, arrived: np.ndarray, accept: np.ndarray,
              capacity_before: np.ndarray) -> None:
        """Hook called once the round's decisions are committed."""

    # Policies whose state does not change when they reject a customer of a
    # settled type may have those rounds skipped on fixed arrival sequences.
    skip_settled = False
    # Policies that keep learning every round must run the whole horizon.
    full_horizon = False

    def finished(self) -> bool:
        """True when every replication will reject all remaining customers."""
        return False

    def fits_types(self) -> np.ndarray:
        """``(R, n)``: whether each type's request fits the remaining capacity."""
        return np.all(self.A[None] <= self.capacity[:, None, :] + CAP_TOL, axis=2)

    def settled_types(self) -> np.ndarray:
        """``(R, n)`` mask of types this policy will reject for the rest of the run."""
        return ~self.fits_types()

    def catch_up(self, t: int) -> None:
        """Called before rounds ``t, t+1, ...`` are skipped."""

    # -- one round -----------------------------------------------------------
    def step(self, t: int, types: np.ndarray) -> np.ndarray:
        arrived = types > 0
        idx = np.where(arrived, types - 1, 0)
        need = self.A[idx]
        fits = arrived & np.all(need <= self.capacity + CAP_TOL, axis=1)
        rows, cols = self.rows[arrived], idx[arrived]
        self.arrived[rows, cols] += 1
        want = self.decide(t, idx, arrived, fits)
        accept = want & fits
        before = self.capacity.copy()
        self.capacity -= need * accept[:, None]
        np.maximum(self.capacity, 0.0, out=self.capacity)
        self.accepted[rows, cols] += accept[arrived]
        self.last[rows, cols] = accept[arrived]
        self.after(t, idx, arrived, accept, before)
        out = np.full(self.R, Decision.REJECT, dtype=np.int8)
        out[accept] = Decision.ACCEPT
        out[~arrived] = Decision.NOOP
        return out

    def remaining_capacity(self) -> np.ndarray:
        return self.capacity.copy()

    def diagnostics(self) -> dict:
        return {}


@dataclasses.dataclass
class RunTrace:
    """Event records of a single replication."""

    types: np.ndarray
    u: np.ndarray
    decisions: np.ndarray
    revenue: np.ndarray
    capacity: np.ndarray | None = None

    @property
    def total_revenue(self) -> float:
        return float(self.revenue.sum())

    def to_csv(self, path=None) -> str:
        lines = ["t,type,u,decision,revenue,remaining_capacity"]
        names = {0: "noop", 1: "accept", 2: "reject"}
        for t in range(self.types.size):
            cap = "" if self.capacity is None else json.dumps([float(x) for x in self.capacity[t]])
            lines.append(
                f"{t},{int(self.types[t])},{int(self.u[t])},{names[int(self.decisions[t])]},"
                f"{_fmt(self.revenue[t])},\"{cap}\""
            )
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def within_type_index(types: np.ndarray) -> np.ndarray:
    """1-based index of each arrival among same-type arrivals of its row (0 for no arrival)."""
    types = np.atleast_2d(types)
    out = np.zeros(types.shape, dtype=np.int64)
    for i in np.unique(types[types > 0]):
        mask = types == i
        out[mask] = np.cumsum(mask, axis=1)[mask]
    return out


@dataclasses.dataclass
class BatchResult:
    """Outcome of simulating one policy on R replications."""

    policy: str
    arrivals: np.ndarray
    decisions: np.ndarray
    rewards: np.ndarray
    depleted: np.ndarray
    final_capacity: np.ndarray
    capacity_path: np.ndarray | None = None
    extras: dict = dataclasses.field(default_factory=dict)

    @property
    def R(self) -> int:
        return self.arrivals.shape[0]

    @property
    def accepted(self) -> np.ndarray:
        return self.decisions == Decision.ACCEPT

    @property
    def round_revenue(self) -> np.ndarray:
        r_pad = np.concatenate([[0.0], self.rewards])
        return np.where(self.accepted, r_pad[self.arrivals], 0.0)

    @property
    def revenue(self) -> np.ndarray:
        return self.round_revenue.sum(axis=1)

    def accepted_counts(self, n: int) -> np.ndarray:
        out = np.zeros((self.R, n), dtype=np.int64)
        for i in range(1, n + 1):
            out[:, i - 1] = ((self.arrivals == i) & self.accepted).sum(axis=1)
        return out

    def trace(self, k: int) -> RunTrace:
        return RunTrace(
            types=self.arrivals[k],
            u=within_type_index(self.arrivals[k])[0],
            decisions=self.decisions[k],
            revenue=self.round_revenue[k],
            capacity=None if self.capacity_path is None else self.capacity_path[k],
        )

    @classmethod
    def concat(cls, parts: list["BatchResult"]) -> "BatchResult":
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        extras = {}
        for key in first.extras:
            vals = [p.extras[key] for p in parts]
            extras[key] = np.concatenate(vals) if isinstance(vals[0], np.ndarray) else sum(vals, [])
        return cls(
            policy=first.policy,
            arrivals=cat("arrivals"),
            decisions=cat("decisions"),
            rewards=first.rewards,
            depleted=cat("depleted"),
            final_capacity=cat("final_capacity"),
            capacity_path=None if first.capacity_path is None else cat("capacity_path"),
            extras=extras,
        )


def simulate(policy: Policy, arrivals: np.ndarray, bank: StreamBank,
             record_capacity: bool = False) -> BatchResult:
    """Run ``policy`` over an ``(R, T)`` arrival matrix."""
    arrivals = np.atleast_2d(np.asarray(arrivals))
    if not np.issubdtype(arrivals.dtype, np.integer):
        raise TypeError("arrivals must be an integer array")
    R, T = arrivals.shape
    if len(bank) != R:
        raise ValueError("one random stream per replication is required")
    policy.reset(bank, T)
    decisions = np.where(arrivals > 0, Decision.REJECT, Decision.NOOP).astype(np.int8)
    path = np.empty((R, T, policy.L)) if record_capacity else None
    skipper = None if policy.full_horizon else _SettledSkipper(arrivals, policy.n, policy.skip_settled)
    t = 0
    while t < T:
        if policy.finished():
            break
        if skipper is not None:
            settled = policy.settled_types()
            if skipper.all_settled(settled, t):
                break
            nxt = skipper.next_live(settled, t)
            if nxt > t:
                policy.catch_up(t)
                policy.arrived += skipper.counts_between(t, nxt)
                if record_capacity:
                    path[:, t:nxt] = policy.capacity[:, None, :]
                t = nxt
                continue
        decisions[:, t] = policy.step(t, arrivals[:, t])
        if record_capacity:
            path[:, t] = policy.capacity
        t += 1
    if record_capacity and t < T:
        path[:, t:] = policy.capacity[:, None, :]
    return BatchResult(
        policy=policy.tag,
        arrivals=arrivals,
        decisions=decisions,
        rewards=policy.r,
        depleted=policy.depleted.copy(),
        final_capacity=policy.capacity.copy(),
        capacity_path=path,
        extras=policy.diagnostics(),
    )


class _SettledSkipper:
    """Look-ahead tables over the arrival matrix.

    The run stops once every type still due to arrive is settled. When the
    policy allows it and every replication faces the same sequence, rounds
    whose arriving type is settled everywhere are skipped too.
    """

    def __init__(self, arrivals: np.ndarray, n: int, skip: bool):
        R, T = arrivals.shape
        self.T = T
        last = np.full((R, n), -1, dtype=np.int64)
        for i in range(1, n + 1):
            rev = arrivals[:, ::-1] == i
            last[:, i - 1] = np.where(rev.any(axis=1), T - 1 - rev.argmax(axis=1), -1)
        self.last_seen = last
        self.shared = skip and (R == 1 or bool(np.all(arrivals == arrivals[:1])))
        if self.shared:
            seq = np.stack([arrivals[0] == i for i in range(1, n + 1)], axis=1)  # (T, n)
            self.cum = np.vstack([np.zeros((1, n), dtype=np.int64), np.cumsum(seq, axis=0)])
            nxt = np.full((T + 1, n), T, dtype=np.int64)
            for i in range(n):
                pos = np.flatnonzero(seq[:, i])
                if pos.size == 0:
                    continue
                # first occurrence at or after t
                k = np.searchsorted(pos, np.arange(T + 1))
                nxt[:, i] = np.where(k < pos.size, pos[np.minimum(k, pos.size - 1)], T)
            self.next_seen = nxt
            self.types = arrivals[0]

    def all_settled(self, settled: np.ndarray, t: int) -> bool:
        return not np.any(~settled & (self.last_seen >= t))

    def next_live(self, settled: np.ndarray, t: int) -> int:
        if not self.shared:
            return t
        live = ~settled.all(axis=0)
        i = self.types[t]
        if i == 0 or live[i - 1]:
            return t
        if not live.any():
            return self.T
        return int(self.next_seen[t, live].min())

    def counts_between(self, lo: int, hi: int) -> np.ndarray:
        return (self.cum[hi] - self.cum[lo])[None, :]


PolicyFactory = Callable[[Instance], Policy]


def run_replications(factory: PolicyFactory, inst: Instance, seed: int, R: int,
                     arrivals: np.ndarray | None = None, chunk: int = 2000,
                     record_capacity: bool = False, first_stream: int = 0,
                     threads: int = 1) -> BatchResult:
    """Simulate ``R`` replications in chunks, sampling arrivals if none are given.

    Replication ``k`` uses stream id ``first_stream + k`` for both its arrivals
    and the policy's own randomness, so chunking and threading leave results
    unchanged.
    """
    bank = StreamBank.range(seed, R, start=first_stream)
    bounds = [(lo, min(R, lo + chunk)) for lo in range(0, R, chunk)]

    def work(lo_hi):
        lo, hi = lo_hi
        sub = bank.subset(slice(lo, hi))
        arr = arrivals[lo:hi] if arrivals is not None else sample_arrival_matrix(inst.lam, inst.T, sub)
        return simulate(factory(inst), arr, sub, record_capacity=record_capacity)

    if threads > 1 and len(bounds) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    return parts[0] if len(parts) == 1 else BatchResult.concat(parts)
