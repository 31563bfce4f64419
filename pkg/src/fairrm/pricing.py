"""Posted-price selling: static prices, a price-space decreasing period, and a price audit.

A customer is offered a price rather than an accept/reject decision and buys
with a type-specific probability that falls with the price. Offering ``inf``
is the price-space version of a rejection.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .grace import GraceConfig
from .metrics import DEFAULT_POWER, MIN_REPLICATIONS_PER_INDEX, FairnessReport, PairStats, sigma
from .model import Instance, StreamBank, instance_from_dict, instance_to_dict, sample_arrival_matrix
from .simulate import CAP_TOL

INF = math.inf


@dataclasses.dataclass(frozen=True)
class PricingInstance:
    """An instance plus one posted price per type and purchase-probability tables.

    ``purchase_prob[i]`` maps each price type ``i`` may be offered to the
    probability that the customer buys; ``inf`` always maps to zero.
    """

    inst: Instance
    prices: np.ndarray
    purchase_prob: tuple[Mapping[float, float], ...]

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        tables = tuple({float(k): float(v) for k, v in tab.items()} for tab in self.purchase_prob)
        object.__setattr__(self, "purchase_prob", tables)
        if prices.shape != (self.inst.n,) or len(tables) != self.inst.n:
            raise ValueError("need one price and one purchase table per type")
        if np.any(~np.isfinite(prices)) or np.any(prices <= 0):
            raise ValueError("posted prices must be positive and finite")
        for i, tab in enumerate(tables):
            pts = sorted((k, v) for k, v in tab.items() if math.isfinite(k))
            probs = [v for _, v in pts]
            if any(not 0.0 <= v <= 1.0 for v in probs):
                raise ValueError(f"type {i + 1}: purchase probabilities must lie in [0, 1]")
            if any(b >= a for a, b in zip(probs, probs[1:])):
                raise ValueError(f"type {i + 1}: purchase probability must strictly decrease with price")
            if tab.get(INF, 0.0) != 0.0:
                raise ValueError(f"type {i + 1}: an infinite price must never sell")
            if float(prices[i]) not in tab:
                raise ValueError(f"type {i + 1}: posted price {prices[i]} missing from its table")

    @property
    def n(self) -> int:
        return self.inst.n

    @property
    def p_bar(self) -> float:
        return float(self.prices.max())

    def prob(self, i: int, price: float) -> float:
        """Purchase probability of a type-``i`` customer (0-based) offered ``price``."""
        if math.isinf(price):
            return 0.0
        return self.purchase_prob[i][float(price)]

    @property
    def posted_probs(self) -> np.ndarray:
        return np.array([self.prob(i, p) for i, p in enumerate(self.prices)])


def pricing_to_dict(pinst: PricingInstance) -> dict:
    d = instance_to_dict(pinst.inst)
    d["p"] = [float(x) for x in pinst.prices]
    d["purchase_prob"] = [[[k, v] for k, v in sorted(tab.items()) if math.isfinite(k)]
                          for tab in pinst.purchase_prob]
    return d


def pricing_from_dict(d: dict) -> PricingInstance:
    inst = instance_from_dict(d)
    tables = tuple({float(k): float(v) for k, v in rows} for rows in d["purchase_prob"])
    return PricingInstance(inst, np.asarray(d["p"], dtype=float), tables)


def load_pricing(path) -> PricingInstance:
    return pricing_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# simulation

@dataclasses.dataclass
class PricingResult:
    """Offers and purchases of ``R`` replications; ``offers`` is NaN in empty rounds."""

    policy: str
    arrivals: np.ndarray
    offers: np.ndarray
    purchased: np.ndarray
    depleted: np.ndarray
    trigger_time: np.ndarray
    final_capacity: np.ndarray

    @property
    def R(self) -> int:
        return self.arrivals.shape[0]

    @property
    def round_revenue(self) -> np.ndarray:
        return np.where(self.purchased, self.offers, 0.0)

    @property
    def revenue(self) -> np.ndarray:
        return self.round_revenue.sum(axis=1)

    def trace_csv(self, k: int, path=None) -> str:
        lines = ["t,type,u,offered_price,purchased,revenue"]
        types = self.arrivals[k]
        seen = np.zeros(int(types.max(initial=0)) + 1, dtype=np.int64)
        rev = self.round_revenue[k]
        for t, i in enumerate(types):
            if i == 0:
                lines.append(f"{t},0,0,,0,0")
                continue
            seen[i] += 1
            price = self.offers[k, t]
            shown = "inf" if math.isinf(price) else f"{price:.12g}"
            lines.append(f"{t},{i},{seen[i]},{shown},{int(self.purchased[k, t])},{rev[t]:.12g}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def simulate_pricing(pinst: PricingInstance, arrivals: np.ndarray, bank: StreamBank,
                     cfg: GraceConfig | None = None, tag: str | None = None) -> PricingResult:
    """Static pricing (``cfg`` None) or its grace-period variant over an ``(R, T)`` matrix.

    Static pricing offers the posted price while the request fits and ``inf``
    otherwise. The grace-period variant behaves identically until the
    scarcest resource has at most ``a_hi n gamma`` left. From then on each
    type repeats its previous offer with probability ``1 - alpha`` and switches
    to ``inf`` for good otherwise. A repeated offer that no longer fits is
    replaced by ``inf`` and recorded as a depletion.

    Purchases use the shared ``"purchase"`` stream, so static and grace runs
    on the same bank are coupled customer by customer.
    """
    inst = pinst.inst
    arrivals = np.atleast_2d(np.asarray(arrivals, dtype=np.int64))
    R, T = arrivals.shape
    if len(bank) != R:
        raise ValueError("one random stream per replication is required")
    tag = tag or ("gp_pricing" if cfg is not None else "static_pricing")
    buy_u = bank.uniforms((T,), "purchase")
    coins = bank.uniforms((T,), f"{tag}:coins") if cfg is not None else None
    reserve = inst.a_hi * inst.n * cfg.gamma if cfg is not None else -INF
    A = inst.A
    q = pinst.posted_probs
    rows = np.arange(R)

    capacity = np.tile(inst.m.astype(float), (R, 1))
    offers = np.full((R, T), np.nan)
    purchased = np.zeros((R, T), dtype=bool)
    triggered = np.zeros(R, dtype=bool)
    trigger_time = np.full(R, -1, dtype=np.int64)
    closed = np.zeros((R, inst.n), dtype=bool)  # grace chain has offered inf
    depleted = np.zeros(R, dtype=bool)

    for t in range(T):
        hit = ~triggered & (capacity.min(axis=1) <= reserve)
        triggered |= hit
        trigger_time[hit] = t
        types = arrivals[:, t]
        arrived = types > 0
        if not arrived.any():
            continue
        idx = np.where(arrived, types - 1, 0)
        need = A[idx]
        fits = np.all(need <= capacity + CAP_TOL, axis=1)
        finite = arrived & fits
        if cfg is not None:
            gp = arrived & triggered
            keep = gp & ~closed[rows, idx] & (coins[:, t] < 1.0 - cfg.alpha)
            depleted |= keep & ~fits
            newly_closed = gp & ~keep
            closed[rows[newly_closed], idx[newly_closed]] = True
            finite = np.where(gp, keep & fits, finite)
        price = np.where(finite, pinst.prices[idx], INF)
        buy = finite & (buy_u[:, t] < q[idx])
        capacity -= need * buy[:, None]
        np.maximum(capacity, 0.0, out=capacity)
        offers[arrived, t] = price[arrived]
        purchased[:, t] = buy

    return PricingResult(tag, arrivals, offers, purchased, depleted, trigger_time, capacity)


def run_pricing(pinst: PricingInstance, seed: int, R: int, cfg: GraceConfig | None = None,
                arrivals: np.ndarray | None = None, first_stream: int = 0) -> PricingResult:
    bank = StreamBank.range(seed, R, start=first_stream)
    if arrivals is None:
        arrivals = sample_arrival_matrix(pinst.inst.lam, pinst.inst.T, bank)
    return simulate_pricing(pinst, arrivals, bank, cfg)


def pricing_loss_bound(pinst: PricingInstance, cfg: GraceConfig) -> float:
    """Pathwise revenue the grace variant may give up against static pricing."""
    inst = pinst.inst
    return inst.a_hi / inst.a_lo * inst.n * cfg.gamma * pinst.p_bar


# ---------------------------------------------------------------------------
# audit

def offers_by_index(arrivals: np.ndarray, offers: np.ndarray, i: int) -> np.ndarray:
    """``(R, U)`` offered prices to type ``i`` by within-type index; NaN where absent."""
    mask = arrivals == i
    U = int(mask.sum(axis=1).max()) if mask.size else 0
    out = np.full((arrivals.shape[0], U), np.nan)
    r, c = np.nonzero(mask)
    u = np.cumsum(mask, axis=1)[r, c] - 1
    out[r, u] = offers[r, c]
    return out


def price_fairness_audit(result: PricingResult, alpha: float, delta: float,
                         offsets: Iterable[int] = (1, 2, 3), n_types: int | None = None,
                         min_support: int = MIN_REPLICATIONS_PER_INDEX,
                         min_replications: int = DEFAULT_POWER) -> FairnessReport:
    """How often customers ``u`` and ``u + d`` of one type saw different prices.

    Frequencies are taken across replications without a depletion and must
    stay within ``alpha * d + 3 sigma`` at every index.
    """
    R = result.R
    keep = ~result.depleted
    n = n_types or int(result.arrivals.max(initial=0))
    pairs = []
    for i in range(1, n + 1):
        P = offers_by_index(result.arrivals, result.offers, i)
        for d in offsets:
            if P.shape[1] <= d:
                pairs.append(PairStats(i, d, "price_change", 0.0, 0, 0, -1.0, 0.0, 0, 0))
                continue
            a, b = P[:, :-d], P[:, d:]
            present = ~np.isnan(b)
            differ = present & (a != b)
            count = (present & keep[:, None]).sum(axis=0)
            freq = np.where(count > 0, (differ & keep[:, None]).sum(axis=0) / np.maximum(count, 1), 0.0)
            ucount = present.sum(axis=0)
            ufreq = np.where(ucount >= min_support, differ.sum(axis=0) / np.maximum(ucount, 1), 0.0)
            used = count >= min_support
            if used.any():
                excess = np.where(used, freq - (alpha * d + 3.0 * sigma(freq, count)), -np.inf)
                j = int(np.argmax(np.where(used, freq, -1.0)))
                pairs.append(PairStats(i, d, "price_change", float(freq[j]), j + 1, int(count[j]),
                                       float(excess.max()), float(ufreq.max()),
                                       int(used.sum()), int((~used & (count > 0)).sum())))
            else:
                pairs.append(PairStats(i, d, "price_change", 0.0, 0, 0, -1.0, float(ufreq.max()),
                                       0, int((count > 0).sum())))
    dep = float(np.mean(result.depleted)) if R else 0.0
    return FairnessReport(alpha=alpha, delta=delta, replications=R, depletion_freq=dep,
                          depletion_sigma=float(sigma(dep, R)), pairs=pairs,
                          low_power=R < min_replications)


def finite_offers_after_trigger(result: PricingResult, i: int) -> np.ndarray:
    """Per replication: finite-price offers to type ``i`` at or after the trigger (-1 if untriggered)."""
    t = np.arange(result.arrivals.shape[1])[None, :]
    trig = result.trigger_time[:, None]
    after = (trig >= 0) & (t >= trig) & (result.arrivals == i)
    counts = (after & np.isfinite(np.nan_to_num(result.offers, nan=np.inf))).sum(axis=1)
    return np.where(result.trigger_time >= 0, counts, -1)


def simple_pricing(inst: Instance, prices: Sequence[float], probs: Sequence[float]) -> PricingInstance:
    """Pricing instance where each type only ever sees its posted price."""
    tables = tuple({float(p): float(q)} for p, q in zip(prices, probs))
    return PricingInstance(inst, np.asarray(prices, dtype=float), tables)
