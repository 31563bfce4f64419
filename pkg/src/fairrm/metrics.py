"""Hindsight benchmark, regret estimation, fairness audit and OGD diagnostics."""

from __future__ import annotations

import dataclasses
import io
import json
import math
from typing import Iterable, Sequence

import numpy as np

from .linprog import build_hindsight, solve_lp
from .model import Instance
from .simulate import BatchResult, Decision, PolicyFactory, run_replications

MIN_REPLICATIONS_PER_INDEX = 30
DEFAULT_POWER = 1000


# ---------------------------------------------------------------------------
# hindsight and regret

def hindsight_value(inst: Instance, arrivals) -> float:
    """Offline LP optimum for one arrival sequence (or its per-type counts)."""
    arrivals = np.asarray(arrivals)
    if arrivals.shape == (inst.n,):
        counts = arrivals
    else:
        counts = np.bincount(arrivals.reshape(-1), minlength=inst.n + 1)[1:]
    sol = solve_lp(build_hindsight(inst, counts))
    if not sol.optimal:
        raise RuntimeError(f"hindsight program is {sol.status.value}")
    return sol.objective_value


def arrival_counts(arrivals: np.ndarray, n: int) -> np.ndarray:
    arrivals = np.atleast_2d(arrivals)
    return np.stack([(arrivals == i).sum(axis=1) for i in range(1, n + 1)], axis=1)


def hindsight_values(inst: Instance, arrivals: np.ndarray) -> np.ndarray:
    """Hindsight optimum of every row of an ``(R, T)`` arrival matrix."""
    counts = arrival_counts(arrivals, inst.n)
    cache: dict[bytes, float] = {}
    out = np.empty(len(counts))
    for k, c in enumerate(counts):
        key = c.tobytes()
        if key not in cache:
            cache[key] = hindsight_value(inst, c)
        out[k] = cache[key]
    return out


@dataclasses.dataclass(frozen=True)
class RegretReport:
    policy: str
    T: int
    R: int
    mean_hindsight: float
    mean_revenue: float
    regret: float
    stderr: float

    def row(self) -> dict:
        return dataclasses.asdict(self)


def regret_from(result: BatchResult, hindsight: np.ndarray, T: int) -> RegretReport:
    diff = hindsight - result.revenue
    R = len(diff)
    se = float(diff.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    return RegretReport(
        policy=result.policy,
        T=T,
        R=R,
        mean_hindsight=float(hindsight.mean()),
        mean_revenue=float(result.revenue.mean()),
        regret=float(diff.mean()),
        stderr=se,
    )


def estimate_regret(factory: PolicyFactory, inst: Instance, R: int, seed: int,
                    arrivals: np.ndarray | None = None, hindsight: np.ndarray | None = None,
                    threads: int = 1) -> RegretReport:
    """Paired regret estimate: every replication compares the policy to its own hindsight optimum."""
    if R < 30:
        raise ValueError("at least 30 replications are required")
    result = run_replications(factory, inst, seed, R, arrivals=arrivals, threads=threads)
    if hindsight is None:
        hindsight = hindsight_values(inst, result.arrivals)
    return regret_from(result, hindsight, inst.T)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) on log(x); NaN if any y is not positive."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if np.any(ys <= 0):
        return float("nan")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# ---------------------------------------------------------------------------
# fairness audit

def decisions_by_index(arrivals: np.ndarray, decisions: np.ndarray, i: int) -> np.ndarray:
    """``(R, U)`` matrix of type-i outcomes by within-type index: 1 accept, 0 reject, -1 absent."""
    arrivals = np.atleast_2d(arrivals)
    mask = arrivals == i
    U = int(mask.sum(axis=1).max()) if mask.size else 0
    out = np.full((arrivals.shape[0], U), -1, dtype=np.int8)
    rows, cols = np.nonzero(mask)
    u = np.cumsum(mask, axis=1)[rows, cols] - 1
    out[rows, u] = np.atleast_2d(decisions)[rows, cols] == Decision.ACCEPT
    return out


def sigma(freq, count):
    count = np.maximum(count, 1)
    return np.sqrt(freq * (1.0 - freq) / count)


@dataclasses.dataclass
class PairStats:
    type: int
    offset: int
    order: str  # "rej_then_acc": u rejected and u+d accepted; "acc_then_rej" the reverse
    max_freq: float
    argmax_u: int
    support: int
    worst_excess: float
    max_freq_unconditional: float
    indices_used: int
    indices_excluded: int


@dataclasses.dataclass
class FairnessReport:
    alpha: float
    delta: float
    replications: int
    depletion_freq: float
    depletion_sigma: float
    pairs: list[PairStats]
    low_power: bool

    @property
    def depletion_ok(self) -> bool:
        return self.depletion_freq <= self.delta + 3.0 * self.depletion_sigma

    @property
    def pairs_ok(self) -> bool:
        return all(p.worst_excess <= 0.0 for p in self.pairs)

    @property
    def passed(self) -> bool:
        return self.depletion_ok and self.pairs_ok

    @property
    def verdict(self) -> str:
        if self.low_power:
            return "LOW_POWER"
        return "PASS" if self.passed else "FAIL"

    @property
    def exit_code(self) -> int:
        return {"PASS": 0, "FAIL": 2, "LOW_POWER": 3}[self.verdict]

    def max_freq(self, offset: int = 1, order: str | None = None, type_: int | None = None) -> float:
        vals = [p.max_freq for p in self.pairs
                if p.offset == offset and (order is None or p.order == order)
                and (type_ is None or p.type == type_)]
        return max(vals) if vals else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = [f.name for f in dataclasses.fields(PairStats)]
        buf.write(",".join(fields) + "\n")
        for p in self.pairs:
            vals = [getattr(p, f) for f in fields]
            buf.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in vals) + "\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "delta": self.delta,
            "replications": self.replications,
            "depletion_freq": self.depletion_freq,
            "depletion_ok": self.depletion_ok,
            "pairs_ok": self.pairs_ok,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _pair_frequencies(D: np.ndarray, d: int, first: int, second: int, keep: np.ndarray):
    a, b = D[:, :-d], D[:, d:]
    present = (b >= 0) & keep[:, None]
    count = present.sum(axis=0)
    hits = ((a == first) & (b == second) & present).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        freq = np.where(count > 0, hits / np.maximum(count, 1), 0.0)
    return freq, count


def fairness_audit(result: BatchResult, alpha: float, delta: float,
                   offsets: Iterable[int] = (1, 2, 3), n_types: int | None = None,
                   min_support: int = MIN_REPLICATIONS_PER_INDEX,
                   min_replications: int = DEFAULT_POWER) -> FairnessReport:
    """Audit same-type disparities across replications.

    For each type, offset ``d`` and index ``u``, estimates how often customer
    ``u`` was rejected while ``u + d`` was accepted, and the reverse, both over
    all replications and over those without a depletion during a grace
    period. The verdict uses the conditional estimates: every index must stay
    within ``alpha * d + 3 sigma``. Indices seen in fewer than ``min_support``
    replications are skipped.
    """
    arrivals, decisions = result.arrivals, result.decisions
    R = arrivals.shape[0]
    keep_all = np.ones(R, dtype=bool)
    keep_ok = ~np.asarray(result.depleted, dtype=bool)
    n = n_types or int(arrivals.max(initial=0))
    pairs = []
    for i in range(1, n + 1):
        D = decisions_by_index(arrivals, decisions, i)
        for d in offsets:
            for order, (first, second) in (("rej_then_acc", (0, 1)), ("acc_then_rej", (1, 0))):
                if D.shape[1] <= d:
                    pairs.append(PairStats(i, d, order, 0.0, 0, 0, -1.0, 0.0, 0, 0))
                    continue
                freq, count = _pair_frequencies(D, d, first, second, keep_ok)
                ufreq, ucount = _pair_frequencies(D, d, first, second, keep_all)
                used = count >= min_support
                excess = np.where(used, freq - (alpha * d + 3.0 * sigma(freq, count)), -np.inf)
                ufreq = np.where(ucount >= min_support, ufreq, 0.0)
                if used.any():
                    j = int(np.argmax(np.where(used, freq, -1.0)))
                    worst = float(excess.max())
                else:
                    j, worst = 0, -1.0
                pairs.append(PairStats(
                    type=i, offset=d, order=order,
                    max_freq=float(freq[j]) if used.any() else 0.0,
                    argmax_u=j + 1, support=int(count[j]) if used.any() else 0,
                    worst_excess=worst,
                    max_freq_unconditional=float(ufreq.max()),
                    indices_used=int(used.sum()), indices_excluded=int((~used & (count > 0)).sum()),
                ))
    dep = float(np.mean(result.depleted)) if R else 0.0
    return FairnessReport(
        alpha=alpha, delta=delta, replications=R,
        depletion_freq=dep, depletion_sigma=float(sigma(dep, R)),
        pairs=pairs, low_power=R < min_replications,
    )


# ---------------------------------------------------------------------------
# OGD oscillation

def ogd_flip_count(types: np.ndarray, decisions: np.ndarray) -> int:
    """Number of accept/reject switches between consecutive same-type arrivals."""
    types = np.asarray(types).reshape(-1)
    decisions = np.asarray(decisions).reshape(-1)
    flips = 0
    for i in np.unique(types[types > 0]):
        seq = decisions[types == i]
        flips += int(np.count_nonzero(seq[1:] != seq[:-1]))
    return flips
