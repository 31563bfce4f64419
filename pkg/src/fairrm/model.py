"""Problem instances, arrival processes and seeded random streams."""

from __future__ import annotations

import dataclasses
import json
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

LAMBDA_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class Instance:
    """Static data of a network revenue management problem.

    ``lam`` has length ``n + 1``; entry 0 is the probability that nobody
    arrives in a round and entry ``i`` the probability of a type-``i`` arrival.
    Customer types are numbered 1..n everywhere outside of array indexing.
    """

    A: np.ndarray
    r: np.ndarray
    m: np.ndarray
    T: int
    lam: np.ndarray
    q: np.ndarray | None = None
    m_scale: float | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "r", np.array(self.r, dtype=float).reshape(-1))
        object.__setattr__(self, "m", np.array(self.m, dtype=float).reshape(-1))
        object.__setattr__(self, "lam", np.array(self.lam, dtype=float).reshape(-1))
        object.__setattr__(self, "T", int(self.T))
        if self.q is not None:
            object.__setattr__(self, "q", np.array(self.q, dtype=float).reshape(-1))
        for name in ("A", "r", "m", "lam", "q"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def L(self) -> int:
        return self.A.shape[1]

    @property
    def a_hi(self) -> float:
        return float(self.A.max())

    @property
    def a_lo(self) -> float:
        nz = self.A[self.A > 0]
        return float(nz.min()) if nz.size else 0.0

    @property
    def r_max(self) -> float:
        return float(self.r.max())

    @property
    def rates(self) -> np.ndarray:
        """Per-type arrival probabilities, without the no-arrival entry."""
        return self.lam[1:]

    def with_horizon(self, T: int) -> "Instance":
        return dataclasses.replace(self, T=int(T))

    def stretched(self, T: int) -> "Instance":
        """Same instance over ``T`` rounds with capacity scaled in proportion."""
        factor = int(T) / self.T
        return dataclasses.replace(self, T=int(T), m=self.m * factor)

    def with_capacity(self, m) -> "Instance":
        return dataclasses.replace(self, m=np.asarray(m, dtype=float), q=None, m_scale=None)


def make_instance(A, r, lam, T=None, m=None, q=None, m_scale=None, horizon_ratio=4.0) -> Instance:
    """Build an instance, filling the no-arrival probability when needed.

    ``lam`` may have length n (remainder goes to the no-arrival entry) or n+1.
    Capacities come from ``m`` or from ``q * m_scale``; the horizon from ``T``
    or from ``round(horizon_ratio * m_scale)``.
    """
    A = np.array(A, dtype=float, ndmin=2)
    n = A.shape[0]
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size == n:
        lam = np.concatenate([[max(0.0, 1.0 - lam.sum())], lam])
    if m is None:
        if q is None or m_scale is None:
            raise ValueError("need either m or both q and m_scale")
        q = np.asarray(q, dtype=float)
        m = q * float(m_scale)
    if T is None:
        if m_scale is None:
            raise ValueError("need either T or m_scale with horizon_ratio")
        T = int(round(horizon_ratio * float(m_scale)))
    return Instance(A=A, r=r, m=m, T=T, lam=lam, q=q, m_scale=m_scale)


@dataclasses.dataclass
class ValidationReport:
    violations: list[str]
    warnings: list[str] = dataclasses.field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok and not self.warnings:
            return "ok"
        lines = [f"violation: {v}" for v in self.violations]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate_instance(inst: Instance) -> ValidationReport:
    """Check every structural invariant and report the violated ones."""
    bad = []
    n, L = inst.A.shape
    if inst.r.shape != (n,):
        bad.append(f"r: expected length {n}, got {inst.r.size}")
    if inst.m.shape != (L,):
        bad.append(f"m: expected length {L}, got {inst.m.size}")
    if inst.lam.shape != (n + 1,):
        bad.append(f"lambda: expected length {n + 1}, got {inst.lam.size}")
    elif abs(inst.lam.sum() - 1.0) > LAMBDA_TOL:
        bad.append(f"lambda not normalized (sums to {inst.lam.sum():.12g})")
    if np.any(inst.lam < 0):
        bad.append("lambda: negative probability")
    if np.any(inst.A < 0):
        bad.append("A: negative demand entry")
    if inst.r.shape == (n,) and np.any(inst.r <= 0):
        bad.append("r: reward must be positive")
    if np.any(inst.m < 0):
        bad.append("m: negative capacity")
    if inst.T < 1:
        bad.append("T: horizon must be a positive integer")
    if inst.q is not None and inst.m_scale is not None:
        if inst.q.shape != inst.m.shape or np.any(inst.q * inst.m_scale != inst.m):
            bad.append("m: not equal to q * m_scale")
    return ValidationReport(bad)


def scale_instance(template: Instance, m_scale: float, horizon_ratio: float = 4.0) -> Instance:
    """Rescale capacities to ``q * m_scale`` and the horizon to ``horizon_ratio * m_scale``."""
    if m_scale <= 0:
        raise ValueError("m_scale must be positive")
    q = template.q if template.q is not None else template.m / (template.m_scale or 1.0)
    return dataclasses.replace(
        template,
        m=q * float(m_scale),
        q=q,
        m_scale=float(m_scale),
        T=int(round(horizon_ratio * m_scale)),
    )


# ---------------------------------------------------------------------------
# random streams

def _purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


@dataclasses.dataclass(frozen=True)
class RandomSource:
    """A reconstructible stream keyed by ``(seed, stream_id)``.

    Different ``purpose`` strings give independent sub-streams, which is how
    arrivals, customer behaviour and each policy's coin flips are kept apart.
    """

    seed: int
    stream_id: int = 0

    def generator(self, purpose: str = "") -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, _purpose_key(purpose)))
        return np.random.Generator(np.random.PCG64(ss))


class StreamBank:
    """One :class:`RandomSource` per replication, drawn from in bulk.

    Replication ``k`` always uses stream id ``stream_ids[k]``, so the draws it
    sees do not depend on how many replications are simulated together.
    """

    def __init__(self, seed: int, stream_ids: Sequence[int]):
        self.seed = int(seed)
        self.stream_ids = np.asarray(stream_ids, dtype=np.int64)

    @classmethod
    def range(cls, seed: int, count: int, start: int = 0) -> "StreamBank":
        return cls(seed, np.arange(start, start + count))

    def __len__(self) -> int:
        return len(self.stream_ids)

    def source(self, k: int) -> RandomSource:
        return RandomSource(self.seed, int(self.stream_ids[k]))

    def uniforms(self, shape, purpose: str) -> np.ndarray:
        """Array of shape ``(R, *shape)``; row k comes from replication k's stream."""
        shape = (int(shape),) if np.ndim(shape) == 0 else tuple(int(s) for s in shape)
        out = np.empty((len(self),) + shape)
        for k in range(len(self)):
            out[k] = self.source(k).generator(purpose).random(shape)
        return out

    def subset(self, rows) -> "StreamBank":
        return StreamBank(self.seed, self.stream_ids[rows])


# ---------------------------------------------------------------------------
# arrivals

@dataclasses.dataclass(frozen=True)
class ArrivalSequence:
    events: np.ndarray
    n: int

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=np.int64).reshape(-1)
        if ev.size and (ev.min() < 0 or ev.max() > self.n):
            raise ValueError("arrival types must lie in 0..n")
        ev.setflags(write=False)
        object.__setattr__(self, "events", ev)

    @property
    def T(self) -> int:
        return self.events.size

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.events, minlength=self.n + 1)[1:]


def _check_lambda(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > LAMBDA_TOL:
        raise ValueError("lambda must be a normalized probability vector")
    return lam


def _draw_types(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(lam)
    cdf[-1] = 1.0
    # smallest index with cdf > u; zero-probability types are never selected
    return np.searchsorted(cdf, u, side="right")


def sample_arrivals(lam, T: int, rng: RandomSource) -> ArrivalSequence:
    """Draw one arrival sequence of length ``T``; type 0 means nobody arrives."""
    lam = _check_lambda(lam)
    if T < 1:
        raise ValueError("T must be at least 1")
    u = rng.generator("arrivals").random(T)
    return ArrivalSequence(_draw_types(lam, u), lam.size - 1)


def sample_arrival_matrix(lam, T: int, bank: StreamBank) -> np.ndarray:
    """Arrivals for every replication in ``bank`` as an ``(R, T)`` integer array.

    Row k equals ``sample_arrivals(lam, T, bank.source(k)).events``.
    """
    lam = _check_lambda(lam)
    return _draw_types(lam, bank.uniforms((T,), "arrivals")).astype(arrival_dtype(lam.size - 1))


def arrival_dtype(n: int):
    """Smallest integer dtype that holds type indices ``0..n``."""
    return np.int16 if n < np.iinfo(np.int16).max else np.int64


# ---------------------------------------------------------------------------
# files

def instance_to_dict(inst: Instance) -> dict:
    d = {
        "n": inst.n,
        "L": inst.L,
        "A": inst.A.reshape(-1).tolist(),
        "r": inst.r.tolist(),
        "m": inst.m.tolist(),
        "T": inst.T,
        "lambda": inst.lam.tolist(),
    }
    if inst.q is not None and inst.m_scale is not None:
        d["q"] = inst.q.tolist()
        d["m_scale"] = inst.m_scale
    return d


def instance_from_dict(d: dict) -> Instance:
    n, L = int(d["n"]), int(d["L"])
    A = np.asarray(d["A"], dtype=float).reshape(n, L)
    return make_instance(
        A,
        d["r"],
        d["lambda"],
        T=d.get("T"),
        m=d.get("m"),
        q=d.get("q"),
        m_scale=d.get("m_scale"),
        horizon_ratio=d.get("horizon_ratio", 4.0),
    )


def load_instance(path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n")


def write_arrivals_csv(seq: ArrivalSequence, path) -> None:
    lines = ["round,type"] + [f"{t},{int(i)}" for t, i in enumerate(seq.events)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_arrivals_csv(path, n: int) -> ArrivalSequence:
    rows = Path(path).read_text().strip().splitlines()[1:]
    events = [int(row.split(",")[1]) for row in rows]
    return ArrivalSequence(np.asarray(events, dtype=np.int64), n)
