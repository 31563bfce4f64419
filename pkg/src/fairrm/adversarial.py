"""Booking-limit and nesting policies, their grace-period variants, and adversarial families."""

from __future__ import annotations

import dataclasses
import itertools
import math
import warnings
from typing import Callable, Sequence

import numpy as np

from .grace import DECREASING, GraceConfig, GracePolicy
from .linprog import solve_dlp
from .metrics import hindsight_value
from .model import ArrivalSequence, Instance, StreamBank
from .simulate import Policy, simulate


def default_booking_limits(inst: Instance) -> np.ndarray:
    """Per-type limits ``floor(x*_i T)`` from the fluid program."""
    x = solve_dlp(inst).x_star
    return np.floor(x * inst.T + 1e-9).astype(np.int64)


def default_nested_limits(inst: Instance) -> np.ndarray:
    """Nested quotas from the fluid plan: group {i..n} may take ``sum_{j>=i} x*_j T`` units."""
    x = solve_dlp(inst).x_star
    b = np.floor(np.cumsum(x[::-1])[::-1] * inst.T + 1e-9).astype(np.int64)
    b[0] = int(np.floor(inst.m[0] + 1e-9))
    return b


def nesting_warnings(b: Sequence[int], m: float) -> list[str]:
    """Nested quotas cap the group {i..n}; they should shrink with i and start at m."""
    b = np.asarray(b)
    out = []
    if np.any(np.diff(b) > 0):
        out.append("nested quotas are not non-increasing; lower types can crowd out higher ones")
    if b.size and b[0] > m:
        out.append("first nested quota exceeds capacity")
    return out


def _check_single_resource(inst: Instance) -> None:
    if inst.L != 1:
        raise ValueError("nesting requires a single resource")
    if np.any((inst.A != 1.0)):
        raise ValueError("nesting requires unit demand")


# ---------------------------------------------------------------------------
# base policies

class BookingLimits(Policy):
    """Accept type i while it fits and fewer than ``b_i`` have been accepted."""

    name = "bl"

    def __init__(self, inst: Instance, b=None, tag=None):
        super().__init__(inst, tag)
        self.b = default_booking_limits(inst) if b is None else np.asarray(b, dtype=np.int64)
        if np.any(self.b < 0):
            raise ValueError("booking limits must be nonnegative")

    skip_settled = True

    def decide(self, t, idx, arrived, fits):
        return arrived & (self.accepted[self.rows, idx] < self.b[idx])

    def settled_types(self):
        return super().settled_types() | (self.accepted >= self.b[None, :])


class Nesting(Policy):
    """Single-resource nesting: group {j..n} may hold at most ``b_j`` accepts.

    A type-i customer is accepted only if every group containing it, that is
    every {j..n} with ``j <= i``, is still below its quota.
    """

    name = "nesting"

    def __init__(self, inst: Instance, b, tag=None):
        _check_single_resource(inst)
        super().__init__(inst, tag)
        self.b = np.asarray(b, dtype=np.int64)
        for msg in nesting_warnings(self.b, float(inst.m[0])):
            warnings.warn(msg, stacklevel=2)

    def setup(self):
        self.nested = np.zeros((self.R, self.n), dtype=np.int64)

    skip_settled = True

    def headroom(self) -> np.ndarray:
        """``(R, n)``: accepts type i can still take before some group quota binds."""
        return group_headroom(self.b, self.nested)

    def decide(self, t, idx, arrived, fits):
        return arrived & (self.headroom()[self.rows, idx] > 0)

    def settled_types(self):
        return super().settled_types() | (self.headroom() <= 0)

    def after(self, t, idx, arrived, accept, capacity_before):
        self.nested += group_increment(accept, idx, self.n)


def group_headroom(b: np.ndarray, nested: np.ndarray) -> np.ndarray:
    return np.minimum.accumulate(b[None, :] - nested, axis=1)


def group_increment(accept: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    # accepting type i adds one to every group {j..n} with j <= i
    return accept[:, None] & (np.arange(n)[None, :] <= idx[:, None])


# ---------------------------------------------------------------------------
# grace-period variants

class GPBookingLimits(GracePolicy):
    """Booking limits with decreasing periods near each quota and near capacity.

    Type i is accepted outright while ``s_i < b_i - gamma``; from then on it
    is in a decreasing period, still capped by ``b_i``. Once the scarcest
    resource has at most ``a_hi n gamma`` left, every type enters one. A type
    with a zero quota is rejected outright and never runs a chain.
    """

    name = "gp_bl"

    def __init__(self, inst: Instance, cfg: GraceConfig, b=None, log_events=False, tag=None):
        super().__init__(inst, cfg, log_events, tag)
        self.b = default_booking_limits(inst) if b is None else np.asarray(b, dtype=np.int64)
        self.margin = self.gamma

    def headroom(self) -> np.ndarray:
        return self.b[None, :] - self.accepted

    def open_types(self) -> np.ndarray:
        return self.b > 0

    def decide(self, t, idx, arrived, fits):
        self.global_trigger(t)
        room = self.headroom()[self.rows, idx]
        open_ = self.open_types()[idx]
        start = arrived & open_ & (self.grace.mode[self.rows, idx] == 0) & (room <= self.margin)
        if start.any():
            cells = np.zeros((self.R, self.n), dtype=bool)
            cells[self.rows[start], idx[start]] = True
            self.grace.enter(cells, DECREASING, t, "quota")
        want = arrived & open_
        gp = self.in_grace(idx, arrived) & open_
        if gp.any():
            want[gp] = self.chain(t, idx, gp)
            self.depleted |= gp & want & ~(fits & (room > 0))
        return want & (room > 0)

    skip_settled = True

    def settled_types(self):
        return super().settled_types() | ~self.open_types()[None, :]

    def catch_up(self, t):
        # keep trigger times exact when rounds are skipped
        self.global_trigger(t)


class GPNesting(GPBookingLimits):
    """Nesting with decreasing periods near the nested quotas and near capacity.

    Plain acceptance needs more than ``n gamma`` room in every group that
    contains the type; the global period starts once capacity falls to
    ``n gamma``.
    """

    name = "gp_nesting"

    def __init__(self, inst: Instance, cfg: GraceConfig, b, log_events=False, tag=None):
        _check_single_resource(inst)
        super().__init__(inst, cfg, b=b, log_events=log_events, tag=tag)
        self.reserve = inst.n * self.gamma
        self.margin = inst.n * self.gamma
        for msg in nesting_warnings(self.b, float(inst.m[0])):
            warnings.warn(msg, stacklevel=2)

    def setup(self):
        super().setup()
        self.nested = np.zeros((self.R, self.n), dtype=np.int64)

    def headroom(self):
        return group_headroom(self.b, self.nested)

    def open_types(self):
        return np.minimum.accumulate(self.b) > 0

    def after(self, t, idx, arrived, accept, capacity_before):
        self.nested += group_increment(accept, idx, self.n)


# ---------------------------------------------------------------------------
# adversarial families

FAMILIES = ("low_first", "high_first", "single_type_flood", "alternating", "block_permutations")


@dataclasses.dataclass(frozen=True)
class Family:
    name: str
    k: int = 3

    @property
    def label(self) -> str:
        return f"{self.name}({self.k})" if self.name == "block_permutations" else self.name


def parse_family(spec: str) -> Family:
    """``"block_permutations(4)"`` -> Family("block_permutations", 4)."""
    spec = spec.strip()
    if "(" in spec:
        name, arg = spec.rstrip(")").split("(")
        return Family(name.strip(), int(arg))
    return Family(spec)


def generate_adversarial(family: Family | str, m_scale: float, n: int = 2,
                         per_type: float = 2.0) -> list[ArrivalSequence]:
    """Deterministic arrival sequences of total length ``per_type * n * m_scale``.

    Types are numbered by decreasing revenue, so "low" means type n.
    """
    fam = parse_family(family) if isinstance(family, str) else family
    each = int(round(per_type * m_scale))
    total = each * n
    if fam.name == "low_first":
        seqs = [np.repeat(np.arange(n, 0, -1), each)]
    elif fam.name == "high_first":
        seqs = [np.repeat(np.arange(1, n + 1), each)]
    elif fam.name == "single_type_flood":
        seqs = [np.full(total, i) for i in range(1, n + 1)]
    elif fam.name == "alternating":
        seqs = [np.tile(np.arange(1, n + 1), each)]
    elif fam.name == "block_permutations":
        block = int(math.ceil(total / fam.k))
        seqs = [np.repeat(np.asarray(assign), block)[:total]
                for assign in itertools.product(range(1, n + 1), repeat=fam.k)]
    else:
        raise ValueError(f"unknown adversarial family {fam.name!r}")
    return [ArrivalSequence(s, n) for s in seqs]


@dataclasses.dataclass(frozen=True)
class CRRow:
    m_scale: float
    family: str
    instance_id: int
    policy: str
    revenue: float
    opt: float
    ratio: float


def cr_csv(rows: Sequence[CRRow]) -> str:
    lines = ["m_scale,family,instance_id,policy,revenue,opt,ratio"]
    for r in rows:
        lines.append(f"{r.m_scale:g},{r.family},{r.instance_id},{r.policy},"
                     f"{r.revenue:.10g},{r.opt:.10g},{r.ratio:.10g}")
    return "\n".join(lines) + "\n"


PolicyBuilder = Callable[[Instance], Policy]


def evaluate_sequence(builder: PolicyBuilder, inst: Instance, seq: ArrivalSequence,
                      replications: int, seed: int, stream_offset: int = 0):
    """Per-replication revenue of ``builder`` on a fixed arrival sequence."""
    inst = inst.with_horizon(seq.T)
    policy = builder(inst)
    bank = StreamBank.range(seed, replications, start=stream_offset)
    arrivals = np.tile(seq.events, (replications, 1))
    return simulate(policy, arrivals, bank)


def empirical_cr(builders: dict[str, PolicyBuilder], template: Callable[[float], Instance],
                 families: Sequence[Family | str], m_scales: Sequence[float],
                 replications: int = 1000, seed: int = 0,
                 randomized: Sequence[str] = ()) -> tuple[list[CRRow], dict]:
    """Minimum revenue/OPT ratio per policy and capacity scale.

    ``template(m)`` builds the instance at scale ``m``. Randomized policies
    (names in ``randomized``) are averaged over ``replications`` runs per
    sequence; deterministic ones run once. Returns the CSV rows and
    ``{(policy, m): CR}``.
    """
    rows: list[CRRow] = []
    cr: dict = {}
    for m in m_scales:
        inst = template(m)
        seqs = [(parse_family(f) if isinstance(f, str) else f) for f in families]
        instance_id = 0
        for fam in seqs:
            for seq in generate_adversarial(fam, m, n=inst.n):
                opt = hindsight_value(inst, seq.counts)
                if opt <= 0:
                    warnings.warn(f"skipping {fam.label} instance with OPT = 0", stacklevel=2)
                    instance_id += 1
                    continue
                for name, builder in builders.items():
                    reps = replications if name in randomized else 1
                    res = evaluate_sequence(builder, inst, seq, reps, seed, stream_offset=instance_id * reps)
                    rev = float(res.revenue.mean())
                    rows.append(CRRow(m, fam.label, instance_id, name, rev, opt, rev / opt))
                    key = (name, m)
                    cr[key] = min(cr.get(key, math.inf), rev / opt)
                instance_id += 1
    return rows, cr
