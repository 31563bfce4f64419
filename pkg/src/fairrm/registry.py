"""Policy ids used by the command line and configuration files."""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

from .adversarial import (BookingLimits, GPBookingLimits, GPNesting, Nesting,
                          default_nested_limits)
from .grace import GPBPCOGD, GPFCFS, GPSBPC, GraceConfig, gp_enhanced_rdlp
from .model import Instance
from .simulate import Policy
from .stochastic import BPCOGD, DLPPA, FCFS, RDLPPA, SBPC, RejectAll


@dataclasses.dataclass
class PolicyParams:
    alpha: float = 0.1
    delta: float | None = None  # None: 1/T
    beta: float | None = None
    t_star: int | None = None
    b: list | None = None
    D: float | None = None
    G: float | None = None
    theta_bar: float | None = None

    @classmethod
    def from_dict(cls, d: dict | None) -> "PolicyParams":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown policy parameters: {sorted(unknown)}")
        return cls(**d)

    def grace(self, T: int) -> GraceConfig:
        return GraceConfig.for_horizon(self.alpha, T, self.delta)


def _nested_b(inst, p):
    return default_nested_limits(inst) if p.b is None else p.b


_BUILDERS: dict[str, Callable[[Instance, PolicyParams], Policy]] = {
    "fcfs": lambda i, p: FCFS(i),
    "reject_all": lambda i, p: RejectAll(i),
    "dlp_pa": lambda i, p: DLPPA(i),
    "rdlp_pa": lambda i, p: RDLPPA(i, t_star=p.t_star),
    "sbpc": lambda i, p: SBPC(i),
    "bpc_ogd": lambda i, p: BPCOGD(i, D=p.D, G=p.G, theta_bar=p.theta_bar),
    "bl": lambda i, p: BookingLimits(i, p.b),
    "nesting": lambda i, p: Nesting(i, _nested_b(i, p)),
    "gp_fcfs": lambda i, p: GPFCFS(i, p.grace(i.T)),
    "gp_sbpc": lambda i, p: GPSBPC(i, p.grace(i.T)),
    "gp_dlp": lambda i, p: gp_enhanced_rdlp(i, p.grace(i.T), beta=0.5 if p.beta is None else p.beta,
                                            resolve=False),
    "gp_rdlp": lambda i, p: gp_enhanced_rdlp(i, p.grace(i.T), beta=1 / 3 if p.beta is None else p.beta,
                                             t_star=p.t_star),
    "gp_bpc_ogd": lambda i, p: GPBPCOGD(i, p.grace(i.T), D=p.D, G=p.G, theta_bar=p.theta_bar),
    "gp_bl": lambda i, p: GPBookingLimits(i, p.grace(i.T), p.b),
    "gp_nesting": lambda i, p: GPNesting(i, p.grace(i.T), _nested_b(i, p)),
}

PRICING_POLICIES = ("static_pricing", "gp_pricing")
POLICY_IDS = tuple(sorted(_BUILDERS)) + PRICING_POLICIES

# grace-period variant -> the policy it enhances
BASE_OF = {
    "gp_fcfs": "fcfs", "gp_sbpc": "sbpc", "gp_dlp": "dlp_pa", "gp_rdlp": "rdlp_pa",
    "gp_bpc_ogd": "bpc_ogd", "gp_bl": "bl", "gp_nesting": "nesting", "gp_pricing": "static_pricing",
}


def is_randomized(name: str) -> bool:
    return name in {"dlp_pa", "rdlp_pa"} or name.startswith("gp_")


def make_factory(name: str, params: PolicyParams | dict | None = None) -> Callable[[Instance], Policy]:
    """``inst -> Policy`` for a registered id."""
    if name not in _BUILDERS:
        if name in PRICING_POLICIES:
            raise ValueError(f"{name} is a pricing policy; use the pricing entry points")
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_IDS)}")
    p = params if isinstance(params, PolicyParams) else PolicyParams.from_dict(params)
    if p.b is not None:
        p = dataclasses.replace(p, b=list(np.asarray(p.b, dtype=np.int64)))
    build = _BUILDERS[name]
    return lambda inst: build(inst, p)
