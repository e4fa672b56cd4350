"""Upstream propagation of demand moments with risk pooling."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .network import Key, NetworkSpec


@dataclass(frozen=True)
class PropagatedDemand:
    mu: float
    sigma: float
    mu_i: float
    sigma_i: float
    mu_d: float
    sigma_d: float


def propagate(net: NetworkSpec) -> dict[Key, PropagatedDemand]:
    """Total, independent and dependent demand moments per stock point.

    Successor demand is converted through the BOM factor (1 for distribution
    links) and pooled assuming independent streams: means add, variances add.
    """
    out: dict[Key, PropagatedDemand] = {}
    for key in reversed(net.order):
        sp = net[key]
        mu_d = 0.0
        var_d = 0.0
        for succ, phi in net.succs[key]:
            child = out[succ]
            mu_d += phi * child.mu
            var_d += phi * phi * child.sigma * child.sigma
        sigma_d = math.sqrt(var_d)
        out[key] = PropagatedDemand(
            mu=sp.mu_i + mu_d,
            sigma=math.sqrt(sp.sigma_i * sp.sigma_i + var_d),
            mu_i=sp.mu_i,
            sigma_i=sp.sigma_i,
            mu_d=mu_d,
            sigma_d=sigma_d,
        )
    return {k: out[k] for k in net.order}
