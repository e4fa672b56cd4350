"""Guaranteed-service evaluation kernel.

Scores a candidate assignment of guaranteed service times: net-lead-time
arguments, safety factors, safety stocks, base stocks and holding cost.  All
times are in the scenario's base period (weeks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .demand import PropagatedDemand, propagate
from .network import GlobalOptions, Key, NetworkSpec, ServiceTarget, label
from .normstats import solve_kv_exact, solve_kv_surrogate, std_normal_inv_cdf

ARG_TOL = 1e-9


class InfeasiblePlanError(ValueError):
    """A service-time plan violates a model constraint."""

    def __init__(self, key: Key | None, constraint: str, detail: str):
        self.key = key
        self.constraint = constraint
        where = f"{label(key)}: " if key is not None else ""
        super().__init__(f"{where}{constraint} violated ({detail})")


def effective_lead_time(lt_mean: float, lt_sd: float, k_lt: float, rounding: str) -> float:
    """Planned lead time ``lt_mean + k_lt * lt_sd``, ceiled when ``rounding == 'ceil'``."""
    planned = lt_mean + k_lt * lt_sd
    if rounding == "ceil":
        return float(math.ceil(planned - 1e-9))
    return planned


@dataclass(frozen=True)
class NodeModel:
    """Per-stock-point parameters resolved from the network and propagated demand."""

    key: Key
    preds: tuple[Key, ...]
    succs: tuple[Key, ...]
    h: float
    r: int
    lt: float
    lt_sd: float
    k_lt: float
    planned_lt: float  # lead time for internal (dependent) demand
    lt_eff: float  # lead time for external demand
    mu: float
    mu_i: float
    sigma_i: float
    mu_d: float
    sigma_d: float
    moq: float
    target: ServiceTarget
    max_s: float | None
    max_se: float | None
    si0: float | None
    no_safety_stock: bool
    has_dependent: bool
    has_independent: bool

    @property
    def is_source(self) -> bool:
        return not self.preds

    @property
    def q(self) -> float:
        return max(self.moq, self.mu * self.r)


@dataclass(frozen=True)
class Instance:
    net: NetworkSpec
    demand: Mapping[Key, PropagatedDemand]
    nodes: Mapping[Key, NodeModel]

    @property
    def order(self) -> tuple[Key, ...]:
        return self.net.order

    @property
    def options(self) -> GlobalOptions:
        return self.net.options


def make_instance(net: NetworkSpec) -> Instance:
    demand = propagate(net)
    rounding = net.options.lead_time_rounding
    nodes = {}
    for key in net.order:
        sp = net[key]
        arc = net.inbound[key]
        d = demand[key]
        k_lt = net.k_lt(key)
        lt_eff = float(math.ceil(arc.lt_mean - 1e-9)) if rounding == "ceil" else arc.lt_mean
        nodes[key] = NodeModel(
            key=key,
            preds=tuple(p for p, _ in net.preds[key]),
            succs=tuple(s for s, _ in net.succs[key]),
            h=sp.holding_cost,
            r=sp.review_period,
            lt=arc.lt_mean,
            lt_sd=arc.lt_sd,
            k_lt=k_lt,
            planned_lt=effective_lead_time(arc.lt_mean, arc.lt_sd, k_lt, rounding),
            lt_eff=lt_eff,
            mu=d.mu,
            mu_i=d.mu_i,
            sigma_i=d.sigma_i,
            mu_d=d.mu_d,
            sigma_d=d.sigma_d,
            moq=sp.moq,
            target=sp.target,
            max_s=sp.max_s,
            max_se=sp.max_se,
            si0=sp.si0,
            no_safety_stock=sp.no_safety_stock,
            has_dependent=bool(net.succs[key]),
            has_independent=sp.has_independent_demand,
        )
    return Instance(net, demand, nodes)


@dataclass(frozen=True)
class ServiceTimes:
    s: float
    se: float | None
    si: float


@dataclass(frozen=True)
class ServiceTimePlan:
    times: Mapping[Key, ServiceTimes]

    def __getitem__(self, key: Key) -> ServiceTimes:
        return self.times[key]

    def vector(self, order) -> tuple:
        """Flat ``(s, se, ...)`` tuple in the given order, used for tie-breaking."""
        out = []
        for k in order:
            t = self.times[k]
            out.append(t.s)
            out.append(-1.0 if t.se is None else t.se)
        return tuple(out)


def inbound_service_time(inst: Instance, key: Key, s: Mapping[Key, float]) -> float:
    node = inst.nodes[key]
    if node.is_source:
        return float(node.si0)
    return max(s[p] for p in node.preds)


def plan_from_outbound(
    inst: Instance, s: Mapping[Key, float], se: Mapping[Key, float | None]
) -> ServiceTimePlan:
    """Build a plan whose inbound times are the max of the suppliers' outbound times."""
    return ServiceTimePlan(
        {k: ServiceTimes(float(s[k]), se.get(k), inbound_service_time(inst, k, s)) for k in inst.order}
    )


def zero_stock_bounds(node: NodeModel, si: float) -> tuple[float, float]:
    """Outbound service times at which the dependent and independent arguments vanish."""
    s_max = si + node.r - 1 + node.planned_lt
    extra = (node.mu_i * node.lt_sd / node.sigma_i) ** 2 if node.sigma_i > 0 else 0.0
    return s_max, si + node.r + node.lt_eff + extra


def service_time_bounds(node: NodeModel, si: float) -> tuple[float, float]:
    """Largest outbound service times keeping both net-lead-time arguments nonnegative."""
    s_max, se_max = zero_stock_bounds(node, si)
    if node.max_s is not None:
        s_max = min(s_max, node.max_s)
    if node.max_se is not None:
        se_max = min(se_max, node.max_se)
    return s_max, se_max


def compute_args(node: NodeModel, si: float, s: float, se: float | None) -> tuple[float, float]:
    """Square-root arguments for the dependent (arg1) and independent (arg2) safety stocks."""
    arg1 = 0.0
    arg2 = 0.0
    if node.has_dependent:
        arg1 = si - s + node.planned_lt + node.r - 1
        if arg1 < 0:
            if arg1 < -ARG_TOL:
                raise InfeasiblePlanError(node.key, "outbound service time bound", f"arg1 = {arg1:.6g}")
            arg1 = 0.0
    if node.has_independent:
        se_ = 0.0 if se is None else se
        arg2 = (si - se_ + node.lt_eff + node.r) * node.sigma_i**2 + (node.mu_i * node.lt_sd) ** 2
        if arg2 < 0:
            scale = max(1.0, node.sigma_i**2)
            if arg2 < -ARG_TOL * scale:
                raise InfeasiblePlanError(node.key, "external service time bound", f"arg2 = {arg2:.6g}")
            arg2 = 0.0
    return arg1, arg2


def demand_spread(node: NodeModel, arg1: float, arg2: float) -> float:
    """Lead-time demand spread ``sigma_D sqrt(arg1) + sqrt(arg2)``."""
    return node.sigma_d * math.sqrt(arg1) + math.sqrt(arg2)


def calibrate_kv(node: NodeModel, arg1: float, arg2: float, options: GlobalOptions) -> float:
    target = node.target
    if target.mode == "csl":
        return std_normal_inv_cdf(target.value)
    L = demand_spread(node, arg1, arg2)
    if L <= 0.0:
        return 0.0
    Q = node.q
    if Q <= 0.0:
        raise ValueError(f"{label(node.key)}: fill-rate target needs positive mean demand or MOQ")
    if options.fill_rate_mode == "exact":
        return solve_kv_exact(target.value, L, Q)
    return solve_kv_surrogate(target.value, L, Q, options.surrogate_coeffs)


def safety_stocks(node: NodeModel, arg1: float, arg2: float, kv: float) -> tuple[float, float, float]:
    ss_d = kv * node.sigma_d * math.sqrt(arg1)
    ss_i = kv * math.sqrt(arg2)
    return ss_d, ss_i, ss_d + ss_i


def basestock(node: NodeModel, si: float, s: float, se: float | None, ss: float) -> float:
    """Order-up-to level: safety stock plus mean demand over the replenishment exposure.

    Lead times are always ceiled here, matching whole-period arrivals in the
    simulator, independently of the scenario's rounding option.
    """
    dep = 0.0
    if node.mu_d > 0:
        dep = node.mu_d * (si - s + math.ceil(node.lt + node.k_lt * node.lt_sd - 1e-9) + node.r - 1)
    ind = 0.0
    if node.mu_i > 0:
        se_ = 0.0 if se is None else se
        ind = node.mu_i * (si - se_ + math.ceil(node.lt - 1e-9) + node.r)
    return ss + max(dep, 0.0) + max(ind, 0.0)


@dataclass(frozen=True)
class NodeEvaluation:
    key: Key
    s: float
    se: float | None
    si: float
    arg1: float
    arg2: float
    z1: float
    z2: float
    kv: float
    u: float
    q: float
    ss_d: float
    ss_i: float
    ss: float
    nlt: float
    nlt_ext: float | None
    basestock: float
    cost: float


@dataclass(frozen=True)
class EvaluationResult:
    nodes: Mapping[Key, NodeEvaluation]
    total_cost: float
    plan: ServiceTimePlan = field(repr=False)

    def __getitem__(self, key: Key) -> NodeEvaluation:
        return self.nodes[key]


def _check_node(node: NodeModel, t: ServiceTimes, s_all: Mapping[Key, ServiceTimes]) -> None:
    key = node.key
    tol = 1e-9
    if t.s < -tol or t.si < -tol or (t.se is not None and t.se < -tol):
        raise InfeasiblePlanError(key, "nonnegative service times", f"{t}")
    if node.is_source:
        if abs(t.si - node.si0) > tol:
            raise InfeasiblePlanError(key, "source inbound service time", f"si = {t.si} != si0 = {node.si0}")
    for p in node.preds:
        if t.si < s_all[p].s - tol:
            raise InfeasiblePlanError(
                key, "inbound service time covers supplier", f"si = {t.si} < s({label(p)}) = {s_all[p].s}"
            )
    if node.max_s is not None and t.s > node.max_s + tol:
        raise InfeasiblePlanError(key, "max_s", f"s = {t.s} > {node.max_s}")
    if node.has_independent:
        if t.se is None:
            raise InfeasiblePlanError(key, "external service time", "se missing for a stock point with external demand")
        if node.max_se is not None and t.se > node.max_se + tol:
            raise InfeasiblePlanError(key, "max_se", f"se = {t.se} > {node.max_se}")
    s_max, se_max = service_time_bounds(node, t.si)
    if node.has_dependent and t.s > s_max + tol:
        raise InfeasiblePlanError(key, "outbound service time bound", f"s = {t.s} > {s_max:.6g}")
    if node.has_independent and t.se > se_max + tol:
        raise InfeasiblePlanError(key, "external service time bound", f"se = {t.se} > {se_max:.6g}")
    if node.no_safety_stock:
        s_zero, se_zero = zero_stock_bounds(node, t.si)
        if node.has_dependent and abs(t.s - s_zero) > tol:
            raise InfeasiblePlanError(key, "no_safety_stock", f"s = {t.s} must equal {s_zero:.6g}")
        if node.has_independent and abs(t.se - se_zero) > tol:
            raise InfeasiblePlanError(key, "no_safety_stock", f"se = {t.se} must equal {se_zero:.6g}")


def evaluate_node(node: NodeModel, si: float, s: float, se: float | None, options: GlobalOptions) -> NodeEvaluation:
    arg1, arg2 = compute_args(node, si, s, se)
    kv = calibrate_kv(node, arg1, arg2, options)
    ss_d, ss_i, ss = safety_stocks(node, arg1, arg2, kv)
    nlt = si - s + node.planned_lt + node.r - 1
    nlt_ext = (si - (se or 0.0) + node.lt_eff + node.r) if node.has_independent else None
    return NodeEvaluation(
        key=node.key,
        s=s,
        se=se,
        si=si,
        arg1=arg1,
        arg2=arg2,
        z1=math.sqrt(arg1),
        z2=math.sqrt(arg2),
        kv=kv,
        u=kv * kv,
        q=node.q,
        ss_d=ss_d,
        ss_i=ss_i,
        ss=ss,
        nlt=nlt if node.has_dependent else (nlt_ext if nlt_ext is not None else nlt),
        nlt_ext=nlt_ext,
        basestock=basestock(node, si, s, se, ss),
        cost=node.h * ss,
    )


def evaluate_plan(inst: Instance, plan: ServiceTimePlan) -> EvaluationResult:
    """Check feasibility of ``plan`` and compute every per-stock-point quantity."""
    missing = [k for k in inst.order if k not in plan.times]
    if missing:
        raise InfeasiblePlanError(missing[0], "complete plan", "stock point missing from plan")
    nodes = {}
    for key in inst.order:
        node = inst.nodes[key]
        t = plan[key]
        _check_node(node, t, plan.times)
        nodes[key] = evaluate_node(node, t.si, t.s, t.se if node.has_independent else None, inst.options)
    total = math.fsum(n.cost for n in nodes.values())
    return EvaluationResult(nodes, total, plan)


def check_qcp_tightness(result: EvaluationResult) -> float:
    """Largest relative gap in ``z1^2 = arg1``, ``z2^2 = arg2`` and ``u = kv^2``.

    Kernel results are tight by construction; the check matters for solutions
    coming back from an external quadratic solver.
    """
    worst = 0.0
    for n in result.nodes.values():
        worst = max(
            worst,
            abs(n.z1 * n.z1 - n.arg1) / max(1.0, abs(n.arg1)),
            abs(n.z2 * n.z2 - n.arg2) / max(1.0, abs(n.arg2)),
            abs(n.u - n.kv * n.kv) / max(1.0, n.kv * n.kv),
        )
    return worst
