"""Optimizers for guaranteed service times.

Three solvers share one search space: integer outbound service times ``s``
(and ``se`` for stock points with external demand) bounded by the
zero-net-lead-time limits, with the inbound time of every stock point set to
the largest outbound time among its suppliers.  Stock points flagged
``no_safety_stock`` are pinned to their zero-stock bound, which may be
fractional.

* :func:`solve_bruteforce` enumerates everything (the reference oracle),
* :func:`solve_tree_dp` is an exact dynamic program for forest-shaped networks,
* :func:`solve_local_search` is a multistart coordinate descent for the rest.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import networkx as nx
import numpy as np

from .gsm import (
    EvaluationResult,
    Instance,
    InfeasiblePlanError,
    NodeModel,
    ServiceTimePlan,
    ServiceTimes,
    evaluate_node,
    evaluate_plan,
    service_time_bounds,
    zero_stock_bounds,
)
from .network import Key, is_forest, label

DEFAULT_BUDGET = 10**7
_TOL = 1e-9
INF = math.inf


class SolverError(RuntimeError):
    pass


class BudgetExceededError(SolverError):
    pass


@dataclass(frozen=True)
class SolveReport:
    plan: ServiceTimePlan
    result: EvaluationResult
    solver: str
    optimal: bool
    iterations: int
    wall_time: float = field(compare=False, default=0.0)

    @property
    def total_cost(self) -> float:
        return self.result.total_cost


def _better(a: float, b: float) -> bool:
    """Strict improvement that ignores floating noise, so ties keep the incumbent."""
    if b == INF:
        return a < INF
    return a < b - _TOL * max(1.0, abs(b))


class _Space:
    """Domains and cached per-node costs for one instance."""

    def __init__(self, inst: Instance, s_cap: float | None = None):
        self.inst = inst
        self.s_cap = s_cap
        self.cache: dict[tuple, float] = {}
        self.evaluations = 0

    def node(self, key: Key) -> NodeModel:
        return self.inst.nodes[key]

    def s_domain(self, key: Key, si: float) -> list[float]:
        node = self.node(key)
        if not node.has_dependent:
            return [0.0]
        s_hi, _ = service_time_bounds(node, si)
        if node.no_safety_stock:
            s_zero, _ = zero_stock_bounds(node, si)
            return [s_zero] if s_zero <= s_hi + _TOL else []
        if self.s_cap is not None:
            s_hi = min(s_hi, self.s_cap)
        return [float(v) for v in range(int(math.floor(s_hi + _TOL)) + 1)]

    def se_domain(self, key: Key, si: float) -> list[float | None]:
        node = self.node(key)
        if not node.has_independent:
            return [None]
        _, se_hi = service_time_bounds(node, si)
        if node.no_safety_stock:
            _, se_zero = zero_stock_bounds(node, si)
            return [se_zero] if se_zero <= se_hi + _TOL else []
        if self.s_cap is not None:
            se_hi = min(se_hi, self.s_cap)
        return [float(v) for v in range(int(math.floor(se_hi + _TOL)) + 1)]

    def cost(self, key: Key, si: float, s: float, se: float | None) -> float:
        ck = (key, si, s, se)
        val = self.cache.get(ck)
        if val is None:
            self.evaluations += 1
            try:
                val = evaluate_node(self.node(key), si, s, se, self.inst.options).cost
            except InfeasiblePlanError:
                val = INF
            self.cache[ck] = val
        return val

    def best_se(self, key: Key, si: float, s: float) -> tuple[float, float | None]:
        best, arg = INF, None
        for se in self.se_domain(key, si):
            c = self.cost(key, si, s, se)
            if (arg is None and best == INF) or _better(c, best):
                best, arg = c, se
        return best, arg

    def si_of(self, key: Key, s: dict[Key, float]) -> float:
        node = self.node(key)
        if node.is_source:
            return float(node.si0)
        return max(s[p] for p in node.preds)

    def domain_size_bound(self) -> int:
        """Upper bound on the number of complete assignments."""
        s_hi: dict[Key, float] = {}
        total = 1
        for key in self.inst.order:
            si = self.si_of(key, s_hi)
            ds = self.s_domain(key, si)
            dse = self.se_domain(key, si)
            s_hi[key] = max(ds) if ds else 0.0
            total *= max(len(ds), 1) * max(len(dse), 1)
        return total

    def plan(self, s: dict[Key, float], se: dict[Key, float | None]) -> ServiceTimePlan:
        times = {}
        for key in self.inst.order:
            times[key] = ServiceTimes(s[key], se[key], self.si_of(key, s))
        return ServiceTimePlan(times)


def _report(space: _Space, s, se, solver: str, optimal: bool, t0: float) -> SolveReport:
    plan = space.plan(s, se)
    result = evaluate_plan(space.inst, plan)
    return SolveReport(plan, result, solver, optimal, space.evaluations, time.perf_counter() - t0)


def solve_bruteforce(
    inst: Instance, s_cap: float | None = None, budget: int = DEFAULT_BUDGET
) -> SolveReport:
    """Exhaustive enumeration of integer service times.

    Ties are broken toward the lexicographically smallest ``(s, se)`` vector in
    topological order.  Partial costs are pruned against the incumbent, which
    is safe because every node cost is nonnegative.
    """
    t0 = time.perf_counter()
    space = _Space(inst, s_cap)
    size = space.domain_size_bound()
    if size > budget:
        raise BudgetExceededError(
            f"{size} candidate plans exceed the enumeration budget {budget}; "
            "use tree_dp for forest networks or local_search otherwise"
        )
    order = inst.order
    n = len(order)
    s: dict[Key, float] = {}
    se: dict[Key, float | None] = {}
    best = {"cost": INF, "s": None, "se": None}

    def dfs(i: int, partial: float) -> None:
        if best["s"] is not None and not _better(partial, best["cost"]):
            return
        if i == n:
            best.update(cost=partial, s=dict(s), se=dict(se))
            return
        key = order[i]
        si = space.si_of(key, s)
        for sv in space.s_domain(key, si):
            s[key] = sv
            for sev in space.se_domain(key, si):
                c = space.cost(key, si, sv, sev)
                if c == INF:
                    continue
                se[key] = sev
                dfs(i + 1, partial + c)
        s.pop(key, None)
        se.pop(key, None)

    dfs(0, 0.0)
    if best["s"] is None:
        raise SolverError("no feasible service-time plan")
    return _report(space, best["s"], best["se"], "bruteforce", True, t0)


# ---------------------------------------------------------------------------
# dynamic program on forests


@dataclass
class _Table:
    """Per-value costs with the decisions that achieve them."""

    cost: dict[float, float]
    how: dict[float, tuple]


def _argmin_prefix(table: dict[float, float], limit: float) -> tuple[float, float | None]:
    best, arg = INF, None
    for v in sorted(table):
        if v > limit + _TOL:
            break
        if _better(table[v], best):
            best, arg = table[v], v
    return best, arg


def _exact_max(children: list[dict[float, float]], t: float) -> tuple[float, tuple | None]:
    """Cheapest assignment of the children whose largest value is exactly ``t``."""
    prefix = [_argmin_prefix(c, t) for c in children]
    best, how = INF, None
    for i, c in enumerate(children):
        if t not in c or c[t] == INF:
            continue
        others = [prefix[j] for j in range(len(children)) if j != i]
        if any(a is None for _, a in others):
            continue
        total = c[t] + sum(v for v, _ in others)
        if _better(total, best):
            vals = tuple(t if j == i else prefix[j][1] for j in range(len(children)))
            best, how = total, vals
    return best, how


def solve_tree_dp(inst: Instance, s_cap: float | None = None) -> SolveReport:
    """Exact optimum for networks whose undirected stock-point graph is a forest.

    Each subtree is summarized by a table over a single service time: the
    subtree root's own outbound time when its parent sits downstream, or the
    parent's outbound time when the parent supplies it.  Supplier subtrees
    are merged under the rule that the inbound time equals the largest of
    their outbound times.
    """
    if not is_forest(inst.net):
        raise SolverError("tree_dp requires a forest-shaped stock-point graph")
    t0 = time.perf_counter()
    space = _Space(inst, s_cap)
    order = inst.order
    index = {k: i for i, k in enumerate(order)}

    # candidate outbound values per stock point
    values: dict[Key, list[float]] = {}
    si_values: dict[Key, list[float]] = {}
    for key in order:
        node = space.node(key)
        if node.is_source:
            sis = [float(node.si0)]
        else:
            floor_ = max(min(values[p]) if values[p] else INF for p in node.preds)
            sis = sorted({v for p in node.preds for v in values[p] if v >= floor_ - _TOL})
        si_values[key] = sis
        values[key] = sorted({v for si in sis for v in space.s_domain(key, si)})

    undirected = nx.Graph()
    undirected.add_nodes_from(order)
    undirected.add_edges_from((p, k) for k in order for p in space.node(k).preds)

    tables: dict[Key, _Table] = {}
    parent_of: dict[Key, Key | None] = {}
    roots: list[Key] = []
    for comp in sorted(nx.connected_components(undirected), key=lambda c: min(index[k] for k in c)):
        root = min(comp, key=index.__getitem__)
        roots.append(root)
        parent_of[root] = None
        parent_of.update(nx.dfs_predecessors(undirected, root))
        for key in nx.dfs_postorder_nodes(undirected, root):
            tables[key] = _node_table(space, key, parent_of[key], values, si_values, tables)

    s: dict[Key, float] = {}
    se: dict[Key, float | None] = {}
    for root in roots:
        tab = tables[root]
        best, arg = INF, None
        for v in sorted(tab.cost):
            if _better(tab.cost[v], best):
                best, arg = tab.cost[v], v
        if arg is None:
            raise SolverError(f"no feasible service-time plan for the component of {label(root)}")
        _assign(space, root, arg, tables, parent_of, s, se)
    return _report(space, s, se, "tree_dp", True, t0)


def _split_children(space: _Space, key: Key, parent: Key | None):
    node = space.node(key)
    up = [c for c in node.preds if c != parent]
    down = [d for d in node.succs if d != parent]
    return up, down


def _node_table(space, key, parent, values, si_values, tables) -> _Table:
    node = space.node(key)
    up, down = _split_children(space, key, parent)

    def downstream(sv: float) -> float:
        return sum(tables[d].cost.get(sv, INF) for d in down)

    up_tables = [tables[c].cost for c in up]

    def merged(t: float) -> tuple[float, tuple | None]:
        if node.is_source:
            return (0.0, ()) if abs(t - node.si0) <= _TOL else (INF, None)
        return _exact_max(up_tables, t)

    # best choice of own s for a fixed inbound time
    own: dict[float, tuple[float, float | None, float | None]] = {}

    def own_best(si: float):
        if si not in own:
            best, arg_s, arg_se = INF, None, None
            for sv in space.s_domain(key, si):
                c_own, sev = space.best_se(key, si, sv)
                total = c_own + downstream(sv)
                if _better(total, best):
                    best, arg_s, arg_se = total, sv, sev
            own[si] = (best, arg_s, arg_se)
        return own[si]

    cost: dict[float, float] = {}
    how: dict[float, tuple] = {}
    parent_is_succ = parent is None or parent in node.succs
    if parent_is_succ:
        # table over own outbound time s
        for sv in values[key]:
            best, rec = INF, None
            for si in si_values[key]:
                if sv not in space.s_domain(key, si):
                    continue
                h, up_vals = merged(si)
                if h == INF:
                    continue
                c_own, sev = space.best_se(key, si, sv)
                total = c_own + h + downstream(sv)
                if _better(total, best):
                    best, rec = total, ("own", si, sv, sev, up_vals)
            cost[sv] = best
            if rec is not None:
                how[sv] = rec
    else:
        # table over the parent's outbound time y, which feeds this node's inbound time
        for y in values[parent]:
            best, rec = INF, None
            if not up:
                c, sv, sev = own_best(y)
                if c < INF:
                    best, rec = c, ("own", y, sv, sev, ())
            else:
                pre = [_argmin_prefix(t, y) for t in up_tables]
                if all(a is not None for _, a in pre):
                    c, sv, sev = own_best(y)
                    total = c + sum(v for v, _ in pre)
                    if total < INF:
                        best, rec = total, ("own", y, sv, sev, tuple(a for _, a in pre))
                for t in si_values[key]:
                    if t <= y + _TOL:
                        continue
                    h, up_vals = merged(t)
                    if h == INF:
                        continue
                    c, sv, sev = own_best(t)
                    total = c + h
                    if _better(total, best):
                        best, rec = total, ("own", t, sv, sev, up_vals)
            cost[y] = best
            if rec is not None:
                how[y] = rec
    return _Table(cost, how)


def _assign(space, key, value, tables, parent_of, s, se) -> None:
    """Walk the decision records top-down, fixing every service time."""
    stack = [(key, value)]
    while stack:
        k, v = stack.pop()
        _, si, sv, sev, up_vals = tables[k].how[v]
        s[k], se[k] = sv, sev
        up, down = _split_children(space, k, parent_of[k])
        for c, cv in zip(up, up_vals):
            stack.append((c, cv))
        for d in down:
            stack.append((d, sv))


# ---------------------------------------------------------------------------
# multistart coordinate descent


def _repair(space: _Space, s: dict[Key, float], se: dict[Key, float | None]) -> float:
    """Clamp every coordinate into its domain in topological order; return the cost."""
    total = 0.0
    for key in space.inst.order:
        si = space.si_of(key, s)
        ds = space.s_domain(key, si)
        dse = space.se_domain(key, si)
        if not ds or not dse:
            return INF
        s[key] = min(max(s[key], ds[0]), ds[-1]) if len(ds) > 1 else ds[0]
        if dse[0] is None:
            se[key] = None
        else:
            cur = se[key] if se[key] is not None else 0.0
            se[key] = min(max(cur, dse[0]), dse[-1]) if len(dse) > 1 else dse[0]
        total += space.cost(key, si, s[key], se[key])
    return total


def _descendants(inst: Instance) -> dict[Key, list[Key]]:
    g = nx.DiGraph()
    g.add_nodes_from(inst.order)
    g.add_edges_from((p, k) for k in inst.order for p in inst.nodes[k].preds)
    return {k: [d for d in inst.order if d in nx.descendants(g, k)] for k in inst.order}


def _descend(space: _Space, s, se, below: dict[Key, list[Key]]) -> tuple[float, int]:
    """Coordinate descent with two move types per candidate value.

    A plain move changes one coordinate and clamps the rest.  A shift move
    also adds the same change to every downstream coordinate, keeping their
    net lead times fixed; without it, raising an upstream service time is
    never accepted because it first raises every downstream inbound time.
    """
    cost = _repair(space, s, se)
    sweeps = 0
    improved = True
    while improved:
        improved = False
        sweeps += 1
        for key in space.inst.order:
            for coord in ("s", "se"):
                cur = s if coord == "s" else se
                if cur[key] is None:
                    continue
                si = space.si_of(key, s)
                dom = space.s_domain(key, si) if coord == "s" else space.se_domain(key, si)
                best_state = None
                for v in dom:
                    if v == cur[key]:
                        continue
                    shifts = (False, True) if coord == "s" and below[key] else (False,)
                    for shift in shifts:
                        s2, se2 = dict(s), dict(se)
                        (s2 if coord == "s" else se2)[key] = v
                        if shift:
                            delta = v - cur[key]
                            for d in below[key]:
                                s2[d] = max(s2[d] + delta, 0.0)
                                if se2[d] is not None:
                                    se2[d] = max(se2[d] + delta, 0.0)
                        c = _repair(space, s2, se2)
                        if _better(c, cost):
                            cost, best_state = c, (s2, se2)
                if best_state is not None:
                    s.clear(), s.update(best_state[0])
                    se.clear(), se.update(best_state[1])
                    improved = True
    return cost, sweeps


def solve_local_search(
    inst: Instance, restarts: int = 20, seed: int = 0, s_cap: float | None = None
) -> SolveReport:
    """Coordinate descent from the all-zero plan and from seeded random starts.

    ``restarts`` counts descents: the first starts from the all-zero plan,
    the rest from uniformly random integer plans.  ``restarts == 0`` returns
    the all-zero plan as is.
    """
    t0 = time.perf_counter()
    space = _Space(inst, s_cap)
    order = inst.order
    s0 = {k: 0.0 for k in order}
    se0 = {k: (0.0 if space.node(k).has_independent else None) for k in order}
    cost0 = _repair(space, s0, se0)
    if cost0 == INF:
        raise SolverError("the all-zero plan is infeasible")
    best_cost, best_s, best_se = cost0, dict(s0), dict(se0)
    rng = np.random.default_rng(seed)
    below = _descendants(inst)
    for start in range(restarts):
        s, se = dict(s0), dict(se0)
        if start > 0:
            # random values drawn against the upper bounds reachable in topological order
            for key in order:
                si = space.si_of(key, s)
                ds, dse = space.s_domain(key, si), space.se_domain(key, si)
                s[key] = ds[int(rng.integers(len(ds)))] if ds else 0.0
                if dse and dse[0] is not None:
                    se[key] = dse[int(rng.integers(len(dse)))]
        cost, _ = _descend(space, s, se, below)
        if _better(cost, best_cost):
            best_cost, best_s, best_se = cost, s, se
    return _report(space, best_s, best_se, "local_search", False, t0)


SOLVERS: dict[str, Callable[..., SolveReport]] = {
    "bruteforce": solve_bruteforce,
    "tree_dp": solve_tree_dp,
    "local_search": solve_local_search,
}


def solve(inst: Instance, solver: str = "auto", **kwargs) -> SolveReport:
    """Dispatch to a solver; ``auto`` picks tree_dp on forests and local_search otherwise."""
    if solver == "auto":
        solver = "tree_dp" if is_forest(inst.net) else "local_search"
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise ValueError(f"unknown solver {solver!r}; choose from {sorted(SOLVERS)} or 'auto'") from None
    return fn(inst, **kwargs)
