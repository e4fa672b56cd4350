"""Discrete-time Monte Carlo simulation of a base-stock policy on the network.

Every stock point follows a periodic-review order-up-to policy: on review
steps it orders ``max(moq, B - IP)`` whenever its inventory position ``IP``
(on hand + on order - owed to successors) is below its base stock ``B``.

One simulated step runs as follows:

1. external demand is served from stock, any shortfall is a lost sale (or
   a backorder with ``lost_sales=False``);
2. stock points are visited from downstream to upstream; each first ships
   what it can of its FIFO backlog of internal orders, then on review steps
   places its own replenishment order.  Visiting downstream first means an
   order reaches its supplier in the step it is placed;
3. shipments due this step are received and immediately used to serve
   waiting internal orders.  With ``arrivals_first=True`` this happens before
   step 1 instead, so a shipment can meet demand on the day it lands.

Receiving at the end of the step gives every replenishment cycle exactly
the exposure the service-time model assumes (lead time plus review period).

Distribution orders ship partially as stock becomes available; each shipment
travels with its own lead-time draw.  A production order starts once every
bill-of-materials component has been allocated to it and completes after
the production lead time.  External suppliers always deliver after one
lead-time draw.

Demand arrives once per demand period (a week by default) as a draw from a
zero-truncated normal matched to the stock point's mean and standard
deviation.  In daily mode it is spread evenly over the days of that period.
Lead times are drawn in days from a truncated normal and ceiled.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .gsm import EvaluationResult, Instance
from .network import Key, label
from .normstats import sample_truncated_normal, truncated_normal_params

STEPS_PER_WEEK = {"day": 7, "week": 1}
_EPS = 1e-9


class SimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Horizon and warmup are counted in base periods (days by default)."""

    horizon: int = 7000
    warmup: int = 350
    replications: int = 8
    seed: int = 0
    base_period: str = "day"
    demand_period: int = 1  # weeks
    spread_demand: bool = True
    lost_sales: bool = True  # False: unmet external demand is backordered
    arrivals_first: bool = False  # True: shipments are booked before the step's demand
    trace: bool = False

    def __post_init__(self):
        if self.base_period not in STEPS_PER_WEEK:
            raise SimConfigError(f"base_period must be one of {sorted(STEPS_PER_WEEK)}")
        if not self.horizon > self.warmup >= 0:
            raise SimConfigError("need horizon > warmup >= 0")
        if self.replications < 1:
            raise SimConfigError("replications must be >= 1")
        if self.demand_period < 1:
            raise SimConfigError("demand_period must be >= 1 week")

    @property
    def steps_per_week(self) -> int:
        return STEPS_PER_WEEK[self.base_period]


@dataclass(frozen=True)
class ReplicationStats:
    """Per-stock-point metrics of one replication."""

    csl: dict[Key, float]
    fill_rate: dict[Key, float]
    mean_inventory: dict[Key, float]
    cycles: dict[Key, int]
    trace: dict[Key, dict[str, np.ndarray]] | None = None


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci95: tuple[float, float] | None
    values: tuple[float, ...]


@dataclass(frozen=True)
class StockPointSim:
    key: Key
    effective_csl: MetricSummary
    effective_fill_rate: MetricSummary
    mean_inventory: MetricSummary
    measured: str  # "external" or "internal"


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    stock_points: Mapping[Key, StockPointSim]
    traces: tuple[dict[Key, dict[str, np.ndarray]] | None, ...] = field(default=(), repr=False)

    def __getitem__(self, key: Key) -> StockPointSim:
        return self.stock_points[key]


def summarize_metric(values: Sequence[float]) -> MetricSummary:
    """Mean and t-based 95% interval across replications; no interval for a single value."""
    vals = np.asarray(values, dtype=float)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        return MetricSummary(float("nan"), None, tuple(float(v) for v in values))
    mean = float(vals.mean())
    if vals.size < 2:
        return MetricSummary(mean, None, tuple(float(v) for v in values))
    half = float(stats.t.ppf(0.975, vals.size - 1) * vals.std(ddof=1) / math.sqrt(vals.size))
    return MetricSummary(mean, (mean - half, mean + half), tuple(float(v) for v in values))


def summarize(instance: Instance, config: SimConfig, reps: Sequence[ReplicationStats]) -> SimResult:
    out = {}
    for key in instance.order:
        node = instance.nodes[key]
        out[key] = StockPointSim(
            key,
            summarize_metric([r.csl[key] for r in reps]),
            summarize_metric([r.fill_rate[key] for r in reps]),
            summarize_metric([r.mean_inventory[key] for r in reps]),
            "external" if node.has_independent else "internal",
        )
    return SimResult(config, out, tuple(r.trace for r in reps))


# ---------------------------------------------------------------------------
# one replication


class _Order:
    __slots__ = ("dest", "qty", "pending", "production")

    def __init__(self, dest: int, qty: float, pending: int, production: bool):
        self.dest = dest
        self.qty = qty
        self.pending = pending
        self.production = production


class _Request:
    """A line in a supplier's backlog."""

    __slots__ = ("order", "remaining", "due", "qty", "counted", "late")

    def __init__(self, order: _Order, qty: float, due: int, counted: bool):
        self.order = order
        self.qty = qty
        self.remaining = qty
        self.due = due
        self.counted = counted
        self.late = False


class _LeadTimes:
    """Ceiled truncated-normal lead times in base periods, drawn in blocks."""

    def __init__(self, rng: np.random.Generator, mean_steps: float, sd_steps: float, block: int = 512):
        self.rng = rng
        self.block = block
        self.fixed = None
        if sd_steps <= 0 or mean_steps <= 0:
            self.fixed = max(int(math.ceil(mean_steps - _EPS)), 0)
        else:
            self.mu0, self.sigma0 = truncated_normal_params(mean_steps, sd_steps)
        self.buf = np.empty(0, dtype=int)
        self.pos = 0

    def draw(self) -> int:
        if self.fixed is not None:
            return self.fixed
        if self.pos >= self.buf.size:
            x = sample_truncated_normal(self.rng, self.mu0, self.sigma0, self.block)
            self.buf = np.ceil(x - _EPS).astype(int)
            self.pos = 0
        v = int(self.buf[self.pos])
        self.pos += 1
        return max(v, 0)


def _demand_series(rng, node, cfg: SimConfig) -> np.ndarray | None:
    if not node.has_independent or node.mu_i <= 0:
        return None
    spw = cfg.steps_per_week
    period = cfg.demand_period
    n_periods = -(-cfg.horizon // (spw * period))
    mean, sd = node.mu_i * period, node.sigma_i * math.sqrt(period)
    if sd > 0:
        mu0, sigma0 = truncated_normal_params(mean, sd)
        draws = sample_truncated_normal(rng, mu0, sigma0, n_periods)
    else:
        draws = np.full(n_periods, mean)
    span = spw * period
    if cfg.spread_demand:
        series = np.repeat(draws / span, span)
    else:
        series = np.zeros(n_periods * span)
        series[::span] = draws
    return series[: cfg.horizon]


def simulate_replication(
    instance: Instance, evaluation: EvaluationResult, config: SimConfig, rep: int
) -> ReplicationStats:
    order = list(instance.order)
    idx = {k: i for i, k in enumerate(order)}
    n = len(order)
    nodes = [instance.nodes[k] for k in order]
    net = instance.net
    spw = config.steps_per_week
    base = []
    for k in order:
        ev = evaluation.nodes.get(k)
        if ev is None or ev.basestock is None or not math.isfinite(ev.basestock):
            raise SimConfigError(f"missing base stock for {label(k)}")
        base.append(float(ev.basestock))
    ss = [float(evaluation.nodes[k].ss) for k in order]
    s_steps = [int(math.floor(evaluation.nodes[k].s * spw + _EPS)) for k in order]

    demand_rng = np.random.default_rng([config.seed, rep, 0])
    lt_rng = np.random.default_rng([config.seed, rep, 1])
    demand = [_demand_series(demand_rng, nd, config) for nd in nodes]
    leads = []
    for k in order:
        arc = net.inbound[k]
        leads.append(_LeadTimes(lt_rng, arc.lt_mean * spw, arc.lt_sd * spw))
    preds = [[(idx[p], phi) for p, phi in net.preds[k]] for k in order]
    is_production = [net.inbound[k].is_production for k in order]
    review = [nd.r * spw for nd in nodes]
    moq = [nd.moq for nd in nodes]

    on_hand = list(base)
    on_order = [0.0] * n
    owed = [0.0] * n
    ext_owed = [0.0] * n
    backlog: list[deque[_Request]] = [deque() for _ in range(n)]
    arrivals: dict[int, list[tuple[int, float]]] = defaultdict(list)

    warm = config.warmup
    ext_demand = [0.0] * n
    ext_filled = [0.0] * n
    int_units = [0.0] * n
    int_ontime = [0.0] * n
    inv_sum = [0.0] * n
    cycles = [0] * n
    good_cycles = [0] * n
    cycle_open = [False] * n
    cycle_bad = [False] * n
    trace = None
    if config.trace:
        trace = {
            k: {
                name: np.zeros(config.horizon)
                for name in ("on_hand", "inventory_position", "received", "shipped", "lost")
            }
            for k in order
        }
    received = [0.0] * n
    shipped = [0.0] * n
    lost = [0.0] * n

    def schedule(dest: int, qty: float, t: int) -> None:
        lt = leads[dest].draw()
        arrivals[t + lt].append((dest, qty))

    # quantities below this are floating-point residue, not stock
    tol = [1e-9 * max(1.0, base[i], nodes[i].mu) for i in range(n)]

    def take(i: int, want: float) -> float:
        """Remove up to ``want`` from stock, snapping residue so no dust shipments occur."""
        amt = want if on_hand[i] >= want - tol[i] else on_hand[i]
        on_hand[i] -= amt
        if on_hand[i] < tol[i]:
            on_hand[i] = 0.0
        shipped[i] += amt
        return amt

    def serve_backlog(i: int, t: int) -> None:
        if ext_owed[i] > tol[i] and on_hand[i] > tol[i]:
            ext_owed[i] -= take(i, ext_owed[i])
        bl = backlog[i]
        while bl and on_hand[i] > tol[i]:
            req = bl[0]
            amt = take(i, req.remaining)
            owed[i] -= amt
            req.remaining -= amt
            if req.counted and t <= req.due:
                int_ontime[i] += amt
            o = req.order
            if not o.production:
                schedule(o.dest, amt, t)
            if req.remaining > tol[i]:
                break
            owed[i] -= req.remaining
            req.remaining = 0.0
            bl.popleft()
            if o.production:
                o.pending -= 1
                if o.pending == 0:
                    schedule(o.dest, o.qty, t)

    def receive(t: int, post: bool) -> None:
        """Book every shipment due at ``t``; stock that arrives goes straight to waiting orders."""
        while t in arrivals:
            arrived = set()
            for dest, qty in arrivals.pop(t):
                on_hand[dest] += qty
                on_order[dest] -= qty
                received[dest] += qty
                arrived.add(dest)
            for i in sorted(arrived):
                if post:
                    if cycle_open[i]:
                        cycles[i] += 1
                        good_cycles[i] += not cycle_bad[i]
                    cycle_open[i] = True
                    cycle_bad[i] = False
            for i in range(n - 1, -1, -1):
                if i in arrived:
                    serve_backlog(i, t)

    for t in range(config.horizon):
        post = t >= warm
        for i in range(n):
            received[i] = shipped[i] = lost[i] = 0.0
        if config.arrivals_first:
            receive(t, post)

        # 1. external demand
        for i in range(n):
            d = demand[i]
            if d is None:
                continue
            q = d[t]
            if q <= 0:
                continue
            sold = take(i, q)
            if config.lost_sales:
                lost[i] = q - sold
            else:
                ext_owed[i] += q - sold
            if post:
                ext_demand[i] += q
                ext_filled[i] += sold
                if q - sold > tol[i]:
                    cycle_bad[i] = True

        # 2. backlog service and reviews, downstream first so that suppliers
        #    see today's orders when their turn comes
        for i in range(n - 1, -1, -1):
            serve_backlog(i, t)
            if t % review[i] == 0:
                ip = on_hand[i] + on_order[i] - owed[i] - ext_owed[i]
                if ip < base[i] - _EPS * max(1.0, base[i]):
                    q = max(moq[i], base[i] - ip)
                    on_order[i] += q
                    if not preds[i]:
                        schedule(i, q, t)
                    else:
                        prod = is_production[i]
                        o = _Order(i, q, len(preds[i]) if prod else 1, prod)
                        for p, phi in preds[i]:
                            qty = phi * q
                            due = t + s_steps[p]
                            req = _Request(o, qty, due, post and due < config.horizon)
                            if req.counted:
                                int_units[p] += qty
                            backlog[p].append(req)
                            owed[p] += qty

        # 3. end-of-step receipts, including zero lead time shipments made today
        receive(t, post)

        for i in range(n):
            # internal order lines still open at the end of their due step are late
            for req in backlog[i]:
                if req.due > t:
                    break
                if not req.late:
                    req.late = True
                    if post:
                        cycle_bad[i] = True
            if post:
                inv_sum[i] += on_hand[i]
            if trace is not None:
                tr = trace[order[i]]
                tr["on_hand"][t] = on_hand[i]
                tr["inventory_position"][t] = on_hand[i] + on_order[i] - owed[i] - ext_owed[i]
                tr["received"][t] = received[i]
                tr["shipped"][t] = shipped[i]
                tr["lost"][t] = lost[i]

    span = config.horizon - warm
    csl, fr, inv, ncyc = {}, {}, {}, {}
    for i, k in enumerate(order):
        if nodes[i].has_independent:
            fr[k] = ext_filled[i] / ext_demand[i] if ext_demand[i] > 0 else 1.0
        else:
            fr[k] = int_ontime[i] / int_units[i] if int_units[i] > 0 else 1.0
        csl[k] = good_cycles[i] / cycles[i] if cycles[i] > 0 else 1.0
        inv[k] = inv_sum[i] / span
        ncyc[k] = cycles[i]
    return ReplicationStats(csl, fr, inv, ncyc, trace)


def _worker_count(replications: int, workers: int | None) -> int:
    cap = os.environ.get("MEIO_THREADS")
    n = workers if workers is not None else (os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise SimConfigError(f"MEIO_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(n, replications))


def _run_one(args):
    return simulate_replication(*args)


def run_simulation(
    instance: Instance,
    evaluation: EvaluationResult,
    config: SimConfig = SimConfig(),
    workers: int | None = None,
) -> SimResult:
    """Simulate every replication and aggregate.

    Replication ``i`` draws from streams seeded by ``(seed, i)``, so results do
    not depend on how replications are distributed over worker processes.
    """
    jobs = [(instance, evaluation, config, rep) for rep in range(config.replications)]
    n = _worker_count(config.replications, workers)
    if n == 1:
        reps = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            reps = list(pool.map(_run_one, jobs))
    return summarize(instance, config, reps)
