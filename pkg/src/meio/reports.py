"""JSON and CSV emitters for evaluations, simulations and sweeps.

All CSV files list stock points in topological order and are written with the
``csv`` module using ``repr``-style float formatting, so the output does not
depend on the process locale.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .demand import PropagatedDemand
from .gsm import EvaluationResult, Instance, NodeEvaluation, ServiceTimePlan, ServiceTimes
from .network import Key, label
from .sim import MetricSummary, SimResult


class ReportError(ValueError):
    """Raised when a saved report cannot be read back."""


def _num(x: float | None) -> float | None:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# optimization results

_NODE_FIELDS = (
    "s", "se", "si", "arg1", "arg2", "z1", "z2", "kv", "u", "q",
    "ss_d", "ss_i", "ss", "nlt", "nlt_ext", "basestock", "cost",
)


def evaluation_to_dict(inst: Instance, result: EvaluationResult, **meta: Any) -> dict:
    """Plan and per-stock-point evaluation as a JSON-ready document."""
    rows = []
    for key in inst.order:
        ev = result[key]
        row = {"location": key[0], "material": key[1]}
        row.update({f: _num(getattr(ev, f)) for f in _NODE_FIELDS})
        rows.append(row)
    doc = {"total_cost": result.total_cost, "stock_points": rows}
    doc.update(meta)
    return doc


def evaluation_from_dict(doc: Mapping[str, Any]) -> EvaluationResult:
    """Rebuild an :class:`EvaluationResult` from :func:`evaluation_to_dict` output."""
    try:
        rows = doc["stock_points"]
    except (KeyError, TypeError):
        raise ReportError("evaluation file has no 'stock_points' list") from None
    nodes: dict[Key, NodeEvaluation] = {}
    times: dict[Key, ServiceTimes] = {}
    for row in rows:
        try:
            key = (str(row["location"]), str(row["material"]))
        except KeyError:
            raise ReportError("stock point entry without location/material") from None
        if row.get("basestock") is None:
            raise ReportError(f"missing basestock for {label(key)}")
        vals = {}
        for f in _NODE_FIELDS:
            v = row.get(f)
            if v is None and f not in ("se", "nlt_ext"):
                v = 0.0 if f != "s" else None
            vals[f] = None if v is None else float(v)
        if vals["s"] is None:
            raise ReportError(f"missing service time for {label(key)}")
        nodes[key] = NodeEvaluation(key=key, **vals)
        times[key] = ServiceTimes(vals["s"], vals["se"], vals["si"])
    total = math.fsum(n.cost for n in nodes.values())
    return EvaluationResult(nodes, total, ServiceTimePlan(times))


def read_evaluation(path: str | Path) -> EvaluationResult:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: not valid JSON ({exc})") from None
    return evaluation_from_dict(doc)


def plan_table_csv(inst: Instance, result: EvaluationResult) -> str:
    """Wide layout: one column per stock point, one row per quantity."""
    keys = list(inst.order)
    rows = [
        ["location"] + [k[0] for k in keys] + [""],
        ["material"] + [k[1] for k in keys] + [""],
        ["S"] + [result[k].s for k in keys] + [None],
        ["SE"] + [result[k].se for k in keys] + [None],
        ["SI"] + [result[k].si for k in keys] + [None],
        ["SS"] + [result[k].ss for k in keys] + [math.fsum(result[k].ss for k in keys)],
        ["holding_cost"] + [result[k].cost for k in keys] + [result.total_cost],
    ]
    return _csv_text(["field"] + [label(k) for k in keys] + ["total"], rows)


def evaluation_csv(inst: Instance, result: EvaluationResult) -> str:
    """Long layout: one row per stock point including the safety factor ``k``."""
    header = ["location", "material", "S", "SE", "SI", "k", "SS_dependent", "SS_independent",
              "SS", "NLT", "basestock", "holding_cost"]
    rows = []
    for key in inst.order:
        ev = result[key]
        rows.append([key[0], key[1], ev.s, ev.se, ev.si, ev.kv, ev.ss_d, ev.ss_i, ev.ss, ev.nlt,
                     ev.basestock, ev.cost])
    return _csv_text(header, rows)


def demand_csv(inst: Instance, demand: Mapping[Key, PropagatedDemand] | None = None) -> str:
    demand = demand if demand is not None else inst.demand
    header = ["location", "material", "mu_independent", "sigma_independent", "mu_dependent",
              "sigma_dependent", "mu_total", "sigma_total"]
    rows = []
    for key in inst.order:
        d = demand[key]
        rows.append([key[0], key[1], d.mu_i, d.sigma_i, d.mu_d, d.sigma_d, d.mu, d.sigma])
    return _csv_text(header, rows)


# ---------------------------------------------------------------------------
# simulation results


def _metric(m: MetricSummary) -> dict:
    return {
        "mean": _num(m.mean),
        "ci95": None if m.ci95 is None else [m.ci95[0], m.ci95[1]],
        "replications": [_num(v) for v in m.values],
    }


def simulation_to_dict(inst: Instance, result: SimResult, **meta: Any) -> dict:
    cfg = result.config
    rows = []
    for key in inst.order:
        sp = result[key]
        rows.append({
            "location": key[0],
            "material": key[1],
            "measured": sp.measured,
            "effective_csl": _metric(sp.effective_csl),
            "effective_fill_rate": _metric(sp.effective_fill_rate),
            "mean_inventory": _metric(sp.mean_inventory),
        })
    doc = {
        "config": {
            "horizon": cfg.horizon, "warmup": cfg.warmup, "replications": cfg.replications,
            "seed": cfg.seed, "base_period": cfg.base_period, "lost_sales": cfg.lost_sales,
            "arrivals_first": cfg.arrivals_first, "spread_demand": cfg.spread_demand,
        },
        "stock_points": rows,
    }
    doc.update(meta)
    return doc


def service_table_csv(inst: Instance, result: SimResult) -> str:
    """Service levels in percent; interval columns only with two or more replications."""
    with_ci = result.config.replications > 1
    header = ["location", "material", "measured", "csl"]
    if with_ci:
        header += ["csl_ci_low", "csl_ci_high"]
    header += ["fill_rate"]
    if with_ci:
        header += ["fill_rate_ci_low", "fill_rate_ci_high"]
    header += ["mean_inventory"]
    rows = []
    for key in inst.order:
        sp = result[key]
        row: list[Any] = [key[0], key[1], sp.measured]
        for m in (sp.effective_csl, sp.effective_fill_rate):
            row.append(100.0 * m.mean)
            if with_ci:
                lo, hi = m.ci95 if m.ci95 is not None else (m.mean, m.mean)
                row += [100.0 * lo, 100.0 * hi]
        row.append(sp.mean_inventory.mean)
        rows.append(row)
    return _csv_text(header, rows)


TRACE_FIELDS = ("on_hand", "inventory_position", "received", "shipped", "lost")


def trace_csv(inst: Instance, result: SimResult, keys: Sequence[Key] | None = None) -> str:
    """Per-period inventory series of every traced replication, long format."""
    keys = list(inst.order if keys is None else keys)
    header = ["replication", "period", "location", "material", *TRACE_FIELDS]
    rows = []
    for rep, tr in enumerate(result.traces):
        if tr is None:
            continue
        for key in keys:
            series = tr[key]
            n = len(series["on_hand"])
            cols = [series[f] for f in TRACE_FIELDS]
            for t in range(n):
                rows.append([rep, t, key[0], key[1], *(float(c[t]) for c in cols)])
    return _csv_text(header, rows)


# ---------------------------------------------------------------------------
# sweeps

SWEEP_HEADER = ["value", "location", "material", "S", "SS", "cost", "kv", "total_cost"]


def sweep_rows(value: Any, inst: Instance, result: EvaluationResult) -> list[list[Any]]:
    shown = value if isinstance(value, (str, int, float)) else json.dumps(value, sort_keys=True)
    return [
        [shown, k[0], k[1], result[k].s, result[k].ss, result[k].cost, result[k].kv, result.total_cost]
        for k in inst.order
    ]


def sweep_csv(rows: Iterable[Sequence[Any]]) -> str:
    return _csv_text(SWEEP_HEADER, rows)
