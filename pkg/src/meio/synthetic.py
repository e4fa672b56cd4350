"""Random scenario documents for property tests and scaling checks.

Every generated network has one plant.  Raw materials arrive at the plant
from external suppliers, finished goods are produced from them, and each
finished good is distributed down a random tree of locations.  When
``forest`` is false, two finished goods share two raw materials, which closes
a cycle in the undirected stock-point graph.
"""

from __future__ import annotations

import numpy as np


def random_document(
    rng: np.random.Generator,
    n_stock_points: int = 8,
    forest: bool = True,
    max_lt: int = 2,
    fill_rate_share: float = 0.3,
    hybrid_share: float = 0.2,
    rounding: str = "ceil",
) -> dict:
    """A valid scenario document with ``n_stock_points`` stock points.

    ``n_stock_points`` must be at least 2 for forests and at least 4 otherwise.
    """
    if forest:
        n_raw, n_fg = 1 + int(rng.integers(2)), 1
        if n_stock_points < n_raw + n_fg:
            n_raw = max(1, n_stock_points - 1)
    else:
        if n_stock_points < 4:
            raise ValueError("a non-forest network needs at least 4 stock points")
        n_raw, n_fg = 2, 2
    n_dist = n_stock_points - n_raw - n_fg
    if n_dist < 0:
        raise ValueError("too few stock points for the requested shape")

    raws = [f"R{i + 1}" for i in range(n_raw)]
    fgs = [f"F{i + 1}" for i in range(n_fg)]
    materials = [{"id": m} for m in raws + fgs]
    locations = [{"id": "Plant", "kind": "plant"}]
    arcs: list[dict] = []
    bom: list[dict] = []
    stock_points: list[dict] = []

    def lead_time() -> tuple[float, float]:
        lt = int(rng.integers(max_lt + 1))
        sd = float(np.round(rng.uniform(0.0, 0.5), 2)) if lt > 0 and rng.random() < 0.5 else 0.0
        return float(lt), sd

    def target() -> dict:
        if rng.random() < fill_rate_share:
            return {"mode": "fill_rate", "value": float(np.round(rng.uniform(0.85, 0.99), 3))}
        return {"mode": "csl", "value": float(np.round(rng.uniform(0.8, 0.99), 3))}

    def stock_point(loc: str, mat: str, demand: bool, **extra) -> dict:
        sp = {
            "location": loc,
            "material": mat,
            "holding_cost": float(np.round(rng.uniform(0.05, 1.0), 3)),
            "review_period": 1,
            "target": target(),
        }
        if demand:
            mu = float(np.round(rng.uniform(50, 500), 1))
            sp["independent_demand"] = {"mu": mu, "sigma": float(np.round(mu * rng.uniform(0.1, 0.6), 1))}
        sp.update(extra)
        return sp

    for m in raws:
        lt, sd = lead_time()
        arcs.append({"from": None, "to": "Plant", "material": m, "lt_mean": lt, "lt_sd": sd})
        stock_points.append(stock_point("Plant", m, False, si0=int(rng.integers(2))))
    for j, f in enumerate(fgs):
        lt, _ = lead_time()
        arcs.append({"from": "Plant", "to": "Plant", "material": f, "lt_mean": lt, "lt_sd": 0.0})
        inputs = raws if not forest else (raws if n_fg == 1 else [raws[j % n_raw]])
        for m in inputs:
            bom.append({"input": m, "output": f, "phi": float(np.round(rng.uniform(0.5, 2.0), 2))})
        stock_points.append(stock_point("Plant", f, n_dist == 0 or rng.random() < hybrid_share))

    # distribution tree below the finished goods
    holders = [("Plant", f) for f in fgs]
    children = {h: 0 for h in holders}
    for i in range(n_dist):
        parent = holders[int(rng.integers(len(holders)))]
        loc = f"L{i + 1}"
        locations.append({"id": loc, "kind": "distribution_center"})
        lt, sd = lead_time()
        arcs.append({"from": parent[0], "to": loc, "material": parent[1], "lt_mean": lt, "lt_sd": sd})
        extra = {}
        if rng.random() < 0.3:
            extra["max_se"] = int(rng.integers(3))
        stock_points.append(stock_point(loc, parent[1], False, **extra))
        children[parent] += 1
        holders.append((loc, parent[1]))
        children[(loc, parent[1])] = 0

    # every leaf needs external demand, inner nodes sometimes do
    for sp in stock_points:
        key = (sp["location"], sp["material"])
        if key in children and children[key] == 0 and "independent_demand" not in sp:
            mu = float(np.round(rng.uniform(50, 500), 1))
            sp["independent_demand"] = {"mu": mu, "sigma": float(np.round(mu * rng.uniform(0.1, 0.6), 1))}
        elif key in children and children[key] > 0 and rng.random() < hybrid_share:
            mu = float(np.round(rng.uniform(50, 500), 1))
            sp.setdefault("independent_demand", {"mu": mu, "sigma": float(np.round(mu * 0.3, 1))})

    return {
        "schema_version": 1,
        "name": "synthetic",
        "materials": materials,
        "locations": locations,
        "arcs": arcs,
        "bom": bom,
        "stock_points": stock_points,
        "options": {"lead_time_rounding": rounding},
    }
