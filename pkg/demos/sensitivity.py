"""How the optimal placement reacts to the production lead time and to order sizes.

1. Lengthening production from 2 to 10 weeks makes it worth pooling
   finished-good stock at the plant; forbidding plant stock costs more.
2. With a 500,000 unit minimum order at Retailer1, each order already covers
   enough demand that fill-rate targets up to 80% need no safety stock.

Run with:  python3 demos/sensitivity.py
"""

import copy

from meio import make_instance, solve
from meio.network import build_network, bundled_document


def _find(items, **match):
    return next(x for x in items if all(x.get(k) == v for k, v in match.items()))


def lead_time_sweep() -> None:
    print("production lead time (weeks) -> total cost, plant FG safety stock")
    for lt in (2, 4, 6, 8, 10):
        for pinned in (False, True):
            doc = copy.deepcopy(bundled_document("illustrative"))
            _find(doc["arcs"], **{"from": "Plant", "to": "Plant", "material": "SKU1"})["lt_mean"] = lt
            _find(doc["stock_points"], location="Plant", material="SKU1")["no_safety_stock"] = pinned
            rep = solve(make_instance(build_network(doc)))
            tag = "plant pinned" if pinned else "free"
            print(f"  {lt:>2}  {tag:<13} {rep.total_cost:>12,.0f}  {rep.result[('Plant', 'SKU1')].ss:>12,.0f}")


def fill_rate_sweep() -> None:
    print("Retailer1 fill-rate target with MOQ 500,000 -> safety factor, safety stock")
    for fr in (0.7, 0.8, 0.9, 0.95, 0.98):
        doc = copy.deepcopy(bundled_document("sim_scenario3"))
        _find(doc["stock_points"], location="Retailer1")["target"] = {"mode": "fill_rate", "value": fr}
        rep = solve(make_instance(build_network(doc)))
        ev = rep.result[("Retailer1", "SKU1")]
        print(f"  {fr:.2f}  k = {ev.kv:5.3f}  SS = {ev.ss:>10,.0f}")


if __name__ == "__main__":
    lead_time_sweep()
    print()
    fill_rate_sweep()
