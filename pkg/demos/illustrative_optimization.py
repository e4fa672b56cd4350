"""Place safety stock in the bundled three-echelon illustrative network.

Two raw materials feed a plant that makes one finished good for three
retailers.  The optimizer decides where to hold stock; the plant ends up
quoting a two-week service time and holding nothing.

Run with:  python3 demos/illustrative_optimization.py
"""

from meio import bundled_scenario, make_instance, solve
from meio.network import label


def main() -> None:
    inst = make_instance(bundled_scenario("illustrative"))
    report = solve(inst)
    print(f"solver: {report.solver} (optimal: {report.optimal})")
    print(f"{'stock point':<16} {'S':>4} {'SI':>4} {'safety stock':>14} {'cost':>11}")
    for key in inst.order:
        ev = report.result[key]
        print(f"{label(key):<16} {ev.s:>4g} {ev.si:>4g} {ev.ss:>14,.0f} {ev.cost:>11,.2f}")
    print(f"total holding cost: {report.total_cost:,.2f}")


if __name__ == "__main__":
    main()
