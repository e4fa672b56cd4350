import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PLANT_FG, RAW1, RAW2, RETAILERS, scenario_doc, stock_point
from meio.network import (
    ScenarioError,
    build_network,
    bundled_scenario,
    is_forest,
    load_scenario,
    stockpoint_graph,
    to_digraph,
)
from meio.synthetic import random_document


def single_node_doc():
    return {
        "materials": [{"id": "A"}],
        "locations": [{"id": "Shop", "kind": "retailer"}],
        "arcs": [{"from": None, "to": "Shop", "material": "A", "lt_mean": 1, "lt_sd": 0}],
        "stock_points": [{
            "location": "Shop", "material": "A", "holding_cost": 1.0, "si0": 2,
            "target": {"mode": "csl", "value": 0.95},
            "independent_demand": {"mu": 10, "sigma": 3},
        }],
    }


def chain_doc(n=3):
    locs = [f"N{i}" for i in range(n)]
    arcs = [{"from": None, "to": locs[0], "material": "A", "lt_mean": 1, "lt_sd": 0}]
    arcs += [{"from": a, "to": b, "material": "A", "lt_mean": 1, "lt_sd": 0} for a, b in zip(locs, locs[1:])]
    sps = [{"location": l, "material": "A", "holding_cost": 1.0, "target": {"mode": "csl", "value": 0.9}}
           for l in locs]
    sps[0]["si0"] = 0
    sps[-1]["independent_demand"] = {"mu": 5, "sigma": 1}
    return {"materials": [{"id": "A"}], "locations": [{"id": l} for l in locs], "arcs": arcs,
            "stock_points": sps}


def test_illustrative_network():
    net = bundled_scenario("illustrative")
    assert len(net.order) == 6
    assert {p for p, _ in net.preds[PLANT_FG]} == {RAW1, RAW2}
    for r in RETAILERS:
        assert [p for p, _ in net.preds[r]] == [PLANT_FG]
    assert net.preds[RAW1] == () and net.preds[RAW2] == ()
    assert net.sources() == [RAW1, RAW2]
    assert is_forest(net)


def test_single_node():
    net = build_network(single_node_doc())
    assert net.order == (("Shop", "A"),)
    assert net[("Shop", "A")].si0 == 2


def test_two_suppliers_rejected():
    doc = scenario_doc()
    doc["locations"].append({"id": "Plant2", "kind": "plant"})
    doc["arcs"].append({"from": "Plant2", "to": "Retailer1", "material": "SKU1", "lt_mean": 1, "lt_sd": 0})
    with pytest.raises(ScenarioError, match="non-divergent network"):
        build_network(doc)


def test_cyclic_bom_rejected():
    doc = scenario_doc()
    doc["bom"].append({"input": "SKU1", "output": "Raw1", "phi": 1.0})
    with pytest.raises(ScenarioError, match="cyclic network"):
        build_network(doc)


def test_cyclic_distribution_rejected():
    doc = chain_doc(3)
    doc["arcs"][0] = {"from": "N2", "to": "N0", "material": "A", "lt_mean": 1, "lt_sd": 0}
    del doc["stock_points"][0]["si0"]
    with pytest.raises(ScenarioError, match="cyclic network"):
        build_network(doc)


def test_missing_si0_rejected():
    doc = scenario_doc()
    del stock_point(doc, "Plant", "Raw1")["si0"]
    with pytest.raises(ScenarioError, match="unbounded source"):
        build_network(doc)


def test_missing_inbound_arc_rejected():
    doc = single_node_doc()
    doc["arcs"] = []
    with pytest.raises(ScenarioError, match="no inbound arc"):
        build_network(doc)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["stock_points"][0].update(holding_cost=-1), ">= 0"),
        (lambda d: d["stock_points"][0].update(target={"mode": "csl", "value": 1.2}), r"\(0, 1\)"),
        (lambda d: d["stock_points"][0].update(target={"mode": "best", "value": 0.9}), "mode"),
        (lambda d: d["stock_points"][0].update(review_period=0), "review_period"),
        (lambda d: d["stock_points"][0].update(location="Nowhere"), "unknown location"),
        (lambda d: d.update(schema_version=99), "schema_version"),
        (lambda d: d.update(options={"lead_time_rounding": "floor"}), "lead_time_rounding"),
        (lambda d: d["stock_points"].append(copy.deepcopy(d["stock_points"][0])), "duplicate|more than once"),
    ],
)
def test_invalid_documents(mutate, message):
    doc = single_node_doc()
    mutate(doc)
    with pytest.raises(ScenarioError, match=message):
        build_network(doc)


def test_is_forest_cases():
    assert is_forest(build_network(chain_doc(3)))
    doc = random_document(np.random.default_rng(1), n_stock_points=6, forest=False)
    assert not is_forest(build_network(doc))


def test_nested_review_warning():
    doc = scenario_doc()
    stock_point(doc, "Plant", "SKU1")["review_period"] = 2
    stock_point(doc, "Retailer1")["review_period"] = 3
    net = build_network(doc)
    assert any("not nested" in w for w in net.warnings)


def test_load_scenario_from_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(scenario_doc()))
    assert load_scenario(path).order == bundled_scenario().order


def test_deterministic():
    a = build_network(scenario_doc())
    b = build_network(json.loads(json.dumps(scenario_doc())))
    assert a == b


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12), forest=st.booleans())
def test_topological_order(seed, n, forest):
    if not forest and n < 4:
        n = 4
    net = build_network(random_document(np.random.default_rng(seed), n_stock_points=n, forest=forest))
    pos = {k: i for i, k in enumerate(net.order)}
    for key in net.order:
        for p, _ in net.preds[key]:
            assert pos[p] < pos[key]
        assert len({p for p, _ in net.preds[key]}) == len(net.preds[key])
    order, preds, succs = stockpoint_graph(net)
    assert list(order) == list(net.order)
    g = to_digraph(net)
    assert g.number_of_nodes() == n
    assert is_forest(net) == forest
