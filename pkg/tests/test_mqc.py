import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PLANT_FG, instance_of, scenario_doc
from meio.gsm import make_instance
from meio.mqc import (
    HEADER,
    ModelFormatError,
    build_model,
    check_solution,
    export_model,
    model_size,
    parse_model,
    parse_solution,
    read_model,
    solution_from_result,
    var,
    write_model,
    write_solution,
)
from meio.network import build_network
from meio.solvers import solve_bruteforce, solve_tree_dp
from meio.synthetic import random_document


def test_illustrative_counts(illustrative):
    model = build_model(illustrative)
    assert (model.n_variables, model.n_constraints) == (30, 34)
    assert model_size(illustrative) == (30, 34)


def test_file_layout(tmp_path, illustrative):
    path = tmp_path / "m.mqc"
    export_model(illustrative, path)
    lines = path.read_text().splitlines()
    assert lines[0] == HEADER
    assert lines[1] == "# 30 variables, 34 constraints"
    assert [l for l in lines if l in ("VARS", "OBJ", "LIN", "QUAD")] == ["VARS", "OBJ", "LIN", "QUAD"]
    assert f"{var('S', PLANT_FG)} 0.0 inf" in lines


def test_round_trip_bytes(tmp_path, illustrative):
    a = tmp_path / "a.mqc"
    export_model(illustrative, a)
    model = read_model(a)
    assert write_model(model) == a.read_text()
    b = tmp_path / "b.mqc"
    export_model(illustrative, b)
    assert a.read_bytes() == b.read_bytes()


def test_checker_accepts_optimum(illustrative):
    rep = solve_bruteforce(illustrative)
    model = build_model(illustrative)
    values = solution_from_result(rep.result)
    report = check_solution(model, values)
    assert report.feasible, report.violations
    assert report.objective == pytest.approx(rep.total_cost, rel=1e-9)
    assert report.objective == pytest.approx(162_205, rel=0.005)
    assert report.tightness <= 1e-9


def test_checker_flags_violations(illustrative):
    model = build_model(illustrative)
    values = solution_from_result(solve_tree_dp(illustrative).result)
    bad = dict(values)
    bad[var("Z1", PLANT_FG)] = -1.0
    bad[var("SI", PLANT_FG)] = 5.0
    report = check_solution(model, bad)
    assert not report.feasible
    assert report.max_violation > 1e-6
    with pytest.raises(ModelFormatError, match="missing"):
        check_solution(model, {})


def test_slack_square_roots_show_in_tightness(illustrative):
    model = build_model(illustrative)
    values = solution_from_result(solve_tree_dp(illustrative).result)
    loose = dict(values)
    loose[var("Z1", ("Plant", "Raw1"))] *= 1.01
    report = check_solution(model, loose)
    assert report.tightness > 1e-3


def test_solution_text_round_trip(illustrative):
    model = build_model(illustrative)
    values = solution_from_result(solve_tree_dp(illustrative).result)
    names = {v.name for v in model.variables}
    assert parse_solution(write_solution(values, model)) == {k: v for k, v in values.items() if k in names}


@pytest.mark.parametrize(
    "text",
    ["", "MQC v2\nVARS\n", "MQC v1\nVARS\nS[a,b] x 1\n", "MQC v1\nBOGUS\n",
     "MQC v1\nVARS\nS[a,b] 0 1\nLIN\nc ~ 1 : 1*S[a,b]\n"],
)
def test_parse_errors(text):
    with pytest.raises(ModelFormatError):
        parse_model(text)


def test_rejects_unexportable_ids():
    doc = scenario_doc()
    for sp in doc["stock_points"]:
        if sp["location"] == "Retailer1":
            sp["location"] = "Retailer 1"
    for loc in doc["locations"]:
        if loc["id"] == "Retailer1":
            loc["id"] = "Retailer 1"
    for arc in doc["arcs"]:
        if arc["to"] == "Retailer1":
            arc["to"] = "Retailer 1"
    with pytest.raises(ModelFormatError):
        build_model(instance_of(doc))


def test_fill_rate_constraint_is_bilinear():
    model = build_model(instance_of(scenario_doc("sim_scenario2")))
    degrees = {len(t.vars) for c in model.quadratic for t in c.terms}
    assert max(degrees) == 2
    fr = [c for c in model.quadratic if c.name.startswith("fill_rate[")]
    assert fr and all(any(t.vars[0].startswith("U[") for t in c.terms) for c in fr)
    inst = instance_of(scenario_doc("sim_scenario2"))
    values = solution_from_result(solve_tree_dp(inst).result)
    assert check_solution(model, values).feasible


def test_counts_scale_linearly():
    sizes = []
    for n in (12, 24, 36):
        inst = make_instance(build_network(random_document(np.random.default_rng(n), n_stock_points=n)))
        m = build_model(inst)
        assert (m.n_variables, m.n_constraints) == model_size(inst)
        sizes.append((n, m.n_variables, m.n_constraints))
    for n, nv, nc in sizes:
        assert 4 * n <= nv <= 7 * n
        assert nc <= 12 * n


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 14), forest=st.booleans())
def test_closed_form_count(seed, n, forest):
    n = n if forest else max(n, 4)
    inst = make_instance(build_network(random_document(np.random.default_rng(seed), n_stock_points=n, forest=forest)))
    m = build_model(inst)
    assert (m.n_variables, m.n_constraints) == model_size(inst)
    assert parse_model(write_model(m)) == m
