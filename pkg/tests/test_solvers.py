import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PLANT_FG, RETAILERS, instance_of, production_arc, scenario_doc, stock_point
from meio.gsm import ServiceTimePlan, ServiceTimes, check_qcp_tightness, evaluate_plan, make_instance
from meio.network import build_network
from meio.solvers import (
    BudgetExceededError,
    SolverError,
    solve,
    solve_bruteforce,
    solve_local_search,
    solve_tree_dp,
)
from meio.synthetic import random_document
from test_network import chain_doc, single_node_doc


def _random_instance(seed, lo, hi, forest):
    rng = np.random.default_rng(seed)
    doc = random_document(rng, int(rng.integers(lo, hi + 1)), forest=forest, max_lt=1)
    return make_instance(build_network(doc))


def _s_vector(report):
    return {k: t.s for k, t in report.plan.times.items()}


def test_illustrative_optimum(illustrative):
    reports = [solve_bruteforce(illustrative), solve_tree_dp(illustrative),
               solve_local_search(illustrative, restarts=20, seed=0)]
    for rep in reports:
        s = _s_vector(rep)
        assert s[PLANT_FG] == 2
        assert all(v == 0 for k, v in s.items() if k != PLANT_FG)
        assert rep.total_cost == pytest.approx(162_205, rel=0.005)
        assert check_qcp_tightness(rep.result) <= 1e-9
    assert reports[0].plan == reports[1].plan
    assert reports[0].optimal and reports[1].optimal and not reports[2].optimal
    assert reports[2].total_cost == pytest.approx(reports[0].total_cost, rel=1e-12)


def test_long_production_lead_time_pools_at_plant():
    doc = scenario_doc()
    production_arc(doc)["lt_mean"] = 10
    rep = solve_bruteforce(instance_of(doc))
    assert _s_vector(rep)[PLANT_FG] == 0
    assert rep.result[PLANT_FG].ss > 0
    assert rep.total_cost == pytest.approx(259_250, rel=0.01)
    stock_point(doc, "Plant", "SKU1")["no_safety_stock"] = True
    pinned = solve_tree_dp(instance_of(doc))
    assert pinned.result[PLANT_FG].ss == 0
    assert pinned.total_cost == pytest.approx(265_360, rel=0.01)
    assert rep.total_cost < pinned.total_cost


def test_single_stock_point_takes_max_external_time():
    doc = single_node_doc()
    doc["stock_points"][0]["max_se"] = 2
    rep = solve_bruteforce(instance_of(doc))
    assert rep.plan[("Shop", "A")].se == 2
    assert solve_tree_dp(instance_of(doc)).plan == rep.plan


def test_zero_variance_chain():
    doc = chain_doc(3)
    doc["stock_points"][-1]["independent_demand"]["sigma"] = 0
    inst = instance_of(doc)
    b, d = solve_bruteforce(inst), solve_tree_dp(inst)
    assert b.total_cost == 0 and d.total_cost == 0
    assert b.plan == d.plan


def test_tree_dp_rejects_non_forest():
    inst = _random_instance(3, 5, 6, forest=False)
    with pytest.raises(SolverError, match="forest"):
        solve_tree_dp(inst)
    assert solve(inst).solver == "local_search"


def test_auto_dispatch(illustrative):
    assert solve(illustrative).solver == "tree_dp"
    with pytest.raises(ValueError):
        solve(illustrative, "simplex")


def test_budget(illustrative):
    with pytest.raises(BudgetExceededError, match="tree_dp|local_search"):
        solve_bruteforce(illustrative, budget=10)


def test_local_search_zero_restarts_is_baseline(illustrative):
    rep = solve_local_search(illustrative, restarts=0)
    assert rep.plan.times.keys() == set(illustrative.order)
    assert rep.total_cost >= solve_tree_dp(illustrative).total_cost


def test_local_search_deterministic():
    inst = _random_instance(11, 8, 10, forest=False)
    assert solve_local_search(inst, 5, seed=3) == solve_local_search(inst, 5, seed=3)


def test_solver_plans_are_feasible(illustrative):
    for fn in (solve_bruteforce, solve_tree_dp, solve_local_search):
        rep = fn(illustrative)
        assert evaluate_plan(illustrative, rep.plan) == rep.result


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_raising_inbound_time_never_helps(seed):
    inst = _random_instance(seed, 3, 8, forest=True)
    rep = solve_tree_dp(inst, s_cap=7)
    for key in inst.order:
        node = inst.nodes[key]
        if node.is_source:
            continue
        t = rep.plan[key]
        times = dict(rep.plan.times)
        times[key] = ServiceTimes(t.s, t.se, t.si + 1)
        bumped = evaluate_plan(inst, ServiceTimePlan(times))
        assert bumped.total_cost >= rep.total_cost * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_dp_matches_bruteforce_property(seed):
    inst = _random_instance(seed, 2, 7, forest=True)
    b, d = solve_bruteforce(inst, s_cap=7), solve_tree_dp(inst, s_cap=7)
    assert d.total_cost == pytest.approx(b.total_cost, rel=1e-9, abs=1e-9)
    assert check_qcp_tightness(d.result) <= 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), forest=st.booleans())
def test_local_search_never_beats_optimum(seed, forest):
    inst = _random_instance(seed, 4, 7, forest=forest)
    b = solve_bruteforce(inst, s_cap=7, budget=10**9)
    ls = solve_local_search(inst, 10, seed=seed, s_cap=7)
    assert ls.total_cost >= b.total_cost * (1 - 1e-12)
    assert ls.total_cost <= 1.05 * b.total_cost + 1e-9
