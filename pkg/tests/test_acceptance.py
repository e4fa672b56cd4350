"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
"acceptance criteria" section of the pytest terminal summary.
"""

import time

import numpy as np

from conftest import PLANT_FG, RAW1, RAW2, RETAILERS, instance_of, production_arc, scenario_doc, stock_point
from meio.gsm import check_qcp_tightness, evaluate_plan, make_instance, plan_from_outbound
from meio.mqc import build_model, check_solution, export_model, read_model, solution_from_result, write_model
from meio.network import build_network
from meio.normstats import fit_surrogate, std_normal_cdf, std_normal_inv_cdf
from meio.sim import SimConfig, run_simulation
from meio.solvers import solve_bruteforce, solve_local_search, solve_tree_dp
from meio.synthetic import random_document
from test_normstats import PHI_ORACLE


def rel_close(value, target, rel):
    return abs(value - target) <= rel * abs(target)


def fmt(x):
    return f"{x:,.1f}"


def reference_plan(inst, fg_s=2.0):
    s = {k: 0.0 for k in inst.order}
    s[PLANT_FG] = fg_s
    se = {k: 0.0 for k in inst.order if inst.nodes[k].has_independent}
    return plan_from_outbound(inst, s, se)


def test_criterion_01_illustrative_optimum(criterion):
    with criterion(1, "illustrative optimum: plan, safety stocks and cost") as c:
        t0 = time.perf_counter()
        inst = instance_of(scenario_doc())
        rep = solve_tree_dp(inst)
        elapsed = time.perf_counter() - t0
        s = tuple(rep.plan[k].s for k in inst.order)
        c.check("plan", s == (0, 0, 2, 0, 0, 0), f"S = {s}")
        expected = {RAW1: 1_143_300, RAW2: 11_228, PLANT_FG: 0, RETAILERS[0]: 459_359,
                    RETAILERS[1]: 243_783, RETAILERS[2]: 536_961}
        for key, ss in expected.items():
            got = rep.result[key].ss
            ok = got == 0 if ss == 0 else rel_close(got, ss, 0.005)
            c.check(f"SS {key[0]}/{key[1]}", ok, f"{fmt(got)} vs {fmt(ss)}")
        c.check("cost", rel_close(rep.total_cost, 162_205, 0.005), fmt(rep.total_cost))
        c.check("runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f} s")


def test_criterion_02_no_ceil_evaluation(criterion):
    with criterion(2, "no-ceil rounding: scenario 1 safety stocks and basestocks") as c:
        inst = instance_of(scenario_doc("sim_scenario1"))
        res = evaluate_plan(inst, reference_plan(inst))
        for key, ss in [(RAW1, 1_118_096), (RAW2, 10_428), (RETAILERS[0], 459_166)]:
            c.check(f"SS {key[0]}/{key[1]}", rel_close(res[key].ss, ss, 0.005), f"{fmt(res[key].ss)} vs {fmt(ss)}")
        for key, b in [(RETAILERS[0], 1_108_682), (RAW1, 5_375_266)]:
            got = res[key].basestock
            c.check(f"B {key[0]}/{key[1]}", rel_close(got, b, 0.005), f"{fmt(got)} vs {fmt(b)}")


def test_criterion_03_lead_time_sensitivity(criterion):
    with criterion(3, "10-week production lead time pools stock at the plant") as c:
        doc = scenario_doc()
        production_arc(doc)["lt_mean"] = 10
        pooled = solve_tree_dp(instance_of(doc))
        c.check("pooled cost", rel_close(pooled.total_cost, 259_250, 0.01), fmt(pooled.total_cost))
        c.check("plant holds FG stock", pooled.result[PLANT_FG].ss > 0, fmt(pooled.result[PLANT_FG].ss))
        stock_point(doc, "Plant", "SKU1")["no_safety_stock"] = True
        pinned = solve_tree_dp(instance_of(doc))
        c.check("pinned cost", rel_close(pinned.total_cost, 265_360, 0.01), fmt(pinned.total_cost))
        c.check("pooling is cheaper", pooled.total_cost < pinned.total_cost)


def test_criterion_04_fill_rate_calibration(criterion):
    with criterion(4, "surrogate fill-rate factors for scenarios 2 and 3") as c:
        inst = instance_of(scenario_doc("sim_scenario2", fill_rate_mode="surrogate"))
        res = evaluate_plan(inst, reference_plan(inst))
        for key, k in zip([RAW1, RAW2, *RETAILERS], [1.58, 1.50, 1.57, 1.62, 1.56]):
            c.check(f"k {key[0]}/{key[1]}", abs(res[key].kv - k) <= 0.05, f"{res[key].kv:.3f} vs {k}")
        ss = res[RETAILERS[0]].ss
        c.check("SS Retailer1 (scenario 2)", rel_close(ss, 383_857, 0.005), fmt(ss))
        inst3 = instance_of(scenario_doc("sim_scenario3", fill_rate_mode="surrogate"))
        res3 = evaluate_plan(inst3, reference_plan(inst3))
        for key, k in zip(RETAILERS, [1.23, 0.92, 1.30]):
            c.check(f"k {key[0]} MOQ", abs(res3[key].kv - k) <= 0.05, f"{res3[key].kv:.3f} vs {k}")
        ss3 = res3[RETAILERS[0]].ss
        c.check("SS Retailer1 (scenario 3)", rel_close(ss3, 301_155, 0.01), fmt(ss3))


def test_criterion_05_fill_rate_moq_grid(criterion):
    with criterion(5, "Retailer1 safety factor over the MOQ x fill-rate grid") as c:
        moqs = [0, 125_000, 250_000, 375_000, 500_000]
        targets = [0.7, 0.8, 0.9, 0.98]
        kv = np.zeros((len(moqs), len(targets)))
        for i, moq in enumerate(moqs):
            for j, fr in enumerate(targets):
                doc = scenario_doc("sim_scenario3", fill_rate_mode="surrogate")
                sp = stock_point(doc, "Retailer1")
                sp["moq"] = moq
                sp["target"] = {"mode": "fill_rate", "value": fr}
                inst = instance_of(doc)
                res = evaluate_plan(inst, reference_plan(inst))
                kv[i, j] = res[RETAILERS[0]].kv
                if moq == 500_000 and fr <= 0.8:
                    c.check(f"zero stock at fr {fr}", kv[i, j] == 0 and res[RETAILERS[0]].ss == 0, f"k = {kv[i, j]}")
        c.check("nonincreasing in MOQ", bool((np.diff(kv, axis=0) <= 1e-12).all()))
        c.check("nondecreasing in fill rate", bool((np.diff(kv, axis=1) >= -1e-12).all()))


def test_criterion_06_and_07_oracle_equivalence_and_tightness(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    dp_mismatch, ls_bad = [], []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        inst = make_instance(build_network(random_document(rng, int(rng.integers(2, 9)), forest=True, max_lt=1)))
        b, d = solve_bruteforce(inst, s_cap=7), solve_tree_dp(inst, s_cap=7)
        if abs(d.total_cost - b.total_cost) > 1e-9 * max(1.0, b.total_cost):
            dp_mismatch.append(seed)
        worst = max(worst, check_qcp_tightness(b.result), check_qcp_tightness(d.result))
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        forest = seed % 2 == 0
        n = int(rng.integers(2 if forest else 4, 9))
        inst = make_instance(build_network(random_document(rng, n, forest=forest, max_lt=1)))
        b = solve_bruteforce(inst, s_cap=7, budget=10**9)
        ls = solve_local_search(inst, restarts=10, seed=seed, s_cap=7)
        if ls.total_cost > 1.05 * b.total_cost + 1e-9:
            ls_bad.append(seed)
        worst = max(worst, check_qcp_tightness(ls.result))
    elapsed = time.perf_counter() - t0
    for name in ("illustrative", "sim_scenario1", "sim_scenario2", "sim_scenario3"):
        inst = instance_of(scenario_doc(name))
        for fn in (solve_bruteforce, solve_tree_dp, solve_local_search):
            worst = max(worst, check_qcp_tightness(fn(inst).result))
    with criterion(6, "tree_dp equals bruteforce; local_search within 5%") as c:
        c.check("tree_dp = bruteforce on 100 forests", not dp_mismatch, f"mismatches {dp_mismatch}")
        c.check("local_search <= 1.05 x optimum on 100 instances", not ls_bad, f"violations {ls_bad}")
        c.check("runtime < 60 s", elapsed < 60, f"{elapsed:.1f} s")
    with criterion(7, "square-root and safety-factor constraints are tight") as c:
        c.check("max relative residual <= 1e-9", worst <= 1e-9, f"{worst:.2e}")


def test_criterion_08_simulation_validation(criterion):
    with criterion(8, "simulated service within the validation bands") as c:
        t0 = time.perf_counter()
        results, ss = {}, {}
        for name in ("sim_scenario1", "sim_scenario2", "sim_scenario3"):
            inst = instance_of(scenario_doc(name))
            ev = solve_tree_dp(inst).result
            results[name] = run_simulation(inst, ev, SimConfig())
            ss[name] = sum(ev[k].ss for k in RETAILERS)
        elapsed = time.perf_counter() - t0

        s1 = results["sim_scenario1"]
        csl = np.mean([s1[k].effective_csl.mean for k in RETAILERS]) * 100
        c.check("scenario 1 retailer CSL in [95.5, 97.1]", 95.5 <= csl <= 97.1, f"{csl:.2f}")
        plant = min(s1[PLANT_FG].effective_fill_rate.mean, s1[PLANT_FG].effective_csl.mean) * 100
        c.check("scenario 1 plant service >= 99.5", plant >= 99.5, f"{plant:.2f}")
        fr2 = np.mean([results["sim_scenario2"][k].effective_fill_rate.mean for k in RETAILERS]) * 100
        c.check("scenario 2 retailer fill rate in [96, 98]", 96.0 <= fr2 <= 98.0, f"{fr2:.2f}")
        fr3 = np.mean([results["sim_scenario3"][k].effective_fill_rate.mean for k in RETAILERS]) * 100
        c.check("scenario 3 retailer fill rate in [96.5, 99]", 96.5 <= fr3 <= 99.0, f"{fr3:.2f}")
        cut = 1 - ss["sim_scenario3"] / ss["sim_scenario2"]
        c.check("scenario 3 retailer SS ~24% below scenario 2", abs(cut - 0.24) <= 0.01, f"{100 * cut:.1f}%")
        c.check("runtime < 2 min", elapsed < 120, f"{elapsed:.1f} s")


def test_criterion_09_numerics(criterion):
    with criterion(9, "normal cdf, inverse and surrogate fit accuracy") as c:
        err = max(abs(std_normal_cdf(x) - v) for x, v in PHI_ORACLE.items())
        c.check("cdf vs quadrature <= 1e-10", err <= 1e-10, f"{err:.1e}")
        xs = np.linspace(-6, 6, 1201)
        rt = max(abs(std_normal_inv_cdf(std_normal_cdf(x)) - x) for x in xs)
        c.check("inverse round trip <= 1e-8", rt <= 1e-8, f"{rt:.1e}")
        fit = fit_surrogate(np.round(np.arange(0, 261) * 0.01, 2))
        c.check("surrogate R^2 >= 0.97", fit.r2 >= 0.97, f"{fit.r2:.4f}")


def test_criterion_10_model_export(criterion, tmp_path):
    with criterion(10, "illustrative model export: counts, round trip and checker") as c:
        inst = instance_of(scenario_doc())
        path = tmp_path / "illustrative.mqc"
        model = export_model(inst, path)
        c.check("30 variables, 34 constraints", (model.n_variables, model.n_constraints) == (30, 34),
                f"{model.n_variables}, {model.n_constraints}")
        c.check("byte-identical round trip", write_model(read_model(path)).encode() == path.read_bytes())
        rep = solve_bruteforce(inst)
        report = check_solution(build_model(inst), solution_from_result(rep.result))
        c.check("optimum feasible", report.feasible, f"max violation {report.max_violation:.1e}")
        c.check("objective matches", rel_close(report.objective, rep.total_cost, 1e-9), fmt(report.objective))
