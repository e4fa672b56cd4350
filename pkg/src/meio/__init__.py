"""Safety stock placement for multi-echelon supply networks.

The usual flow is::

    net = meio.bundled_scenario("illustrative")   # or meio.load_scenario(path)
    inst = meio.make_instance(net)
    report = meio.solve(inst)                     # tree_dp on forests
    sim = meio.run_simulation(inst, report.result)
"""

__version__ = "0.1.0"

from .demand import PropagatedDemand, propagate
from .gsm import (
    EvaluationResult,
    InfeasiblePlanError,
    Instance,
    NodeEvaluation,
    ServiceTimePlan,
    ServiceTimes,
    check_qcp_tightness,
    evaluate_plan,
    make_instance,
    plan_from_outbound,
)
from .mqc import build_model, check_solution, export_model, model_size, read_model
from .network import (
    NetworkSpec,
    ScenarioError,
    build_network,
    bundled_document,
    bundled_scenario,
    is_forest,
    load_scenario,
)
from .sim import SimConfig, SimResult, run_simulation
from .solvers import SolveReport, solve, solve_bruteforce, solve_local_search, solve_tree_dp

__all__ = [
    "__version__",
    "PropagatedDemand", "propagate",
    "EvaluationResult", "InfeasiblePlanError", "Instance", "NodeEvaluation", "ServiceTimePlan",
    "ServiceTimes", "check_qcp_tightness", "evaluate_plan", "make_instance", "plan_from_outbound",
    "build_model", "check_solution", "export_model", "model_size", "read_model",
    "NetworkSpec", "ScenarioError", "build_network", "bundled_document", "bundled_scenario",
    "is_forest", "load_scenario",
    "SimConfig", "SimResult", "run_simulation",
    "SolveReport", "solve", "solve_bruteforce", "solve_local_search", "solve_tree_dp",
]
