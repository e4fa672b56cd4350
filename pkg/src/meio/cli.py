"""Command-line front end.

Every command that produces files also writes ``manifest.json`` into its output
directory.  The manifest stores the exact argument vector, so ``meio rerun``
reproduces the output files byte for byte with the same tool version.

Exit codes: 0 on success, 1 for invalid input or an infeasible request, 2 for
internal errors.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import platform
import re
import sys
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .gsm import InfeasiblePlanError, make_instance
from .mqc import export_model
from .network import ScenarioError, build_network, bundled_document, is_forest, label
from .normstats import TruncationError
from .reports import (
    ReportError,
    demand_csv,
    dumps,
    evaluation_csv,
    evaluation_to_dict,
    read_evaluation,
    simulation_to_dict,
    sweep_csv,
    sweep_rows,
    plan_table_csv,
    service_table_csv,
    trace_csv,
    write_text,
)
from .sim import SimConfig, SimConfigError, run_simulation
from .solvers import SOLVERS, SolverError, solve

BUNDLED_PREFIX = "bundled:"


class UsageError(ValueError):
    """Bad command-line input that is not a scenario validation error."""


USER_ERRORS = (
    UsageError, ScenarioError, InfeasiblePlanError, SolverError, SimConfigError,
    ReportError, TruncationError, OSError, json.JSONDecodeError,
)


@dataclass
class RunManifest:
    command: str
    scenario: str
    scenario_sha256: str
    overrides: list[str]
    seed: int | None
    tool_version: str
    timestamp: str
    outputs: list[str]
    argv: list[str]
    python: str = field(default_factory=platform.python_version)


# ---------------------------------------------------------------------------
# scenario loading and parameter paths


def load_document(ref: str) -> tuple[dict, str]:
    """Scenario document and the SHA-256 of its canonical JSON form.

    ``ref`` is a file path or ``bundled:<name>`` for a scenario shipped with
    the package.
    """
    if ref.startswith(BUNDLED_PREFIX):
        try:
            doc = bundled_document(ref[len(BUNDLED_PREFIX):])
        except FileNotFoundError:
            raise UsageError(f"no bundled scenario named {ref[len(BUNDLED_PREFIX):]!r}") from None
    else:
        try:
            doc = json.loads(Path(ref).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{ref}: not valid JSON ({exc})") from None
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return doc, hashlib.sha256(canon).hexdigest()


_SEGMENT = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\[([^\]]*)\])?$")

# fields that may be set even when absent from the document
_OPTIONAL_FIELDS = {
    ("stock_points",): {"holding_cost", "review_period", "max_s", "max_se", "si0", "moq", "target",
                        "independent_demand", "no_safety_stock", "k_lt"},
    ("stock_points", "target"): {"mode", "value"},
    ("stock_points", "independent_demand"): {"mu", "sigma"},
    ("arcs",): {"lt_mean", "lt_sd"},
    ("bom",): {"phi"},
    ("options",): {"k_lt", "lead_time_rounding", "fill_rate_mode", "surrogate_coeffs", "default_target"},
    ("options", "default_target"): {"mode", "value"},
    (): {"options"},
}


def _split_path(path: str) -> list[tuple[str, list[tuple[str, str]] | None]]:
    parts, depth, cur = [], 0, ""
    for ch in path:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "." and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    out = []
    for part in parts:
        m = _SEGMENT.match(part.strip())
        if not m:
            raise UsageError(f"unknown parameter path {path!r}: bad segment {part!r}")
        filters = None
        if m.group(2) is not None:
            filters = []
            for cond in m.group(2).split(","):
                if "=" not in cond:
                    raise UsageError(f"unknown parameter path {path!r}: filter {cond!r} needs key=value")
                k, v = cond.split("=", 1)
                filters.append((k.strip(), v.strip()))
        out.append((m.group(1), filters))
    return out


def _matches(item: Any, filters: list[tuple[str, str]]) -> bool:
    if not isinstance(item, dict):
        return False
    for k, want in filters:
        have = item.get(k)
        if have is None:
            if want != "null":
                return False
        elif isinstance(have, (int, float)) and not isinstance(have, bool):
            try:
                if float(want) != float(have):
                    return False
            except ValueError:
                return False
        elif str(have) != want:
            return False
    return True


def set_parameter(doc: dict, path: str, value: Any) -> int:
    """Assign ``value`` at ``path`` in place; returns the number of fields set.

    Paths are dot separated.  A list is addressed with key filters, e.g.
    ``stock_points[location=Retailer1].moq`` or
    ``arcs[from=Plant,to=Plant,material=SKU1].lt_mean``.  Every matching list
    element is updated.
    """
    segments = _split_path(path)
    targets: list[Any] = [doc]
    sig: tuple[str, ...] = ()
    for depth, (name, filters) in enumerate(segments):
        last = depth == len(segments) - 1
        if last:
            if filters is not None:
                raise UsageError(f"unknown parameter path {path!r}: cannot assign to a list filter")
            for t in targets:
                if name not in t and name not in _OPTIONAL_FIELDS.get(sig, ()):
                    raise UsageError(f"unknown parameter path {path!r}: no field {name!r}")
                t[name] = copy.deepcopy(value)
            return len(targets)
        nxt = []
        for t in targets:
            if name not in t:
                if name not in _OPTIONAL_FIELDS.get(sig, ()):
                    raise UsageError(f"unknown parameter path {path!r}: no field {name!r}")
                default = {}
                if sig == ("stock_points",) and name == "target":
                    default = copy.deepcopy((doc.get("options") or {}).get("default_target") or {})
                t[name] = default
            child = t[name]
            if filters is not None:
                if not isinstance(child, list):
                    raise UsageError(f"unknown parameter path {path!r}: {name!r} is not a list")
                nxt.extend(item for item in child if _matches(item, filters))
            elif isinstance(child, dict):
                nxt.append(child)
            else:
                raise UsageError(f"unknown parameter path {path!r}: {name!r} is not an object")
        if not nxt:
            raise UsageError(f"unknown parameter path {path!r}: no element of {name!r} matches")
        targets = nxt
        sig = sig + (name,)
    return 0  # unreachable, the last segment returns


def parse_value(text: str) -> Any:
    """JSON literal if it parses, otherwise the plain string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignment(text: str) -> tuple[str, Any]:
    """Split ``path=value`` at the first ``=`` outside brackets."""
    depth = 0
    for i, ch in enumerate(text):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "=" and depth == 0:
            return text[:i], parse_value(text[i + 1:])
    raise UsageError(f"--set expects PATH=VALUE, got {text!r}")


def parse_values(text: str) -> list[Any]:
    text = text.strip()
    if not text:
        return []
    if text.startswith("["):
        vals = parse_value(text)
        if isinstance(vals, list):
            return vals
    return [parse_value(tok.strip()) for tok in text.split(",")]


def _apply_overrides(doc: dict, sets: Sequence[str]) -> dict:
    doc = copy.deepcopy(doc)
    for item in sets:
        path, value = parse_assignment(item)
        set_parameter(doc, path, value)
    return doc


# ---------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(args, out: Path, command: str, sha: str, outputs: list[Path], seed: int | None) -> Path:
    manifest = RunManifest(
        command=command,
        scenario=args.scenario,
        scenario_sha256=sha,
        overrides=list(getattr(args, "set", None) or []),
        seed=seed,
        tool_version=__version__,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        outputs=[p.name for p in outputs],
        argv=list(args.argv),
    )
    return write_text(out / "manifest.json", dumps(asdict(manifest)))


def _optimize_doc(doc: dict, args):
    net = build_network(doc)
    inst = make_instance(net)
    kwargs: dict[str, Any] = {}
    if args.s_cap is not None:
        kwargs["s_cap"] = args.s_cap
    if args.solver == "local_search" or (args.solver == "auto" and not is_forest(net)):
        kwargs["restarts"] = args.restarts
        kwargs["seed"] = args.seed
    return net, inst, solve(inst, args.solver, **kwargs)


def _print_plan(inst, result, stream) -> None:
    w = max(len(label(k)) for k in inst.order)
    print(f"{'stock point':<{w}}  {'S':>6}  {'k':>7}  {'SS':>14}  {'cost':>12}", file=stream)
    for key in inst.order:
        ev = result[key]
        print(f"{label(key):<{w}}  {ev.s:>6g}  {ev.kv:>7.4f}  {ev.ss:>14,.1f}  {ev.cost:>12,.2f}", file=stream)
    print(f"total cost {result.total_cost:,.2f}", file=stream)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    doc, sha = load_document(args.scenario)
    doc = _apply_overrides(doc, args.set or [])
    net = build_network(doc)
    for w in net.warnings:
        print(f"warning: {w}")
    print(f"valid: {len(net.order)} stock points")
    if args.out:
        out = _out_dir(args)
        _write_manifest(args, out, "validate", sha, [], None)
    return 0


def cmd_optimize(args) -> int:
    doc, sha = load_document(args.scenario)
    doc = _apply_overrides(doc, args.set or [])
    opts = doc.setdefault("options", {})
    if args.rounding:
        opts["lead_time_rounding"] = args.rounding
    if args.fill_rate_mode:
        opts["fill_rate_mode"] = args.fill_rate_mode
    net, inst, report = _optimize_doc(doc, args)
    result = report.result
    _print_plan(inst, result, sys.stdout)
    print(f"solver {report.solver}, optimal={report.optimal}, iterations={report.iterations}")
    out = _out_dir(args)
    meta = {"scenario": args.scenario, "solver": report.solver, "optimal": report.optimal}
    outputs = [
        write_text(out / "plan.json", dumps(evaluation_to_dict(inst, result, **meta))),
        write_text(out / "plan_table.csv", plan_table_csv(inst, result)),
        write_text(out / "evaluation.csv", evaluation_csv(inst, result)),
        write_text(out / "demand.csv", demand_csv(inst)),
    ]
    _write_manifest(args, out, "optimize", sha, outputs, args.seed)
    return 0


def cmd_simulate(args) -> int:
    doc, sha = load_document(args.scenario)
    doc = _apply_overrides(doc, args.set or [])
    inst = make_instance(build_network(doc))
    evaluation = read_evaluation(args.plan)
    missing = [k for k in inst.order if k not in evaluation.nodes]
    if missing:
        raise ReportError(f"missing basestock for {label(missing[0])}")
    cfg = SimConfig(
        horizon=args.horizon,
        warmup=args.warmup,
        replications=args.reps,
        seed=args.seed,
        base_period=args.base_period,
        lost_sales=not args.backorders,
        arrivals_first=args.arrivals_first,
        trace=args.trace,
    )
    result = run_simulation(inst, evaluation, cfg)
    for key in inst.order:
        sp = result[key]
        print(f"{label(key):<24} {sp.measured:<8}  CSL {100 * sp.effective_csl.mean:6.2f}%"
              f"  fill rate {100 * sp.effective_fill_rate.mean:6.2f}%")
    out = _out_dir(args)
    outputs = [
        write_text(out / "simulation.json", dumps(simulation_to_dict(inst, result, scenario=args.scenario))),
        write_text(out / "service.csv", service_table_csv(inst, result)),
    ]
    if args.trace:
        outputs.append(write_text(out / "trace.csv", trace_csv(inst, result)))
    _write_manifest(args, out, "simulate", sha, outputs, args.seed)
    return 0


def cmd_sweep(args) -> int:
    doc, sha = load_document(args.scenario)
    doc = _apply_overrides(doc, args.set or [])
    values = parse_values(args.values)
    # resolve the path once so a bad path fails even for an empty value list
    set_parameter(copy.deepcopy(doc), args.param, values[0] if values else None)
    rows = []
    for value in values:
        d = copy.deepcopy(doc)
        set_parameter(d, args.param, value)
        _, inst, report = _optimize_doc(d, args)
        rows.extend(sweep_rows(value, inst, report.result))
        print(f"{args.param} = {value!r}: total cost {report.total_cost:,.2f}")
    out = _out_dir(args)
    outputs = [write_text(out / "sweep.csv", sweep_csv(rows))]
    _write_manifest(args, out, "sweep", sha, outputs, args.seed)
    return 0


def cmd_export_model(args) -> int:
    doc, sha = load_document(args.scenario)
    doc = _apply_overrides(doc, args.set or [])
    inst = make_instance(build_network(doc))
    out = _out_dir(args)
    path = out / "model.mqc"
    model = export_model(inst, path)
    print(f"{model.n_variables} variables, {model.n_constraints} constraints")
    _write_manifest(args, out, "export-model", sha, [path], None)
    return 0


def cmd_rerun(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    argv = list(manifest.get("argv") or [])
    if not argv:
        raise UsageError(f"{args.manifest}: manifest has no argv")
    if args.out:
        argv = _replace_out(argv, args.out)
    return main(argv)


def _replace_out(argv: list[str], out: str) -> list[str]:
    res, skip = [], False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res + ["--out", out]


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("scenario", help="scenario JSON file or bundled:<name>")
    p.add_argument("--set", action="append", metavar="PATH=VALUE",
                   help="override a scenario field before running (repeatable)")
    p.add_argument("--out", required=out_required, help="output directory")


def _add_solver(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", default="auto", choices=["auto", *sorted(SOLVERS)])
    p.add_argument("--s-cap", type=int, default=None, help="upper limit on outbound service times")
    p.add_argument("--restarts", type=int, default=20, help="random restarts for local_search")
    p.add_argument("--seed", type=int, default=0, help="seed for local_search restarts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meio", description="Multi-echelon safety stock optimization")
    parser.add_argument("--version", action="version", version=f"meio {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario and print diagnostics")
    _add_common(p, out_required=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", help="place safety stock and write the plan")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--rounding", choices=["none", "ceil"])
    p.add_argument("--fill-rate-mode", choices=["exact", "surrogate"])
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="simulate a plan written by 'optimize'")
    _add_common(p)
    p.add_argument("plan", help="plan.json from 'meio optimize'")
    p.add_argument("--reps", type=int, default=8)
    p.add_argument("--horizon", type=int, default=7000, help="periods per replication")
    p.add_argument("--warmup", type=int, default=350, help="periods discarded at the start")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-period", choices=["day", "week"], default="day")
    p.add_argument("--backorders", action="store_true", help="backorder unmet external demand")
    p.add_argument("--arrivals-first", action="store_true",
                   help="receive shipments before the demand of their arrival period")
    p.add_argument("--trace", action="store_true", help="write per-period inventory series")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="re-optimize for each value of one scenario field")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--param", required=True, help="parameter path, e.g. stock_points[location=R1].moq")
    p.add_argument("--values", required=True, help="comma separated values or a JSON list")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-model", help="write the quadratic model file")
    _add_common(p)
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="write to this directory instead of the recorded one")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return 0 if exc.code == 0 else 1
    args.argv = argv
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - last-resort handler maps to exit code 2
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
