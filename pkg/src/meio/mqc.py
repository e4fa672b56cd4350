"""Export of the quadratically constrained safety-stock model to a neutral text format.

The file lets an external nonlinear solver reproduce the optimization that
:mod:`meio.solvers` performs by enumeration.  The grammar is documented in
``docs/mqc_format.md``.  In short::

    MQC v1
    # comment
    VARS
    <name> <lb> <ub>
    OBJ
    minimize : <term> <term> ...
    LIN
    <name> <sense> <rhs> : <term> ...
    QUAD
    <name> <sense> <rhs> : <term> ...

A term is ``coef*VAR`` or a product ``coef*VAR*VAR...``.  Floats are written
with ``repr`` so that parsing and re-writing reproduces the file byte for byte.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .gsm import EvaluationResult, Instance
from .network import Key

HEADER = "MQC v1"
SECTIONS = ("VARS", "OBJ", "LIN", "QUAD")
SENSES = ("<=", ">=", "=")
_ID = re.compile(r"^[A-Za-z0-9_.\-]+$")


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf


@dataclass(frozen=True)
class Term:
    coef: float
    vars: tuple[str, ...]

    def value(self, x: Mapping[str, float]) -> float:
        out = self.coef
        for v in self.vars:
            out *= x[v]
        return out


@dataclass(frozen=True)
class Constraint:
    name: str
    sense: str
    rhs: float
    terms: tuple[Term, ...]

    def lhs(self, x: Mapping[str, float]) -> float:
        return math.fsum(t.value(x) for t in self.terms)

    def scale(self, x: Mapping[str, float]) -> float:
        return max(1.0, abs(self.rhs), *(abs(t.value(x)) for t in self.terms))

    def violation(self, x: Mapping[str, float]) -> float:
        d = self.lhs(x) - self.rhs
        if self.sense == "<=":
            return max(d, 0.0)
        if self.sense == ">=":
            return max(-d, 0.0)
        return abs(d)


@dataclass(frozen=True)
class MqcModel:
    variables: tuple[Variable, ...]
    objective: tuple[Term, ...]
    linear: tuple[Constraint, ...]
    quadratic: tuple[Constraint, ...]

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.linear) + len(self.quadratic)

    def constraints(self) -> tuple[Constraint, ...]:
        return self.linear + self.quadratic


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _tag(key: Key) -> str:
    for part in key:
        if not _ID.match(part):
            raise ModelFormatError(
                f"identifier {part!r} cannot be exported; use letters, digits, '_', '.' or '-'"
            )
    return f"{key[0]},{key[1]}"


def var(kind: str, key: Key) -> str:
    return f"{kind}[{_tag(key)}]"


def build_model(inst: Instance) -> MqcModel:
    """Assemble the quadratic model for an instance.

    Variable families: S, SE, SI and KV for every stock point, Z1 for stock
    points with internal customers, Z2 for stock points with external demand,
    U for fill-rate targets.  Quantities that do not apply to a stock point
    (S without internal customers, SE without external demand, KV under a
    cycle-service target) are fixed by equality constraints so that every
    stock point carries the same core variables.
    """
    coeffs = inst.options.surrogate_coeffs
    variables: list[Variable] = []
    objective: list[Term] = []
    lin: list[Constraint] = []
    quad: list[Constraint] = []
    for key in inst.order:
        for kind in ("S", "SE", "SI", "KV"):
            variables.append(Variable(var(kind, key)))
    for key in inst.order:
        node = inst.nodes[key]
        if node.has_dependent:
            variables.append(Variable(var("Z1", key)))
        if node.has_independent:
            variables.append(Variable(var("Z2", key)))
        if node.target.mode == "fill_rate":
            variables.append(Variable(var("U", key)))

    for key in inst.order:
        node = inst.nodes[key]
        S, SE, SI, KV = (var(k, key) for k in ("S", "SE", "SI", "KV"))
        Z1, Z2, U = var("Z1", key), var("Z2", key), var("U", key)
        if node.has_dependent:
            objective.append(Term(node.h * node.sigma_d, (KV, Z1)))
        if node.has_independent:
            objective.append(Term(node.h, (KV, Z2)))

        if node.is_source:
            lin.append(Constraint(f"src_si[{_tag(key)}]", "=", float(node.si0), (Term(1.0, (SI,)),)))
        for p in node.preds:
            lin.append(
                Constraint(
                    f"link[{_tag(key)}|{_tag(p)}]",
                    ">=",
                    0.0,
                    (Term(1.0, (SI,)), Term(-1.0, (var("S", p),))),
                )
            )
        if node.max_s is not None:
            lin.append(Constraint(f"max_s[{_tag(key)}]", "<=", float(node.max_s), (Term(1.0, (S,)),)))
        if node.max_se is not None:
            lin.append(Constraint(f"max_se[{_tag(key)}]", "<=", float(node.max_se), (Term(1.0, (SE,)),)))

        if node.has_dependent:
            rhs1 = node.planned_lt + node.r - 1
            lin.append(
                Constraint(f"s_bound[{_tag(key)}]", "<=", rhs1, (Term(1.0, (S,)), Term(-1.0, (SI,))))
            )
            quad.append(
                Constraint(
                    f"z1_def[{_tag(key)}]",
                    ">=",
                    rhs1,
                    (Term(1.0, (Z1, Z1)), Term(-1.0, (SI,)), Term(1.0, (S,))),
                )
            )
        else:
            lin.append(Constraint(f"fix_s[{_tag(key)}]", "=", 0.0, (Term(1.0, (S,)),)))

        if node.has_independent:
            var_i = node.sigma_i**2
            extra = (node.mu_i * node.lt_sd / node.sigma_i) ** 2 if node.sigma_i > 0 else 0.0
            lin.append(
                Constraint(
                    f"se_bound[{_tag(key)}]",
                    "<=",
                    node.r + node.lt_eff + extra,
                    (Term(1.0, (SE,)), Term(-1.0, (SI,))),
                )
            )
            quad.append(
                Constraint(
                    f"z2_def[{_tag(key)}]",
                    ">=",
                    (node.lt_eff + node.r) * var_i + (node.mu_i * node.lt_sd) ** 2,
                    (Term(1.0, (Z2, Z2)), Term(-var_i, (SI,)), Term(var_i, (SE,))),
                )
            )
        else:
            lin.append(Constraint(f"fix_se[{_tag(key)}]", "=", 0.0, (Term(1.0, (SE,)),)))

        if node.target.mode == "fill_rate":
            # (a U + b KV + c) (sigma_D Z1 + Z2) >= (fr - 1) Q
            spread = []
            if node.has_dependent:
                spread.append((node.sigma_d, Z1))
            if node.has_independent:
                spread.append((1.0, Z2))
            terms = []
            for w, z in spread:
                terms += [
                    Term(coeffs.a * w, (U, z)),
                    Term(coeffs.b * w, (KV, z)),
                    Term(coeffs.c * w, (z,)),
                ]
            quad.append(
                Constraint(f"fill_rate[{_tag(key)}]", ">=", (node.target.value - 1.0) * node.q, tuple(terms))
            )
            quad.append(
                Constraint(f"kv_sq[{_tag(key)}]", "<=", 0.0, (Term(1.0, (KV, KV)), Term(-1.0, (U,))))
            )
        else:
            lin.append(
                Constraint(f"fix_kv[{_tag(key)}]", "=", float(node.target.k), (Term(1.0, (KV,)),))
            )
    return MqcModel(tuple(variables), tuple(objective), tuple(lin), tuple(quad))


def model_size(inst: Instance) -> tuple[int, int]:
    """Variable and constraint counts from the closed-form tally, without building the model."""
    nodes = [inst.nodes[k] for k in inst.order]
    n = len(nodes)
    n_d = sum(x.has_dependent for x in nodes)
    n_i = sum(x.has_independent for x in nodes)
    n_f = sum(x.target.mode == "fill_rate" for x in nodes)
    n_src = sum(x.is_source for x in nodes)
    n_links = sum(len(x.preds) for x in nodes)
    n_maxs = sum(x.max_s is not None for x in nodes)
    n_maxse = sum(x.max_se is not None for x in nodes)
    n_vars = 4 * n + n_d + n_i + n_f
    n_cons = n_src + n_links + n_maxs + n_maxse + 2 * (n_d + n_i + n_f) + (n - n_d) + (n - n_i) + (n - n_f)
    return n_vars, n_cons


def _term_text(t: Term) -> str:
    return "*".join((_fmt(t.coef),) + t.vars)


def _cons_text(c: Constraint) -> str:
    return f"{c.name} {c.sense} {_fmt(c.rhs)} : " + " ".join(_term_text(t) for t in c.terms)


def write_model(model: MqcModel) -> str:
    lines = [HEADER, f"# {model.n_variables} variables, {model.n_constraints} constraints", "VARS"]
    lines += [f"{v.name} {_fmt(v.lb)} {_fmt(v.ub)}" for v in model.variables]
    lines += ["OBJ", "minimize : " + " ".join(_term_text(t) for t in model.objective), "LIN"]
    lines += [_cons_text(c) for c in model.linear]
    lines.append("QUAD")
    lines += [_cons_text(c) for c in model.quadratic]
    return "\n".join(lines) + "\n"


def export_model(inst: Instance, path: str | Path) -> MqcModel:
    model = build_model(inst)
    Path(path).write_text(write_model(model))
    return model


def _parse_float(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ModelFormatError(f"line {lineno}: expected a number, got {tok!r}") from None


def _parse_terms(text: str, lineno: int) -> tuple[Term, ...]:
    terms = []
    for tok in text.split():
        parts = tok.split("*")
        if len(parts) < 2:
            raise ModelFormatError(f"line {lineno}: malformed term {tok!r}")
        terms.append(Term(_parse_float(parts[0], lineno), tuple(parts[1:])))
    return tuple(terms)


def parse_model(text: str) -> MqcModel:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ModelFormatError(f"missing '{HEADER}' header")
    section = None
    variables, objective, lin, quad = [], [], [], []
    seen = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in SECTIONS:
            if line in seen:
                raise ModelFormatError(f"line {lineno}: duplicate section {line}")
            seen.append(line)
            section = line
            continue
        if section == "VARS":
            parts = line.split()
            if len(parts) != 3:
                raise ModelFormatError(f"line {lineno}: expected '<name> <lb> <ub>'")
            variables.append(Variable(parts[0], _parse_float(parts[1], lineno), _parse_float(parts[2], lineno)))
        elif section == "OBJ":
            head, _, body = line.partition(":")
            if head.strip() != "minimize":
                raise ModelFormatError(f"line {lineno}: objective must start with 'minimize :'")
            objective.extend(_parse_terms(body, lineno))
        elif section in ("LIN", "QUAD"):
            head, sep, body = line.partition(":")
            parts = head.split()
            if not sep or len(parts) != 3 or parts[1] not in SENSES:
                raise ModelFormatError(f"line {lineno}: expected '<name> <sense> <rhs> : <terms>'")
            terms = _parse_terms(body, lineno)
            if section == "LIN" and any(len(t.vars) != 1 for t in terms):
                raise ModelFormatError(f"line {lineno}: nonlinear term in LIN section")
            c = Constraint(parts[0], parts[1], _parse_float(parts[2], lineno), terms)
            (lin if section == "LIN" else quad).append(c)
        else:
            raise ModelFormatError(f"line {lineno}: content before the first section")
    names = {v.name for v in variables}
    for c in lin + quad + [Constraint("objective", "=", 0.0, tuple(objective))]:
        for t in c.terms:
            for v in t.vars:
                if v not in names:
                    raise ModelFormatError(f"{c.name}: undeclared variable {v}")
    return MqcModel(tuple(variables), tuple(objective), tuple(lin), tuple(quad))


def read_model(path: str | Path) -> MqcModel:
    return parse_model(Path(path).read_text())


# ---------------------------------------------------------------------------
# solutions


def solution_from_result(result: EvaluationResult) -> dict[str, float]:
    """Variable values implied by an evaluated plan."""
    x: dict[str, float] = {}
    for key, n in result.nodes.items():
        x[var("S", key)] = n.s
        x[var("SE", key)] = 0.0 if n.se is None else n.se
        x[var("SI", key)] = n.si
        x[var("KV", key)] = n.kv
        x[var("Z1", key)] = n.z1
        x[var("Z2", key)] = n.z2
        x[var("U", key)] = n.u
    return x


def write_solution(values: Mapping[str, float], model: MqcModel | None = None) -> str:
    names: Iterable[str] = [v.name for v in model.variables] if model else sorted(values)
    return "".join(f"{name} {_fmt(values[name])}\n" for name in names)


def parse_solution(text: str) -> dict[str, float]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ModelFormatError(f"solution line {lineno}: expected '<name> <value>'")
        out[parts[0]] = _parse_float(parts[1], lineno)
    return out


@dataclass(frozen=True)
class CheckReport:
    feasible: bool
    objective: float
    max_violation: float
    tightness: float
    violations: tuple[tuple[str, float], ...] = field(default=())


TIGHT_PREFIXES = ("z1_def[", "z2_def[", "kv_sq[")


def check_solution(model: MqcModel, values: Mapping[str, float], tol: float = 1e-6) -> CheckReport:
    """Feasibility, objective and tightness of a solution vector.

    Violations and tightness residuals are relative to the magnitude of the
    constraint's terms.  Tightness covers the square-root and square
    definitions, which an optimal solution holds at equality.
    """
    missing = [v.name for v in model.variables if v.name not in values]
    if missing:
        raise ModelFormatError(f"solution is missing {len(missing)} variables, e.g. {missing[0]}")
    viol = []
    worst = 0.0
    for v in model.variables:
        x = values[v.name]
        d = max(v.lb - x, x - v.ub, 0.0) / max(1.0, abs(x))
        worst = max(worst, d)
        if d > tol:
            viol.append((v.name, d))
    tight = 0.0
    for c in model.constraints():
        scale = c.scale(values)
        d = c.violation(values) / scale
        worst = max(worst, d)
        if d > tol:
            viol.append((c.name, d))
        if c.name.startswith(TIGHT_PREFIXES):
            tight = max(tight, abs(c.lhs(values) - c.rhs) / scale)
    obj = math.fsum(t.value(values) for t in model.objective)
    return CheckReport(not viol, obj, worst, tight, tuple(viol))
