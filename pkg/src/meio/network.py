"""Supply-network scenarios: stock points, arcs, bill of materials and validation.

A stock point is a ``(location, material)`` pair.  Distribution arcs move a
material between two locations; a production arc is a self-loop at a plant
that turns the BOM inputs held at that plant into the arc's material.  An arc
with ``"from": null`` models an external supplier feeding a source stock
point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import networkx as nx

from .normstats import DEFAULT_COEFFS, SurrogateCoeffs, std_normal_inv_cdf

SCHEMA_VERSION = 1

Key = tuple[str, str]

LOCATION_KINDS = ("plant", "distribution_center", "retailer")
ROUNDING_MODES = ("none", "ceil")
FILL_RATE_MODES = ("exact", "surrogate")

DEFAULT_K_LT = std_normal_inv_cdf(0.97)


class ScenarioError(ValueError):
    """Raised when a scenario document does not describe a valid network."""


def label(key: Key) -> str:
    return f"{key[0]}/{key[1]}"


@dataclass(frozen=True)
class Material:
    id: str
    description: str = ""


@dataclass(frozen=True)
class Location:
    id: str
    kind: str


@dataclass(frozen=True)
class Arc:
    source: str | None  # None: external supplier
    to: str
    material: str
    lt_mean: float
    lt_sd: float = 0.0

    @property
    def is_production(self) -> bool:
        return self.source == self.to

    @property
    def is_external(self) -> bool:
        return self.source is None


@dataclass(frozen=True)
class BomEntry:
    input: str
    output: str
    phi: float


@dataclass(frozen=True)
class ServiceTarget:
    mode: str  # "csl" or "fill_rate"
    value: float

    @property
    def k(self) -> float | None:
        return std_normal_inv_cdf(self.value) if self.mode == "csl" else None


@dataclass(frozen=True)
class StockPoint:
    location: str
    material: str
    holding_cost: float
    target: ServiceTarget
    review_period: int = 1
    max_s: float | None = None
    max_se: float | None = None
    si0: float | None = None
    moq: float = 0.0
    mu_i: float = 0.0
    sigma_i: float = 0.0
    has_independent_demand: bool = False
    no_safety_stock: bool = False
    k_lt: float | None = None

    @property
    def key(self) -> Key:
        return (self.location, self.material)


@dataclass(frozen=True)
class GlobalOptions:
    k_lt: float = DEFAULT_K_LT
    lead_time_rounding: str = "ceil"
    fill_rate_mode: str = "surrogate"
    surrogate_coeffs: SurrogateCoeffs = DEFAULT_COEFFS


@dataclass(frozen=True)
class NetworkSpec:
    materials: tuple[Material, ...]
    locations: tuple[Location, ...]
    arcs: tuple[Arc, ...]
    bom: tuple[BomEntry, ...]
    stock_points: tuple[StockPoint, ...]
    options: GlobalOptions
    order: tuple[Key, ...] = field(repr=False)
    inbound: Mapping[Key, Arc] = field(repr=False)
    # predecessor -> phi (units of predecessor per unit of this stock point)
    preds: Mapping[Key, tuple[tuple[Key, float], ...]] = field(repr=False)
    succs: Mapping[Key, tuple[tuple[Key, float], ...]] = field(repr=False)
    by_key: Mapping[Key, StockPoint] = field(repr=False)
    warnings: tuple[str, ...] = ()

    def __getitem__(self, key: Key) -> StockPoint:
        return self.by_key[key]

    def k_lt(self, key: Key) -> float:
        sp = self[key]
        return self.options.k_lt if sp.k_lt is None else sp.k_lt

    def sources(self) -> list[Key]:
        return [k for k in self.order if not self.preds[k]]


def _num(doc: Mapping[str, Any], name: str, default: Any = ..., *, where: str) -> Any:
    if name not in doc or doc[name] is None:
        if default is ...:
            raise ScenarioError(f"{where}: missing field '{name}'")
        return default
    val = doc[name]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ScenarioError(f"{where}: field '{name}' must be a finite number, got {val!r}")
    return val


def _target(doc: Any, where: str) -> ServiceTarget:
    if not isinstance(doc, Mapping):
        raise ScenarioError(f"{where}: target must be an object with 'mode' and 'value'")
    mode = doc.get("mode")
    if mode not in ("csl", "fill_rate"):
        raise ScenarioError(f"{where}: target mode must be 'csl' or 'fill_rate', got {mode!r}")
    value = _num(doc, "value", where=where)
    if not 0.0 < value < 1.0:
        raise ScenarioError(f"{where}: target value must lie in (0, 1), got {value}")
    return ServiceTarget(mode, float(value))


def _options(doc: Mapping[str, Any]) -> GlobalOptions:
    where = "options"
    k_lt = float(_num(doc, "k_lt", DEFAULT_K_LT, where=where))
    if k_lt < 0:
        raise ScenarioError("options: k_lt must be >= 0")
    rounding = doc.get("lead_time_rounding", "ceil")
    if rounding not in ROUNDING_MODES:
        raise ScenarioError(f"options: lead_time_rounding must be one of {ROUNDING_MODES}")
    fr_mode = doc.get("fill_rate_mode", "surrogate")
    if fr_mode not in FILL_RATE_MODES:
        raise ScenarioError(f"options: fill_rate_mode must be one of {FILL_RATE_MODES}")
    coeffs = DEFAULT_COEFFS
    if doc.get("surrogate_coeffs") is not None:
        raw = doc["surrogate_coeffs"]
        try:
            a, b, c = (float(raw[n]) for n in "abc") if isinstance(raw, Mapping) else map(float, raw)
        except (TypeError, ValueError, KeyError) as exc:
            raise ScenarioError("options: surrogate_coeffs must be [a, b, c]") from exc
        coeffs = SurrogateCoeffs(a, b, c)
    return GlobalOptions(k_lt, rounding, fr_mode, coeffs)


def _unique(items, what: str) -> None:
    seen = set()
    for it in items:
        if it in seen:
            raise ScenarioError(f"duplicate {what} {it!r}")
        seen.add(it)


def build_network(doc: Mapping[str, Any]) -> NetworkSpec:
    """Validate a scenario document and return the immutable network."""
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario document must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version!r}")

    materials = tuple(
        Material(str(m["id"]), str(m.get("description", ""))) for m in doc.get("materials", [])
    )
    _unique([m.id for m in materials], "material id")
    mat_ids = {m.id for m in materials}

    locations = []
    for loc in doc.get("locations", []):
        kind = loc.get("kind", "distribution_center")
        if kind not in LOCATION_KINDS:
            raise ScenarioError(f"location {loc.get('id')!r}: unknown kind {kind!r}")
        locations.append(Location(str(loc["id"]), kind))
    locations = tuple(locations)
    _unique([l.id for l in locations], "location id")
    loc_ids = {l.id for l in locations}

    options = _options(doc.get("options") or {})
    default_target = (doc.get("options") or {}).get("default_target")

    stock_points = []
    for raw in doc.get("stock_points", []):
        loc, mat = raw.get("location"), raw.get("material")
        where = f"stock point {loc}/{mat}"
        if loc not in loc_ids:
            raise ScenarioError(f"{where}: unknown location {loc!r}")
        if mat not in mat_ids:
            raise ScenarioError(f"{where}: unknown material {mat!r}")
        h = float(_num(raw, "holding_cost", where=where))
        r = _num(raw, "review_period", 1, where=where)
        if int(r) != r or r < 1:
            raise ScenarioError(f"{where}: review_period must be an integer >= 1")
        tgt_doc = raw.get("target", default_target)
        if tgt_doc is None:
            raise ScenarioError(f"{where}: missing service target")
        dem = raw.get("independent_demand")
        mu_i = sigma_i = 0.0
        if dem is not None:
            mu_i = float(_num(dem, "mu", where=where + " independent_demand"))
            sigma_i = float(_num(dem, "sigma", where=where + " independent_demand"))
        opt = {}
        for name in ("max_s", "max_se", "si0", "k_lt"):
            v = _num(raw, name, None, where=where)
            opt[name] = None if v is None else float(v)
        moq = float(_num(raw, "moq", 0.0, where=where))
        if h < 0 or moq < 0 or mu_i < 0 or sigma_i < 0:
            raise ScenarioError(f"{where}: holding_cost, moq and demand moments must be >= 0")
        for name in ("max_s", "max_se", "si0", "k_lt"):
            if opt[name] is not None and opt[name] < 0:
                raise ScenarioError(f"{where}: {name} must be >= 0")
        if opt["si0"] is not None and opt["si0"] != int(opt["si0"]):
            raise ScenarioError(f"{where}: si0 must be a whole number of periods")
        stock_points.append(
            StockPoint(
                location=loc,
                material=mat,
                holding_cost=h,
                target=_target(tgt_doc, where),
                review_period=int(r),
                moq=moq,
                mu_i=mu_i,
                sigma_i=sigma_i,
                has_independent_demand=dem is not None,
                no_safety_stock=bool(raw.get("no_safety_stock", False)),
                **opt,
            )
        )
    stock_points = tuple(stock_points)
    if not stock_points:
        raise ScenarioError("scenario has no stock points")
    _unique([sp.key for sp in stock_points], "stock point")
    sp_keys = {sp.key for sp in stock_points}

    bom = []
    for raw in doc.get("bom", []):
        entry = BomEntry(str(raw["input"]), str(raw["output"]), float(raw["phi"]))
        if entry.input not in mat_ids or entry.output not in mat_ids:
            raise ScenarioError(f"bom entry {entry.input}->{entry.output}: unknown material")
        if not entry.phi > 0:
            raise ScenarioError(f"bom entry {entry.input}->{entry.output}: phi must be > 0")
        bom.append(entry)
    bom = tuple(bom)
    _unique([(b.input, b.output) for b in bom], "bom pair")
    mat_graph = nx.DiGraph((b.input, b.output) for b in bom)
    if not nx.is_directed_acyclic_graph(mat_graph):
        raise ScenarioError("cyclic network: bill of materials contains a cycle")

    arcs = []
    for raw in doc.get("arcs", []):
        src = raw.get("from")
        to, mat = raw.get("to"), raw.get("material")
        where = f"arc {src}->{to} ({mat})"
        if (src is not None and src not in loc_ids) or to not in loc_ids:
            raise ScenarioError(f"{where}: unknown location")
        if mat not in mat_ids:
            raise ScenarioError(f"{where}: unknown material")
        lt = float(_num(raw, "lt_mean", where=where))
        sd = float(_num(raw, "lt_sd", 0.0, where=where))
        if lt < 0 or sd < 0:
            raise ScenarioError(f"{where}: lead-time moments must be >= 0")
        arcs.append(Arc(src, to, mat, lt, sd))
    arcs = tuple(arcs)

    inbound: dict[Key, Arc] = {}
    for arc in arcs:
        key = (arc.to, arc.material)
        if key not in sp_keys:
            raise ScenarioError(f"arc into {label(key)}: no such stock point")
        if key in inbound:
            raise ScenarioError(f"non-divergent network: {label(key)} has more than one supplier")
        inbound[key] = arc

    preds: dict[Key, list[tuple[Key, float]]] = {k: [] for k in sp_keys}
    succs: dict[Key, list[tuple[Key, float]]] = {k: [] for k in sp_keys}
    for sp in stock_points:
        key = sp.key
        arc = inbound.get(key)
        if arc is None:
            raise ScenarioError(f"stock point {label(key)} has no inbound arc")
        if arc.is_external:
            continue
        if arc.is_production:
            inputs = [b for b in bom if b.output == sp.material]
            if not inputs:
                raise ScenarioError(
                    f"production arc at {sp.location} for {sp.material} has no bill of materials"
                )
            for b in inputs:
                pkey = (sp.location, b.input)
                if pkey not in sp_keys:
                    raise ScenarioError(
                        f"production of {label(key)} needs stock point {label(pkey)}"
                    )
                preds[key].append((pkey, b.phi))
                succs[pkey].append((key, b.phi))
        else:
            pkey = (arc.source, sp.material)
            if pkey not in sp_keys:
                raise ScenarioError(f"arc into {label(key)}: supplier {label(pkey)} does not exist")
            preds[key].append((pkey, 1.0))
            succs[pkey].append((key, 1.0))

    index = {sp.key: i for i, sp in enumerate(stock_points)}
    graph = nx.DiGraph()
    graph.add_nodes_from(index)
    graph.add_edges_from((p, k) for k, ps in preds.items() for p, _ in ps)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise ScenarioError(
            "cyclic network: " + " -> ".join(label(e[0]) for e in cycle)
        )
    order = tuple(nx.lexicographical_topological_sort(graph, key=index.__getitem__))

    for sp in stock_points:
        is_source = not preds[sp.key]
        if is_source and sp.si0 is None:
            raise ScenarioError(f"unbounded source: {label(sp.key)} needs si0")
        if not is_source and sp.si0 is not None:
            raise ScenarioError(f"{label(sp.key)}: si0 is only allowed on source stock points")

    warns = []
    by_key = {sp.key: sp for sp in stock_points}
    for key in order:
        for pkey, _ in preds[key]:
            r_up, r_down = by_key[pkey].review_period, by_key[key].review_period
            if r_down % r_up:
                warns.append(
                    f"review period of {label(key)} ({r_down}) is not a multiple of its "
                    f"supplier {label(pkey)} ({r_up}); reviews are not nested"
                )

    def ordered(m: dict[Key, list[tuple[Key, float]]]) -> dict[Key, tuple[tuple[Key, float], ...]]:
        return {k: tuple(sorted(m[k], key=lambda e: index[e[0]])) for k in order}

    return NetworkSpec(
        materials=materials,
        locations=locations,
        arcs=arcs,
        bom=bom,
        stock_points=stock_points,
        options=options,
        order=order,
        inbound=inbound,
        preds=ordered(preds),
        succs=ordered(succs),
        by_key=by_key,
        warnings=tuple(warns),
    )


def stockpoint_graph(net: NetworkSpec) -> tuple[list[Key], dict[Key, list[Key]], dict[Key, list[Key]]]:
    """Topological order plus predecessor and successor maps."""
    return (
        list(net.order),
        {k: [p for p, _ in net.preds[k]] for k in net.order},
        {k: [s for s, _ in net.succs[k]] for k in net.order},
    )


def to_digraph(net: NetworkSpec) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(net.order)
    g.add_edges_from((p, k) for k in net.order for p, _ in net.preds[k])
    return g


def is_forest(net: NetworkSpec) -> bool:
    """True when the stock-point graph has no cycle even ignoring edge direction."""
    return nx.is_forest(to_digraph(net).to_undirected())


def load_scenario(path: str | Path) -> NetworkSpec:
    return build_network(json.loads(Path(path).read_text()))


def read_document(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def bundled_document(name: str = "illustrative") -> dict:
    """Raw scenario document shipped with the package (``meio/data/<name>.json``)."""
    text = resources.files("meio.data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def bundled_scenario(name: str = "illustrative") -> NetworkSpec:
    return build_network(bundled_document(name))
