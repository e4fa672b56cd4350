import copy

import pytest

from meio.gsm import make_instance
from meio.network import build_network, bundled_document

RETAILERS = [("Retailer1", "SKU1"), ("Retailer2", "SKU1"), ("Retailer3", "SKU1")]
PLANT_FG = ("Plant", "SKU1")
RAW1 = ("Plant", "Raw1")
RAW2 = ("Plant", "Raw2")


def scenario_doc(name="illustrative", **options):
    doc = copy.deepcopy(bundled_document(name))
    doc.setdefault("options", {}).update(options)
    return doc


def instance_of(doc):
    return make_instance(build_network(doc))


def stock_point(doc, location, material="SKU1"):
    for sp in doc["stock_points"]:
        if sp["location"] == location and sp["material"] == material:
            return sp
    raise KeyError((location, material))


def production_arc(doc, material="SKU1"):
    for arc in doc["arcs"]:
        if arc["from"] == "Plant" and arc["to"] == "Plant" and arc["material"] == material:
            return arc
    raise KeyError(material)


@pytest.fixture
def illustrative_doc():
    return scenario_doc()


@pytest.fixture
def illustrative():
    return instance_of(scenario_doc())


_acceptance_lines: dict[int, str] = {}


class Criterion:
    """Collects named checks for one acceptance criterion and reports a single verdict."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.failures: list[str] = []
        self.notes: list[str] = []

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        ok = bool(ok)
        text = f"{name} ({detail})" if detail else name
        (self.notes if ok else self.failures).append(text)
        return ok

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and exc_type is not AssertionError:
            self.failures.append(f"error: {exc_type.__name__}: {exc}")
        verdict = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.failures or self.notes)
        line = f"criterion {self.number:>2} {verdict}: {self.title}"
        _acceptance_lines[self.number] = f"{line} | {detail}" if detail else line
        print(_acceptance_lines[self.number])
        if exc is None and self.failures:
            raise AssertionError("; ".join(self.failures))
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_acceptance_lines):
            terminalreporter.write_line(_acceptance_lines[number])
