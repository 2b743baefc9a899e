import json
from importlib import resources
from types import SimpleNamespace

import pytest

from odi_solve.fem import assemble
from odi_solve.hypotheses import check_H1, check_H2, compute_window
from odi_solve.problem import ProblemSpec
from odi_solve.setvalued import resolve_selection


def config_path(n: int):
    return resources.files("odi_solve") / "configs" / f"example{n}.json"


def load_example(n: int) -> SimpleNamespace:
    cfg = json.loads(config_path(n).read_text())
    spec = ProblemSpec.from_dict(cfg["problem"], cfg["lambda"], cfg["name"])
    if spec.g is not None:
        rep = check_H2(spec.g, spec.growth, spec.c, spec.d, spec.a, spec.b)
    else:
        rep = check_H1(spec.F, spec.selection, spec.growth, spec.c, spec.d, spec.p, spec.q, spec.a, spec.b)
    window = compute_window(rep)
    pe = resolve_selection(spec.F, spec.selection)
    return SimpleNamespace(cfg=cfg, spec=spec, report=rep, window=window, pe=pe,
                           space=lambda N=256, quad_order=4: assemble(spec.a.value, spec.b.value, spec.p, spec.q,
                                                                      N=N, quad_order=quad_order))


@pytest.fixture(scope="session")
def ex1():
    return load_example(1)


@pytest.fixture(scope="session")
def ex2():
    return load_example(2)


# -- acceptance summary: one pass/fail line per criterion ------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "tests": 0, "notes": []})
    if rep.when == "call":
        entry["tests"] += 1
    if rep.failed:
        entry["ok"] = False
        entry["notes"].append(item.name)
    for key, value in getattr(item, "user_properties", []):
        if key == "detail" and rep.when == "call":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        verdict = "PASS" if e["ok"] and e["tests"] else "FAIL"
        line = f"criterion {number}: {verdict}  {e['title']}"
        if e["notes"]:
            line += "  [" + "; ".join(e["notes"]) + "]"
        terminalreporter.write_line(line)
