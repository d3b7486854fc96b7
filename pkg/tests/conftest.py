import numpy as np
import pytest

from ccrm.netmodel import BusinessRole, Capitals, build_network
from ccrm.scenarios import AgentSpec, EdgeSpec, Intervention, Scenario


def make_scenario(agents, edges, target=None, step=0, horizon=60, scenario_id="T"):
    """Build a scenario from ``(id, role, capitals[, social])`` and ``(i, j, tag[, trust])`` tuples."""
    specs = []
    for a in agents:
        aid, role, caps = a[:3]
        social = a[3] if len(a) > 3 else "neutral"
        caps = Capitals(*caps) if isinstance(caps, tuple) else caps
        specs.append(AgentSpec(aid, BusinessRole.parse(role), social, caps))
    es = tuple(EdgeSpec(e[0], e[1], e[2], e[3] if len(e) > 3 else "sample") for e in edges)
    return Scenario(scenario_id, tuple(specs), es, Intervention(target or specs[0].id, step), horizon)


def make_state(agents, edges, seed=0, **kw):
    return build_network(make_scenario(agents, edges, **kw), np.random.default_rng(seed))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ----------------------------------------------------------

_CRITERIA: dict[str, tuple[str, float]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        outcome, seconds = _CRITERIA[name]
        number = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {label}  ({seconds:.1f} s)")
