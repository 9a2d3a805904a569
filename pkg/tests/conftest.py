import json
import re
import socket
import time

import pytest

from mmorf import data_path
from mmorf.chemworld import Reaction, load_world
from mmorf.evalbench.tasks import Task
from mmorf.routes import Route


@pytest.fixture(scope="session")
def tiny():
    return load_world(data_path("tiny.world.json"))


@pytest.fixture(scope="session")
def case_world():
    return load_world(data_path("case.world.json"))


@pytest.fixture(scope="session")
def lattice_worlds():
    targets = json.loads(data_path("lattice_targets.json").read_text())
    return [(load_world(data_path(name)), ts) for name, ts in sorted(targets.items())]


@pytest.fixture
def ester_route():
    return Route("ac-ester", (Reaction.parse("ac-acid.me-oh>>ac-ester"),))


def make_task(product, constraints=(), instruction="", task_id=None):
    return Task(task_id or product, product, "hcmo", tuple(constraints), instruction)


def reply(action):
    return f"Thought: ok\nAction: `{action}`<PAUSE>"


# no test may open a socket unless it is marked as needing the network
@pytest.fixture(autouse=True)
def _no_network(request, monkeypatch):
    if request.node.get_closest_marker("network"):
        return

    def refuse(*args, **kwargs):
        raise OSError("network access is disabled in tests")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


# acceptance tests are named test_c<N>_...; report one line per criterion
_CRITERION = re.compile(r"test_acceptance\.py::test_c(\d+)_")
_outcomes: dict[int, list[bool]] = {}
_started = time.monotonic()


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome == "failed":
        _outcomes.setdefault(int(m.group(1)), []).append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter, exitstatus):
    if not _outcomes:
        return
    elapsed = time.monotonic() - _started
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_outcomes):
        ok = all(_outcomes[n])
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({sum(_outcomes[n])}/{len(_outcomes[n])} checks)")
    whole = exitstatus == 0 and elapsed < 60
    tr.write_line(f"full suite: {'PASS' if whole else 'FAIL'} in {elapsed:.1f} s (limit 60 s, exit status {int(exitstatus)})")
