import warnings

import pytest

from fixtures import bar_spec, f3_topology, het_spec, problem, sq_spec

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str):
    """Store one acceptance outcome; the terminal summary prints them all."""
    prev = ACCEPTANCE.get(criterion)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[criterion] = (ok, detail)
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")


@pytest.fixture
def f3():
    return f3_topology()


@pytest.fixture
def bar():
    return problem(bar_spec())


@pytest.fixture
def sq22():
    return problem(sq_spec(2, 4))


@pytest.fixture
def sq33():
    return problem(sq_spec(3, 4))


@pytest.fixture
def sq44():
    return problem(sq_spec(4, 8))


@pytest.fixture
def het():
    return problem(het_spec())


@pytest.fixture(autouse=True)
def _quiet_known_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="floating subdomains without coarse space")
        yield
