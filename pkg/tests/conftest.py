import numpy as np
import pytest

from relaxdual.problem import CoupledProblem, QuadBoxLinearLocal


def quad(w=1.0, r=0.0, lower=-1.0, upper=1.0, a=1.0, b=0.0):
    return QuadBoxLinearLocal(w, r, lower, upper, a, b)


@pytest.fixture
def tiny_problem():
    """Two agents, f = x^2 on [-1, 1], coupling x1 + x2 >= 0.5; f* = 0.125, mu* = 0.5."""
    loc = quad(a=-1.0, b=-0.25)
    return CoupledProblem([loc, quad(a=-1.0, b=-0.25)], 10.0)


TINY_TOML = """\
schema_version = 1
iterations = 50

[problem]
family = "explicit"
big_m = 10.0

[[problem.agents]]
w = 1.0
r = 0.0
lower = -1.0
upper = 1.0
a = [-1.0]
b = [-0.25]

[[problem.agents]]
w = 1.0
r = 0.0
lower = -1.0
upper = 1.0
a = [-1.0]
b = [-0.25]

[graph]
family = "edges"
edges = "1 2"

[output]
dir = "{out}"
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML.format(out=(tmp_path / "out").as_posix()))
    return path


def assert_close(a, b, tol):
    assert np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))) <= tol


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion at the end of the session

_CRITERIA = {}


@pytest.fixture
def report():
    def record(number, title, passed, detail):
        _CRITERIA[number] = (title, passed, detail)
        print(f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'} ({detail})")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number}. {title}: {detail}")
