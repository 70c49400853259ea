import numpy as np
import pytest

from sparse_forge.tensor import from_coo

from oracles import A_COORDS, A_SHAPE, A_VALUES


@pytest.fixture
def mat_a():
    return from_coo(A_SHAPE, A_COORDS, A_VALUES)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in results.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
