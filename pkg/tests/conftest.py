import numpy as np
import pytest

from mmsched.topology import Network, admissible_mask


def make_network(n_relays, caps, weights=None):
    """Network with only the listed links; ``caps`` maps (i, j) -> capacity."""
    n = n_relays + 2
    capacity = np.zeros((n, n))
    present = np.zeros((n, n), dtype=bool)
    for (i, j), c in caps.items():
        capacity[i, j] = c
        present[i, j] = True
    weight = np.zeros((n, n))
    for (i, j), w in (weights or {}).items():
        weight[i, j] = weight[j, i] = w
    return Network(n_relays, capacity, weight, present=present)


@pytest.fixture
def line_net():
    return make_network(1, {(0, 1): 5.0, (1, 2): 3.0})


@pytest.fixture
def diamond():
    """0 -> {1, 2} -> 3 with unit links."""
    return make_network(2, {(0, 1): 1.0, (1, 3): 1.0, (0, 2): 1.0, (2, 3): 1.0})


DIAMOND_PATHS = [(0, 1, 3), (0, 2, 3)]


@pytest.fixture
def diamond_paths():
    return list(DIAMOND_PATHS)


# (criterion, passed, detail) rows collected by test_acceptance.py
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
