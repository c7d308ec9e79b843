import numpy as np
import pytest

from delaylmi.model import ControllerGains, PlantModel

EXAMPLE_A_P = [[0.6693, -0.0042], [0.4231, 1.0501]]
EXAMPLE_B_P = [0.1647, 0.0960]
# gains printed for the example loop (epsilon = -0.995, d_n = 1)
EXAMPLE_K = [[-0.1925, -0.1702]]
EXAMPLE_F = [[-0.1755, -0.1601]]
EXAMPLE_L = [[-0.0032, -0.0007], [0.0578, 0.0525]]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def example_plant():
    return PlantModel(EXAMPLE_A_P, EXAMPLE_B_P)


@pytest.fixture
def example_gains():
    return ControllerGains(EXAMPLE_K, EXAMPLE_F, EXAMPLE_L)


def random_psd(rng, n, floor=0.1):
    A = rng.normal(size=(n, n))
    return A @ A.T + floor * np.eye(n)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def acceptance_line(number: int) -> str:
    parts = ACCEPTANCE[number]
    ok = all(p[0] for p in parts)
    return f"criterion {number}: {'PASS' if ok else 'FAIL'} " + "; ".join(p[1] for p in parts)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(acceptance_line(k))
