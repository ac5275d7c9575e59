import numpy as np
import pytest

from eigbound.basis import generate_alb
from eigbound.config import load_config
from eigbound.constants import compute_constants
from eigbound.mesh import build_partition, build_quadrature
from eigbound.pipeline import compute_reference, run_single, setup
from eigbound.spectral import PotentialSpec

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def setup_1d():
    return setup(load_config("paper-1d"))


@pytest.fixture(scope="session")
def setup_2d():
    return setup(load_config("paper-2d"))


@pytest.fixture(scope="session")
def reference_1d(setup_1d):
    return compute_reference(setup_1d)


@pytest.fixture(scope="session")
def run_1d_n6(setup_1d, reference_1d):
    return run_single(setup_1d, 6, diagnostics=True, reference=reference_1d)


@pytest.fixture(scope="session")
def run_1d_n10(setup_1d, reference_1d):
    return run_single(setup_1d, 10, diagnostics=True, reference=reference_1d)


@pytest.fixture(scope="session")
def run_1d_n6_surrogate(setup_1d, reference_1d):
    return run_single(setup_1d, 6, diagnostics=False, reference=reference_1d)


@pytest.fixture(scope="session")
def run_2d_n11(setup_2d):
    return run_single(setup_2d, 11, diagnostics=True)


@pytest.fixture(scope="session")
def small_grid():
    """Five elements on [0, 2pi) with a two-well potential; cheap to build."""
    part = build_partition(1, [TWO_PI], [5])
    grid = build_quadrature(part, 40)
    spec = PotentialSpec([[1.0], [4.0]], 0.3, [-10.0, -8.0], (TWO_PI,))
    return grid, spec


@pytest.fixture(scope="session")
def small_basis(small_grid):
    grid, spec = small_grid
    basis = generate_alb(grid, spec, 6, 31)
    return basis, compute_constants(basis)


def pytest_terminal_summary(terminalreporter):
    from _util import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
