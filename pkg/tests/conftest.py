from __future__ import annotations

import numpy as np
import pytest

from homax.mesh import build_mesh
from homax.noswirl import Params, solve_profile
from homax.operators import make_context


@pytest.fixture(scope="session")
def mesh():
    return build_mesh(1025, 4.0)


@pytest.fixture(scope="session")
def small_mesh():
    return build_mesh(129, 4.0)


@pytest.fixture(scope="session")
def zero_ctx(mesh):
    """Context at the trivial profile: c = 0, gamma = 0, so Ubar = 0."""
    return make_context(solve_profile(Params(0.0, 0.0, 0.0, 0.0), mesh))


@pytest.fixture(scope="session")
def landau_ctx(mesh):
    """Landau profile 2 (1 - x^2) / (x - 2)."""
    return make_context(solve_profile(Params(0.0, 0.0, 0.0, -1.0), mesh))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    """Record a PASS/FAIL line for the acceptance summary and echo it."""

    def emit(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
