"""Shared fixtures: PDE grids and reduced models built once per session."""

import sys

import numpy as np
import pytest

from mapmcmc.models_beam import build_beam_surrogate, make_beam_grid
from mapmcmc.models_dr import build_dr_rom, make_dr_grid


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # echo per-criterion acceptance lines past the output capture
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def dr_grid():
    return make_dr_grid(1.0 / 32.0)


@pytest.fixture(scope="session")
def dr_rom():
    return build_dr_rom(1.0 / 32.0, snapshot_shape=(20, 20), r=20)


@pytest.fixture(scope="session")
def beam_grid():
    return make_beam_grid(601)


@pytest.fixture(scope="session")
def beam_surrogate(beam_grid):
    return build_beam_surrogate(beam_grid, nodes_per_axis=10, box=(0.5, 4.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
