import numpy as np
import pytest

from probeguide.bodymodel import BodyParams, pose_body
from probeguide.sessionio import resolve_model_ref

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Shared sink for per-criterion verdict lines; echoed after the run."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_surface():
    return resolve_model_ref("builtin:desk_small_surface")


@pytest.fixture(scope="session")
def small_skeleton():
    return resolve_model_ref("builtin:desk_small_skeleton")


@pytest.fixture(scope="session")
def full_surface():
    return resolve_model_ref("builtin:desk_full_surface")


@pytest.fixture(scope="session")
def rest_body(small_surface):
    """Rest pose of the small surface model, shared read-only."""
    m = small_surface
    return pose_body(m, BodyParams(np.zeros(m.shape_count), np.zeros(m.pose_dim),
                                   np.zeros(3)))
