import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def canonical_landmarks(seed=0, spread=1.0):
    """A plausible 68-point face around (100, 100) with eyes 40 px apart."""
    from outerface.corpus.synth import face_landmarks

    rng = np.random.default_rng(seed)
    inner = np.tanh(rng.standard_normal(16))
    outer = np.tanh(rng.standard_normal(16))
    pts = face_landmarks(inner, outer) * 40.0 * spread
    return pts + np.array([100.0, 90.0])


@pytest.fixture
def face_points():
    return canonical_landmarks()


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    """Print now (visible with -s) and again in the terminal summary."""
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
