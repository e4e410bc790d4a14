import math

import numpy as np
import pytest
from hypothesis import strategies as st

from hvsinglet.geometry import Settings, UnitVec3
from hvsinglet.singlet_model import HiddenPair


@st.composite
def unit_vectors(draw):
    z = draw(st.floats(-1.0, 1.0, allow_nan=False))
    phi = draw(st.floats(0.0, 2 * math.pi, allow_nan=False))
    rho = math.sqrt(max(0.0, 1.0 - z * z))
    return UnitVec3.normalized(rho * math.cos(phi), rho * math.sin(phi), z)


@st.composite
def settings_st(draw):
    return Settings(draw(unit_vectors()), draw(unit_vectors()))


@st.composite
def hidden_pairs(draw):
    return HiddenPair(draw(unit_vectors()), draw(unit_vectors()))


signs = st.sampled_from([1, -1])


def vec_with_dot(target: UnitVec3, c: float) -> UnitVec3:
    """A unit vector whose dot product with ``target`` is ``c``."""
    t = target.as_array()
    helper = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    perp = helper - helper.dot(t) * t
    perp /= np.linalg.norm(perp)
    return UnitVec3.from_array(c * t + math.sqrt(1 - c * c) * perp)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
