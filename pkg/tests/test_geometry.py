import math

import numpy as np
import pytest
from hypothesis import given

from hvsinglet.geometry import (
    E_X,
    E_Y,
    E_Z,
    Settings,
    UnitVec3,
    directions_from_uniforms,
    dot,
    make_stream,
    planar_direction,
    random_direction,
    random_directions,
)

from conftest import unit_vectors


@pytest.mark.parametrize("u, v, expected", [(E_Z, E_Z, 1.0), (E_Z, E_X, 0.0), (E_Z, -E_Z, -1.0)])
def test_dot_examples(u, v, expected):
    assert dot(u, v) == expected


@given(unit_vectors(), unit_vectors())
def test_dot_clamped(u, v):
    assert -1.0 <= dot(u, v) <= 1.0


def test_dot_clamps_rounding():
    # sum of products of this vector with itself exceeds 1 by an ulp
    u = UnitVec3(0.6, 0.8, 0.0)
    assert dot(u, u) <= 1.0


@given(unit_vectors())
def test_unit_norm_and_negation(u):
    for w in (u, -u):
        assert abs(w.x ** 2 + w.y ** 2 + w.z ** 2 - 1.0) <= 1e-12


def test_constructor_rejects_non_unit():
    with pytest.raises(ValueError):
        UnitVec3(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        UnitVec3(float("nan"), 0.0, 0.0)
    with pytest.raises(ValueError):
        UnitVec3.normalized(0.0, 0.0, 0.0)


def test_normalized():
    u = UnitVec3.normalized(3.0, 4.0, 0.0)
    assert (u.x, u.y, u.z) == pytest.approx((0.6, 0.8, 0.0), abs=1e-15)


def test_planar_direction_examples():
    assert tuple(planar_direction(0.0)) == (1.0, 0.0, 0.0)
    p = planar_direction(math.pi / 2)
    assert p.x == pytest.approx(0.0, abs=1e-16) and p.y == 1.0 and p.z == 0.0
    q = planar_direction(math.pi / 4)
    h = math.sqrt(2) / 2
    assert (q.x, q.y, q.z) == pytest.approx((h, h, 0.0), abs=1e-15)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_planar_direction_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        planar_direction(bad)


def test_settings_from_angles_and_swap():
    s = Settings.from_angles(0.0, 90.0)
    assert dot(s.a, E_X) == 1.0
    assert dot(s.b, E_Y) == pytest.approx(1.0)
    assert s.swapped() == Settings(s.b, s.a)


def test_random_direction_deterministic():
    a = random_direction(make_stream(42))
    b = random_direction(make_stream(42))
    assert a == b
    assert random_direction(make_stream(43)) != a


def test_vector_and_scalar_routes_agree():
    many = random_directions(make_stream(9), 50)
    stream = make_stream(9)
    one_by_one = np.array([random_direction(stream).as_array() for _ in range(50)])
    np.testing.assert_array_equal(many, one_by_one)


def test_mapping_hits_poles_and_equator():
    pts = directions_from_uniforms([0.0, 0.5, 0.5], [0.0, 0.0, 0.25])
    np.testing.assert_allclose(pts, [[0, 0, 1], [1, 0, 0], [0, 1, 0]], atol=1e-15)


def test_uniformity_moments():
    n = 10 ** 5
    pts = random_directions(make_stream(2024), n)
    norms = np.linalg.norm(pts, axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-12
    mean = pts.mean(axis=0)
    # norm of the mean vector: CLT scale ~ sqrt(1/N) per component
    assert np.linalg.norm(mean) < 0.02
    assert -0.01 <= mean[2] <= 0.01
    bound = 4 / math.sqrt(n)
    assert np.all(np.abs(mean) < bound)
    assert abs(np.mean(pts[:, 2] ** 2) - 1 / 3) < bound


def test_byte_identical_sequences():
    a = random_directions(make_stream(77, 3), 1000).tobytes()
    b = random_directions(make_stream(77, 3), 1000).tobytes()
    assert a == b
