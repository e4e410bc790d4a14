"""Unit vectors, detector settings and seeded direction sampling.

Uniform directions are produced from two uniform variates ``(r1, r2)`` in
``[0, 1)`` through the inverse-cosine map::

    z   = 1 - 2 * r1
    phi = 2 * pi * r2
    (x, y, z) = (sqrt(1 - z**2) cos(phi), sqrt(1 - z**2) sin(phi), z)

Since ``z`` is uniform on ``[-1, 1]`` (Archimedes), the point is uniform on
the sphere.  The map is applied to ``Generator.random`` output, so a given
seed reproduces the same directions bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12
# constructor rejects norms off by more than this; drift above NORM_TOL is rescaled
_ACCEPT_TOL = 1e-9


@dataclass(frozen=True)
class UnitVec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        comps = (float(self.x), float(self.y), float(self.z))
        if not all(math.isfinite(c) for c in comps):
            raise ValueError(f"non-finite component in {comps}")
        norm = math.sqrt(comps[0] ** 2 + comps[1] ** 2 + comps[2] ** 2)
        if abs(norm - 1.0) > _ACCEPT_TOL:
            raise ValueError(f"not a unit vector (norm={norm!r}); use UnitVec3.normalized")
        if abs(norm - 1.0) > NORM_TOL:
            comps = tuple(c / norm for c in comps)
        object.__setattr__(self, "x", comps[0])
        object.__setattr__(self, "y", comps[1])
        object.__setattr__(self, "z", comps[2])

    @classmethod
    def normalized(cls, x: float, y: float, z: float) -> UnitVec3:
        """Build a unit vector pointing along an arbitrary nonzero 3-vector."""
        norm = math.sqrt(x * x + y * y + z * z)
        if not math.isfinite(norm) or norm == 0.0:
            raise ValueError(f"cannot normalize ({x}, {y}, {z})")
        return cls(x / norm, y / norm, z / norm)

    @classmethod
    def from_array(cls, arr) -> UnitVec3:
        x, y, z = (float(c) for c in arr)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z]

    def __neg__(self) -> UnitVec3:
        return UnitVec3(-self.x, -self.y, -self.z)

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def distance(self, other: UnitVec3) -> float:
        return math.dist(tuple(self), tuple(other))


E_X = UnitVec3(1.0, 0.0, 0.0)
E_Y = UnitVec3(0.0, 1.0, 0.0)
E_Z = UnitVec3(0.0, 0.0, 1.0)


@dataclass(frozen=True)
class Settings:
    """Detector orientations: ``a`` at station A, ``b`` at station B."""

    a: UnitVec3
    b: UnitVec3

    def __post_init__(self):
        if not isinstance(self.a, UnitVec3) or not isinstance(self.b, UnitVec3):
            raise TypeError("settings must be UnitVec3 instances")

    @classmethod
    def from_angles(cls, angle_a_deg: float, angle_b_deg: float) -> Settings:
        """Coplanar settings from polar angles (degrees) in the x-y plane."""
        return cls(planar_direction(math.radians(angle_a_deg)),
                   planar_direction(math.radians(angle_b_deg)))

    def swapped(self) -> Settings:
        return Settings(self.b, self.a)

    def to_dict(self) -> dict:
        return {"a": self.a.as_list(), "b": self.b.as_list()}


def dot(u: UnitVec3, v: UnitVec3) -> float:
    """Inner product, clamped to [-1, 1] so derived probabilities stay in [0, 1]."""
    d = u.x * v.x + u.y * v.y + u.z * v.z
    return min(1.0, max(-1.0, d))


def planar_direction(angle: float) -> UnitVec3:
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle!r}")
    return UnitVec3(math.cos(angle), math.sin(angle), 0.0)


def directions_from_uniforms(r1, r2) -> np.ndarray:
    """Map uniform variates to points on the sphere (see module docstring).

    Returns an array of shape ``broadcast(r1, r2).shape + (3,)``.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    z = 1.0 - 2.0 * r1
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = 2.0 * np.pi * r2
    out = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    # absorb the sqrt/cos rounding so every row meets NORM_TOL
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def random_direction(stream: np.random.Generator) -> UnitVec3:
    r1, r2 = stream.random(2)
    return UnitVec3.from_array(directions_from_uniforms(r1, r2))


def random_directions(stream: np.random.Generator, n: int) -> np.ndarray:
    """``n`` uniform directions as an ``(n, 3)`` array.

    Consumes the stream exactly like ``n`` successive :func:`random_direction`
    calls, so both routes give the same vectors.
    """
    r = stream.random((n, 2))
    return directions_from_uniforms(r[:, 0], r[:, 1])


def make_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``.

    Distinct keys give statistically independent streams; the same key
    always gives the same stream.  Used for counter-based substreams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
