"""Atomic hidden-variable distribution and measurement-dependence metrics.

For settings ``{a, b}`` the hidden pair is ``(p, -p)`` with ``p`` one of
``+a, -a, +b, -b``, each with weight 1/4.  When ``a = +-b`` the naive
sum double counts points; coincident atoms are merged (weights added), which
keeps the total at 1 and leaves two atoms of weight 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .geometry import Settings, UnitVec3
from .singlet_model import HiddenPair

PAIR_SPACE = "pair"
SINGLE_SPACE = "single"
MERGE_TOL = 1e-9
WEIGHT_TOL = 1e-12

Point = Union[HiddenPair, UnitVec3]


def _coords(point: Point) -> np.ndarray:
    return point.as_array()


@dataclass(frozen=True)
class AtomicDist:
    """Finite set of weighted point masses.

    ``atoms`` is a tuple of ``(weight, point)``; points are :class:`HiddenPair`
    in pair space and :class:`UnitVec3` in single-vector space.  Use
    :func:`make_dist` to build one from raw atoms (it merges coincident
    points).  ``normalized=False`` admits total weight other than 1, which
    only the deliberately broken reference distribution needs.
    """

    atoms: tuple
    space: str
    normalized: bool = True

    def __post_init__(self):
        if self.space not in (PAIR_SPACE, SINGLE_SPACE):
            raise ValueError(f"unknown space {self.space!r}")
        expected = HiddenPair if self.space == PAIR_SPACE else UnitVec3
        for w, pt in self.atoms:
            if not w > 0.0:
                raise ValueError(f"atom weight must be positive, got {w!r}")
            if not isinstance(pt, expected):
                raise TypeError(f"{self.space}-space atom must be {expected.__name__}")
        if self.normalized and abs(self.total_weight - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {self.total_weight!r}")

    @property
    def total_weight(self) -> float:
        return float(sum(w for w, _ in self.atoms))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.atoms])

    def points_array(self) -> np.ndarray:
        """Atom coordinates, shape ``(k, 6)`` in pair space, ``(k, 3)`` otherwise."""
        return np.array([_coords(pt) for _, pt in self.atoms])

    def __len__(self) -> int:
        return len(self.atoms)

    def weight_at(self, point: Point, tol: float = MERGE_TOL) -> float:
        x = _coords(point)
        return float(sum(w for w, pt in self.atoms if np.linalg.norm(_coords(pt) - x) <= tol))

    def scaled(self, factor: float) -> AtomicDist:
        return AtomicDist(tuple((w * factor, pt) for w, pt in self.atoms), self.space,
                          normalized=False)

    def to_records(self) -> list[dict]:
        if self.space == PAIR_SPACE:
            return [{"w": w, "u": pt.u.as_list(), "v": pt.v.as_list()} for w, pt in self.atoms]
        return [{"w": w, "u": pt.as_list()} for w, pt in self.atoms]

    @classmethod
    def from_records(cls, records: list[dict], normalized: bool = True) -> AtomicDist:
        if records and "v" in records[0]:
            raw = [(r["w"], HiddenPair(UnitVec3.from_array(r["u"]), UnitVec3.from_array(r["v"])))
                   for r in records]
            return make_dist(raw, PAIR_SPACE, normalized=normalized)
        raw = [(r["w"], UnitVec3.from_array(r["u"])) for r in records]
        return make_dist(raw, SINGLE_SPACE, normalized=normalized)


def make_dist(raw: Iterable[tuple[float, Point]], space: str,
              normalized: bool = True, tol: float = MERGE_TOL) -> AtomicDist:
    """Build an :class:`AtomicDist`, merging points closer than ``tol``.

    The first occurrence of a point is kept as the representative.
    """
    merged: list[list] = []
    for w, pt in raw:
        x = _coords(pt)
        for entry in merged:
            if np.linalg.norm(entry[2] - x) <= tol:
                entry[0] += w
                break
        else:
            merged.append([w, pt, x])
    return AtomicDist(tuple((w, pt) for w, pt, _ in merged), space, normalized=normalized)


def build_distribution(s: Settings) -> AtomicDist:
    raw = [(0.25, HiddenPair(p, -p)) for p in (s.a, -s.a, s.b, -s.b)]
    return make_dist(raw, PAIR_SPACE)


def flawed_distribution(s: Settings) -> AtomicDist:
    """Same atoms with total weight 1/4 instead of 1.

    Reference for the known normalization defect: its correlator comes out
    as ``-a.b / 4``.
    """
    return build_distribution(s).scaled(0.25)


def marginal_u(d: AtomicDist) -> AtomicDist:
    """Distribution of the A-side hidden vector (projection on the ``u`` slot)."""
    if d.space != PAIR_SPACE:
        raise ValueError("marginal_u needs a pair-space distribution")
    return make_dist([(w, hv.u) for w, hv in d.atoms], SINGLE_SPACE, normalized=d.normalized)


def marginal_v(d: AtomicDist) -> AtomicDist:
    if d.space != PAIR_SPACE:
        raise ValueError("marginal_v needs a pair-space distribution")
    return make_dist([(w, hv.v) for w, hv in d.atoms], SINGLE_SPACE, normalized=d.normalized)


def tv_distance(d1: AtomicDist, d2: AtomicDist, tol: float = MERGE_TOL) -> float:
    """Total variation distance between two atomic distributions.

    Atoms of the two inputs within ``tol`` of each other count as the same
    point; an atom missing from one side has weight 0 there.
    """
    if d1.space != d2.space:
        raise ValueError(f"space mismatch: {d1.space} vs {d2.space}")
    x1 = d1.points_array()
    x2 = d2.points_array()
    w1 = d1.weights
    w2 = d2.weights
    matched2 = np.zeros(len(w2), dtype=bool)
    total = 0.0
    for i in range(len(w1)):
        other = 0.0
        if len(w2):
            close = np.linalg.norm(x2 - x1[i], axis=1) <= tol
            other = float(w2[close].sum())
            matched2 |= close
        total += abs(w1[i] - other)
    total += float(w2[~matched2].sum())
    return float(0.5 * total)


def measurement_dependence(s1: Settings, s2: Settings) -> float:
    """How far the hidden-variable law moves when the settings change (TV distance)."""
    return tv_distance(build_distribution(s1), build_distribution(s2))
