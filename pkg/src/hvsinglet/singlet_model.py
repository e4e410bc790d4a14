"""Closed-form probabilities of the measurement-dependent singlet model.

The hidden variables are two unit vectors, ``u`` carried to station A and
``v`` carried to station B.  Given them, the outcomes are independent and each
follows Malus's law along the local setting.  Averaging over the atomic
distribution of :mod:`hvsinglet.hv_distribution` gives back the singlet
statistics ``(1 - sigma*tau*a.b) / 4``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .geometry import Settings, UnitVec3, dot

if TYPE_CHECKING:
    from .hv_distribution import AtomicDist

OUTCOMES = (+1, -1)
# cell order used by tables, tallies and serialized output
CELLS = ((+1, +1), (+1, -1), (-1, +1), (-1, -1))
NORMALIZATION_TOL = 1e-12


def _check_sign(value: int, name: str) -> int:
    if value not in (1, -1):
        raise ValueError(f"{name} must be +1 or -1, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class HiddenPair:
    u: UnitVec3
    v: UnitVec3

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.u.as_array(), self.v.as_array()])

    def distance(self, other: HiddenPair) -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class Outcome:
    sigma: int
    tau: int

    def __post_init__(self):
        object.__setattr__(self, "sigma", _check_sign(self.sigma, "sigma"))
        object.__setattr__(self, "tau", _check_sign(self.tau, "tau"))


def cell_index(sigma: int, tau: int) -> tuple[int, int]:
    """Array position of ``(sigma, tau)``: +1 maps to row/column 0."""
    return (0 if sigma == 1 else 1, 0 if tau == 1 else 1)


@dataclass
class JointTable:
    """2x2 table over (sigma, tau); row/column 0 is +1, 1 is -1."""

    p: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(2, 2)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float).reshape(2, 2)
        if np.any(self.p < 0.0) or np.any(self.p > 1.0):
            raise ValueError(f"probabilities outside [0, 1]: {self.p}")
        total = self.p.sum()
        if self.stderr is None:
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise ValueError(f"table sums to {total!r}, not 1")
        elif abs(total - 1.0) > max(4.0 * self.stderr.sum(), NORMALIZATION_TOL):
            raise ValueError(f"empirical table sums to {total!r}")

    def __getitem__(self, key: tuple[int, int]) -> float:
        return float(self.p[cell_index(*key)])

    def correlator(self) -> float:
        return float(self.p[0, 0] - self.p[0, 1] - self.p[1, 0] + self.p[1, 1])

    def flat(self) -> list[float]:
        return [self[c] for c in CELLS]

    def to_dict(self) -> dict:
        out = {"cells": [list(c) for c in CELLS], "p": self.flat()}
        if self.stderr is not None:
            out["stderr"] = [float(self.stderr[cell_index(*c)]) for c in CELLS]
        return out


def p_joint_given_hv(out: Outcome, hv: HiddenPair, s: Settings) -> float:
    return 0.25 * (1.0 + out.sigma * dot(hv.u, s.a)) * (1.0 + out.tau * dot(hv.v, s.b))


def p_marginal_a(sigma: int, hv: HiddenPair, s: Settings) -> float:
    """Probability of ``sigma`` at A.  Reads only ``u`` and ``a``."""
    return 0.5 * (1.0 + sigma * dot(hv.u, s.a))


def p_marginal_b(tau: int, hv: HiddenPair, s: Settings) -> float:
    return 0.5 * (1.0 + tau * dot(hv.v, s.b))


def p_cond_b_given_a(tau: int, sigma: int, hv: HiddenPair, s: Settings,
                     return_flag: bool = False):
    """Probability of ``tau`` at B given ``sigma`` at A.

    The closed form does not involve ``sigma``.  It is returned even when
    ``sigma`` itself has probability zero (``u = -sigma*a``); pass
    ``return_flag=True`` to get ``(value, degenerate)`` and see that case.
    """
    value = 0.5 * (1.0 + tau * dot(hv.v, s.b))
    if return_flag:
        return value, p_marginal_a(sigma, hv, s) == 0.0
    return value


def p_joint_averaged(out: Outcome, s: Settings, dist: AtomicDist | None = None) -> float:
    """Average of :func:`p_joint_given_hv` over the atoms of ``dist``.

    ``dist`` defaults to the model distribution for ``s``.  Passing another
    distribution (e.g. an unnormalized one) evaluates the same sum over it.
    """
    if dist is None:
        from .hv_distribution import build_distribution
        dist = build_distribution(s)
    return float(sum(w * p_joint_given_hv(out, hv, s) for w, hv in dist.atoms))


def joint_table(s: Settings, dist: AtomicDist | None = None) -> JointTable:
    if dist is None:
        from .hv_distribution import build_distribution
        dist = build_distribution(s)
    p = np.zeros((2, 2))
    for sigma, tau in CELLS:
        p[cell_index(sigma, tau)] = p_joint_averaged(Outcome(sigma, tau), s, dist)
    if abs(p.sum() - 1.0) > NORMALIZATION_TOL:
        # unnormalized input distributions cannot form a JointTable
        raise ValueError(f"distribution total weight gives table sum {p.sum()!r}")
    return JointTable(p)


def correlator(s: Settings, dist: AtomicDist | None = None) -> float:
    """Expectation of sigma*tau under the averaged joint."""
    if dist is None:
        from .hv_distribution import build_distribution
        dist = build_distribution(s)
    return float(sum(sig * t * p_joint_averaged(Outcome(sig, t), s, dist) for sig, t in CELLS))


def qm_singlet_joint(out: Outcome, s: Settings) -> float:
    """Quantum prediction for the singlet, from the spin-correlation form.

    Computed from the angle between the settings, with no reference to
    hidden variables, so it can serve as an independent oracle.
    """
    a = s.a.as_array()
    b = s.b.as_array()
    cos_ab = float(np.clip(np.dot(a, b), -1.0, 1.0))
    # same-sign outcomes: sin^2(theta/2)/2, opposite: cos^2(theta/2)/2
    half_angle = 0.5 * np.arccos(cos_ab)
    if out.sigma == out.tau:
        return float(0.5 * np.sin(half_angle) ** 2)
    return float(0.5 * np.cos(half_angle) ** 2)


def qm_correlator(s: Settings) -> float:
    return float(-np.clip(np.dot(s.a.as_array(), s.b.as_array()), -1.0, 1.0))
