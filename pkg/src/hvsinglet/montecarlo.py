"""Seeded Monte Carlo sampling of hidden pairs and outcomes.

Randomness layout: trials are grouped in blocks of ``BLOCK_SIZE``.  Block
``k`` of a run with seed ``s`` draws from ``make_stream(s, *key, k)`` and
consumes three uniforms per trial, in trial order:

    column 0 -> atom choice, column 1 -> sigma, column 2 -> tau

Trial ``i`` therefore depends only on ``(seed, key, i)``.  Blocks can be run
in any order or in parallel and a shorter run is a prefix of a longer one.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Settings, make_stream
from .hv_distribution import AtomicDist, build_distribution
from .singlet_model import (
    CELLS,
    HiddenPair,
    JointTable,
    Outcome,
    cell_index,
    correlator,
    p_cond_b_given_a,
    p_marginal_a,
)

BLOCK_SIZE = 1 << 14
EVENT_CSV_HEADER = ["trial", "u_x", "u_y", "u_z", "v_x", "v_y", "v_z", "sigma", "tau"]


def _pick_atom(cum_weights: np.ndarray, r):
    idx = np.searchsorted(cum_weights, np.asarray(r) * cum_weights[-1], side="right")
    return np.minimum(idx, len(cum_weights) - 1)


def _outcome_from_uniform(p_plus, r):
    # +1 iff r < P(+1); P = 1 always gives +1, P = 0 always gives -1
    return np.where(np.asarray(r) < p_plus, 1, -1)


def sample_hidden(d: AtomicDist, stream: np.random.Generator) -> HiddenPair:
    """Draw one atom of ``d`` with probability proportional to its weight."""
    i = int(_pick_atom(np.cumsum(d.weights), stream.random()))
    return d.atoms[i][1]


def sample_outcomes(hv: HiddenPair, s: Settings, stream: np.random.Generator) -> Outcome:
    """Draw sigma from the A marginal, then tau from the B conditional.

    Uses two independent uniforms; tau's law does not look at sigma.
    """
    r_sigma, r_tau = stream.random(2)
    sigma = int(_outcome_from_uniform(p_marginal_a(+1, hv, s), r_sigma))
    tau = int(_outcome_from_uniform(p_cond_b_given_a(+1, sigma, hv, s), r_tau))
    return Outcome(sigma, tau)


@dataclass
class Tally:
    counts: np.ndarray
    n_trials: int
    seed: int
    settings: Settings

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(2, 2)
        if np.any(self.counts < 0):
            raise ValueError("negative count")
        if int(self.counts.sum()) != self.n_trials:
            raise ValueError(f"counts sum to {int(self.counts.sum())}, n_trials={self.n_trials}")

    @classmethod
    def from_flat(cls, flat, seed: int, settings: Settings) -> Tally:
        counts = np.zeros((2, 2), dtype=np.int64)
        for c, k in zip(CELLS, flat):
            counts[cell_index(*c)] = k
        return cls(counts, int(sum(flat)), seed, settings)

    def flat(self) -> list[int]:
        return [int(self.counts[cell_index(*c)]) for c in CELLS]

    def merge(self, other: Tally) -> Tally:
        if other.settings != self.settings:
            raise ValueError("cannot merge tallies taken at different settings")
        return Tally(self.counts + other.counts, self.n_trials + other.n_trials,
                     self.seed, self.settings)

    def empirical_correlator(self) -> tuple[float, float]:
        """Mean of sigma*tau and its standard error sqrt((1 - E^2)/n)."""
        c = self.counts
        e = float(c[0, 0] - c[0, 1] - c[1, 0] + c[1, 1]) / self.n_trials
        return e, math.sqrt(max(0.0, 1.0 - e * e) / self.n_trials)

    def to_dict(self) -> dict:
        joint = tally_to_joint(self)
        return {
            "settings": self.settings.to_dict(),
            "n": self.n_trials,
            "cells": [list(c) for c in CELLS],
            "counts": self.flat(),
            "freqs": joint.flat(),
            "stderr": joint.to_dict()["stderr"],
            "seed": self.seed,
        }


@dataclass
class EventLog:
    """Per-trial records of a run, stored column-wise."""

    trial: np.ndarray
    u: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    settings: Settings
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trial)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(EVENT_CSV_HEADER)
            for i in range(len(self)):
                w.writerow([int(self.trial[i]), *(repr(float(x)) for x in self.u[i]),
                            *(repr(float(x)) for x in self.v[i]),
                            int(self.sigma[i]), int(self.tau[i])])


def _run_block(points: np.ndarray, cum_w: np.ndarray, s: Settings, seed: int,
               key: tuple, block: int, count: int):
    r = make_stream(seed, *key, block).random((count, 3))
    atom = _pick_atom(cum_w, r[:, 0])
    u = points[atom, :3]
    v = points[atom, 3:]
    ua = np.clip(u @ s.a.as_array(), -1.0, 1.0)
    vb = np.clip(v @ s.b.as_array(), -1.0, 1.0)
    sigma = _outcome_from_uniform(0.5 * (1.0 + ua), r[:, 1])
    tau = _outcome_from_uniform(0.5 * (1.0 + vb), r[:, 2])
    return atom, sigma, tau


def _count(sigma: np.ndarray, tau: np.ndarray) -> np.ndarray:
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, ((sigma == -1).astype(int), (tau == -1).astype(int)), 1)
    return counts


def run_experiment(s: Settings, n: int, seed: int, *, dist: AtomicDist | None = None,
                   key: tuple = (), workers: int = 1, record: bool = False):
    """Run ``n`` independent trials at fixed settings.

    Returns a :class:`Tally`, or ``(Tally, EventLog)`` when ``record`` is set.
    ``workers > 1`` spreads blocks over threads; results are identical to the
    serial run.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if dist is None:
        dist = build_distribution(s)
    points = dist.points_array()
    cum_w = np.cumsum(dist.weights)
    n_blocks = -(-n // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, n - k * BLOCK_SIZE) for k in range(n_blocks)]

    def job(k):
        return _run_block(points, cum_w, s, seed, key, k, sizes[k])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(n_blocks)))
    else:
        parts = [job(k) for k in range(n_blocks)]

    counts = sum((_count(sig, tau) for _, sig, tau in parts), np.zeros((2, 2), dtype=np.int64))
    tally = Tally(counts, n, seed, s)
    if not record:
        return tally
    atom = np.concatenate([p[0] for p in parts])
    log = EventLog(np.arange(n), points[atom, :3], points[atom, 3:],
                   np.concatenate([p[1] for p in parts]),
                   np.concatenate([p[2] for p in parts]), s)
    return tally, log


def tally_to_joint(t: Tally) -> JointTable:
    if t.n_trials <= 0:
        raise ValueError("empty tally")
    p = t.counts / t.n_trials
    return JointTable(p, np.sqrt(p * (1.0 - p) / t.n_trials), meta={"seed": t.seed})


def max_cell_z(t: Tally, exact: JointTable) -> float:
    """Largest |p_hat - p| / stderr over cells; a zero stderr counts as 0 only for an exact match."""
    emp = tally_to_joint(t)
    dev = np.abs(emp.p - exact.p)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(emp.stderr > 0, dev / emp.stderr, np.where(dev > 0, np.inf, 0.0))
    return float(z.max())


def angle_sweep(angles_deg, n: int, seed: int) -> list[dict]:
    """Exact and empirical correlator for coplanar settings at each angle.

    Setting ``a`` sits at 0 degrees and ``b`` at the given angle.  Point ``i``
    uses substream key ``(i,)`` so every point is independent.
    """
    rows = []
    for i, angle in enumerate(angles_deg):
        s = Settings.from_angles(0.0, float(angle))
        t = run_experiment(s, n, seed, key=(i,))
        e_emp, se = t.empirical_correlator()
        rows.append({"angle": float(angle), "E_exact": correlator(s),
                     "E_emp": e_emp, "stderr": se})
    return rows


def run_varying_settings(a: np.ndarray, b: np.ndarray, seed: int, key: tuple = ()):
    """One model trial per row of ``a`` and ``b`` (arrays of shape ``(n, 3)``).

    The hidden pair is ``(p, -p)`` with ``p`` picked uniformly from
    ``+a, -a, +b, -b`` of that row, which samples the model distribution
    whether or not its atoms coincide.  Returns ``(sigma, tau)`` arrays.
    """
    n = len(a)
    sigma = np.empty(n, dtype=np.int64)
    tau = np.empty(n, dtype=np.int64)
    for k in range(-(-n // BLOCK_SIZE)):
        lo, hi = k * BLOCK_SIZE, min(n, (k + 1) * BLOCK_SIZE)
        r = make_stream(seed, *key, k).random((hi - lo, 3))
        pick = np.minimum((r[:, 0] * 4).astype(int), 3)
        ak, bk = a[lo:hi], b[lo:hi]
        p = np.where((pick < 2)[:, None], ak, bk) * np.where(pick % 2 == 0, 1.0, -1.0)[:, None]
        ua = np.clip(np.einsum("ij,ij->i", p, ak), -1.0, 1.0)
        vb = np.clip(np.einsum("ij,ij->i", -p, bk), -1.0, 1.0)
        sigma[lo:hi] = _outcome_from_uniform(0.5 * (1.0 + ua), r[:, 1])
        tau[lo:hi] = _outcome_from_uniform(0.5 * (1.0 + vb), r[:, 2])
    return sigma, tau
