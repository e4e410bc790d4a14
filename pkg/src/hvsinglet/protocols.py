"""Two causal readings of the same hidden-variable law, as runnable simulations.

Non-local reading (:func:`run_signaling`)
    The hidden pair is anchored to one station's setting.  If hidden vectors
    can be read just before detection, the anchored station can rotate its
    detector, drag the partner's vector along, and fix the remote outcome:
    one bit per pair, faster than light.

Local reading (:func:`run_conspiracy`)
    The entangler C and each station hold copies of a seeded direction stream
    (``M`` shared with A, ``N`` with B).  At emission tick ``t`` C reads
    ``m_t`` and ``n_t``, picks one of the four anchored pairs, and sends the
    particles off.  At tick ``t + delay`` each station reads its own copy,
    ``delay`` ticks behind C, so it lands on ``a = m_t`` and ``b = n_t``.
    Nothing is communicated after the seeds are shared.

Event timing
    Emission happens at tick ``t`` and detection at ``t + delay``.  Within a
    detection tick the order is: read hidden vector, rotate, update hidden
    vector, detect.  Emissions at a tick are processed before detections at
    the same tick.

:func:`locality_audit` perturbs only B's side of the local reading and
checks that A's statistics do not move; :func:`signaling_locality_audit`
applies the same test to the non-local reading, which fails it.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Settings, UnitVec3, dot, make_stream, random_directions
from .montecarlo import sample_outcomes
from .singlet_model import CELLS, HiddenPair, cell_index

STATION_A = "A"
STATION_B = "B"
COLLINEAR_TOL = 1e-9
AUDIT_SIGMAS = 4.0
_BLOCK = 1 << 14

RUN_LOG_HEADER = (["tick"] + [f"m_{c}" for c in "xyz"] + [f"n_{c}" for c in "xyz"]
                  + ["alpha", "beta"] + [f"u_{c}" for c in "xyz"] + [f"v_{c}" for c in "xyz"]
                  + [f"a_{c}" for c in "xyz"] + [f"b_{c}" for c in "xyz"] + ["sigma", "tau"])


class ProtocolError(RuntimeError):
    """An action the protocol does not allow (e.g. a non-anchor rotation)."""


@dataclass(frozen=True)
class AnchoredPair:
    """Which setting the hidden pair is locked to and with what sign.

    ``alpha = -1``: locked to A's setting, ``u = beta*a``, ``v = -beta*a``.
    ``alpha = +1``: locked to B's setting, ``v = beta*b``, ``u = -beta*b``.
    """

    alpha: int
    beta: int

    def __post_init__(self):
        if self.alpha not in (1, -1) or self.beta not in (1, -1):
            raise ValueError(f"alpha and beta must be +-1, got {self.alpha}, {self.beta}")

    @property
    def anchor(self) -> str:
        return STATION_A if self.alpha == -1 else STATION_B

    def hidden_pair(self, s: Settings) -> HiddenPair:
        if self.alpha == -1:
            p = s.a if self.beta == 1 else -s.a
            return HiddenPair(p, -p)
        p = s.b if self.beta == 1 else -s.b
        return HiddenPair(-p, p)

    @classmethod
    def from_index(cls, k: int) -> AnchoredPair:
        """0..3 -> (alpha, beta) = (-1, +1), (-1, -1), (+1, +1), (+1, -1)."""
        return cls(-1 if k < 2 else 1, 1 if k % 2 == 0 else -1)


def _collinear(s: Settings) -> bool:
    return abs(abs(dot(s.a, s.b)) - 1.0) <= COLLINEAR_TOL


def hv_update_on_rotation(state: AnchoredPair, station: str, new_setting: UnitVec3,
                          s: Settings) -> tuple[HiddenPair, Settings]:
    """Rotate the anchor station's detector; the pair follows rigidly.

    The anchored vector becomes ``beta * new_setting`` and the partner, at the
    other station, becomes ``-beta * new_setting``.
    """
    if station != state.anchor:
        raise ProtocolError(f"station {station} is not the anchor ({state.anchor}) and may not rotate")
    if station == STATION_A:
        s_new = Settings(new_setting, s.b)
    else:
        s_new = Settings(s.a, new_setting)
    return state.hidden_pair(s_new), s_new


@dataclass(frozen=True)
class Transmission:
    sent_bit: int
    decoded_bit: int
    sender: str
    receiver_outcome: int
    sigma: int
    tau: int
    hidden: HiddenPair
    settings: Settings


def _read_role(hidden: UnitVec3, own_setting: UnitVec3) -> int | None:
    """Sign of the hidden vector relative to the own setting, or None if unrelated."""
    d = dot(hidden, own_setting)
    if d >= 1.0 - COLLINEAR_TOL:
        return 1
    if d <= -1.0 + COLLINEAR_TOL:
        return -1
    return None


def transmit_bit(bit: int, state: AnchoredPair, s: Settings,
                 stream: np.random.Generator) -> Transmission:
    """Send one bit across a single pair.

    Each station reads its hidden vector.  The one whose vector lies along
    its own setting is the sender.  To make the receiver see ``r``
    (-1 for bit 0, +1 for bit 1) it turns to ``-beta * r`` times the
    receiver's setting.  The receiver does not move.
    """
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    if _collinear(s):
        raise ValueError("agreed settings are collinear; sender cannot be identified")
    hv = state.hidden_pair(s)
    beta_a = _read_role(hv.u, s.a)
    beta_b = _read_role(hv.v, s.b)
    if (beta_a is None) == (beta_b is None):
        raise ProtocolError("hidden vectors do not single out a sender")
    target = 1 if bit == 1 else -1
    if beta_a is not None:
        sender, new_setting = STATION_A, UnitVec3.from_array(-beta_a * target * s.b.as_array())
    else:
        sender, new_setting = STATION_B, UnitVec3.from_array(-beta_b * target * s.a.as_array())
    hv_new, s_new = hv_update_on_rotation(state, sender, new_setting, s)
    out = sample_outcomes(hv_new, s_new, stream)
    received = out.tau if sender == STATION_A else out.sigma
    return Transmission(bit, 1 if received == 1 else 0, sender, received,
                        out.sigma, out.tau, hv_new, s_new)


@dataclass
class SignalingSession:
    settings: Settings
    seed: int
    records: list[Transmission] = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        return len(self.records)

    @property
    def success_count(self) -> int:
        return sum(r.decoded_bit == r.sent_bit for r in self.records)

    @property
    def success_rate(self) -> float:
        return self.success_count / self.n_pairs if self.records else float("nan")

    def sender_fraction(self, station: str = STATION_A) -> float:
        return sum(r.sender == station for r in self.records) / self.n_pairs

    def sigma(self) -> np.ndarray:
        return np.array([r.sigma for r in self.records])

    def message(self, sender: str) -> list[int]:
        return [r.sent_bit for r in self.records if r.sender == sender]

    def decoded(self, sender: str) -> list[int]:
        return [r.decoded_bit for r in self.records if r.sender == sender]

    def report(self) -> dict:
        return {"realization": "signaling", "n": self.n_pairs,
                "success_rate": self.success_rate,
                "sender_A_fraction": self.sender_fraction(STATION_A),
                "settings": self.settings.to_dict(), "seeds": {"seed": self.seed}}


def random_bits(seed: int, n: int, key: int) -> np.ndarray:
    return make_stream(seed, 100 + key).integers(0, 2, size=n)


def run_signaling(s: Settings, n_pairs: int, seed: int,
                  bits_a: Sequence[int] | None = None,
                  bits_b: Sequence[int] | None = None) -> SignalingSession:
    """Run the signaling protocol over ``n_pairs`` emitted pairs.

    The entangler picks one of the four anchored pairs uniformly for each
    emission.  Whoever turns out to be the sender sends the next unsent bit
    of their own message (``bits_a`` or ``bits_b``, random by default).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if _collinear(s):
        raise ValueError("agreed settings are collinear; sender cannot be identified")
    bits = {STATION_A: list(random_bits(seed, n_pairs, 0) if bits_a is None else bits_a),
            STATION_B: list(random_bits(seed, n_pairs, 1) if bits_b is None else bits_b)}
    sent = {STATION_A: 0, STATION_B: 0}
    entangler = make_stream(seed, 0)
    detectors = make_stream(seed, 1)
    kinds = entangler.integers(0, 4, size=n_pairs)
    session = SignalingSession(s, seed)
    for k in kinds:
        state = AnchoredPair.from_index(int(k))
        who = state.anchor
        if sent[who] >= len(bits[who]):
            raise ValueError(f"message for station {who} exhausted after {sent[who]} bits")
        bit = int(bits[who][sent[who]])
        sent[who] += 1
        session.records.append(transmit_bit(bit, state, s, detectors))
    return session


# -- local realization ------------------------------------------------------------

def _lookup(block, ticks) -> np.ndarray:
    ticks = np.asarray(ticks, dtype=np.int64)
    if ticks.size and ticks.min() < 0:
        raise ValueError("negative tick")
    k_lo, k_hi = int(ticks.min()) // _BLOCK, int(ticks.max()) // _BLOCK
    table = np.concatenate([block(k) for k in range(k_lo, k_hi + 1)])
    return table[ticks - k_lo * _BLOCK]


class DirectionStream:
    """Seeded stream of unit vectors addressable by tick.

    Entry ``t`` comes from block ``t // 16384`` of ``make_stream(seed, block)``.
    Two instances with the same seed are independent copies that always
    agree; that is the only link between C and a station.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._blocks: dict[int, np.ndarray] = {}

    def _block(self, k: int) -> np.ndarray:
        if k not in self._blocks:
            self._blocks[k] = random_directions(make_stream(self.seed, k), _BLOCK)
        return self._blocks[k]

    def at(self, ticks) -> np.ndarray:
        return _lookup(self._block, ticks)


class _TickUniforms:
    """Per-tick private randomness (entangler choices, detector noise)."""

    def __init__(self, seed: int, kind: str):
        self.seed = seed
        self.kind = kind
        self._blocks: dict[int, np.ndarray] = {}

    def _block(self, k: int) -> np.ndarray:
        if k not in self._blocks:
            rng = make_stream(self.seed, k)
            if self.kind == "choice":
                self._blocks[k] = rng.integers(0, 4, size=_BLOCK)
            else:
                self._blocks[k] = rng.random(_BLOCK)
        return self._blocks[k]

    def at(self, ticks) -> np.ndarray:
        return _lookup(self._block, ticks)


@dataclass(frozen=True)
class ConspiracyConfig:
    """Seeds and timing for the shared-randomness realization.

    ``seed_m``/``seed_n`` seed the shared streams M (C and A) and N (C and B).
    ``seed_c``, ``seed_a`` and ``seed_b`` seed the private randomness of the
    entangler and of the two detectors.  ``desync`` shifts the index at which
    both stations read their copies (0 in the faithful realization).  With
    ``free_choice_seed`` set the stations ignore their streams and pick
    settings from an independent private stream instead.
    """

    seed_m: int = 1
    seed_n: int = 2
    n_events: int = 10_000
    delay: int = 3
    desync: int = 0
    seed_c: int = 3
    seed_a: int = 4
    seed_b: int = 5
    free_choice_seed: int | None = None

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        if self.desync < 0:
            # stream positions before 0 do not exist
            raise ValueError("desync must be >= 0")

    def seeds(self) -> dict:
        return {"seed_m": self.seed_m, "seed_n": self.seed_n, "seed_c": self.seed_c,
                "seed_a": self.seed_a, "seed_b": self.seed_b,
                "free_choice_seed": self.free_choice_seed}


@dataclass
class ConspiracyRun:
    config: ConspiracyConfig
    tick: np.ndarray
    m: np.ndarray
    n: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray

    def __len__(self) -> int:
        return len(self.tick)

    def counts(self) -> np.ndarray:
        c = np.zeros((2, 2), dtype=np.int64)
        np.add.at(c, ((self.sigma == -1).astype(int), (self.tau == -1).astype(int)), 1)
        return c

    def marginal_a(self) -> float:
        """Fraction of events with sigma = +1."""
        return float(np.mean(self.sigma == 1))

    def binned_joint(self, n_bins: int = 20, by: str = "mn") -> list[dict]:
        """Empirical joint per bin of ``m.n`` (or ``a.b``) against the exact value.

        The exact value in a bin is the average of ``(1 - sigma*tau*c)/4``
        over the events in that bin, with ``c`` the binning variable.
        """
        if by == "mn":
            c = np.einsum("ij,ij->i", self.m, self.n)
        elif by == "ab":
            c = np.einsum("ij,ij->i", self.a, self.b)
        else:
            raise ValueError(f"unknown binning variable {by!r}")
        edges = np.linspace(-1.0, 1.0, n_bins + 1)
        idx = np.clip(np.searchsorted(edges, c, side="right") - 1, 0, n_bins - 1)
        rows = []
        for k in range(n_bins):
            sel = idx == k
            count = int(sel.sum())
            if count == 0:
                continue
            st = self.sigma[sel] * self.tau[sel]
            ck = c[sel]
            for sg, t in CELLS:
                freq = float(np.mean((self.sigma[sel] == sg) & (self.tau[sel] == t)))
                exact = float(np.mean(0.25 * (1.0 - sg * t * ck)))
                rows.append({"bin": k, "lo": float(edges[k]), "hi": float(edges[k + 1]),
                             "n": count, "cell": (sg, t), "freq": freq, "exact": exact,
                             "stderr": math.sqrt(freq * (1.0 - freq) / count),
                             "E_emp": float(st.mean())})
        return rows

    def report(self) -> dict:
        return {"realization": "conspiracy", "n": len(self),
                "counts": [int(self.counts()[cell_index(*c)]) for c in CELLS],
                "cells": [list(c) for c in CELLS],
                "delay": self.config.delay, "desync": self.config.desync,
                "seeds": self.config.seeds()}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_LOG_HEADER)
            for i in range(len(self)):
                row = [int(self.tick[i])]
                row += [repr(float(x)) for x in self.m[i]]
                row += [repr(float(x)) for x in self.n[i]]
                row += [int(self.alpha[i]), int(self.beta[i])]
                for arr in (self.u, self.v, self.a, self.b):
                    row += [repr(float(x)) for x in arr[i]]
                row += [int(self.sigma[i]), int(self.tau[i])]
                w.writerow(row)


def _anchor_pairs(kind: np.ndarray, m: np.ndarray, n: np.ndarray):
    alpha = np.where(kind < 2, -1, 1)
    beta = np.where(kind % 2 == 0, 1, -1)
    anchor = np.where((alpha == -1)[:, None], m, n) * beta[:, None]
    # alpha=-1: u = beta*m ; alpha=+1: v = beta*n ; always u = -v
    u = np.where((alpha == -1)[:, None], anchor, -anchor)
    return alpha, beta, u, -u


class _Parties:
    """Each party's private copy of its streams, built from the config."""

    def __init__(self, cfg: ConspiracyConfig):
        self.c_m = DirectionStream(cfg.seed_m)
        self.c_n = DirectionStream(cfg.seed_n)
        self.c_choice = _TickUniforms(cfg.seed_c, "choice")
        if cfg.free_choice_seed is None:
            self.a_stream = DirectionStream(cfg.seed_m)
            self.b_stream = DirectionStream(cfg.seed_n)
        else:
            self.a_stream = DirectionStream(cfg.free_choice_seed)
            self.b_stream = DirectionStream(cfg.free_choice_seed + 1)
        self.a_noise = _TickUniforms(cfg.seed_a, "uniform")
        self.b_noise = _TickUniforms(cfg.seed_b, "uniform")


def run_conspiracy(cfg: ConspiracyConfig) -> ConspiracyRun:
    """Vectorized run over all emission ticks ``0 .. n_events-1``."""
    p = _Parties(cfg)
    t = np.arange(cfg.n_events, dtype=np.int64)
    m = p.c_m.at(t)
    n = p.c_n.at(t)
    alpha, beta, u, v = _anchor_pairs(p.c_choice.at(t), m, n)
    detect = t + cfg.delay
    read = detect - cfg.delay + cfg.desync
    a = p.a_stream.at(read)
    b = p.b_stream.at(read)
    ua = np.clip(np.einsum("ij,ij->i", u, a), -1.0, 1.0)
    vb = np.clip(np.einsum("ij,ij->i", v, b), -1.0, 1.0)
    sigma = np.where(p.a_noise.at(detect) < 0.5 * (1.0 + ua), 1, -1)
    tau = np.where(p.b_noise.at(detect) < 0.5 * (1.0 + vb), 1, -1)
    return ConspiracyRun(cfg, t, m, n, alpha, beta, u, v, a, b, sigma, tau)


def simulate_conspiracy_events(cfg: ConspiracyConfig) -> ConspiracyRun:
    """Same realization driven one event at a time through a tick queue.

    Slower than :func:`run_conspiracy`; kept as an independent route that
    makes the timing explicit.  Both give identical logs.
    """
    p = _Parties(cfg)
    queue: list[tuple[int, int, int]] = [(t, 0, t) for t in range(cfg.n_events)]
    heapq.heapify(queue)
    in_flight: dict[int, tuple] = {}
    rows: dict[int, tuple] = {}
    while queue:
        tick, phase, emitted = heapq.heappop(queue)
        if phase == 0:
            m = p.c_m.at([tick])[0]
            n = p.c_n.at([tick])[0]
            alpha, beta, u, v = _anchor_pairs(p.c_choice.at([tick]), m[None], n[None])
            in_flight[emitted] = (m, n, int(alpha[0]), int(beta[0]), u[0], v[0])
            heapq.heappush(queue, (tick + cfg.delay, 1, emitted))
        else:
            m, n, alpha, beta, u, v = in_flight.pop(emitted)
            idx = tick - cfg.delay + cfg.desync
            a = p.a_stream.at([idx])[0]
            b = p.b_stream.at([idx])[0]
            ua = min(1.0, max(-1.0, float(u @ a)))
            vb = min(1.0, max(-1.0, float(v @ b)))
            sigma = 1 if p.a_noise.at([tick])[0] < 0.5 * (1.0 + ua) else -1
            tau = 1 if p.b_noise.at([tick])[0] < 0.5 * (1.0 + vb) else -1
            rows[emitted] = (m, n, alpha, beta, u, v, a, b, sigma, tau)
    order = sorted(rows)
    cols = list(zip(*(rows[t] for t in order)))
    return ConspiracyRun(cfg, np.array(order), *(np.array(c) for c in cols))


# -- locality audit -------------------------------------------------------------------

@dataclass
class AuditReport:
    realization: str
    n: int
    marginals: list[float]
    max_shift: float
    stderr: float
    threshold: float
    variations: list
    seeds: dict

    @property
    def passed(self) -> bool:
        return self.max_shift < self.threshold

    def to_dict(self) -> dict:
        return {"realization": self.realization, "n": self.n,
                "audit_max_shift": self.max_shift, "stderr": self.stderr,
                "threshold": self.threshold, "passed": self.passed,
                "marginals": self.marginals, "variations": self.variations,
                "seeds": self.seeds}


def _audit(realization: str, marginals: list[float], n: int, variations, seeds) -> AuditReport:
    se = math.sqrt(0.25 / n)
    shift = max(marginals) - min(marginals)
    return AuditReport(realization, n, marginals, float(shift), se, AUDIT_SIGMAS * se,
                       list(variations), seeds)


def locality_audit(cfg: ConspiracyConfig, variations: Sequence[int]) -> AuditReport:
    """Vary B's side of the local realization and watch A's outcome frequency.

    Each variation replaces B's stream seed (``seed_n``, shared by C and B)
    and B's detector seed; A's stream, A's detector and the entangler keep
    their seeds.  The shift is the spread (max - min) of P_A(sigma=+1) over
    the baseline and all variations, compared with 4 binomial standard errors.
    """
    runs = [cfg] + [replace(cfg, seed_n=int(v), seed_b=int(v) + 7919) for v in variations]
    marginals = [run_conspiracy(c).marginal_a() for c in runs]
    return _audit("conspiracy", marginals, cfg.n_events, variations, cfg.seeds())


def signaling_locality_audit(s: Settings, n_pairs: int, seed: int,
                             b_messages: Sequence[Sequence[int]]) -> AuditReport:
    """The same audit on the signaling realization, varying B's message.

    Only B's choices change between runs.  Because B drags A's hidden vector
    when B is the sender, A's outcome frequency follows B's message.
    """
    marginals = []
    for bits in [None, *b_messages]:
        session = run_signaling(s, n_pairs, seed, bits_b=bits)
        marginals.append(float(np.mean(session.sigma() == 1)))
    labels = [_describe_bits(b) for b in b_messages]
    return _audit("signaling", marginals, n_pairs, labels, {"seed": seed})


def _describe_bits(bits: Sequence[int]) -> str:
    ones = int(np.sum(bits))
    if ones == 0:
        return "all-0"
    if ones == len(bits):
        return "all-1"
    return f"{ones}/{len(bits)} ones"
