"""Command-line entry point: ``hvsinglet <command> [options]``.

Exit status: 0 when the run produced the expected verdict, 1 on a verdict
mismatch, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import secrets
import sys

import numpy as np

from . import __version__
from .analysis import (
    OPTIMAL_ANGLES,
    SATISFIED_TOL,
    chsh_at_angles,
    chsh_optimize,
    empirical_chsh,
    hypothesis_profile,
    model_correlator,
)
from .geometry import Settings, UnitVec3, dot, planar_direction
from .hv_distribution import build_distribution, flawed_distribution
from .montecarlo import angle_sweep, run_experiment
from .protocols import (
    ConspiracyConfig,
    locality_audit,
    run_conspiracy,
    run_signaling,
)
from .singlet_model import CELLS, Outcome, correlator, joint_table, qm_singlet_joint

log = logging.getLogger("hvsinglet")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2
VECTOR_WARN_TOL = 1e-6


class UsageError(Exception):
    pass


def parse_vector(text: str) -> UnitVec3:
    try:
        x, y, z = (float(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"expected a vector 'x,y,z', got {text!r}") from None
    norm = math.sqrt(x * x + y * y + z * z)
    if norm == 0.0 or not math.isfinite(norm):
        raise UsageError(f"vector {text!r} cannot be normalized")
    if abs(norm - 1.0) > VECTOR_WARN_TOL:
        log.warning("vector %s has norm %.9g; normalizing", text, norm)
    return UnitVec3.normalized(x, y, z)


def _direction(args, name: str, default_deg: float | None) -> UnitVec3:
    vec = getattr(args, name, None)
    angle = getattr(args, f"angle_{name}", None)
    if vec is not None and angle is not None:
        raise UsageError(f"give either --{name} or --angle-{name}, not both")
    if vec is not None:
        return parse_vector(vec)
    if angle is not None:
        return planar_direction(math.radians(angle))
    if default_deg is None:
        raise UsageError(f"missing --{name} / --angle-{name}")
    return planar_direction(math.radians(default_deg))


def settings_from_args(args, default_a: float = 0.0, default_b: float = 90.0) -> Settings:
    if getattr(args, "angle_ab", None) is not None:
        if any(getattr(args, k, None) is not None for k in ("a", "b", "angle_a", "angle_b")):
            raise UsageError("--angle-ab cannot be combined with explicit settings")
        return Settings.from_angles(0.0, args.angle_ab)
    return Settings(_direction(args, "a", default_a), _direction(args, "b", default_b))


def _envelope(command: str, seed, config: dict, result: dict) -> dict:
    return {"command": command, "version": __version__, "seed": seed,
            "config": config, "result": result}


def _emit_text(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(payload: dict, out: str | None) -> None:
    _emit_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", out)


def _seed(args) -> int:
    return args.seed if args.seed is not None else secrets.randbits(32)


def _positive(name: str, value: int) -> int:
    if value is None or value < 1:
        raise UsageError(f"--{name} must be >= 1")
    return value


# -- commands -----------------------------------------------------------------------

def cmd_exact(args) -> int:
    s = settings_from_args(args)
    table = joint_table(s)
    qm = [qm_singlet_joint(Outcome(*c), s) for c in CELLS]
    dev = max(abs(p - q) for p, q in zip(table.flat(), qm))
    result = {"settings": s.to_dict(), "a_dot_b": dot(s.a, s.b),
              "cells": [list(c) for c in CELLS], "p_model": table.flat(), "p_qm": qm,
              "max_deviation": dev, "E": correlator(s),
              "atoms": build_distribution(s).to_records()}
    _emit_json(_envelope("exact", None, {"settings": s.to_dict()}, result), args.out)
    return EXIT_OK if dev <= SATISFIED_TOL else EXIT_MISMATCH


def cmd_sample(args) -> int:
    s = settings_from_args(args)
    n = _positive("n", args.n)
    seed = _seed(args)
    config = {"settings": s.to_dict(), "n": n, "format": args.format}
    if args.format == "csv":
        _, events = run_experiment(s, n, seed, record=True)
        if not args.out:
            raise UsageError("--format csv needs --out")
        events.write_csv(args.out)
        return EXIT_OK
    tally = run_experiment(s, n, seed)
    result = tally.to_dict()
    e, se = tally.empirical_correlator()
    result.update({"E_emp": e, "E_stderr": se, "E_exact": correlator(s)})
    _emit_json(_envelope("sample", seed, config, result), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.step <= 0:
        raise UsageError("--step must be positive")
    angles = np.arange(args.start, args.stop + 0.5 * args.step, args.step)
    angles = angles[angles <= args.stop + 1e-9]
    if len(angles) == 0:
        raise UsageError("empty angle grid")
    n = _positive("n", args.n)
    seed = _seed(args)
    rows = angle_sweep(angles, n, seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# hvsinglet {__version__} sweep seed={seed} n={n} "
                f"start={args.start} stop={args.stop} step={args.step}"])
    w.writerow(["angle", "E_exact", "E_emp", "stderr"])
    for r in rows:
        w.writerow([repr(r["angle"]), repr(r["E_exact"]), repr(r["E_emp"]), repr(r["stderr"])])
    _emit_text(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_hypotheses(args) -> int:
    reports = hypothesis_profile(_positive("grid", args.grid), args.grid_seed)
    verdicts = {r.name: r.verdict for r in reports}
    expected = {"Measurement Independence": "violated", "Setting Independence": "satisfied",
                "Outcome Independence": "satisfied", "Malus's Law": "satisfied"}
    result = {"reports": [r.to_dict() for r in reports], "expected": expected,
              "matches_expected": verdicts == expected}
    _emit_json(_envelope("hypotheses", None, {"grid": args.grid, "grid_seed": args.grid_seed},
                         result), args.out)
    return EXIT_OK if verdicts == expected else EXIT_MISMATCH


def _flawed_correlator(x: UnitVec3, y: UnitVec3) -> float:
    s = Settings(x, y)
    return correlator(s, flawed_distribution(s))


def cmd_chsh(args) -> int:
    E = model_correlator if args.correlator == "model" else _flawed_correlator
    config = {"correlator": args.correlator}
    if args.search:
        config["resolution"] = args.search
        res = chsh_optimize(E, args.search)
    else:
        if args.optimal or all(getattr(args, f"angle_{k}") is None for k in ("a", "a2", "b", "b2")):
            angles = OPTIMAL_ANGLES
        else:
            angles = tuple(getattr(args, f"angle_{k}") for k in ("a", "a2", "b", "b2"))
            if any(x is None for x in angles):
                raise UsageError("give all four of --angle-a --angle-a2 --angle-b --angle-b2")
        config["angles_deg"] = list(angles)
        res = chsh_at_angles(angles, E)
    result = res.to_dict()
    seed = None
    if args.n:
        if args.correlator != "model":
            raise UsageError("empirical S is only available for the model correlator")
        seed = _seed(args)
        vecs = (res.a, res.a2, res.b, res.b2)
        angles = tuple(math.degrees(math.atan2(v.y, v.x)) for v in vecs)
        S_emp, se = empirical_chsh(angles, args.n, seed)
        result.update({"S_emp": S_emp, "S_emp_stderr": se, "n_per_pair": args.n})
    expected_violation = args.correlator == "model"
    _emit_json(_envelope("chsh", seed, config, result), args.out)
    return EXIT_OK if res.violated == expected_violation else EXIT_MISMATCH


def cmd_signal(args) -> int:
    s = settings_from_args(args)
    pairs = _positive("pairs", args.pairs)
    seed = _seed(args)
    bits_a = None
    if args.bits:
        if set(args.bits) - {"0", "1"}:
            raise UsageError("--bits must be a string of 0 and 1")
        reps = -(-pairs // len(args.bits))
        bits_a = [int(c) for c in (args.bits * reps)[:pairs]]
    try:
        session = run_signaling(s, pairs, seed, bits_a=bits_a)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = session.report()
    result["decoded_A_message_prefix"] = "".join(map(str, session.decoded("A")[:64]))
    config = {"settings": s.to_dict(), "pairs": pairs, "bits": args.bits}
    _emit_json(_envelope("signal", seed, config, result), args.out)
    return EXIT_OK if session.success_rate == 1.0 else EXIT_MISMATCH


def conspiracy_config(seed: int, n: int, delay: int, desync: int, free_choice: bool) -> ConspiracyConfig:
    """Expand one master seed into the per-party seeds."""
    sm, sn, sc, sa, sb, sf = (int(x) for x in np.random.SeedSequence(seed).generate_state(6))
    return ConspiracyConfig(seed_m=sm, seed_n=sn, n_events=n, delay=delay, desync=desync,
                            seed_c=sc, seed_a=sa, seed_b=sb,
                            free_choice_seed=sf if free_choice else None)


def cmd_conspiracy(args) -> int:
    seed = _seed(args)
    n = _positive("n", args.n)
    if args.delay < 0 or args.desync < 0:
        raise UsageError("--delay and --desync must be >= 0")
    cfg = conspiracy_config(seed, n, args.delay, args.desync, args.free_choice)
    run = run_conspiracy(cfg)
    rows = run.binned_joint(args.bins)
    z = [abs(r["freq"] - r["exact"]) / r["stderr"] if r["stderr"] > 0 else
         (0.0 if r["freq"] == r["exact"] else math.inf) for r in rows]
    result = run.report()
    result.update({"bins": args.bins, "max_bin_z": max(z),
                   "bins_within_4_stderr": bool(max(z) < 4.0),
                   "all_u_eq_minus_v": bool(np.array_equal(run.u, -run.v))})
    ok = result["bins_within_4_stderr"]
    if args.audit:
        rng = np.random.SeedSequence([seed, 1]).generate_state(args.audit)
        audit = locality_audit(cfg, [int(x) for x in rng])
        result["locality_audit"] = audit.to_dict()
        ok = ok and audit.passed
    if args.out and args.format == "csv":
        run.write_csv(args.out)
        out = args.report
    else:
        out = args.out
    config = {"n": n, "delay": args.delay, "desync": args.desync,
              "free_choice": args.free_choice, "audit": args.audit}
    _emit_json(_envelope("conspiracy", seed, config, result), out)
    faithful = args.desync == 0 and not args.free_choice
    return EXIT_OK if (ok or not faithful) else EXIT_MISMATCH


# -- parser -------------------------------------------------------------------------

def _add_settings(p: argparse.ArgumentParser, extra: bool = False) -> None:
    names = ("a", "b", "a2", "b2") if extra else ("a", "b")
    for k in names:
        p.add_argument(f"--{k}", help=f"setting {k} as 'x,y,z'")
        p.add_argument(f"--angle-{k}", dest=f"angle_{k}", type=float,
                       help=f"setting {k} as a polar angle in the x-y plane (degrees)")
    if not extra:
        p.add_argument("--angle-ab", dest="angle_ab", type=float,
                       help="a at 0 degrees, b at this angle")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hvsinglet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="exact joint table vs quantum prediction")
    _add_settings(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("sample", help="Monte Carlo tally at fixed settings")
    _add_settings(p)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep", help="correlation curve over the angle between settings")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=180.0)
    p.add_argument("--step", type=float, default=5.0)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("hypotheses", help="check the Bell/Leggett hypotheses")
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--grid-seed", dest="grid_seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_hypotheses)

    p = sub.add_parser("chsh", help="CHSH value against the classical bound")
    p.add_argument("--optimal", action="store_true", help="use angles 0, 90, 45, 135")
    p.add_argument("--search", type=int, metavar="RES", help="grid search with RES angles")
    p.add_argument("--correlator", choices=("model", "flawed"), default="model")
    for k in ("a", "a2", "b", "b2"):
        p.add_argument(f"--angle-{k}", dest=f"angle_{k}", type=float)
    p.add_argument("--n", type=int, default=0, help="trials per setting pair for empirical S")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("signal", help="non-local signaling protocol")
    _add_settings(p)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--bits", help="A's message, repeated as needed")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_signal)

    p = sub.add_parser("conspiracy", help="local shared-randomness realization")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--delay", type=int, default=3)
    p.add_argument("--desync", type=int, default=0)
    p.add_argument("--free-choice", dest="free_choice", action="store_true")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--audit", type=int, default=0, metavar="K",
                   help="run the locality audit with K remote-seed variations")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="csv writes the run log to --out and the report to --report")
    p.add_argument("--report")
    p.set_defaults(func=cmd_conspiracy)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("n", "pairs"):
        if getattr(args, name, None) is not None and getattr(args, name) < 0:
            parser.error(f"--{name} must be non-negative")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hvsinglet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
