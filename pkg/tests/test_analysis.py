import itertools
import math

import numpy as np
import pytest

from hvsinglet.analysis import (
    OPTIMAL_ANGLES,
    ChshResult,
    HypothesisReport,
    check_malus,
    check_measurement_independence,
    check_outcome_independence,
    check_reproduction,
    check_setting_independence,
    chsh_at_angles,
    chsh_optimize,
    chsh_value,
    classical_bound_oracle,
    classical_strategy_values,
    empirical_chsh,
    hv_settings_grid,
    hypothesis_profile,
    model_correlator,
    remote_change_pairs,
    remote_setting_grid,
    settings_grid,
)
from hvsinglet.geometry import E_X, E_Y, E_Z, Settings, UnitVec3, dot, planar_direction
from hvsinglet.hv_distribution import flawed_distribution
from hvsinglet.singlet_model import HiddenPair, correlator

from conftest import vec_with_dot

ROOT2 = math.sqrt(2.0)


def minus_dot(x, y):
    return -dot(x, y)


def quarter(x, y):
    return -dot(x, y) / 4


# -- reports ----------------------------------------------------------------------

def test_report_verdict_threshold():
    assert HypothesisReport("x", 1e-10, 1).verdict == "satisfied"
    assert HypothesisReport("x", 2e-10, 1).verdict == "violated"


# -- setting independence -------------------------------------------------------------

def test_setting_independence_model():
    r = check_setting_independence(remote_setting_grid(1000))
    assert r.satisfied and r.max_deviation == 0.0 and r.n_grid == 1000


def test_setting_independence_trivial_point():
    hv = HiddenPair(E_Z, E_X)
    r = check_setting_independence([(hv, Settings(E_X, E_Y), E_Y)])
    assert r.max_deviation == 0.0


def test_setting_independence_counter_model():
    def leaky(sigma, hv, s):
        return 0.5 * (1 + sigma * dot(hv.u, s.b))

    r = check_setting_independence(remote_setting_grid(200), marginal=leaky)
    assert r.verdict == "violated" and r.max_deviation > 0.1


# -- outcome independence --------------------------------------------------------------

def test_outcome_independence_model():
    r = check_outcome_independence(hv_settings_grid(1000))
    assert r.satisfied
    # the seeded atoms at u = +a and u = -a each make one sigma impossible
    assert r.n_skipped == 2


def test_outcome_independence_unbiased_point():
    r = check_outcome_independence([(HiddenPair(E_Z, E_Z), Settings(E_X, E_Y))])
    assert r.max_deviation == 0.0 and r.n_skipped == 0


def test_outcome_independence_counter_model():
    def correlated(out, hv, s):
        return 0.25 * (1 + out.sigma * out.tau * dot(hv.u, s.a))

    # u.a = 0.6 gives Q = (1 +- 0.6)/2 against P_B = 1/2: deviation 0.3
    hv = HiddenPair(vec_with_dot(E_X, 0.6), E_Z)
    r = check_outcome_independence([(hv, Settings(E_X, E_Y))], joint=correlated)
    assert r.verdict == "violated"
    assert r.max_deviation == pytest.approx(0.3, abs=1e-12)


def test_empty_grids_rejected():
    for fn in (check_setting_independence, check_outcome_independence, check_malus,
               check_measurement_independence, check_reproduction):
        with pytest.raises(ValueError):
            fn([])


# -- Malus -----------------------------------------------------------------------------

def test_malus_model():
    assert check_malus(hv_settings_grid(1000)).satisfied


def test_malus_aligned_point():
    from hvsinglet.singlet_model import p_marginal_a
    s = Settings(E_X, E_Y)
    assert p_marginal_a(1, HiddenPair(E_X, E_Z), s) == 1.0
    assert check_malus([(HiddenPair(E_X, E_Y), s)]).max_deviation == 0.0


def test_malus_sign_model_gap():
    def step(x):
        return 1.0 if x > 0 else (0.5 if x == 0 else 0.0)

    def sign_model(out, hv, s):
        return step(out.sigma * dot(hv.u, s.a)) * 0.5 * (1 + out.tau * dot(hv.v, s.b))

    # gap |step - (1 + x)/2| = (1 - x)/2 for small positive x; tends to 1/2
    gaps = []
    for x in (1e-2, 1e-5, 1e-9):
        hv = HiddenPair(vec_with_dot(E_X, x), E_Z)
        r = check_malus([(hv, Settings(E_X, E_Y))], joint=sign_model)
        assert r.verdict == "violated"
        assert r.max_deviation == pytest.approx((1 - x) / 2, abs=1e-12)
        gaps.append(r.max_deviation)
    assert gaps == sorted(gaps)
    assert abs(gaps[-1] - 0.5) < 1e-8


# -- measurement independence -------------------------------------------------------------

def test_measurement_independence_examples():
    s = Settings(E_X, E_Y)
    assert check_measurement_independence([(s, s)]).max_deviation == 0.0
    assert check_measurement_independence([(s, s.swapped())]).satisfied
    r = check_measurement_independence([(s, Settings(E_Z, E_Y))])
    assert r.max_deviation == 0.5 and r.verdict == "violated"


def test_measurement_independence_default_grid():
    r = check_measurement_independence(remote_change_pairs(1000))
    assert r.max_deviation == 0.5 and r.verdict == "violated"


def test_hypothesis_profile():
    verdicts = {r.name: r.verdict for r in hypothesis_profile()}
    assert verdicts == {"Measurement Independence": "violated",
                        "Setting Independence": "satisfied",
                        "Outcome Independence": "satisfied",
                        "Malus's Law": "satisfied"}


# -- reproduction -------------------------------------------------------------------------

def test_reproduction_grid():
    assert check_reproduction(settings_grid(10)) <= 1e-12
    assert check_reproduction([Settings(E_X, E_X)]) <= 1e-12


def test_reproduction_flawed_distribution():
    # a.b = 0: flawed cell value 1/16 against 1/4
    dev = check_reproduction([Settings(E_X, E_Y)], dist_factory=flawed_distribution)
    assert dev == pytest.approx(3 / 16, abs=1e-15)


# -- CHSH -----------------------------------------------------------------------------------

def test_chsh_optimal_angles():
    a, a2, b, b2 = (planar_direction(math.radians(x)) for x in OPTIMAL_ANGLES)
    assert chsh_value(a, a2, b, b2, minus_dot) == pytest.approx(2 * ROOT2, abs=1e-12)
    assert chsh_value(a, a2, b, b2, model_correlator) == pytest.approx(2 * ROOT2, abs=1e-12)
    assert chsh_value(a, a2, b, b2, quarter) == pytest.approx(ROOT2 / 2, abs=1e-12)


def test_chsh_degenerate_settings():
    assert chsh_value(E_X, E_X, E_X, E_X, minus_dot) == 2.0


def test_classical_oracle_enumeration():
    values = classical_strategy_values()
    assert len(values) == 16
    assert len({k for k, _ in values}) == 16
    assert all(v <= 2.0 for _, v in values)
    assert classical_bound_oracle() == 2.0
    table = dict(values)
    # sigma = +1 always, tau = -1 always
    assert table[(1, 1, -1, -1)] == 2.0


def test_classical_oracle_is_bound_on_random_mixtures():
    # convex mixtures of deterministic strategies never beat the oracle
    rng = np.random.default_rng(0)
    strategies = [k for k, _ in classical_strategy_values()]
    for _ in range(200):
        w = rng.dirichlet(np.ones(16))
        E = {}
        for x, y in itertools.product(("a", "a2"), ("b", "b2")):
            E[x, y] = sum(wi * s[0 if x == "a" else 1] * s[2 if y == "b" else 3]
                          for wi, s in zip(w, strategies))
        S = chsh_value("a", "a2", "b", "b2", lambda x, y: E[x, y])
        assert S <= classical_bound_oracle() + 1e-12


def brute_force_chsh(E, res):
    dirs = [planar_direction(2 * math.pi * k / res) for k in range(res)]
    return max(chsh_value(a, a2, b, b2, E)
               for a, a2, b, b2 in itertools.product(dirs, repeat=4))


@pytest.mark.parametrize("res", [8, 12])
def test_optimize_matches_brute_force(res):
    for E in (minus_dot, quarter, lambda x, y: dot(x, y) ** 3 - 0.2 * x.x):
        assert chsh_optimize(E, res).S == pytest.approx(brute_force_chsh(E, res), abs=1e-12)


def test_optimize_model_correlator():
    r = chsh_optimize(minus_dot, 360)
    assert 2.8284 - 0.001 <= r.S <= 2.8284272
    assert r.violated and r.bound == 2.0
    assert r.S - r.bound == pytest.approx(2 * ROOT2 - 2, abs=1e-9)


def test_optimize_flawed_and_zero():
    r = chsh_optimize(quarter, 360)
    assert r.S <= 0.7072 and not r.violated
    r = chsh_optimize(lambda x, y: 0.0, 16)
    assert r.S == 0.0 and not r.violated


def test_optimize_rejects_low_resolution():
    with pytest.raises(ValueError):
        chsh_optimize(minus_dot, 7)


def test_chsh_result_violation_flag():
    assert not ChshResult(E_X, E_X, E_X, E_X, 2.0 + 1e-13, 2.0).violated
    assert ChshResult(E_X, E_X, E_X, E_X, 2.0 + 1e-11, 2.0).violated


def test_chsh_at_angles_flawed_model():
    def flawed(x, y):
        s = Settings(x, y)
        return correlator(s, flawed_distribution(s))

    r = chsh_at_angles(OPTIMAL_ANGLES, flawed)
    assert r.S == pytest.approx(ROOT2 / 2, abs=1e-12) and not r.violated


def test_empirical_chsh_close_to_analytic():
    n = 10 ** 6
    S, se = empirical_chsh(OPTIMAL_ANGLES, n, 21)
    assert abs(S - 2 * ROOT2) < 5 * se
    assert se == pytest.approx(math.sqrt(4 * 0.5 / n), rel=0.05)
