import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdac_axons.errors import DegenerateState, InvalidArgument, WeightUndefined
from pdac_axons.model import State, default_initial_state, load_paper_set, load_paper_sets
from pdac_axons.objective import (Chronology, ModelObjective, ObservationSet, continuous_cost,
                                  discrete_cost, proportions, rectangle_weights, weights)
from pdac_axons.solver import SolverConfig

BASE = load_paper_set("paper-set-7")
FROZEN = BASE.replace(pi0=0.0, pi1=0.0, pi2=0.0, gamma2=0.0, gamma3=0.0, alpha1=0.0,
                      alpha2=0.0, alpha3=0.0, alphabar2=0.0, alphabar3=0.0)


def matching_state(obs):
    y = obs.y_star
    return State(100 * y[0], 100 * y[1], 100 * y[2], 100 * y[3], y[4] - obs.a1_eq, y[5])


def test_proportions_examples():
    assert np.array_equal(proportions(State(100, 0, 0, 0, 0, 0)), [1, 0, 0, 0])
    assert np.allclose(proportions(State(25, 25, 25, 25, 0, 0)), 0.25, rtol=0, atol=0)
    with pytest.raises(DegenerateState):
        proportions(State(0, 0, 0, 0, 0, 0))


@given(st.lists(st.floats(1e-3, 1e4), min_size=4, max_size=4))
def test_proportions_sum_to_one(q):
    assert abs(proportions(np.array(q + [0.0, 0.0])).sum() - 1.0) <= 1e-15


def test_weights_examples(obs, chrono):
    a, b = weights(obs, chrono)
    assert a[4] == pytest.approx(1 / (6 * 0.1077), rel=1e-15)
    assert a[4] == pytest.approx(1.5475, abs=1e-4)
    assert b[3] == pytest.approx(obs.y_star[3] / 8)  # t4 - t0 = 8
    assert weights(obs, chrono, {1: 1.0})[1][0] == pytest.approx(1 / 7)
    doubled = ObservationSet(tuple(np.array(obs.y_star) * [1, 1, 1, 1, 2, 2]))
    assert weights(doubled, chrono)[0][4:] == pytest.approx(a[4:] / 2)


def test_weights_undefined(chrono):
    with pytest.raises(WeightUndefined):
        weights(ObservationSet((0.5, 0.5, 0.0, 0.0, 0.1, 0.1)), chrono)


def test_observation_validation(tmp_path):
    with pytest.raises(InvalidArgument):
        ObservationSet((0.5, 0.5, 0.5, 0.5, 0.1, 0.1))
    with pytest.raises(InvalidArgument):
        ObservationSet((0.55, 0.15, 0.2, 0.1, -0.1, 0.1))
    path = tmp_path / "obs.csv"
    path.write_text("key,value\ny1,0.55\ny2,0.15\ny3,0.2\ny4,0.1\ny5,0.1077\ny6,0.1468\n"
                    "a1_eq,0.0099\ntf,45\n")
    assert ObservationSet.from_csv(path) == ObservationSet.fixture()


def test_chronology_validation(obs):
    with pytest.raises(InvalidArgument):
        Chronology(t0=20.0)
    with pytest.raises(InvalidArgument):
        Chronology(t3=50.0).check_against(obs)


def test_perfect_fit_on_window(obs, chrono):
    # constant trajectory equal to the data: every data term vanishes and each
    # penalty is b_k Q_k^2 (t_k - t0)
    s = matching_state(obs)
    cb = continuous_cost(FROZEN, obs, chrono, init=s)
    assert max(cb.data_terms) < 1e-25
    _, b = weights(obs, chrono)
    vals = s.to_array()[1:]
    expected = b * vals ** 2 * (np.array(chrono.appearances) - chrono.t0)
    assert np.allclose(cb.penalty_terms, expected, rtol=1e-12)
    assert cb.total == pytest.approx(sum(cb.data_terms) + sum(cb.penalty_terms), rel=1e-15)


def test_penalties_vanish_before_appearance(obs, chrono):
    cb = continuous_cost(FROZEN, obs, chrono, init=State(50.0, 0, 0, 0, 0, 0))
    assert cb.penalty_terms == (0.0,) * 5
    a, _ = weights(obs, chrono)
    # proportions (1, 0, 0, 0) and axons (0, 0) held over a 6-day window
    resid = np.array([1 - obs.y_star[0], *obs.y_star[1:4], obs.a1_eq - obs.y_star[4],
                      -obs.y_star[5]])
    assert np.allclose(cb.data_terms, a * resid ** 2 * 6.0, rtol=1e-12)


def test_calibrated_sets_under_ten(obs, chrono):
    for p in load_paper_sets():
        cb = continuous_cost(p, obs, chrono)
        assert 0 < cb.total < 10
        assert all(t >= 0 for t in cb.data_terms + cb.penalty_terms)


def test_quadrature_refinement(set7, obs, chrono):
    a = continuous_cost(set7, obs, chrono).total
    b = continuous_cost(set7, obs, chrono, refine=10).total
    assert abs(a - b) <= 1e-6 * abs(b)


def test_discrete_single_point_perfect_fit(obs, chrono):
    val = discrete_cost(FROZEN, obs, chrono, [obs.t_f], init=matching_state(obs))
    assert val < 1e-25


def test_discrete_matches_continuous(obs, chrono):
    grid = np.arange(chrono.t0 + 0.5, obs.window[1], 1.0)
    for p in load_paper_sets():
        d = discrete_cost(p, obs, chrono, grid)
        c = continuous_cost(p, obs, chrono).total
        assert abs(d - c) <= 0.02 * c


def test_discrete_explicit_weights(set7, obs, chrono):
    grid = np.arange(chrono.t0 + 0.5, obs.window[1], 1.0)
    a = discrete_cost(set7, obs, chrono, grid, c=np.ones(len(grid)))
    b = discrete_cost(set7, obs, chrono, grid, c=np.full(len(grid), 2.0))
    assert a == pytest.approx(2 * b)
    assert a == discrete_cost(set7, obs, chrono, grid, c=np.ones(len(grid)))
    with pytest.raises(InvalidArgument):
        discrete_cost(set7, obs, chrono, grid, c=np.ones(3))
    with pytest.raises(InvalidArgument):
        discrete_cost(set7, obs, chrono, [5.0])


def test_rectangle_weights_uniform():
    assert np.allclose(rectangle_weights(np.arange(10.5, 20, 1.0)), 1.0)


def test_cost_continuity(obs, chrono, rng):
    obj = ModelObjective(obs, chrono)
    sets = load_paper_sets()
    for _ in range(10):
        p = sets[rng.integers(len(sets))]
        name = ("pi0", "pi1", "pi2", "gamma3", "tauC", "delta0")[rng.integers(6)]
        v = getattr(p, name)
        c0 = obj(p)
        c1 = obj(p.replace(**{name: v * (1 + 1e-7)}))
        assert abs(c1 - c0) <= 1e-4 * c0


def test_model_objective_failure_cost(obs, chrono, set7):
    obj = ModelObjective(obs, chrono, cfg=SolverConfig(max_steps=3))
    assert obj(set7) == obj.failure_cost
    disc = ModelObjective(obs, chrono, kind="discrete")
    assert disc(set7) == pytest.approx(continuous_cost(set7, obs, chrono).total, rel=0.02)


@pytest.mark.xfail(strict=True, reason="f0 saturates in the unscaled Q2+Q3 and axon growth "
                   "is proportional to Q, so proportions drift well beyond 1% under scaling")
def test_proportion_terms_scale_invariance(obs, chrono):
    lam = 2.0
    for p in load_paper_sets():
        a = np.array(continuous_cost(p, obs, chrono).data_terms[:4])
        init = default_initial_state(q0=20.0 * lam)
        b = np.array(continuous_cost(p.replace(tauC=p.tauC * lam), obs, chrono,
                                     init=init).data_terms[:4])
        assert np.all(np.abs(b - a) <= 0.01 * np.abs(a))
