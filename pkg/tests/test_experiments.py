import numpy as np
import pytest

from pdac_axons.errors import HypothesisViolation, InvalidArgument
from pdac_axons.experiments import (KINDS, DenervationScenario, asymptotic_check, crossing_time,
                                    denervate, denervation_study, sample_convergent_parameters)
from pdac_axons.model import State, check_hypotheses, default_initial_state, stable_steady_state
from pdac_axons.solver import final_state, integrate, sample_many


@pytest.fixture(scope="module")
def study():
    from pdac_axons.model import load_paper_set
    return denervation_study(load_paper_set("paper-set-7"))


def test_scenario_overrides_touch_only_listed_fields(set7):
    expected = {"control": set(), "autonomic": {"beta1", "beta2", "tauA1C"},
                "sensory": {"delta2", "tauA2C"},
                "both": {"beta1", "beta2", "tauA1C", "delta2", "tauA2C"}}
    base = set7.to_dict()
    for kind in KINDS:
        new = DenervationScenario(kind).apply(set7).to_dict()
        changed = {k for k in base if repr(base[k]) != repr(new[k])}
        assert changed == expected[kind]
    with pytest.raises(InvalidArgument):
        DenervationScenario("vagal")


def test_control_equals_plain_integration(set7):
    p, tr = denervate(set7, "control")
    ref = integrate(set7, default_initial_state(), 10.0, 70.0)
    assert p == set7 and np.array_equal(tr.states, ref.states)


def test_plateau_ordering(study):
    q = study.q3_final
    assert q["autonomic"] > q["both"] > q["control"]


def test_autonomic_appears_earlier_and_ends_higher(study):
    assert study.appearance["autonomic"] < study.appearance["control"]
    ts = np.linspace(60.0, 70.0, 50)
    auto = sample_many(study.trajectories["autonomic"], ts)[:, 3]
    ctrl = sample_many(study.trajectories["control"], ts)[:, 3]
    assert np.all(auto > ctrl)


@pytest.mark.xfail(strict=True, reason="control briefly overtakes (t ~ 42-51) while A1 > 0 "
                   "adds A1/tauA1C to its growth capacity")
def test_autonomic_dominates_after_appearance(study):
    ts = np.linspace(study.appearance["autonomic"], 70.0, 400)
    auto = sample_many(study.trajectories["autonomic"], ts)[:, 3]
    ctrl = sample_many(study.trajectories["control"], ts)[:, 3]
    assert np.all(auto > ctrl)


def test_sensory_delays_appearance(study):
    assert study.appearance["sensory"] > study.appearance["control"]


def test_crossing_time_is_a_root(study):
    tr = study.trajectories["control"]
    t = crossing_time(tr, study.threshold)
    assert sample_many(tr, t)[0, 3] == pytest.approx(study.threshold, rel=1e-9)
    assert crossing_time(tr, 1e9) is None


def test_combined_csv_and_svg(study, tmp_path):
    text = study.combined_csv(tmp_path / "d.csv")
    lines = text.splitlines()
    assert lines[0] == "t,control,autonomic,sensory,both"
    assert len(lines) == 122  # 10, 10.5, ..., 70
    svg = study.svg(tmp_path / "d.svg")
    assert svg.startswith("<svg") and svg.count("<polyline") == 4


def test_asymptotic_random_draws(rng):
    for _ in range(10):
        res = asymptotic_check(sample_convergent_parameters(rng))
        assert res.passed and res.distance < 1e-3


def test_asymptotic_alpha3_edge_case(rng):
    p = sample_convergent_parameters(rng).replace(alpha3=0.0)
    res = asymptotic_check(p)
    assert res.edge_case and not res.passed
    assert res.final.a1 > 0  # drifts toward +tauA1, not -tauA1


def test_perturbed_steady_state_returns(rng):
    p = sample_convergent_parameters(rng)
    xs = stable_steady_state(p)
    init = State(xs.q0, xs.q1, 1e-8, xs.q3, xs.a1, xs.a2)
    fin = final_state(p, init, 0.0, 2000.0)
    scale = np.maximum(1.0, np.abs(xs.to_array()))
    assert np.max(np.abs(fin.to_array() - xs.to_array()) / scale) < 1e-6


def test_asymptotic_refuses_invalid(set7):
    bad = set7.replace(gamma2=0.9, gamma3=0.1)
    assert not check_hypotheses(bad).h2
    with pytest.raises(HypothesisViolation) as exc:
        asymptotic_check(bad)
    assert exc.value.report.failures() == ["h2"]
