import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdac_axons.errors import HypothesisViolation, InvalidArgument, InvalidState
from pdac_axons.model import (FREE_NAMES, PARAM_NAMES, ParameterVector, State, check_hypotheses,
                              check_ranges, default_initial_state, identified_estimates,
                              load_paper_set, load_paper_sets, load_ranges, paper_set_names,
                              reduced_jacobian_fd, rho, rhs, sample_parameters,
                              stable_steady_state, steady_state_eigenvalues, transfer_bounds,
                              transfer_f0, transfer_f1, transfer_f2)

finite = st.floats(-1e6, 1e6, allow_nan=False)
BASE = load_paper_set("paper-set-7")


def test_rho_values():
    assert rho(0.0, 1e-6) == 0.5
    expected = 0.5 * (1 + 0.3 / math.sqrt(0.09 + 1e-6))
    assert rho(0.3, 1e-6) == pytest.approx(expected, rel=1e-15)
    assert 0.999 < rho(0.3, 1e-6) < 1.0


@given(finite, st.floats(1e-12, 1.0))
def test_rho_symmetry_and_range(x, eps):
    assert rho(x, eps) + rho(-x, eps) == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= rho(x, eps) <= 1.0


@given(st.floats(-10, 10), st.floats(1e-3, 1.0))
def test_rho_increasing(x, dx):
    assert rho(x + dx) >= rho(x)


@pytest.mark.parametrize("x,eps", [(math.nan, 1e-6), (math.inf, 1e-6), (0.1, 0.0), (0.1, -1.0)])
def test_rho_rejects(x, eps):
    with pytest.raises(InvalidArgument):
        rho(x, eps)


def test_f0_examples():
    p = BASE.replace(pi0=0.0025, delta0=3.65)
    assert transfer_f0(0.0, 0.0, p) == 0.0025
    assert transfer_f0(0.5, 0.5, p) == pytest.approx(0.0025 * (1 + 3.65 / 2), rel=1e-15)
    assert transfer_f0(math.inf, 0.0, p) == pytest.approx(0.011625, rel=1e-15)
    assert transfer_f0(1e12, 1e12, p) == pytest.approx(0.011625, rel=1e-10)
    with pytest.raises(InvalidArgument):
        transfer_f0(-1.0, 0.0, p)


def test_f1_f2_examples():
    p = BASE.replace(pi1=0.02, pi2=0.3, beta1=2.0, beta2=1.0, delta2=3.0, tauA2=0.5)
    assert transfer_f1(0.0, p) == 0.02
    assert transfer_f1(-0.3, p) == pytest.approx(0.02, rel=1e-3)
    assert transfer_f2(0.0, 0.0, p) == 0.3
    assert transfer_f2(0.0, 0.5, p) == pytest.approx(0.3 * 2.5)
    with pytest.raises(InvalidArgument):
        transfer_f1(0.31, p)
    with pytest.raises(InvalidArgument):
        transfer_f2(0.0, 0.6, p)


def test_f1_h1_violation_path():
    # 3.2 * 0.3 = 0.96 keeps f1 positive; 3.4 * 0.3 = 1.02 does not
    assert transfer_f1(0.3, BASE.replace(pi1=1.0, beta1=3.2)) > 0
    with pytest.raises(HypothesisViolation) as exc:
        transfer_f1(0.3, BASE.replace(pi1=1.0, beta1=3.4))
    assert not exc.value.report.h1


@settings(max_examples=200)
@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(-0.3, 0.3), st.floats(0, 1))
def test_transfer_bounds(q2, q3, a1, a2frac):
    p = BASE.replace(pi0=0.01, pi1=0.05, pi2=0.2, beta1=2.5, beta2=3.0, delta0=4.0,
                        delta2=2.0, tauA2=0.8)
    a2 = a2frac * p.tauA2
    b = transfer_bounds(p)
    tol = 1e-12
    assert b["m0"] - tol <= transfer_f0(q2, q3, p) <= b["M0"] + tol
    assert b["m1"] - tol <= transfer_f1(a1, p) <= b["M1"] + tol
    assert b["m2"] - tol <= transfer_f2(a1, a2, p) <= b["M2"] + tol


def test_rhs_initial_structure(set7):
    s = State(20.0, 0.0, 0.0, 0.0, 0.0, 1e-4)
    d = rhs(s, set7)
    assert d[1] == pytest.approx(set7.pi0 * 20.0)
    assert d[2] == 0.0 and d[3] == 0.0 and d[4] == 0.0 and d[5] == 0.0


def test_rhs_zero_at_stable_state(set7):
    d = rhs(stable_steady_state(set7), set7)
    assert np.max(np.abs(d)) <= 1e-12 * set7.tauC


@pytest.mark.parametrize("a1", [-0.3, 0.3])
def test_rhs_axon_bound_is_fixed(set7, a1):
    assert rhs(State(1.0, 2.0, 3.0, 4.0, a1, 0.1), set7)[4] == 0.0


@settings(max_examples=100)
@given(st.lists(st.floats(0, 500), min_size=4, max_size=4), st.floats(-0.3, 0.3), st.floats(0, 1))
def test_flux_antisymmetry(qs, a1, a2frac):
    p = load_paper_set("paper-set-7")
    s = State(*qs, a1, a2frac * p.tauA2)
    d = rhs(s, p)
    lg = 1 - (s.q2 + s.q3) / p.tauC + a1 / p.tauA1C + s.a2 / p.tauA2C
    growth = p.gamma2 * s.q2 * lg + p.gamma3 * s.q3 * lg
    assert d[:4].sum() == pytest.approx(growth, rel=1e-9, abs=1e-9)


def test_rhs_rejects_invalid_state(set7):
    with pytest.raises(InvalidState) as exc:
        rhs(State(-1.0, 0, 0, 0, 0, 0), set7)
    assert exc.value.component == "q0"
    with pytest.raises(InvalidState) as exc:
        rhs(State(1.0, 0, 0, 0, 0.5, 0), set7)
    assert exc.value.component == "a1"


def test_hypotheses_examples():
    est, _ = identified_estimates()
    rep = check_hypotheses(BASE.replace(**est, beta1=0.0, beta2=0.0))
    assert rep.all_pass
    rep = check_hypotheses(BASE.replace(gamma2=0.229, gamma3=0.31))
    assert rep.h2 and rep.h2_slack == pytest.approx(0.081)
    rep = check_hypotheses(BASE.replace(tauA1C=0.15))
    assert not rep.h3 and rep.failures() == ["h3"]


@given(st.floats(0, 3.4), st.floats(0, 3.4), st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 2))
def test_hypothesis_slack_sign(b1, b2, g2, g3, t1c):
    rep = check_hypotheses(BASE.replace(beta1=b1, beta2=b2, gamma2=g2, gamma3=g3, tauA1C=t1c))
    for h in ("h1", "h2", "h3"):
        assert getattr(rep, h) == (getattr(rep, h + "_slack") > 0)


def test_bundled_sets_hypotheses():
    # sets 3 and 4 have gamma2 > gamma3; every set satisfies H1 and H3
    for name, p in zip(paper_set_names(), load_paper_sets()):
        rep = check_hypotheses(p)
        assert rep.h1 and rep.h3
        assert rep.h2 == (name not in ("paper-set-3", "paper-set-4"))


def test_stable_state_examples(set7):
    x = stable_steady_state(set7)
    assert x.q3 == pytest.approx(175.75, rel=1e-12)
    assert (x.q0, x.q1, x.q2, x.a1, x.a2) == (0.0, 0.0, 0.0, -0.3, set7.tauA2)
    p0 = BASE.replace(tauA1=0.0, tauA2=0.0, tauC=123.0)
    assert stable_steady_state(p0).q3 == 123.0
    with pytest.raises(HypothesisViolation):
        stable_steady_state(BASE.replace(gamma2=0.5, gamma3=0.1))


def test_eigenvalues_stable_and_null(set7):
    rep = steady_state_eigenvalues(set7, "stable")
    assert rep.classification == "stable"
    assert all(l.real < 0 for l in rep.eigenvalues)
    null = steady_state_eigenvalues(set7, "null", c=0.0)
    assert null.classification == "unstable"
    assert null.eigenvalues[1].real == pytest.approx(set7.gamma3 * (1 + set7.tauA2 / set7.tauA2C))
    with pytest.raises(InvalidArgument):
        steady_state_eigenvalues(set7, "null", c=0.3)


@pytest.mark.parametrize("candidate", ["stable", "upper"])
def test_eigenvalues_match_fd(set7, candidate):
    rep = steady_state_eigenvalues(set7, candidate)
    fd = np.sort_complex(np.linalg.eigvals(reduced_jacobian_fd(set7, rep.steady_state)))
    cf = np.sort_complex(np.array(rep.eigenvalues))
    assert np.allclose(fd, cf, rtol=1e-6, atol=1e-6)


def test_parameter_vector_validation():
    with pytest.raises(InvalidArgument):
        BASE.replace(pi0=-1.0)
    with pytest.raises(InvalidArgument):
        BASE.replace(pi0=math.nan)
    with pytest.raises(InvalidArgument):
        BASE.replace(epsilon=0.0)
    with pytest.raises(InvalidArgument):
        ParameterVector.from_mapping({**BASE.to_dict(), "gamma4": 1.0})


def test_parameter_vector_serialization(set7):
    assert ParameterVector.from_json(set7.to_json()) == set7
    assert ParameterVector.from_toml(set7.to_toml()) == set7
    assert ParameterVector.from_array(set7.to_array()) == set7
    assert tuple(set7.to_dict()) == PARAM_NAMES


def test_state_roundtrip():
    s = default_initial_state()
    assert State.from_array(s.to_array()) == s
    assert s.q0 == 20.0 and s.a2 == 1e-4


def test_ranges_and_sampling(rng):
    ranges = load_ranges()
    assert set(ranges) == set(FREE_NAMES)
    for _ in range(50):
        p = sample_parameters(rng)
        assert check_hypotheses(p).all_pass
        assert check_ranges(p) == []
