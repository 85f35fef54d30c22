"""Parameter space, right-hand side and steady-state analysis of the
six-compartment acini/ADM/PanIN/PDAC model coupled to axon densities.

State layout is ``(Q0, Q1, Q2, Q3, A1, A2)``: acinar, ADM, PanIN and PDAC cell
densities, the autonomic axon deviation from its healthy density, and the
sensory axon density.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

import numpy as np

from .errors import HypothesisViolation, InvalidArgument, InvalidState

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PARAM_NAMES = (
    "pi0", "pi1", "pi2", "gamma2", "gamma3", "beta1", "beta2", "delta0",
    "delta2", "tauC", "tauA1", "tauA2", "tauA1C", "tauA2C", "alpha1",
    "alpha2", "alpha3", "alphabar2", "alphabar3", "a1eq", "epsilon",
)
FIXED_NAMES = ("tauA1", "a1eq", "epsilon")
FREE_NAMES = tuple(n for n in PARAM_NAMES if n not in FIXED_NAMES)
STATE_NAMES = ("q0", "q1", "q2", "q3", "a1", "a2")

DEFAULT_TAU_A1 = 0.3
DEFAULT_A1_EQ = 0.0099
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True, kw_only=True)
class ParameterVector:
    """All model constants. Fields are nonnegative and finite."""

    pi0: float
    pi1: float
    pi2: float
    gamma2: float
    gamma3: float
    beta1: float
    beta2: float
    delta0: float
    delta2: float
    tauC: float
    tauA1: float = DEFAULT_TAU_A1
    tauA2: float
    tauA1C: float
    tauA2C: float
    alpha1: float
    alpha2: float
    alpha3: float
    alphabar2: float
    alphabar3: float
    a1eq: float = DEFAULT_A1_EQ
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
                raise InvalidArgument(f"parameter {name} must be a real number, got {v!r}")
            v = float(v)
            object.__setattr__(self, name, v)
            if not math.isfinite(v):
                raise InvalidArgument(f"parameter {name} is not finite: {v}")
            if v < 0:
                raise InvalidArgument(f"parameter {name} must be nonnegative, got {v}")
        if self.epsilon <= 0:
            raise InvalidArgument("epsilon must be positive")
        for name in ("tauA1C", "tauA2C", "tauC"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "ParameterVector":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (len(PARAM_NAMES),):
            raise InvalidArgument(f"expected {len(PARAM_NAMES)} values, got shape {arr.shape}")
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, arr)})

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ParameterVector":
        unknown = sorted(set(data) - set(PARAM_NAMES))
        if unknown:
            raise InvalidArgument(f"unknown parameter key(s): {', '.join(unknown)}")
        missing = sorted(set(FREE_NAMES) - set(data))
        if missing:
            raise InvalidArgument(f"missing parameter key(s): {', '.join(missing)}")
        return cls(**dict(data))

    def replace(self, **changes) -> "ParameterVector":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ParameterVector":
        return cls.from_mapping(json.loads(text))

    def to_toml(self) -> str:
        return "".join(f"{n} = {getattr(self, n)!r}\n" for n in PARAM_NAMES)

    @classmethod
    def from_toml(cls, text: str) -> "ParameterVector":
        return cls.from_mapping(tomllib.loads(text))


@dataclass(frozen=True)
class State:
    q0: float
    q1: float
    q2: float
    q3: float
    a1: float
    a2: float

    def to_array(self) -> np.ndarray:
        return np.array([self.q0, self.q1, self.q2, self.q3, self.a1, self.a2], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "State":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (6,):
            raise InvalidArgument(f"a state has 6 components, got shape {arr.shape}")
        return cls(*(float(v) for v in arr))


def default_initial_state(q0: float = 20.0, a2: float = 1e-4) -> State:
    """Healthy tissue: only acinar cells, no axon deviation, a trace of sensory axons."""
    return State(q0, 0.0, 0.0, 0.0, 0.0, a2)


def validate_state(s: State, p: ParameterVector, tol: float = 0.0) -> None:
    """Raise InvalidState if ``s`` leaves the invariant region (up to ``tol``)."""
    for name in STATE_NAMES:
        v = getattr(s, name)
        if not math.isfinite(v):
            raise InvalidState(f"state component {name} is not finite", name, v)
    for name in ("q0", "q1", "q2", "q3"):
        v = getattr(s, name)
        if v < -tol:
            raise InvalidState(f"{name} = {v} is negative", name, v)
    if abs(s.a1) > p.tauA1 + tol:
        raise InvalidState(f"a1 = {s.a1} outside [-tauA1, tauA1]", "a1", s.a1)
    if s.a2 < -tol or s.a2 > p.tauA2 + tol:
        raise InvalidState(f"a2 = {s.a2} outside [0, tauA2]", "a2", s.a2)


def rho(x: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Smooth Heaviside: 0 for x << -sqrt(eps), 1 for x >> sqrt(eps)."""
    if not math.isfinite(x) or not math.isfinite(epsilon):
        raise InvalidArgument("rho arguments must be finite")
    if epsilon <= 0:
        raise InvalidArgument("epsilon must be positive")
    return 0.5 * (1.0 + x / math.sqrt(x * x + epsilon))


def _f0(q2, q3, p):
    s = q2 + q3
    return p.pi0 * (1.0 + p.delta0 * s / (1.0 + s))


def _f1(a1, p):
    return p.pi1 * (1.0 - p.beta1 * a1 * rho(a1, p.epsilon))


def _f2(a1, a2, p):
    return p.pi2 * (1.0 - p.beta2 * a1 * rho(a1, p.epsilon) + p.delta2 * a2)


def _check_axons(a1, a2, p):
    if not (math.isfinite(a1) and abs(a1) <= p.tauA1):
        raise InvalidArgument(f"a1 = {a1} outside [-tauA1, tauA1]")
    if a2 is not None and not (math.isfinite(a2) and 0.0 <= a2 <= p.tauA2):
        raise InvalidArgument(f"a2 = {a2} outside [0, tauA2]")


def transfer_f0(q2: float, q3: float, p: ParameterVector) -> float:
    """Acini -> ADM rate, enhanced by PanIN/PDAC through a saturating term."""
    if not (q2 >= 0 and q3 >= 0):
        raise InvalidArgument("q2 and q3 must be nonnegative")
    if math.isinf(q2 + q3):
        return p.pi0 * (1.0 + p.delta0)
    return _f0(q2, q3, p)


def transfer_f1(a1: float, p: ParameterVector) -> float:
    """ADM -> PanIN rate, inhibited by autonomic axons."""
    _check_axons(a1, None, p)
    f = _f1(a1, p)
    if f <= 0:
        raise HypothesisViolation(
            f"f1 = {f} is not positive (beta1*tauA1 = {p.beta1 * p.tauA1})",
            check_hypotheses(p))
    return f


def transfer_f2(a1: float, a2: float, p: ParameterVector) -> float:
    """PanIN -> PDAC rate, inhibited by autonomic and enhanced by sensory axons."""
    _check_axons(a1, a2, p)
    f = _f2(a1, a2, p)
    if f <= 0:
        raise HypothesisViolation(
            f"f2 = {f} is not positive (beta2*tauA1 = {p.beta2 * p.tauA1})",
            check_hypotheses(p))
    return f


def transfer_bounds(p: ParameterVector) -> dict:
    """Constant lower/upper bounds on f0, f1, f2 over the invariant region."""
    return {
        "m0": p.pi0, "M0": p.pi0 * (1.0 + p.delta0),
        "m1": p.pi1 * (1.0 - p.beta1 * p.tauA1), "M1": p.pi1 * (1.0 + p.beta1 * p.tauA1),
        "m2": p.pi2 * (1.0 - p.beta2 * p.tauA1),
        "M2": p.pi2 * (1.0 + p.beta2 * p.tauA1 + p.delta2 * p.tauA2),
    }


def logistic_factor(q2, q3, a1, a2, p: ParameterVector) -> float:
    return 1.0 - (q2 + q3) / p.tauC + a1 / p.tauA1C + a2 / p.tauA2C


def _rhs_unchecked(y, p: ParameterVector) -> np.ndarray:
    q0, q1, q2, q3, a1, a2 = y
    f0 = _f0(q2, q3, p)
    f1 = _f1(a1, p)
    f2 = _f2(a1, a2, p)
    lg = logistic_factor(q2, q3, a1, a2, p)
    r = a1 / p.tauA1
    return np.array([
        -f0 * q0,
        f0 * q0 - f1 * q1,
        p.gamma2 * q2 * lg + f1 * q1 - f2 * q2,
        p.gamma3 * q3 * lg + f2 * q2,
        (p.alpha1 * q1 + p.alpha2 * q2 - p.alpha3 * q3) * (1.0 + r) * (1.0 - r),
        (p.alphabar2 * q2 + p.alphabar3 * q3) * a2 * (1.0 - a2 / p.tauA2),
    ])


def rhs(s: State, p: ParameterVector) -> np.ndarray:
    """Time derivative of ``s`` (per day), in state-component order."""
    validate_state(s, p)
    return _rhs_unchecked(s.to_array(), p)


@dataclass(frozen=True)
class HypothesisReport:
    h1: bool
    h2: bool
    h3: bool
    h1_slack: float
    h2_slack: float
    h3_slack: float

    @property
    def all_pass(self) -> bool:
        return self.h1 and self.h2 and self.h3

    def failures(self) -> list:
        return [h for h in ("h1", "h2", "h3") if not getattr(self, h)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def check_hypotheses(p: ParameterVector) -> HypothesisReport:
    """Slack of each inequality; a hypothesis passes iff its slack is positive.

    H1: beta1*tauA1 < 1 and beta2*tauA1 < 1. H2: gamma2 < gamma3.
    H3: tauA1 < tauA1C.
    """
    s1 = 1.0 - max(p.beta1, p.beta2) * p.tauA1
    s2 = p.gamma3 - p.gamma2
    s3 = p.tauA1C - p.tauA1
    return HypothesisReport(s1 > 0, s2 > 0, s3 > 0, s1, s2, s3)


def capacity_factor(x: float, p: ParameterVector) -> float:
    """C(x) = 1 + x/tauA1C + tauA2/tauA2C."""
    return 1.0 + x / p.tauA1C + p.tauA2 / p.tauA2C


def _require(p, which=("h2", "h3")):
    rep = check_hypotheses(p)
    bad = [h for h in which if not getattr(rep, h)]
    if bad:
        raise HypothesisViolation(f"hypotheses violated: {', '.join(bad)}", rep)
    return rep


def stable_steady_state(p: ParameterVector) -> State:
    """The unique linearly stable equilibrium (requires H2 and H3)."""
    _require(p)
    return State(0.0, 0.0, 0.0, p.tauC * capacity_factor(-p.tauA1, p), -p.tauA1, p.tauA2)


def reduced_rhs(x, p: ParameterVector) -> np.ndarray:
    """Dynamics of (Q2, Q3, A1) once Q0 = Q1 = 0 and A2 = tauA2."""
    q2, q3, a1 = x
    y = np.array([0.0, 0.0, q2, q3, a1, p.tauA2])
    return _rhs_unchecked(y, p)[2:5]


def reduced_jacobian_fd(p: ParameterVector, state: State, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of :func:`reduced_rhs` at ``state``."""
    x0 = np.array([state.q2, state.q3, state.a1])
    jac = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        jac[:, j] = (reduced_rhs(x0 + e, p) - reduced_rhs(x0 - e, p)) / (2.0 * h)
    return jac


@dataclass(frozen=True)
class StabilityReport:
    steady_state: State
    eigenvalues: tuple
    classification: str


def steady_state_eigenvalues(p: ParameterVector, candidate: str = "stable",
                             c: float | None = None) -> StabilityReport:
    """Closed-form eigenvalues of the reduced Jacobian at an equilibrium.

    ``candidate`` is ``"null"`` (no tumour, A1 = c), ``"upper"`` (A1 = tauA1)
    or ``"stable"`` (A1 = -tauA1). At each of these the Jacobian is block
    triangular, so its eigenvalues are its diagonal entries.
    """
    _require(p)
    tau = p.tauA1
    if candidate == "null":
        if c is None or not (-tau < c < tau):
            raise InvalidArgument("null-state candidate needs c in (-tauA1, tauA1)")
        cap = capacity_factor(c, p)
        f2inf = _f2(c, p.tauA2, p)
        lam = (p.gamma2 * cap - f2inf, p.gamma3 * cap, 0.0)
        ss = State(0.0, 0.0, 0.0, 0.0, c, p.tauA2)
    elif candidate in ("stable", "upper"):
        a1 = -tau if candidate == "stable" else tau
        cap = capacity_factor(a1, p)
        q3 = p.tauC * cap
        f2inf = _f2(a1, p.tauA2, p)
        lam = (-f2inf, -p.gamma3 * cap, 2.0 * p.alpha3 * q3 * a1 / tau ** 2)
        ss = State(0.0, 0.0, 0.0, q3, a1, p.tauA2)
    else:
        raise InvalidArgument(f"unknown candidate {candidate!r}")
    eig = tuple(complex(v) for v in lam)
    cls = "stable" if all(v.real < 0 for v in eig) else "unstable"
    return StabilityReport(ss, eig, cls)


# -- bundled data ---------------------------------------------------------


@dataclass(frozen=True)
class ParamRange:
    lower: float
    upper: float
    scale: str = "linear"
    floor: float | None = None

    @property
    def effective_lower(self) -> float:
        return self.floor if self.floor is not None and self.floor > self.lower else self.lower


def _data_text(name: str) -> str:
    return resources.files("pdac_axons").joinpath("data", name).read_text()


def load_ranges() -> dict:
    """Admissible ranges of the 18 free parameters, keyed by name."""
    raw = tomllib.loads(_data_text("paper_ranges.toml"))
    return {k: ParamRange(float(v["lower"]), float(v["upper"]), v.get("scale", "linear"),
                          v.get("floor")) for k, v in raw.items()}


def _bundled_tables() -> dict:
    return tomllib.loads(_data_text("paper_sets.toml"))


def paper_set_names() -> list:
    return sorted(k for k in _bundled_tables() if k.startswith("paper-set-"))


def load_paper_set(name: str) -> ParameterVector:
    tables = _bundled_tables()
    if name not in tables or not name.startswith("paper-set-"):
        raise InvalidArgument(f"unknown bundled parameter set {name!r}")
    return ParameterVector.from_mapping(tables[name])


def load_paper_sets() -> list:
    return [load_paper_set(n) for n in paper_set_names()]


def identified_estimates() -> tuple:
    """(estimates, confidence ranges) of the seven identifiable parameters."""
    t = _bundled_tables()["identified"]
    return dict(t["estimates"]), {k: tuple(v) for k, v in t["confidence"].items()}


def check_ranges(p: ParameterVector, ranges: dict | None = None) -> list:
    """Names of free parameters lying outside their admissible range."""
    ranges = load_ranges() if ranges is None else ranges
    return [n for n, r in ranges.items() if not (r.lower <= getattr(p, n) <= r.upper)]


def sample_parameters(rng: np.random.Generator, ranges: dict | None = None,
                      base: ParameterVector | None = None, max_tries: int = 10000) -> ParameterVector:
    """Draw uniformly (in each range's scale) until H1-H3 hold strictly."""
    ranges = load_ranges() if ranges is None else ranges
    fixed = {} if base is None else {n: getattr(base, n) for n in FIXED_NAMES}
    for _ in range(max_tries):
        vals = {}
        for name in FREE_NAMES:
            r = ranges[name]
            lo = r.effective_lower
            if r.scale == "log10":
                vals[name] = 10.0 ** rng.uniform(math.log10(lo), math.log10(r.upper))
            else:
                vals[name] = rng.uniform(lo, r.upper)
        p = ParameterVector(**vals, **fixed)
        if check_hypotheses(p).all_pass:
            return p
    raise InvalidArgument("could not draw an H1-H3-valid parameter vector")
