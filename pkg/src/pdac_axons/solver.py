"""Adaptive Dormand-Prince 5(4) integration with dense output and
runtime enforcement of the state invariants."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels as K
from .errors import DegenerateState, InvalidArgument, InvariantViolation, RangeError, SolverError, StiffnessError
from .model import STATE_NAMES, ParameterVector, State, transfer_bounds

_NO_INTEGRALS = (np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64),
                 np.zeros(0), np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    clamp_mode: str = "project"
    max_steps: int = 200_000
    first_step: float = 0.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InvalidArgument("tolerances must be positive")
        if not self.max_step > 0:
            raise InvalidArgument("max_step must be positive")
        if self.clamp_mode not in ("off", "project"):
            raise InvalidArgument(f"clamp_mode must be 'off' or 'project', got {self.clamp_mode!r}")
        if self.max_steps < 1:
            raise InvalidArgument("max_steps must be at least 1")

    def tightened(self, factor: float) -> "SolverConfig":
        return SolverConfig(self.rel_tol / factor, self.abs_tol / factor, self.max_step,
                            self.clamp_mode, self.max_steps, self.first_step)


def to_internal(y, p: ParameterVector) -> np.ndarray:
    """Map original coordinates to the integrator's (Q, artanh, logit) coordinates."""
    y = np.asarray(y, dtype=np.float64)
    z = y.copy()
    with np.errstate(divide="ignore"):
        z[..., 4] = np.arctanh(y[..., 4] / p.tauA1) if p.tauA1 > 0 else 0.0
        if p.tauA2 > 0:
            z[..., 5] = np.log(y[..., 5]) - np.log(p.tauA2 - y[..., 5])
        else:
            z[..., 5] = -np.inf
    return z


def to_original(z, p: ParameterVector) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    y = z.copy()
    y[..., 4] = p.tauA1 * np.tanh(z[..., 4])
    y[..., 5] = p.tauA2 * expit(z[..., 5])
    return y


def _validate_init(init: State, p: ParameterVector):
    y = init.to_array()
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("initial state must be finite")
    if np.any(y[:4] < 0):
        raise InvalidArgument("initial cell densities must be nonnegative")
    if abs(y[4]) > p.tauA1:
        raise InvalidArgument("initial a1 outside [-tauA1, tauA1]")
    if not (0.0 <= y[5] <= p.tauA2):
        raise InvalidArgument("initial a2 outside [0, tauA2]")
    return y


def _raise_for_status(status, t_fail, comp):
    if status == K.OK:
        return
    if status == K.STEP_UNDERFLOW:
        raise StiffnessError(f"step size fell below {K.MIN_STEP} day at t = {t_fail}", t_fail)
    if status == K.MAX_STEPS:
        raise StiffnessError(f"step budget exhausted at t = {t_fail}", t_fail)
    if status == K.INVARIANT:
        name = STATE_NAMES[comp]
        raise InvariantViolation(f"{name} fell below -{K.VIOLATION_TOL} at t = {t_fail}",
                                 t_fail, name)
    if status == K.NON_FINITE:
        raise SolverError(f"non-finite state or derivative at t = {t_fail}", t_fail,
                          STATE_NAMES[comp] if comp >= 0 else None)
    if status == K.DEGENERATE:
        raise DegenerateState(f"total cell density vanished at t = {t_fail}")
    raise SolverError(f"unknown solver status {status}")


def run_kernel(p: ParameterVector, init: State, t_start: float, t_end: float,
               cfg: SolverConfig, store: bool, integrals=_NO_INTEGRALS, nsub: int = 1):
    """Low-level entry point shared by the solver and the cost functions."""
    if not (math.isfinite(t_start) and math.isfinite(t_end)) or not t_end > t_start:
        raise InvalidArgument("need finite t_end > t_start")
    y0 = _validate_init(init, p)
    z0 = to_internal(y0, p)
    lo, hi, comp, target, power = integrals
    out = K.dopri(p.to_array(), z0, float(t_start), float(t_end), cfg.rel_tol, cfg.abs_tol,
                  float(cfg.max_step), float(cfg.first_step), cfg.clamp_mode == "project",
                  int(cfg.max_steps), store, lo, hi, comp, target, power, int(nsub))
    status, t_fail, c_fail, ts, zs, dense, acc, _ = out
    _raise_for_status(status, t_fail, c_fail)
    return ts, zs, dense, acc


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted mesh points with the quartic interpolant of every step.

    ``states`` holds original coordinates; the interpolant works in the
    integrator's coordinates (see :func:`to_internal`).
    """

    times: np.ndarray
    states: np.ndarray
    params: ParameterVector
    _z: np.ndarray = field(repr=False)
    _dense: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.times, self.states, self._z, self._dense):
            arr.setflags(write=False)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def state(self, k: int) -> State:
        return State.from_array(self.states[k])

    def component(self, name: str) -> np.ndarray:
        return self.states[:, STATE_NAMES.index(name)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t",) + STATE_NAMES)
        for t, row in zip(self.times, self.states):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def integrate(p: ParameterVector, init: State, t_start: float, t_end: float,
              cfg: SolverConfig | None = None) -> Trajectory:
    """Solve the system on [t_start, t_end] and keep the dense output."""
    cfg = SolverConfig() if cfg is None else cfg
    ts, zs, dense, _ = run_kernel(p, init, t_start, t_end, cfg, True)
    ys = to_original(zs, p)
    ys[0] = init.to_array()
    return Trajectory(ts.copy(), ys, p, zs.copy(), dense.copy())


def final_state(p: ParameterVector, init: State, t_start: float, t_end: float,
                cfg: SolverConfig | None = None) -> State:
    """State at t_end without storing the mesh."""
    cfg = SolverConfig() if cfg is None else cfg
    _, zs, _, _ = run_kernel(p, init, t_start, t_end, cfg, False)
    return State.from_array(to_original(zs[-1], p))


def sample_many(traj: Trajectory, t) -> np.ndarray:
    """Dense-output values at the times ``t``; rows are states."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(~np.isfinite(t)) or np.any(t < traj.times[0]) or np.any(t > traj.times[-1]):
        raise RangeError(f"requested time outside [{traj.times[0]}, {traj.times[-1]}]")
    out = np.empty((t.size, 6))
    idx = np.searchsorted(traj.times, t, side="right") - 1
    idx = np.clip(idx, 0, len(traj.times) - 2)
    for j, (tj, k) in enumerate(zip(t, idx)):
        if tj == traj.times[k]:
            out[j] = traj.states[k]
            continue
        if tj == traj.times[k + 1]:
            out[j] = traj.states[k + 1]
            continue
        h = traj.times[k + 1] - traj.times[k]
        th = (tj - traj.times[k]) / h
        q = traj._dense[k]
        z = traj._z[k] + h * (q @ np.array([th, th ** 2, th ** 3, th ** 4]))
        out[j] = to_original(z, traj.params)
    return out


def sample(traj: Trajectory, t: float) -> State:
    """Interpolated state at time ``t`` (exact at mesh points)."""
    return State.from_array(sample_many(traj, t)[0])


@dataclass
class EnvelopeReport:
    ok: bool
    q0_sandwich: bool
    a2_monotone: bool
    positivity: bool
    axon_bounds: bool
    first_violation_time: float | None
    violations: list

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "ok", "q0_sandwich", "a2_monotone", "positivity", "axon_bounds",
            "first_violation_time", "violations")}


def check_envelopes(traj: Trajectory, p: ParameterVector | None = None, *,
                    m0: float | None = None, M0: float | None = None,
                    rtol: float = 1e-7) -> EnvelopeReport:
    """Check the analytic envelopes at every mesh point.

    Q0 must stay between Q0(t0)exp(-M0 (t - t0)) and Q0(t0)exp(-m0 (t - t0));
    A2 must not decrease; cell densities must stay nonnegative and the axons
    inside their bounds. ``m0``/``M0`` override the rate bounds (used to
    self-test the checker). ``rtol`` absorbs integration error.
    """
    p = traj.params if p is None else p
    b = transfer_bounds(p)
    m0 = b["m0"] if m0 is None else m0
    M0 = b["M0"] if M0 is None else M0
    t = traj.times - traj.times[0]
    y = traj.states
    q00 = y[0, 0]
    viol = []

    lower = q00 * np.exp(-M0 * t) * (1 - rtol)
    upper = q00 * np.exp(-m0 * t) * (1 + rtol)
    bad = np.nonzero((y[:, 0] < lower) | (y[:, 0] > upper))[0]
    if bad.size:
        viol.append(("q0_sandwich", float(traj.times[bad[0]])))

    a2 = y[:, 5]
    drop = np.nonzero(np.diff(a2) < -(1e-12 + rtol * np.abs(a2[:-1])))[0]
    if drop.size:
        viol.append(("a2_monotone", float(traj.times[drop[0] + 1])))

    neg = np.nonzero(np.any(y[:, :4] < 0, axis=1))[0]
    if neg.size:
        viol.append(("positivity", float(traj.times[neg[0]])))

    out = np.nonzero((np.abs(y[:, 4]) > p.tauA1) | (a2 < 0) | (a2 > p.tauA2))[0]
    if out.size:
        viol.append(("axon_bounds", float(traj.times[out[0]])))

    kinds = {k for k, _ in viol}
    first = min((tv for _, tv in viol), default=None)
    return EnvelopeReport(not viol, "q0_sandwich" not in kinds, "a2_monotone" not in kinds,
                          "positivity" not in kinds, "axon_bounds" not in kinds, first, viol)
