"""Canned studies: denervation scenarios, long-time convergence checks and
reproduction of the calibrated-set trajectories."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import HypothesisViolation, InvalidArgument
from .model import (ParameterVector, State, check_hypotheses, default_initial_state,
                    stable_steady_state)
from .solver import SolverConfig, Trajectory, final_state, integrate, sample_many

KINDS = ("control", "autonomic", "sensory", "both")
_AUTONOMIC = {"beta1": 0.0, "beta2": 0.0, "tauA1C": 100.0}
_SENSORY = {"delta2": 0.0, "tauA2C": 100.0}


@dataclass(frozen=True)
class DenervationScenario:
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown denervation kind {self.kind!r}")

    @property
    def overrides(self) -> dict:
        out = {}
        if self.kind in ("autonomic", "both"):
            out.update(_AUTONOMIC)
        if self.kind in ("sensory", "both"):
            out.update(_SENSORY)
        return out

    def apply(self, p: ParameterVector) -> ParameterVector:
        return p.replace(**self.overrides) if self.overrides else p


def denervate(base: ParameterVector, kind: str, init: State | None = None,
              cfg: SolverConfig | None = None, t0: float = 10.0, tF: float = 70.0):
    """Apply a scenario's substitutions and integrate on [t0, tF]."""
    p = DenervationScenario(kind).apply(base)
    init = default_initial_state() if init is None else init
    return p, integrate(p, init, t0, tF, cfg)


def crossing_time(traj: Trajectory, level: float, component: int = 3) -> float | None:
    """First time the component reaches ``level`` (dense-output root)."""
    y = traj.states[:, component]
    idx = np.nonzero(y >= level)[0]
    if idx.size == 0:
        return None
    k = int(idx[0])
    if k == 0:
        return float(traj.times[0])
    a, b = traj.times[k - 1], traj.times[k]
    f = lambda t: sample_many(traj, t)[0, component] - level
    if f(b) == 0:
        return float(b)
    return float(brentq(f, a, b, xtol=1e-12, rtol=1e-14))


@dataclass
class DenervationStudy:
    trajectories: dict
    params: dict
    q3_final: dict
    appearance: dict
    threshold: float

    def combined_csv(self, path=None, step: float = 0.5) -> str:
        first = self.trajectories["control"]
        ts = np.arange(first.t_start, first.t_end + 0.5 * step, step)
        ts[-1] = min(ts[-1], first.t_end)
        cols = {k: sample_many(tr, ts)[:, 3] for k, tr in self.trajectories.items()}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t",) + KINDS)
        for i, t in enumerate(ts):
            w.writerow([f"{t:.17g}"] + [f"{cols[k][i]:.17g}" for k in KINDS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def svg(self, path=None, width: int = 640, height: int = 400) -> str:
        return line_chart_svg(self.trajectories, path, width, height)


def denervation_study(base: ParameterVector, init: State | None = None,
                      cfg: SolverConfig | None = None, t0: float = 10.0, tF: float = 70.0,
                      fraction: float = 0.01) -> DenervationStudy:
    """All four scenarios; appearance is the first crossing of ``fraction`` of
    the control PDAC level at tF."""
    trajs, params = {}, {}
    for kind in KINDS:
        params[kind], trajs[kind] = denervate(base, kind, init, cfg, t0, tF)
    q3 = {k: float(tr.states[-1, 3]) for k, tr in trajs.items()}
    thr = fraction * q3["control"]
    app = {k: crossing_time(tr, thr) for k, tr in trajs.items()}
    return DenervationStudy(trajs, params, q3, app, thr)


_COLORS = {"control": "#1f77b4", "autonomic": "#ff7f0e", "sensory": "#d62728", "both": "#2ca02c"}


def line_chart_svg(trajs: dict, path=None, width: int = 640, height: int = 400) -> str:
    """Self-contained SVG of Q3 against time for each trajectory."""
    pad = 50
    t_lo = min(tr.t_start for tr in trajs.values())
    t_hi = max(tr.t_end for tr in trajs.values())
    y_hi = max(float(tr.states[:, 3].max()) for tr in trajs.values()) or 1.0
    sx = lambda t: pad + (t - t_lo) / (t_hi - t_lo) * (width - 2 * pad)
    sy = lambda v: height - pad - v / y_hi * (height - 2 * pad)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">t (days)</text>',
             f'<text x="14" y="{height / 2}" font-size="12" transform="rotate(-90 14 {height / 2})" '
             f'text-anchor="middle">Q3</text>']
    for i, (name, tr) in enumerate(trajs.items()):
        ts = np.linspace(tr.t_start, tr.t_end, 241)
        ys = sample_many(tr, ts)[:, 3]
        pts = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(ts, ys))
        color = _COLORS.get(name, "#444444")
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 90}" y="{pad + 16 * i}" font-size="12" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


@dataclass
class AsymptoticResult:
    passed: bool
    distance: float
    final: State
    steady_state: State
    edge_case: bool


def asymptotic_check(p: ParameterVector, horizon: float = 5000.0, tol: float = 1e-3,
                     init: State | None = None, cfg: SolverConfig | None = None,
                     t0: float = 10.0) -> AsymptoticResult:
    """Integrate to ``horizon`` and compare with the stable equilibrium.

    ``edge_case`` marks alpha3 = 0, where A1 has no restoring force and the
    stable equilibrium is not expected to be reached.
    """
    rep = check_hypotheses(p)
    if not rep.all_pass:
        raise HypothesisViolation(f"hypotheses violated: {', '.join(rep.failures())}", rep)
    init = default_initial_state() if init is None else init
    xs = stable_steady_state(p)
    fin = final_state(p, init, t0, horizon, cfg)
    dist = float(np.max(np.abs(fin.to_array() - xs.to_array())))
    return AsymptoticResult(dist < tol, dist, fin, xs, p.alpha3 == 0)


# Narrower boxes than the admissible ranges, chosen so that every rate that
# drives convergence is bounded away from zero and a 5000-day horizon suffices.
ASYMPTOTIC_RANGES = {
    "pi0": (1e-2, 1.0, "log10"), "pi1": (1e-2, 1.0, "log10"), "pi2": (1e-2, 1.0, "log10"),
    "gamma2": (1e-2, 1.0, "log10"), "gamma3": (1e-2, 1.0, "log10"),
    "beta1": (0.0, 3.0, "linear"), "beta2": (0.0, 3.0, "linear"),
    "delta0": (0.0, 10.0, "linear"), "delta2": (0.0, 10.0, "linear"),
    "tauC": (50.0, 1000.0, "linear"), "tauA2": (0.05, 2.0, "linear"),
    "tauA1C": (0.5, 2.0, "linear"), "tauA2C": (0.5, 2.0, "linear"),
    "alpha1": (1e-3, 1.0, "log10"), "alpha2": (1e-3, 1.0, "log10"), "alpha3": (1e-3, 1.0, "log10"),
    "alphabar2": (1e-3, 1.0, "log10"), "alphabar3": (1e-3, 1.0, "log10"),
}


def sample_convergent_parameters(rng: np.random.Generator, max_tries: int = 10000) -> ParameterVector:
    """H1-H3-valid draw from :data:`ASYMPTOTIC_RANGES`."""
    for _ in range(max_tries):
        vals = {}
        for name, (lo, hi, scale) in ASYMPTOTIC_RANGES.items():
            if scale == "log10":
                vals[name] = 10.0 ** rng.uniform(math.log10(lo), math.log10(hi))
            else:
                vals[name] = rng.uniform(lo, hi)
        p = ParameterVector(**vals)
        if check_hypotheses(p).all_pass:
            return p
    raise InvalidArgument("could not draw a valid parameter vector")
