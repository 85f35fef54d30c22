"""Command-line front end: ``pdac-axons <command> [--config run.toml] ...``."""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli_w

from . import __version__
from .errors import (ConfigError, HypothesisViolation, InvalidArgument,
                     ToolkitError)
from .model import (PARAM_NAMES, ParameterVector, State, check_hypotheses, load_paper_set,
                    paper_set_names)
from .objective import Chronology, ModelObjective, ObservationSet
from .optimizer import OptOptions, SearchSpace, minimize
from .solver import SolverConfig, check_envelopes, integrate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COMMANDS = ("simulate", "calibrate", "profile", "sobol", "denervate")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_HYPOTHESIS = 0, 2, 3, 4

# Every accepted key with its default; None means "optional, no default".
DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "out": "out",
    "cheap": False,
    "format": "csv",
    "parameters": {"set": "paper-set-7", "file": None},
    "observations": {"file": None, "half_window": 3.0},
    "chronology": {"t0": 10.0, "t1": 17.0, "t2": 21.0, "t3": 35.0, "t4": 18.0, "t5": 30.0},
    "solver": {"rel_tol": 1e-8, "abs_tol": 1e-10, "max_step": None, "clamp_mode": "project",
               "max_steps": 200000},
    "initial": {"q0": 20.0, "q1": 0.0, "q2": 0.0, "q3": 0.0, "a1": 0.0, "a2": 1e-4},
    "weights": {"b1": None, "b2": None, "b3": None, "b4": None, "b5": None},
    "simulate": {"t_start": None, "t_end": 70.0},
    "calibrate": {"runs": 1, "objective": "continuous", "population": None,
                  "max_generations": 1000, "stop_window": 40, "stop_tol": 1e-3},
    "profile": {"objective": "model", "params": None, "trials": 3, "n_grid": 20,
                "restarts": 50, "max_generations": 1000, "stop_tol": 1e-3, "margin": 1.0,
                "flatness_tol": 0.5},
    "sobol": {"N": 512, "bootstrap": 200},
    "denervate": {"t_start": None, "t_end": 70.0, "fraction": 0.01},
}
CHEAP = {
    "calibrate": {"max_generations": 300},
    "profile": {"restarts": 8, "max_generations": 300},
    "sobol": {"N": 128, "bootstrap": 100},
}
_TYPES = {
    "seed": int, "jobs": int, "out": str, "cheap": bool, "format": str,
    "parameters.set": str, "parameters.file": str, "observations.file": str,
    "solver.clamp_mode": str, "solver.max_steps": int, "calibrate.runs": int,
    "calibrate.objective": str, "calibrate.population": int,
    "calibrate.max_generations": int, "calibrate.stop_window": int,
    "profile.objective": str, "profile.params": list, "profile.trials": int,
    "profile.n_grid": int, "profile.restarts": int, "profile.max_generations": int,
    "sobol.N": int, "sobol.bootstrap": int,
}


@dataclass
class RunConfig:
    """Resolved configuration; ``data`` mirrors DEFAULTS with user values."""

    data: dict
    base_dir: Path = Path(".")

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data

    def section(self, name: str) -> dict:
        return self.data[name]

    def to_toml(self) -> str:
        return tomli_w.dumps(_strip_none(self.data))

    def semantic_hash(self) -> str:
        d = {k: v for k, v in self.data.items() if k not in ("out", "jobs")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- domain objects ---------------------------------------------------

    def parameters(self) -> ParameterVector:
        sec = self.data["parameters"]
        if sec.get("file"):
            path = self._path(sec["file"])
            try:
                text = path.read_text()
                p = (ParameterVector.from_json(text) if path.suffix == ".json"
                     else ParameterVector.from_toml(text))
            except OSError as e:
                raise ConfigError(f"cannot read parameter file: {e}", "parameters.file")
            except (InvalidArgument, tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
                raise ConfigError(f"bad parameter file: {e}", "parameters.file")
        else:
            try:
                p = load_paper_set(sec["set"])
            except InvalidArgument as e:
                raise ConfigError(str(e), "parameters.set")
        inline = {k: v for k, v in sec.items() if k in PARAM_NAMES}
        try:
            return p.replace(**inline) if inline else p
        except InvalidArgument as e:
            raise ConfigError(str(e), "parameters")

    def observations(self) -> ObservationSet:
        sec = self.data["observations"]
        try:
            if sec.get("file"):
                return ObservationSet.from_csv(self._path(sec["file"]), sec["half_window"])
            fx = ObservationSet.fixture()
            return ObservationSet(fx.y_star, fx.a1_eq, fx.t_f, sec["half_window"])
        except OSError as e:
            raise ConfigError(f"cannot read observations: {e}", "observations.file")
        except InvalidArgument as e:
            raise ConfigError(str(e), "observations")

    def chronology(self) -> Chronology:
        try:
            return Chronology(**self.data["chronology"])
        except InvalidArgument as e:
            raise ConfigError(str(e), "chronology")

    def solver(self) -> SolverConfig:
        s = dict(self.data["solver"])
        if s.get("max_step") is None:
            s["max_step"] = float("inf")
        try:
            return SolverConfig(**s)
        except InvalidArgument as e:
            raise ConfigError(str(e), "solver")

    def initial(self) -> State:
        return State(**{k: float(v) for k, v in self.data["initial"].items()})

    def numerators(self) -> dict:
        return {int(k[1]): v for k, v in self.data["weights"].items() if v is not None}

    def _path(self, p) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    return d


def _merge(defaults: dict, user: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        path = f"{prefix}{key}"
        if prefix == "parameters." and key in PARAM_NAMES:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"{path} must be a number", path)
            out[key] = float(val)
            continue
        if key not in defaults:
            raise ConfigError(f"unknown configuration key '{path}'", path)
        dv = defaults[key]
        if isinstance(dv, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path} must be a table", path)
            out[key] = _merge(dv, val, path + ".")
            continue
        out[key] = _coerce(path, dv, val)
    return out


def _coerce(path, default, val):
    want = _TYPES.get(path)
    if want is None:
        want = type(default) if default is not None else float
    if want is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path} must be a number", path)
        return float(val)
    if want is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path} must be an integer", path)
        return val
    if not isinstance(val, want):
        raise ConfigError(f"{path} must be of type {want.__name__}", path)
    return val


def _validate(data: dict):
    if data["format"] not in ("csv", "json", "svg"):
        raise ConfigError("format must be csv, json or svg", "format")
    if data["jobs"] < 1:
        raise ConfigError("jobs must be at least 1", "jobs")
    if data["seed"] < 0 or data["seed"] >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
    if data["parameters"]["set"] not in paper_set_names():
        raise ConfigError(f"unknown parameter set {data['parameters']['set']!r}", "parameters.set")
    if data["calibrate"]["objective"] not in ("continuous", "discrete"):
        raise ConfigError("calibrate.objective must be continuous or discrete", "calibrate.objective")
    if data["profile"]["objective"] not in ("model", "toy"):
        raise ConfigError("profile.objective must be model or toy", "profile.objective")
    if data["solver"]["clamp_mode"] not in ("off", "project"):
        raise ConfigError("solver.clamp_mode must be off or project", "solver.clamp_mode")


def config_from_dict(user: dict, base_dir: Path = Path(".")) -> RunConfig:
    user = dict(user)
    if isinstance(user.get("parameters"), str):
        user["parameters"] = {"set": user["parameters"]}
    data = _merge(DEFAULTS, user)
    _validate(data)
    return RunConfig(data, base_dir)


def parse_config(path=None, text: str | None = None) -> RunConfig:
    """Read, validate and default-fill a TOML run configuration."""
    base = Path(".")
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}")
        base = Path(path).resolve().parent
    try:
        user = tomllib.loads(text or "")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML parse error: {e}")
    return config_from_dict(user, base)


def apply_cheap(cfg: RunConfig) -> RunConfig:
    """Reduced budgets for quick runs; explicit user values for these keys
    are overridden."""
    data = copy.deepcopy(cfg.data)
    data["cheap"] = True
    for sec, vals in CHEAP.items():
        data[sec].update(vals)
    return RunConfig(data, cfg.base_dir)


# -- commands ---------------------------------------------------------------


class _Runner:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.outputs = []
        self._pool = None

    def write(self, name: str, text: str):
        path = self.out / name
        path.write_text(text)
        self.outputs.append(name)

    def mapper(self):
        jobs = self.cfg.data["jobs"]
        if jobs <= 1:
            return map
        if self._pool is None:
            self._pool = ProcessPoolExecutor(jobs)
        pool = self._pool
        return lambda f, xs: pool.map(f, list(xs), chunksize=max(1, len(xs) // (4 * jobs)))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _require_h1(p: ParameterVector):
    # Transfer rates must stay positive for every admissible A1. H2 and H3
    # only concern the long-time behaviour, so they are reported, not enforced.
    rep = check_hypotheses(p)
    if not rep.h1:
        raise HypothesisViolation("H1 violated: max(beta1, beta2) * tauA1 >= 1", rep)
    return p


def cmd_simulate(r: _Runner):
    cfg = r.cfg
    p = _require_h1(cfg.parameters())
    sec = cfg.section("simulate")
    t0 = sec["t_start"] if sec["t_start"] is not None else cfg.section("chronology")["t0"]
    traj = integrate(p, cfg.initial(), t0, sec["t_end"], cfg.solver())
    if cfg.data["format"] == "json":
        r.write("trajectory.json", _json({"t": traj.times.tolist(),
                                          "states": traj.states.tolist()}))
    else:
        r.write("trajectory.csv", traj.to_csv())
    if cfg.data["format"] == "svg":
        from .experiments import line_chart_svg
        r.write("trajectory.svg", line_chart_svg({"simulation": traj}))
    env = check_envelopes(traj, p)
    r.write("invariants.json", _json({"envelopes": env.to_dict(),
                                      "hypotheses": check_hypotheses(p).to_dict()}))


def cmd_calibrate(r: _Runner):
    from .identify import task_seed
    cfg = r.cfg
    sec = cfg.section("calibrate")
    base = cfg.parameters()
    obj = ModelObjective(cfg.observations(), cfg.chronology(), cfg.solver(), cfg.initial(),
                         cfg.numerators() or None, sec["objective"])
    space = SearchSpace.model(base)
    opts = OptOptions(population=sec["population"], max_generations=sec["max_generations"],
                      stop_window=sec["stop_window"], stop_tol=sec["stop_tol"])
    seed = cfg.data["seed"]
    runs = []
    best = None
    for i in range(sec["runs"]):
        s = seed if sec["runs"] == 1 else task_seed(seed, i)
        res = minimize(obj, space, s, opts, r.mapper())
        runs.append((i, s, res.best_cost, res.generations, res.termination))
        if best is None or res.best_cost < best.best_cost:
            best = res
    r.write("result.json", best.to_json() + "\n")
    r.write("trace.csv", best.trace_csv())
    r.write("best_parameters.toml", best.best_point.to_toml())
    if sec["runs"] > 1:
        lines = ["run,seed,best_cost,generations,termination"]
        lines += [f"{i},{s},{c:.17g},{g},{t}" for i, s, c, g, t in runs]
        r.write("runs.csv", "\n".join(lines) + "\n")


def cmd_profile(r: _Runner):
    from .identify import ProfileOptions, pipeline, toy_objective, toy_space
    cfg = r.cfg
    sec = cfg.section("profile")
    if sec["objective"] == "toy":
        obj, space = toy_objective, toy_space()
    else:
        obj = ModelObjective(cfg.observations(), cfg.chronology(), cfg.solver(), cfg.initial(),
                             cfg.numerators() or None)
        space = SearchSpace.model(cfg.parameters())
    if sec["params"]:
        unknown = set(sec["params"]) - set(space.names)
        if unknown:
            raise ConfigError(f"cannot profile {sorted(unknown)}", "profile.params")
    opts = ProfileOptions(n_grid=sec["n_grid"], restarts=sec["restarts"],
                          opt=OptOptions(max_generations=sec["max_generations"],
                                         stop_tol=sec["stop_tol"]),
                          margin=sec["margin"], flatness_tol=sec["flatness_tol"])
    trials = pipeline(obj, space, cfg.data["seed"], sec["trials"], opts, r.mapper(),
                      only=sec["params"])
    summary = []
    for tr in trials:
        for name, prof in tr.profiles.items():
            r.write(f"profile_t{tr.trial}_{name}.json", prof.to_json() + "\n")
            r.write(f"profile_t{tr.trial}_{name}.csv", prof.to_csv())
        summary.append(tr.to_dict())
    identified = {k: v for tr in trials for k, v in tr.identified.items()}
    r.write("summary.json", _json({"trials": summary, "identified": identified}))


def cmd_sobol(r: _Runner):
    from .sensitivity import run_sobol
    cfg = r.cfg
    sec = cfg.section("sobol")
    res = run_sobol(_require_h1(cfg.parameters()), sec["N"], cfg.data["seed"], sec["bootstrap"],
                    cfg.solver(), cfg.initial(), r.mapper())
    r.write("sobol.json", res.to_json() + "\n")
    r.write("sobol.csv", res.to_csv())


def cmd_denervate(r: _Runner):
    from .experiments import denervation_study
    cfg = r.cfg
    sec = cfg.section("denervate")
    t0 = sec["t_start"] if sec["t_start"] is not None else cfg.section("chronology")["t0"]
    st = denervation_study(_require_h1(cfg.parameters()), cfg.initial(), cfg.solver(), t0, sec["t_end"],
                           sec["fraction"])
    for kind, tr in st.trajectories.items():
        r.write(f"trajectory_{kind}.csv", tr.to_csv())
    r.write("denervation.csv", st.combined_csv())
    if cfg.data["format"] == "svg":
        r.write("denervation.svg", st.svg())
    r.write("denervation.json", _json({"q3_final": st.q3_final, "appearance": st.appearance,
                                       "threshold": st.threshold}))


_COMMANDS = {"simulate": cmd_simulate, "calibrate": cmd_calibrate, "profile": cmd_profile,
             "sobol": cmd_sobol, "denervate": cmd_denervate}


def _versions() -> dict:
    import numba
    import scipy
    return {"pdac_axons": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _error_payload(exc: Exception, code: int) -> dict:
    out = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("key_path", "time", "component"):
        v = getattr(exc, attr, None)
        if v is not None:
            out[attr] = v
    rep = getattr(exc, "report", None)
    if rep is not None:
        out["report"] = rep.to_dict()
    return out


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, HypothesisViolation):
        return EXIT_HYPOTHESIS
    return EXIT_NUMERIC


def run(command: str, cfg: RunConfig) -> int:
    """Execute ``command`` and persist its artifacts plus ``manifest.json``."""
    out = Path(cfg.data["out"])
    if not out.is_absolute():
        out = Path.cwd() / out
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    runner = _Runner(cfg, out)
    start = time.perf_counter()
    code = EXIT_OK
    try:
        _COMMANDS[command](runner)
    except (ToolkitError, ValueError) as exc:
        code = _exit_code(exc) if isinstance(exc, ToolkitError) else EXIT_NUMERIC
        payload = _error_payload(exc, code)
        (out / "error.json").write_text(_json(payload))
        print(f"error: {exc}", file=sys.stderr)
    finally:
        runner.close()
    manifest = {"command": command, "config_hash": cfg.semantic_hash(),
                "seed": cfg.data["seed"], "versions": _versions(),
                "wall_time_s": time.perf_counter() - start, "exit_code": code,
                "outputs": runner.outputs, "config": _strip_none(cfg.data)}
    (out / "manifest.json").write_text(_json(manifest))
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdac-axons", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML run configuration")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--jobs", type=int, help="worker processes")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--cheap", action="store_true", help="reduced budgets")
    ap.add_argument("--format", choices=("csv", "json", "svg"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else config_from_dict({})
        user = {k: getattr(args, k) for k in ("seed", "jobs", "out", "format")
                if getattr(args, k) is not None}
        if user:
            data = copy.deepcopy(cfg.data)
            for k, v in user.items():
                data[k] = v
            _validate(data)
            cfg = RunConfig(data, cfg.base_dir)
        if args.cheap or cfg.data["cheap"]:
            cfg = apply_cheap(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        out = Path(args.out or "out")
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(_json(_error_payload(exc, EXIT_CONFIG)))
        return EXIT_CONFIG
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
