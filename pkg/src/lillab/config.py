"""Experiment configuration: JSON loading, defaults and validation.

A config is a JSON object::

    {
      "model":      {"kind": "ou", "gamma": 1.0, "sigma": 1.41421356}
                    | {"kind": "ctmc", "q": [[...]], "rho": [[...]]},
      "observable": {"kind": "values", "values": [...]} | {"kind": "tanh", "scale": 1}
                    | {"kind": "clipped", "level": 1} | {"kind": "zero"}
                    | {"kind": "constant", "c": 0.3},
      "center":     false,
      "initial":    {"kind": "invariant"} | {"kind": "dirac", "state": x}
                    | {"kind": "empirical", "atoms": [...], "weights": [...]}
                    | {"kind": "gaussian", "mean": m, "var": v},
      "seed": 0,
      "params": {command-specific overrides, see COMMAND_DEFAULTS}
    }

Every key is optional. Missing values are filled from the defaults and the
fully resolved config is embedded in each report.
"""

import copy
import json
import math

import numpy as np

from .errors import LilLabError
from .models import CtmcModel, OuModel, invariant_measure, load_model
from .space import (
    DISCRETE,
    EmpiricalMeasure,
    GaussianMeasure,
    Observable,
    StatePoint,
    center_observable,
    clipped_identity,
    constant_observable,
    tanh_observable,
)

SEED_MASK = (1 << 64) - 1

COMMANDS = (
    "certify-mixing",
    "certify-moments",
    "ergodicity",
    "corrector",
    "sigma",
    "martingale-check",
    "heyde-scott",
    "lil",
    "clt-proxy",
    "discretization",
)

BASE_DEFAULTS = {
    "model": {"kind": "ou", "gamma": 1.0, "sigma": math.sqrt(2.0)},
    "observable": None,
    "center": False,
    "initial": {"kind": "invariant"},
    "seed": 0,
}

COMMAND_DEFAULTS = {
    "certify-mixing": {"x_grid": None, "y_grid": None, "t_grid": None, "tol": None},
    "certify-moments": {"zeta": 3.0, "anchor": 0.0, "t_grid": None, "burn_in": 0.0},
    "ergodicity": {"t_grid": None, "samples_per_t": 100000, "slope_rtol": 0.1},
    "corrector": {"max_error": 1e-4},
    "sigma": {"n_paths": 100000, "horizon": None, "chunk": 2000, "tolerance_se": 4.0},
    "martingale-check": {"n_paths": 10000, "horizon": 10.0, "mesh": None, "corrupt_factor": None,
                         "chunk": 2000},
    "heyde-scott": {"n_paths": 2000, "horizon": 200.0, "mesh": None, "sigma_ref": None, "chunk": 200},
    "lil": {"n_paths": 1000, "horizon": 10000.0, "mesh": 0.1, "delta": 0.5, "sigma": None, "chunk": 100,
            "max_exceedance": 0.05},
    "clt-proxy": {"n_paths": 10000, "t_eval": 50.0, "mesh": None, "sigma": None, "chunk": 2000},
    "discretization": {"n_paths": 1000, "horizon": 1000.0, "mesh": 0.1, "chunk": 100},
}


class ConfigError(LilLabError):
    """Raised with an itemized list of validation problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])
    return data


def resolve(command: str, raw: dict) -> dict:
    """Merge defaults into ``raw`` and validate everything before any compute."""
    if command not in COMMANDS:
        raise ConfigError([f"unknown command {command!r}"])
    cfg = copy.deepcopy(BASE_DEFAULTS)
    unknown = set(raw) - set(BASE_DEFAULTS) - {"params"}
    problems = [f"unknown config key {k!r}" for k in sorted(unknown)]
    for k in BASE_DEFAULTS:
        if k in raw:
            cfg[k] = copy.deepcopy(raw[k])
    params = dict(COMMAND_DEFAULTS[command])
    given = raw.get("params", {}) or {}
    if not isinstance(given, dict):
        problems.append("params must be an object")
        given = {}
    for k in sorted(set(given) - set(params)):
        problems.append(f"unknown parameter {k!r} for {command}")
    params.update({k: v for k, v in given.items() if k in params})
    cfg["params"] = params
    if command == "ergodicity" and "initial" not in raw:
        # decay from the invariant law is trivially zero; start from a point
        ctmc = isinstance(cfg["model"], dict) and cfg["model"].get("kind") == "ctmc"
        cfg["initial"] = {"kind": "dirac", "state": 0 if ctmc else 3.0}
    cfg["command"] = command
    problems += _validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _positive_int(params, key, problems, minimum=1):
    v = params.get(key)
    if v is None:
        return
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        problems.append(f"params.{key} must be an integer >= {minimum}")


def _positive(params, key, problems):
    v = params.get(key)
    if v is None:
        return
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v <= 0:
        problems.append(f"params.{key} must be a positive number")


def _validate(cfg: dict) -> list:
    problems = []
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= SEED_MASK:
        problems.append("seed must be an integer in [0, 2^64)")
    try:
        model = load_model(cfg["model"])
    except (LilLabError, KeyError, TypeError, ValueError) as exc:
        problems.append(f"model: {exc}")
        return problems
    try:
        build_observable(cfg, model)
    except (LilLabError, KeyError, TypeError, ValueError) as exc:
        problems.append(f"observable: {exc}")
    try:
        build_initial(cfg, model)
    except (LilLabError, KeyError, TypeError, ValueError) as exc:
        problems.append(f"initial: {exc}")
    p = cfg["params"]
    for key in ("n_paths", "chunk", "samples_per_t"):
        _positive_int(p, key, problems)
    for key in ("horizon", "mesh", "delta", "t_eval", "tol", "max_error", "tolerance_se", "slope_rtol"):
        _positive(p, key, problems)
    for key in ("sigma", "sigma_ref"):
        v = p.get(key)
        if v is not None and (not isinstance(v, (int, float)) or v < 0):
            problems.append(f"params.{key} must be a nonnegative number")
    if "zeta" in p and not (isinstance(p["zeta"], (int, float)) and p["zeta"] > 2):
        problems.append("params.zeta must exceed 2")
    mesh = p.get("mesh")
    if mesh is not None and isinstance(mesh, (int, float)) and mesh > 0:
        k = 1.0 / mesh
        if abs(k - round(k)) > 1e-9:
            problems.append("params.mesh must be 1/k for an integer k")
    for key in ("t_grid", "x_grid", "y_grid"):
        v = p.get(key)
        if v is not None:
            a = np.asarray(v, dtype=float) if isinstance(v, list) else None
            if a is None or a.ndim != 1 or a.size == 0 or not np.all(np.isfinite(a)):
                problems.append(f"params.{key} must be a nonempty list of numbers")
            elif key == "t_grid" and np.any(a < 0):
                problems.append("params.t_grid must be nonnegative")
    if cfg["command"] == "lil":
        h = p.get("horizon")
        if isinstance(h, (int, float)) and h < math.exp(math.e):
            problems.append("params.horizon must be at least e^e for the lil command")
    return problems


def build_model(cfg: dict):
    return load_model(cfg["model"])


def build_observable(cfg: dict, model) -> Observable:
    spec = cfg.get("observable")
    if spec is None:
        spec = {"kind": "tanh", "scale": 1.0} if isinstance(model, OuModel) else None
        if spec is None:
            if model.n_states != 2:
                raise ValueError("an observable is required for chains with more than two states")
            spec = {"kind": "values", "values": [1.0, -1.0]}
    kind = spec.get("kind")
    if kind == "values":
        if not isinstance(model, CtmcModel):
            raise ValueError("value-vector observables need a ctmc model")
        obs = Observable.from_values(spec["values"], metric=model.metric)
        if obs.n_states != model.n_states:
            raise ValueError("observable length differs from the state count")
    elif kind == "zero" or kind == "constant":
        c = float(spec.get("c", 0.0)) if kind == "constant" else 0.0
        if isinstance(model, CtmcModel):
            obs = constant_observable(c, DISCRETE, model.n_states)
        else:
            obs = constant_observable(c)
    elif kind in ("tanh", "clipped"):
        if not isinstance(model, OuModel):
            raise ValueError(f"{kind} observables need an ou model")
        obs = tanh_observable(float(spec.get("scale", 1.0))) if kind == "tanh" else clipped_identity(
            float(spec.get("level", 1.0)))
    else:
        raise ValueError(f"unknown observable kind {kind!r}")
    if cfg.get("center"):
        obs = center_observable(obs, invariant_measure(model))
    return obs


def build_initial(cfg: dict, model):
    spec = cfg.get("initial") or {"kind": "invariant"}
    kind = spec.get("kind")
    ctmc = isinstance(model, CtmcModel)
    if kind == "invariant":
        return invariant_measure(model)
    if kind == "dirac":
        state = spec["state"]
        if ctmc:
            point = StatePoint(DISCRETE, int(state)).check_bound(model.n_states)
        else:
            point = StatePoint("real", float(state))
        return EmpiricalMeasure.dirac(point.value, point.kind)
    if kind == "empirical":
        m = EmpiricalMeasure(np.asarray(spec["atoms"]), np.asarray(spec["weights"], dtype=float),
                             DISCRETE if ctmc else "real")
        if ctmc and np.any(np.asarray(m.atoms) >= model.n_states):
            raise ValueError("atom index out of range")
        return m
    if kind == "gaussian":
        if ctmc:
            raise ValueError("gaussian initial laws need an ou model")
        return GaussianMeasure(float(spec["mean"]), float(spec["var"]))
    raise ValueError(f"unknown initial kind {kind!r}")
