"""Strict JSON experiment configuration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .exceptions import ConfigError
from .model import (
    BasicModel,
    ConfinedModel,
    GeneralModel,
    InverseTempProfile,
    TransitionMatrix,
    WanderingModel,
)
from .selfconsistent import confined_profile, wandering_profile

MODEL_KINDS = ("basic", "wandering", "confined", "general")
_TOP_KEYS = {"model", "profile", "beta", "n_tracers", "reflect", "matrix", "t_end", "t_burn", "n_replicas",
             "seed", "output", "cgf", "initial"}
_PROFILE_KEYS = {
    "explicit": {"kind", "temperatures"},
    "linear": {"kind", "T_L", "T_R", "N"},
    "selfconsistent": {"kind", "T_L", "T_R", "N"},
}
_OUTPUT_KEYS = {"dir", "prefix"}
_CGF_KEYS = {"link", "lambda_grid", "lambda_grid_file"}
_INITIAL_KEYS = {"q0", "p0"}


def _reject_unknown(obj: dict, allowed: set, where: str):
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def _number(obj, key, where, *, positive=False, integer=False, default=None, required=True):
    if key not in obj or obj[key] is None:
        if required and default is None:
            raise ConfigError(f"missing {where}.{key}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    if not math.isfinite(v) or (positive and v <= 0):
        raise ConfigError(f"{where}.{key} must be {'positive and ' if positive else ''}finite, got {v!r}")
    return int(v) if integer else float(v)


def _reject_constants(name):
    raise ConfigError(f"non-standard JSON constant {name} is not allowed")


def load_json(path: Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text, parse_constant=_reject_constants)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


@dataclass(frozen=True)
class ProfileSpec:
    kind: str
    params: dict

    def build(self, model: str) -> InverseTempProfile:
        if self.kind == "explicit":
            return InverseTempProfile.from_temperatures(self.params["temperatures"])
        T_L, T_R, N = self.params["T_L"], self.params["T_R"], self.params["N"]
        if self.kind == "linear" or model != "confined":
            return wandering_profile(T_L, T_R, N).profile
        return confined_profile(T_L, T_R, N).profile


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    profile: Optional[ProfileSpec] = None
    beta: Optional[float] = None
    n_tracers: int = 1
    reflect: Any = None
    matrix: Optional[list] = None
    t_end: float = 1e4
    t_burn: Optional[float] = None
    n_replicas: int = 1
    seed: int = 0
    out_dir: str = "out"
    prefix: str = "run"
    cgf_link: int = 0
    lambda_grid: tuple = ()
    initial: Optional[tuple] = None
    source: Optional[str] = field(default=None, compare=False)

    def build_profile(self) -> InverseTempProfile:
        if self.profile is None:
            raise ConfigError(f"model {self.model!r} needs a profile")
        return self.profile.build(self.model)

    def build_model(self):
        if self.model == "basic":
            return BasicModel(self.beta)
        prof = self.build_profile()
        if self.model == "wandering":
            return WanderingModel(prof, self.n_tracers)
        if self.model == "confined":
            return ConfinedModel(prof)
        if self.matrix is not None:
            Q = TransitionMatrix(np.array(self.matrix, dtype=float))
        else:
            Q = TransitionMatrix.from_reflection(prof.n_links, 0.0 if self.reflect is None else self.reflect)
        return GeneralModel(prof, Q, self.n_tracers)

    def with_overrides(self, seed=None, out_dir=None) -> "ExperimentConfig":
        kw = dict(self.__dict__)
        if seed is not None:
            kw["seed"] = _check_seed(seed)
        if out_dir is not None:
            kw["out_dir"] = str(out_dir)
        return ExperimentConfig(**kw)


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def _parse_profile(obj) -> ProfileSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("profile must be an object with a 'kind'")
    kind = obj["kind"]
    if kind not in _PROFILE_KEYS:
        raise ConfigError(f"profile.kind must be one of {sorted(_PROFILE_KEYS)}, got {kind!r}")
    _reject_unknown(obj, _PROFILE_KEYS[kind], "profile")
    if kind == "explicit":
        temps = obj.get("temperatures")
        if not isinstance(temps, list) or len(temps) < 2:
            raise ConfigError("profile.temperatures must be a list of at least two numbers")
        vals = [_number({"t": t}, "t", "profile.temperatures", positive=True) for t in temps]
        return ProfileSpec(kind, {"temperatures": vals})
    return ProfileSpec(kind, {
        "T_L": _number(obj, "T_L", "profile", positive=True),
        "T_R": _number(obj, "T_R", "profile", positive=True),
        "N": _number(obj, "N", "profile", positive=True, integer=True),
    })


def _parse_grid(obj, base: Path) -> tuple:
    if "lambda_grid" in obj and "lambda_grid_file" in obj:
        raise ConfigError("give either cgf.lambda_grid or cgf.lambda_grid_file, not both")
    grid = obj.get("lambda_grid")
    if "lambda_grid_file" in obj:
        inc = load_json(base / obj["lambda_grid_file"])
        grid = inc.get("lambda_grid") if isinstance(inc, dict) else inc
        if isinstance(inc, dict):
            _reject_unknown(inc, {"lambda_grid"}, "lambda grid file")
    if grid is None:
        return ()
    if not isinstance(grid, list):
        raise ConfigError("lambda grid must be a list of numbers")
    return tuple(_number({"l": g}, "l", "cgf.lambda_grid") for g in grid)


def parse_config(data: Any, base: Path = Path(".")) -> ExperimentConfig:
    """Validate a decoded JSON document and build the model once to catch domain errors early."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "config")
    model = data.get("model")
    if model not in MODEL_KINDS:
        raise ConfigError(f"model must be one of {MODEL_KINDS}, got {model!r}")
    kw: dict[str, Any] = {"model": model}
    if "profile" in data:
        kw["profile"] = _parse_profile(data["profile"])
    if model == "basic":
        kw["beta"] = _number(data, "beta", "config", positive=True)
    elif "profile" not in kw:
        raise ConfigError(f"model {model!r} needs a profile")
    kw["n_tracers"] = _number(data, "n_tracers", "config", positive=True, integer=True, default=1)
    if "reflect" in data:
        r = data["reflect"]
        kw["reflect"] = list(r) if isinstance(r, list) else _number(data, "reflect", "config")
    if "matrix" in data:
        kw["matrix"] = data["matrix"]
    if ("reflect" in data or "matrix" in data) and model != "general":
        raise ConfigError("reflect/matrix only apply to the general model")
    kw["t_end"] = _number(data, "t_end", "config", positive=True, default=1e4)
    kw["t_burn"] = _number(data, "t_burn", "config", required=False)
    if kw["t_burn"] is not None and not 0 <= kw["t_burn"] < kw["t_end"]:
        raise ConfigError("t_burn must lie in [0, t_end)")
    kw["n_replicas"] = _number(data, "n_replicas", "config", positive=True, integer=True, default=1)
    kw["seed"] = _check_seed(data.get("seed", 0))
    out = data.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("output must be an object")
    _reject_unknown(out, _OUTPUT_KEYS, "output")
    kw["out_dir"] = str(out.get("dir", "out"))
    kw["prefix"] = str(out.get("prefix", "run"))
    cg = data.get("cgf", {})
    if not isinstance(cg, dict):
        raise ConfigError("cgf must be an object")
    _reject_unknown(cg, _CGF_KEYS, "cgf")
    kw["cgf_link"] = _number(cg, "link", "cgf", integer=True, default=0)
    kw["lambda_grid"] = _parse_grid(cg, base)
    if "initial" in data:
        ini = data["initial"]
        if not isinstance(ini, dict):
            raise ConfigError("initial must be an object")
        _reject_unknown(ini, _INITIAL_KEYS, "initial")
        if model != "basic":
            raise ConfigError("initial phase point is only configurable for the basic model")
        kw["initial"] = (_number(ini, "q0", "initial"), _number(ini, "p0", "initial", positive=True))
    cfg = ExperimentConfig(**kw)
    try:
        m = cfg.build_model()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if model in ("wandering", "confined", "general"):
        if not 0 <= cfg.cgf_link < m.profile.n_links:
            raise ConfigError(f"cgf.link must be in 0..{m.profile.n_links - 1}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cfg = parse_config(load_json(path), path.parent)
    return ExperimentConfig(**{**cfg.__dict__, "source": str(path)})
