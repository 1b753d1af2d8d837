"""YAML scenario files: load, override and snapshot a resolved ScenarioConfig."""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import yaml

from .dynamics import NoiseModel
from .errors import ConfigError
from .planner import PlannerConfig
from .scenarios import AgentSpec, ScenarioConfig, ScenarioId, make_scenario

_MATRICES = ("Q", "R")
_VECTORS = ("x_lower", "x_upper", "u_lower", "u_upper")
_SCENARIO_KEYS = ("seed", "t_run", "nominal_speed", "goal_tolerance", "schedule", "reference")


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def _matrix(value, size: int, name: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.ndim == 1:
        m = np.diag(m)
    if m.shape != (size, size):
        raise ConfigError(f"{name} must be a {size}x{size} matrix or a diagonal of length {size}")
    return m


def planner_from_dict(d: dict | None) -> PlannerConfig:
    d = dict(d or {})
    known = {f.name for f in dataclasses.fields(PlannerConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown planner keys: {sorted(unknown)}")
    if "Q" in d:
        d["Q"] = _matrix(d["Q"], 4, "Q")
    if "R" in d:
        d["R"] = _matrix(d["R"], 2, "R")
    for k in _VECTORS:
        if k in d:
            d[k] = np.asarray(d[k], dtype=float)
    return PlannerConfig(**d)


def planner_to_dict(cfg: PlannerConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        out[f.name] = _plain(getattr(cfg, f.name))
    return out


def noise_from_dict(d: dict | None) -> NoiseModel:
    d = dict(d or {})
    unknown = set(d) - {"scale", "state_covariance"}
    if unknown:
        raise ConfigError(f"unknown noise keys: {sorted(unknown)}")
    kwargs = {"scale": float(d.get("scale", 1.0))}
    if "state_covariance" in d:
        kwargs["state_covariance"] = _matrix(d["state_covariance"], 4, "state_covariance")
    try:
        return NoiseModel(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def scenario_from_dict(d: dict) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("scenario file must hold a mapping")
    d = dict(d)
    sid = ScenarioId(d.pop("scenario", "Custom"))
    planner = planner_from_dict(d.pop("planner", None))
    noise = noise_from_dict(d.pop("noise", None))
    agents = d.pop("agents", None)
    radius = float(d.pop("radius", 0.1))
    ring_radius = d.pop("ring_radius", None)
    extra = {k: d.pop(k) for k in _SCENARIO_KEYS if k in d}
    if d:
        raise ConfigError(f"unknown scenario keys: {sorted(d)}")
    if agents is None:
        kw = {} if ring_radius is None else {"ring_radius": float(ring_radius)}
        return make_scenario(sid, radius=radius, planner=planner, noise=noise, **kw, **extra)
    specs = []
    for a in agents:
        try:
            specs.append(AgentSpec(a["start"], a["goal"], float(a.get("radius", radius)), str(a.get("color", ""))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad agent entry {a!r}") from exc
    return ScenarioConfig(agents=specs, planner=planner, noise=noise, scenario_id=sid, **extra)


def scenario_to_dict(sc: ScenarioConfig) -> dict:
    """Fully resolved form; loading it back reproduces the same run."""
    return {
        "scenario": sc.scenario_id.value,
        "seed": int(sc.seed),
        "t_run": float(sc.t_run),
        "nominal_speed": float(sc.nominal_speed),
        "goal_tolerance": float(sc.goal_tolerance),
        "schedule": sc.schedule,
        "reference": sc.reference,
        "noise": {
            "scale": float(sc.noise.scale),
            "state_covariance": np.diag(sc.noise.state_covariance).tolist(),
        },
        "planner": planner_to_dict(sc.planner),
        "agents": [
            {"start": a.start.tolist(), "goal": a.goal.tolist(), "radius": float(a.radius), "color": a.color}
            for a in sc.agents
        ],
    }


def dump_scenario(sc: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(sc: ScenarioConfig, path) -> None:
    Path(path).write_text(dump_scenario(sc), encoding="utf-8")
