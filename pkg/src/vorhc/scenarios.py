"""Scenario definitions: agent start/goal layouts and straight-line references."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import NoiseModel
from .errors import ConfigError
from .planner import PlannerConfig

DEFAULT_RING_RADIUS = 2.0 * math.sqrt(2.0)  # puts an agent at (-2, 2)
COLORS = ("green", "blue", "red", "orange", "purple", "cyan", "magenta", "olive",
          "brown", "pink", "gray", "navy")


class ScenarioId(enum.Enum):
    AxisSwap6 = "AxisSwap6"
    OriginSwap6 = "OriginSwap6"
    AxisSwap12 = "AxisSwap12"
    OriginSwap12 = "OriginSwap12"
    Custom = "Custom"


RING_SCENARIOS = {
    ScenarioId.AxisSwap6: ("axis", 6),
    ScenarioId.OriginSwap6: ("origin", 6),
    ScenarioId.AxisSwap12: ("axis", 12),
    ScenarioId.OriginSwap12: ("origin", 12),
}


@dataclass
class AgentSpec:
    start: np.ndarray
    goal: np.ndarray
    radius: float = 0.1
    color: str = ""

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).reshape(2)
        self.goal = np.asarray(self.goal, dtype=float).reshape(2)


@dataclass
class ScenarioConfig:
    agents: list[AgentSpec]
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    t_run: float = 10.0
    scenario_id: ScenarioId = ScenarioId.Custom
    nominal_speed: float = 1.0
    goal_tolerance: float = 0.1
    # "sequential" follows the agent-by-agent loop; "synchronous" plans every agent on the same snapshot
    schedule: str = "sequential"
    # "progress": reference re-anchored at the host's progress; "timed": driven by the clock
    reference: str = "progress"

    def __post_init__(self):
        self.validate()

    @property
    def n_steps(self) -> int:
        return int(round(self.t_run / self.planner.dt))

    def validate(self):
        if not self.agents:
            raise ConfigError("scenario needs at least one agent")
        for a in self.agents:
            if not a.radius > 0:
                raise ConfigError("agent radius must be positive")
        for i, a in enumerate(self.agents):
            for b in self.agents[i + 1:]:
                if np.linalg.norm(a.start - b.start) <= a.radius + b.radius:
                    raise ConfigError(f"start positions {a.start} and {b.start} overlap")
        if self.t_run < 0 or abs(self.n_steps * self.planner.dt - self.t_run) > 1e-9 * max(1.0, self.t_run):
            raise ConfigError(f"t_run={self.t_run} is not a non-negative multiple of dt={self.planner.dt}")
        if self.schedule not in ("sequential", "synchronous"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.reference not in ("progress", "timed"):
            raise ConfigError(f"unknown reference mode {self.reference!r}")
        if not self.nominal_speed > 0:
            raise ConfigError("nominal speed must be positive")


def axis_reflection(p: np.ndarray) -> np.ndarray:
    """Mirror across the x axis when |y| >= |x|, otherwise across the y axis."""
    p = np.asarray(p, dtype=float)
    if abs(p[1]) >= abs(p[0]):
        return np.array([p[0], -p[1]])
    return np.array([-p[0], p[1]])


def origin_reflection(p: np.ndarray) -> np.ndarray:
    return -np.asarray(p, dtype=float)


def ring_positions(n: int, ring_radius: float = DEFAULT_RING_RADIUS, start_angle: float = 135.0) -> np.ndarray:
    ang = np.deg2rad(start_angle + 360.0 * np.arange(n) / n)
    pts = ring_radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # snap float dust so that mirrored layouts are exactly mirrored
    return np.round(pts, 12) + 0.0


def ring_agents(n: int, kind: str, radius: float = 0.1, ring_radius: float = DEFAULT_RING_RADIUS):
    reflect = {"axis": axis_reflection, "origin": origin_reflection}[kind]
    return [AgentSpec(p, reflect(p), radius, COLORS[i % len(COLORS)])
            for i, p in enumerate(ring_positions(n, ring_radius))]


def make_scenario(scenario_id, n_agents: int | None = None, radius: float = 0.1,
                  ring_radius: float = DEFAULT_RING_RADIUS, **kwargs) -> ScenarioConfig:
    """Build one of the four ring scenarios.

    Agents sit evenly on a ring starting at 135 degrees, so the first (green)
    agent starts at (-2, 2) for the default ring radius.
    """
    sid = ScenarioId(scenario_id) if not isinstance(scenario_id, ScenarioId) else scenario_id
    if sid is ScenarioId.Custom:
        raise ConfigError("Custom scenarios are loaded from a config file")
    kind, count = RING_SCENARIOS[sid]
    if n_agents is not None and n_agents != count:
        raise ConfigError(f"{sid.value} is defined for {count} agents, got {n_agents}")
    return ScenarioConfig(agents=ring_agents(count, kind, radius, ring_radius), scenario_id=sid, **kwargs)


def _line_reference(start, goal, travelled0: float, speed: float, n: int, dt: float) -> np.ndarray:
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    delta = goal - start
    dist = float(np.hypot(*delta))
    out = np.zeros((n, 4))
    if dist == 0.0:
        out[:, :2] = goal
        return out
    direction = delta / dist
    along = travelled0 + speed * dt * np.arange(n)
    out[:, :2] = start + np.minimum(along, dist)[:, None] * direction
    out[along < dist, 2:] = speed * direction
    return out


def reference_horizon(start, goal, speed: float, t0: float, n: int, dt: float) -> np.ndarray:
    """Straight line at constant speed, then hold at the goal. Rows are times t0 + k*dt, k = 0..n-1."""
    return _line_reference(start, goal, speed * t0, speed, n, dt)


def progress_reference(start, goal, position, speed: float, n: int, dt: float) -> np.ndarray:
    """Like :func:`reference_horizon`, but starting from the host's projection onto the line.

    A host that fell behind is not asked to sprint after a clock-driven target.
    """
    start = np.asarray(start, dtype=float)
    delta = np.asarray(goal, dtype=float) - start
    dist = float(np.hypot(*delta))
    s0 = 0.0
    if dist > 0.0:
        s0 = float(np.clip((np.asarray(position, dtype=float) - start) @ delta / dist, 0.0, dist))
    return _line_reference(start, goal, s0, speed, n, dt)
