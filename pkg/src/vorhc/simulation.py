"""Closed-loop receding-horizon simulation of all agents."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import AgentState, ControlInput, kf_predict_arrays, kf_update_arrays, step_dynamics
from .planner import PlannerConfig, PlanningContext, Snapshot, plan_step
from .scenarios import ScenarioConfig, progress_reference, reference_horizon


def agent_rng(seed: int, agent: int) -> np.random.Generator:
    """Independent counter-based stream per agent; adding agents leaves existing streams intact."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(agent,))))


@dataclass
class FilterBank:
    """One host's Kalman estimates of every other agent (own row unused)."""

    mean: np.ndarray  # (n, 4)
    cov: np.ndarray  # (n, 4, 4)
    initialized: bool = False


@dataclass
class World:
    scenario: ScenarioConfig
    states: list[AgentState]
    contexts: list[PlanningContext]
    filters: list[FilterBank]
    rngs: list[np.random.Generator]
    time: float = 0.0

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "World":
        n = len(scenario.agents)
        return cls(
            scenario=scenario,
            states=[AgentState(a.start, np.zeros(2)) for a in scenario.agents],
            contexts=[PlanningContext() for _ in range(n)],
            filters=[FilterBank(np.zeros((n, 4)), np.zeros((n, 4, 4))) for _ in range(n)],
            rngs=[agent_rng(scenario.seed, i) for i in range(n)],
        )

    @property
    def n_agents(self) -> int:
        return len(self.states)

    def state_matrix(self) -> np.ndarray:
        return np.array([s.as_vector() for s in self.states])


@dataclass
class TrajectoryLog:
    times: np.ndarray  # (S+1,)
    positions: np.ndarray  # (S+1, n, 2)
    velocities: np.ndarray  # (S+1, n, 2)
    inputs: np.ndarray  # (S, n, 2)
    statuses: list[list[str]]  # S x n
    solve_times: np.ndarray  # (S, n)
    slack: np.ndarray  # (S, n)
    radii: np.ndarray  # (n,)
    goals: np.ndarray  # (n, 2)
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def n_agents(self) -> int:
        return self.positions.shape[1]


def _observe(world: World, host: int, truth: np.ndarray, others: np.ndarray):
    """Update host's filters from noisy full-state measurements; returns neighbour means."""
    sc = world.scenario
    noise = sc.noise
    if not noise.enabled or len(others) == 0:
        return truth[others]
    w = noise.covariance
    rng = world.rngs[host]
    z = truth[others] + rng.standard_normal((len(others), 4)) * np.sqrt(np.diag(w))
    bank = world.filters[host]
    if not bank.initialized:
        bank.mean[others] = z
        bank.cov[others] = w
        bank.initialized = True
    else:
        # the true process only perturbs velocity, so the filter's model does too
        q = np.zeros((4, 4))
        q[2:, 2:] = noise.velocity_covariance
        m, c = kf_predict_arrays(bank.mean[others], bank.cov[others], sc.planner.dt, q)
        m, c = kf_update_arrays(m, c, z, w)
        bank.mean[others] = m
        bank.cov[others] = c
    return bank.mean[others]


def _advance(world: World, host: int, u: np.ndarray, cfg: PlannerConfig) -> AgentState:
    noise = world.scenario.noise
    w = None
    if noise.enabled:
        w = world.rngs[host].standard_normal(2) * np.sqrt(np.diag(noise.velocity_covariance))
    nxt = step_dynamics(world.states[host], ControlInput(u), cfg.dt, cfg.mass, w)
    v = np.clip(nxt.velocity, cfg.x_lower[2:], cfg.x_upper[2:])
    p = np.clip(nxt.position, cfg.x_lower[:2], cfg.x_upper[:2])
    return AgentState(p, v)


def run_receding_horizon(world: World, cfg: PlannerConfig | None = None, t_run: float | None = None,
                         progress=None) -> TrajectoryLog:
    """Run the receding-horizon loop for ``t_run`` seconds.

    Each step visits agents in index order: filter neighbours, plan, apply the
    first input with process noise. With the sequential schedule the new state
    is visible to later agents in the same step.
    """
    sc = world.scenario
    cfg = sc.planner if cfg is None else cfg
    t_run = sc.t_run if t_run is None else t_run
    n_steps = int(round(t_run / cfg.dt))
    n = world.n_agents
    radii = np.array([a.radius for a in sc.agents])
    goals = np.array([a.goal for a in sc.agents])
    vel_cov = sc.noise.velocity_covariance if sc.noise.enabled else np.zeros((2, 2))
    pos_log = np.zeros((n_steps + 1, n, 2))
    vel_log = np.zeros((n_steps + 1, n, 2))
    u_log = np.zeros((n_steps, n, 2))
    t_log = np.zeros((n_steps, n))
    s_log = np.zeros((n_steps, n))
    statuses: list[list[str]] = []
    x = world.state_matrix()
    pos_log[0], vel_log[0] = x[:, :2], x[:, 2:]
    times = world.time + cfg.dt * np.arange(n_steps + 1)
    for step in range(n_steps):
        truth = world.state_matrix()
        row = []
        pending = []
        for i in range(n):
            if sc.schedule == "sequential":
                truth = world.state_matrix()
            others = np.array([j for j in range(n) if j != i], dtype=int)
            est = _observe(world, i, truth, others)
            a = sc.agents[i]
            if sc.reference == "timed":
                ref = reference_horizon(a.start, a.goal, sc.nominal_speed, world.time, cfg.horizon, cfg.dt)
            else:
                ref = progress_reference(a.start, a.goal, world.states[i].position, sc.nominal_speed,
                                         cfg.horizon, cfg.dt)
            snap = Snapshot(
                host=world.states[i], host_radius=a.radius,
                neighbor_positions=est[:, :2], neighbor_velocities=est[:, 2:],
                neighbor_radii=radii[others],
                reference=ref,
                velocity_cov=vel_cov,
            )
            ctx = world.contexts[i]
            u = plan_step(ctx, snap, cfg).force
            nxt = _advance(world, i, u, cfg)
            if sc.schedule == "sequential":
                world.states[i] = nxt
            else:
                pending.append(nxt)
            u_log[step, i] = u
            t_log[step, i] = ctx.last_solve_time
            s_log[step, i] = ctx.last_plan.slack_total
            row.append(ctx.last_plan.solver_status.value)
        if pending:
            world.states = pending
        world.time = times[step + 1]
        statuses.append(row)
        x = world.state_matrix()
        pos_log[step + 1], vel_log[step + 1] = x[:, :2], x[:, 2:]
        if progress is not None:
            progress(step + 1, n_steps)
    return TrajectoryLog(times, pos_log, vel_log, u_log, statuses, t_log, s_log, radii, goals,
                         meta={"seed": sc.seed, "scenario": sc.scenario_id.value, "method": cfg.method,
                               "noise_scale": sc.noise.scale, "schedule": sc.schedule})


def simulate(scenario: ScenarioConfig, progress=None) -> TrajectoryLog:
    return run_receding_horizon(World.from_scenario(scenario), scenario.planner, scenario.t_run, progress)
