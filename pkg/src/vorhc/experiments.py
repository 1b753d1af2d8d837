"""Batch experiments: noise sweeps against the zero-back-off baseline, and timing benchmarks."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import NoiseModel
from .metrics import RunMetrics, compute_metrics
from .scenarios import ScenarioConfig, ScenarioId, ring_agents
from .simulation import simulate

DEFAULT_SCALES = (0.25, 1.0, 4.0)
DEFAULT_METHODS = ("chance", "deterministic")


@dataclass
class SweepCell:
    scale: float
    method: str
    runs: list[RunMetrics] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.runs)

    @property
    def success_rate(self) -> float:
        return float(np.mean([r.success for r in self.runs])) if self.runs else math.nan

    @property
    def collision_free_rate(self) -> float:
        return float(np.mean([r.collision_free for r in self.runs])) if self.runs else math.nan

    @property
    def mean_min_distance(self) -> float:
        """Mean minimum distance over successful runs (nan when none succeeded)."""
        d = [r.min_pairwise_distance for r in self.runs if r.success]
        return float(np.mean(d)) if d else math.nan

    @property
    def mean_min_distance_all(self) -> float:
        d = [r.min_pairwise_distance for r in self.runs]
        return float(np.mean(d)) if d else math.nan

    def row(self) -> dict:
        return {
            "scale": self.scale, "method": self.method, "trials": self.trials,
            "success_rate": self.success_rate, "mean_min_distance": self.mean_min_distance,
            "collision_free_rate": self.collision_free_rate,
            "mean_min_distance_all": self.mean_min_distance_all,
        }


def with_settings(scenario: ScenarioConfig, *, scale=None, method=None, seed=None, agents=None) -> ScenarioConfig:
    """Copy of ``scenario`` with the noise scale, planner method, seed or agents replaced."""
    planner = copy.deepcopy(scenario.planner)
    if method is not None:
        planner.method = method
    noise = scenario.noise if scale is None else NoiseModel(scenario.noise.state_covariance, float(scale))
    return replace(
        scenario, planner=planner, noise=noise,
        seed=scenario.seed if seed is None else int(seed),
        agents=scenario.agents if agents is None else agents,
    )


def noise_sweep(scenario: ScenarioConfig, scales=DEFAULT_SCALES, trials: int = 20,
                methods=DEFAULT_METHODS, seed0: int = 0, progress=None) -> list[SweepCell]:
    """Run every (scale, method) cell on seeds ``seed0 .. seed0 + trials - 1``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cells = []
    for scale in scales:
        for method in methods:
            cell = SweepCell(float(scale), method)
            for k in range(trials):
                sc = with_settings(scenario, scale=scale, method=method, seed=seed0 + k)
                cell.runs.append(compute_metrics(simulate(sc), sc.goal_tolerance))
                cell.seeds.append(seed0 + k)
                if progress is not None:
                    progress(cell, k + 1)
            cells.append(cell)
    return cells


@dataclass
class BenchRow:
    n_agents: int
    samples: np.ndarray  # per-agent, per-step solve times (s)

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def p95(self) -> float:
        return float(np.percentile(self.samples, 95))

    def row(self) -> dict:
        return {"n_agents": self.n_agents, "median_s": self.median, "p95_s": self.p95,
                "samples": int(self.samples.size)}


def bench_scenario(n_agents: int, base: ScenarioConfig | None = None, t_run: float = 4.0) -> ScenarioConfig:
    """``n_agents`` on the default ring swapping through the origin."""
    base = base or ScenarioConfig(agents=ring_agents(2, "origin"))
    return replace(base, agents=ring_agents(n_agents, "origin"), scenario_id=ScenarioId.Custom, t_run=t_run)


def bench_agents(counts=range(2, 17), trials: int = 1, t_run: float = 4.0, base: ScenarioConfig | None = None,
                 progress=None) -> list[BenchRow]:
    rows = []
    for n in counts:
        if n < 2:
            raise ValueError("agent counts must be >= 2")
        samples = []
        for k in range(trials):
            sc = with_settings(bench_scenario(n, base, t_run), seed=k)
            samples.append(np.asarray(simulate(sc).solve_times).reshape(-1))
        rows.append(BenchRow(n, np.concatenate(samples)))
        if progress is not None:
            progress(rows[-1])
    return rows


def format_table(rows: list[dict], columns=None) -> str:
    if not rows:
        return ""
    columns = columns or list(rows[0])

    def cell(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    body = [[cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
