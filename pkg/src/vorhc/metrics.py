"""Safety and timing metrics of a closed-loop run."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunMetrics:
    min_pairwise_distance: float  # +inf when there are no pairs
    success: bool
    goal_errors: list[float]
    per_step_solve_time: list[float] = field(default_factory=list)
    # smallest distance minus combined radius over all pairs and steps
    min_clearance: float = math.inf
    goal_tolerance: float = 0.1
    n_steps: int = 0

    @property
    def collision_free(self) -> bool:
        return self.min_clearance > 0.0

    @property
    def median_solve_time(self) -> float:
        return float(np.median(self.per_step_solve_time)) if self.per_step_solve_time else math.nan

    @property
    def p95_solve_time(self) -> float:
        return float(np.percentile(self.per_step_solve_time, 95)) if self.per_step_solve_time else math.nan


def pair_indices(n: int):
    return np.triu_indices(n, 1)


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    """Center distances per step and unordered pair (i < j), shape (steps, pairs)."""
    positions = np.asarray(positions, dtype=float)
    iu, ju = pair_indices(positions.shape[1])
    diff = positions[:, iu, :] - positions[:, ju, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def compute_metrics(log, goal_tolerance: float = 0.1) -> RunMetrics:
    """Minimum separation, goal errors at the final logged state, and solve-time samples."""
    positions = np.asarray(log.positions, dtype=float)
    radii = np.asarray(log.radii, dtype=float)
    n = positions.shape[1] if positions.ndim == 3 else 0
    if len(positions) == 0:
        goal_errors = np.full(n, math.inf)
    else:
        goal_errors = np.hypot(*(positions[-1] - np.asarray(log.goals, dtype=float).reshape(n, 2)).T)
    if n < 2 or len(positions) == 0:
        dmin = clear = math.inf
    else:
        dist = pairwise_distances(positions)
        iu, ju = pair_indices(n)
        dmin = float(dist.min())
        clear = float((dist - (radii[iu] + radii[ju])).min())
    solve = np.asarray(log.solve_times, dtype=float).reshape(-1)
    success = bool(len(positions) > 0 and np.all(goal_errors <= goal_tolerance) and clear > 0.0)
    return RunMetrics(
        min_pairwise_distance=dmin,
        success=success,
        goal_errors=[float(e) for e in goal_errors],
        per_step_solve_time=[float(t) for t in solve],
        min_clearance=clear,
        goal_tolerance=float(goal_tolerance),
        n_steps=max(len(positions) - 1, 0),
    )
