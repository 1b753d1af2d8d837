"""Planar double-integrator agents and constant-velocity Kalman tracking of neighbours.

States are stacked as ``[px, py, vx, vy]``. The filter functions accept
arrays with leading batch dimensions so a host can track all of its neighbours
in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularInnovationError

DEFAULT_STATE_COVARIANCE = np.diag([0.01, 0.01, 0.05, 0.05])


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(2)
        v = np.asarray(self.velocity, dtype=float).reshape(2)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("agent state must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, x) -> "AgentState":
        x = np.asarray(x, dtype=float)
        return cls(x[:2], x[2:4])


@dataclass(frozen=True)
class ControlInput:
    force: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float).reshape(2)
        if not np.all(np.isfinite(f)):
            raise ValueError("control input must be finite")
        object.__setattr__(self, "force", f)


@dataclass(frozen=True)
class NoiseModel:
    state_covariance: np.ndarray = DEFAULT_STATE_COVARIANCE
    scale: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.state_covariance, dtype=float)
        if w.shape != (4, 4) or np.any(np.diag(w) < 0) or np.any(w != np.diag(np.diag(w))):
            raise ValueError("noise covariance must be a 4x4 diagonal matrix with non-negative entries")
        if self.scale < 0:
            raise ValueError("noise scale must be non-negative")
        object.__setattr__(self, "state_covariance", w)

    @property
    def covariance(self) -> np.ndarray:
        return self.scale * self.state_covariance

    @property
    def velocity_covariance(self) -> np.ndarray:
        return self.covariance[2:, 2:]

    @property
    def enabled(self) -> bool:
        return self.scale > 0 and bool(np.any(self.state_covariance > 0))


@dataclass(frozen=True)
class NeighborEstimate:
    mean: AgentState
    covariance: np.ndarray

    @classmethod
    def from_arrays(cls, mean, covariance) -> "NeighborEstimate":
        return cls(AgentState.from_vector(mean), np.asarray(covariance, dtype=float))


def step_dynamics(x: AgentState, u: ControlInput, dt: float, mass: float, noise=None) -> AgentState:
    """One forward-Euler step; ``noise`` is a velocity perturbation (or None)."""
    v_next = x.velocity + (u.force / mass) * dt
    if noise is not None:
        v_next = v_next + np.asarray(noise, dtype=float)
    return AgentState(x.position + x.velocity * dt, v_next)


def transition_matrix(dt: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    return f


def kf_predict_arrays(mean, cov, dt: float, process_cov):
    f = transition_matrix(dt)
    mean = np.asarray(mean, dtype=float)
    mean = np.concatenate([mean[..., :2] + mean[..., 2:] * dt, mean[..., 2:]], axis=-1)
    cov = f @ np.asarray(cov, dtype=float) @ f.T + process_cov
    return mean, cov


def kf_update_arrays(mean, cov, observed, meas_cov):
    """Full-state measurement update (identity observation model), Joseph form."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    meas_cov = np.asarray(meas_cov, dtype=float)
    s = cov + meas_cov
    scale = max(1.0, float(np.max(np.abs(s))))
    if np.any(np.linalg.cond(s) * np.finfo(float).eps > 1e-6) or np.max(np.abs(s)) < 1e-300 * scale:
        raise SingularInnovationError("innovation covariance is singular")
    gain = np.linalg.solve(s, cov).swapaxes(-1, -2)  # P S^-1 with S, P symmetric
    innov = np.asarray(observed, dtype=float) - mean
    mean = mean + np.einsum("...ij,...j->...i", gain, innov)
    i_k = np.eye(4) - gain
    cov = i_k @ cov @ i_k.swapaxes(-1, -2) + gain @ meas_cov @ gain.swapaxes(-1, -2)
    cov = 0.5 * (cov + cov.swapaxes(-1, -2))
    return mean, cov


def kf_predict(est: NeighborEstimate, dt: float, process_cov) -> NeighborEstimate:
    m, c = kf_predict_arrays(est.mean.as_vector(), est.covariance, dt, process_cov)
    return NeighborEstimate.from_arrays(m, c)


def kf_update(est: NeighborEstimate, observed: AgentState, meas_cov) -> NeighborEstimate:
    m, c = kf_update_arrays(est.mean.as_vector(), est.covariance, observed.as_vector(), meas_cov)
    return NeighborEstimate.from_arrays(m, c)


def predict_neighbor_horizon(est: NeighborEstimate, n_steps: int, dt: float):
    """Constant-velocity extrapolation for steps ``1..n_steps``.

    Returns ``(positions, velocities)``, each of shape ``(n_steps, 2)``.
    """
    if n_steps < 1:
        raise ValueError("horizon must be at least one step")
    return extrapolate(est.mean.position, est.mean.velocity, n_steps, dt)


def extrapolate(position, velocity, n_steps: int, dt: float):
    position = np.asarray(position, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    pos = np.empty(position.shape[:-1] + (n_steps, 2))
    step = velocity * dt
    cur = position
    for k in range(n_steps):
        cur = cur + step
        pos[..., k, :] = cur
    vel = np.broadcast_to(velocity[..., None, :], pos.shape).copy()
    return pos, vel
