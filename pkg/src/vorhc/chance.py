"""Gaussian chance constraints as deterministic linear back-offs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def _initial_erfinv(y: float) -> float:
    # Giles (2012) single-precision polynomial, ~1e-7 relative
    w = -math.log((1.0 - y) * (1.0 + y))
    if w < 5.0:
        w -= 2.5
        p = 2.81022636e-08
        for c in (3.43273939e-07, -3.5233877e-06, -4.39150654e-06, 0.00021858087,
                  -0.00125372503, -0.00417768164, 0.246640727, 1.50140941):
            p = c + p * w
    else:
        w = math.sqrt(w) - 3.0
        p = -0.000200214257
        for c in (0.000100950558, 0.00134934322, -0.00367342844, 0.00573950773,
                  -0.0076224613, 0.00943887047, 1.00167406, 2.83297682):
            p = c + p * w
    return p * y


def inverse_erf(y: float) -> float:
    """Inverse of the error function on (-1, 1), accurate to ~1e-15 absolute.

    In the upper half Newton steps are taken on ``log(erfc)`` so that the
    residual is not swamped by cancellation in ``1 - y``.
    """
    y = float(y)
    if not (-1.0 < y < 1.0):
        raise DomainError(f"inverse_erf needs |y| < 1, got {y}")
    if y == 0.0:
        return 0.0
    if y < 0.0:
        return -inverse_erf(-y)
    x = _initial_erfinv(y)
    if y > 0.5:
        # Newton on log(erfc(x)) = log(1 - y), nearly linear in the tail
        log_target = math.log(1.0 - y)
        for _ in range(50):
            c = math.erfc(x)
            step = (math.log(c) - log_target) / (-_TWO_OVER_SQRT_PI * math.exp(-x * x) / c)
            x -= step
            if abs(step) <= 1e-16 * max(1.0, abs(x)):
                break
        return x
    for _ in range(50):
        step = (math.erf(x) - y) / (_TWO_OVER_SQRT_PI * math.exp(-x * x))
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def _check_delta(delta: float, upper: float = 0.5):
    if not (0.0 < delta <= upper):
        raise DomainError(f"probability threshold must lie in (0, {upper}], got {delta}")


def kappa(normal, covariance, delta: float):
    """Back-off ``sqrt(2 A^T S A) * erfinv(1 - 2 delta)``.

    ``normal`` may carry leading batch dimensions (``(..., 2)``); the result
    then has the batch shape.
    """
    _check_delta(delta)
    a = np.asarray(normal, dtype=float)
    s = np.asarray(covariance, dtype=float)
    quad = np.einsum("...i,ij,...j->...", a, s, a)
    quad = np.maximum(quad, 0.0)
    out = np.sqrt(2.0 * quad) * inverse_erf(1.0 - 2.0 * delta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GaussianVelocity:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(2)
        c = np.asarray(self.covariance, dtype=float).reshape(2, 2)
        if not np.allclose(c, c.T, atol=1e-12):
            raise DomainError("covariance must be symmetric")
        w, v = np.linalg.eigh(c)
        if w.min() < -1e-12:
            raise DomainError(f"covariance not PSD (min eigenvalue {w.min():.3g})")
        c = (v * np.maximum(w, 0.0)) @ v.T
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", c)


@dataclass(frozen=True)
class LinearChanceConstraint:
    """``normal . mean - rhs >= margin`` standing in for ``Pr(normal . X < rhs) <= threshold``."""

    normal: np.ndarray
    rhs: float
    threshold: float
    margin: float

    def residual(self, mean) -> float:
        return float(self.normal @ np.asarray(mean, dtype=float)) - self.rhs - self.margin

    def satisfied(self, mean) -> bool:
        return self.residual(mean) >= 0.0


def deterministic_constraint(normal, v_other, host: GaussianVelocity, delta: float) -> LinearChanceConstraint:
    n = np.asarray(normal, dtype=float).reshape(2)
    k = kappa(n, host.covariance, delta)
    return LinearChanceConstraint(
        normal=n, rhs=float(n @ np.asarray(v_other, dtype=float)), threshold=delta, margin=k
    )


def split_budget(delta_edge: float) -> tuple[float, float]:
    _check_delta(delta_edge, 0.25)
    s = math.sqrt(delta_edge)
    return s, s


@dataclass
class ProbabilityBudget:
    per_edge_deltas: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for edge, (d1, d2) in self.per_edge_deltas.items():
            if not (0 < d1 < 1 and 0 < d2 < 1):
                raise DomainError(f"edge {edge}: thresholds must lie in (0, 1)")

    def edge_delta(self, i: int, j: int) -> float:
        d1, d2 = self.per_edge_deltas[(i, j)]
        return d1 * d2

    def neighbors(self, agent: int):
        return sorted(j for (i, j) in self.per_edge_deltas if i == agent)

    @property
    def composite(self) -> dict[int, float]:
        agents = sorted({i for i, _ in self.per_edge_deltas})
        return {i: composite_delta(self, i) for i in agents}

    @classmethod
    def uniform(cls, n_agents: int, d1: float = 0.1, d2: float = 0.1) -> "ProbabilityBudget":
        return cls({(i, j): (d1, d2) for i in range(n_agents) for j in range(n_agents) if i != j})


def composite_delta(budget: ProbabilityBudget, agent: int) -> float:
    keep = 1.0
    for j in budget.neighbors(agent):
        keep *= 1.0 - budget.edge_delta(agent, j)
    return 1.0 - keep
