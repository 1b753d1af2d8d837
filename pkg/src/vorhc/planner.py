"""Chance-constrained receding-horizon planner for a single host agent.

The transcription keeps states and inputs over the horizon (multiple
shooting). Because the double-integrator dynamics are linear, every convex
subproblem is solved after eliminating the states; the only nonconvexity is
the dependence of the cone normals on predicted host positions, which is
handled by sequential convexification: freeze the normals at the current
iterate, solve the QP, line-search on an exact-penalty merit, repeat.
"""
from __future__ import annotations

import enum
import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .chance import inverse_erf
from .dynamics import AgentState, ControlInput
from .errors import ConfigError
from .geometry import unit_normal_jacobians, unit_normals_batch
from .qp import QPInfeasible, kkt_residual, solve_qp

INF = math.inf


def _diag(*v):
    return np.diag(np.asarray(v, dtype=float))


@dataclass
class PlannerConfig:
    horizon: int = 25
    dt: float = 0.05
    Q: np.ndarray = field(default_factory=lambda: _diag(10, 10, 1, 1))
    R: np.ndarray = field(default_factory=lambda: _diag(1, 1))
    x_lower: np.ndarray = field(default_factory=lambda: np.array([-INF, -INF, -10.0, -10.0]))
    x_upper: np.ndarray = field(default_factory=lambda: np.array([INF, INF, 10.0, 10.0]))
    u_lower: np.ndarray = field(default_factory=lambda: np.array([-INF, -INF]))
    u_upper: np.ndarray = field(default_factory=lambda: np.array([INF, INF]))
    delta_1: float = 0.1
    delta_2: float = 0.1
    mass: float = 1.0
    # "chance" uses the Gaussian back-off; "deterministic" sets it to zero
    method: str = "chance"
    # "select": one normal per (neighbour, step); "joint": both normals at once
    side_mode: str = "select"
    activation_distance: float = 1.0
    # extra gap added to every combined radius when building cones
    clearance: float = 0.1
    # a neighbour keeps last step's passing side unless the other is better by this much (m/s)
    side_hysteresis: float = 0.3
    slack_weight: float | None = None
    slack_regularization: float = 1e-2
    max_iter: int = 30
    tol: float = 1e-6

    def __post_init__(self):
        for name in ("Q", "R", "x_lower", "x_upper", "u_lower", "u_upper"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.mass > 0:
            raise ConfigError("mass must be positive")
        if self.Q.shape != (4, 4) or self.R.shape != (2, 2):
            raise ConfigError("Q must be 4x4 and R 2x2")
        if self.x_lower.shape != (4,) or self.x_upper.shape != (4,):
            raise ConfigError("state bounds must have 4 entries")
        if self.u_lower.shape != (2,) or self.u_upper.shape != (2,):
            raise ConfigError("input bounds must have 2 entries")
        if not np.allclose(self.Q, self.Q.T) or np.linalg.eigvalsh(self.Q).min() < -1e-12:
            raise ConfigError("Q must be symmetric PSD")
        if not np.allclose(self.R, self.R.T) or np.linalg.eigvalsh(self.R).min() <= 0:
            raise ConfigError("R must be symmetric PD")
        if np.any(self.x_lower > self.x_upper) or np.any(self.u_lower > self.u_upper):
            raise ConfigError("lower bounds exceed upper bounds")
        for d in (self.delta_1, self.delta_2):
            if not 0 < d <= 0.5:
                raise ConfigError(f"per-normal threshold must lie in (0, 0.5], got {d}")
        if self.method not in ("chance", "deterministic"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not self.clearance >= 0:
            raise ConfigError("clearance must be non-negative")
        if self.side_mode not in ("select", "joint"):
            raise ConfigError(f"unknown side_mode {self.side_mode!r}")

    @property
    def penalty(self) -> float:
        if self.slack_weight is not None:
            return float(self.slack_weight)
        return 1e4 * float(np.max(np.diag(self.Q)))


class SolverStatus(enum.Enum):
    Optimal = "Optimal"
    MaxIter = "MaxIter"
    SlackActive = "SlackActive"
    Emergency = "Emergency"


@functools.lru_cache(maxsize=32)
def _condensed(n: int, dt: float, mass: float):
    """``X = Sx x0 + Bx U`` for stacked states ``x^1..x^N`` and inputs ``u^0..u^{N-1}``."""
    a = np.eye(4)
    a[0, 2] = a[1, 3] = dt
    b = np.zeros((4, 2))
    b[2, 0] = b[3, 1] = dt / mass
    sx = np.zeros((4 * n, 4))
    bx = np.zeros((4 * n, 2 * n))
    ak = np.eye(4)
    for k in range(n):
        ak = a @ ak
        sx[4 * k:4 * k + 4] = ak
    for k in range(n):
        # effect of u^k on x^{k+1..N}
        blk = b
        for m in range(k, n):
            bx[4 * m:4 * m + 4, 2 * k:2 * k + 2] = blk
            blk = a @ blk
    sx.setflags(write=False)
    bx.setflags(write=False)
    return sx, bx


@dataclass
class ConstraintBlock:
    """Linearised cone constraints ``normal . (v_host^k - v_j^k) >= margin`` at frozen normals."""

    neighbor: np.ndarray  # (m,) neighbour index
    step: np.ndarray  # (m,) horizon step k in 1..N
    side: np.ndarray  # (m,) 0 for the first normal, 1 for the second
    normal: np.ndarray  # (m, 2) unit normals
    v_other: np.ndarray  # (m, 2)
    margin: np.ndarray  # (m,)
    # d(residual)/d(host position at that step), (m, 2)
    pos_sensitivity: np.ndarray | None = None

    def __len__(self):
        return len(self.step)

    def residuals(self, velocities: np.ndarray) -> np.ndarray:
        """``velocities`` are host velocities ``v^1..v^N`` of shape (N, 2)."""
        v = velocities[self.step - 1]
        return np.einsum("ij,ij->i", self.normal, v - self.v_other) - self.margin


@dataclass
class Problem:
    cfg: PlannerConfig
    x0: np.ndarray  # (4,)
    ref: np.ndarray  # (N, 4): x_ref^0 .. x_ref^{N-1}
    host_radius: float
    nb_pos: np.ndarray  # (n, N, 2) neighbour positions at steps 1..N
    nb_vel: np.ndarray  # (n, N, 2)
    nb_radius: np.ndarray  # (n,)
    velocity_cov: np.ndarray  # (2, 2) host velocity covariance used in the back-off
    # neighbours whose disks already overlap the host's at the current state
    overlapping: np.ndarray | None = None

    @property
    def emergency(self) -> bool:
        return self.overlapping is not None and bool(np.any(self.overlapping))

    @property
    def n_neighbors(self) -> int:
        return self.nb_pos.shape[0]

    @property
    def n_vars(self) -> int:
        """Multiple-shooting decision variables (states x^1..x^N and inputs), slacks excluded."""
        return self.cfg.horizon * (4 + 2)

    @property
    def n_cone_constraints(self) -> int:
        return 2 * self.n_neighbors * self.cfg.horizon

    # -- dynamics -------------------------------------------------------
    def rollout(self, u: np.ndarray) -> np.ndarray:
        sx, bx = _condensed(self.cfg.horizon, self.cfg.dt, self.cfg.mass)
        return (sx @ self.x0 + bx @ u).reshape(-1, 4)

    def defects(self, states: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Per-step multiple-shooting defects ``|x^{k+1} - f(x^k, u^k)|_inf``."""
        dt, m = self.cfg.dt, self.cfg.mass
        prev = np.vstack([self.x0, states[:-1]])
        pred = np.hstack([prev[:, :2] + prev[:, 2:] * dt, prev[:, 2:] + inputs * dt / m])
        return np.max(np.abs(states - pred), axis=1)

    # -- cost -----------------------------------------------------------
    @functools.cached_property
    def _quadratic(self):
        n = self.cfg.horizon
        sx, bx = _condensed(n, self.cfg.dt, self.cfg.mass)
        qbar = np.zeros((4 * n, 4 * n))
        for k in range(n - 1):  # states x^1..x^{N-1} enter the cost, x^N does not
            qbar[4 * k:4 * k + 4, 4 * k:4 * k + 4] = self.cfg.Q
        rbar = np.kron(np.eye(n), self.cfg.R)
        ref = np.zeros(4 * n)
        ref[:4 * (n - 1)] = self.ref[1:n].reshape(-1)
        offset = sx @ self.x0 - ref
        hess = 2.0 * (bx.T @ qbar @ bx + rbar)
        grad0 = 2.0 * bx.T @ qbar @ offset
        const = float(offset @ qbar @ offset)
        d0 = self.x0 - self.ref[0]
        const += float(d0 @ self.cfg.Q @ d0)
        return hess, grad0, const

    def cost(self, u: np.ndarray) -> float:
        hess, grad0, const = self._quadratic
        return float(0.5 * u @ hess @ u + grad0 @ u + const)

    def cost_gradient(self, u: np.ndarray) -> np.ndarray:
        hess, grad0, _ = self._quadratic
        return hess @ u + grad0

    def cost_from_trajectory(self, states: np.ndarray, inputs: np.ndarray) -> float:
        """Sum over k = 0..N-1 of ||x^k - ref^k||_Q + ||u^k||_R, straight from the definition."""
        q, r = self.cfg.Q, self.cfg.R
        xs = np.vstack([self.x0, states[:-1]])
        total = 0.0
        for k in range(self.cfg.horizon):
            e = xs[k] - self.ref[k]
            total += e @ q @ e + inputs[k] @ r @ inputs[k]
        return float(total)

    # -- cone constraints ----------------------------------------------
    @functools.cached_property
    def _erfinv_factors(self):
        if self.cfg.method == "deterministic":
            return 0.0, 0.0
        return inverse_erf(1.0 - 2.0 * self.cfg.delta_1), inverse_erf(1.0 - 2.0 * self.cfg.delta_2)

    def _back_off(self, unit_normals: np.ndarray, side) -> np.ndarray:
        """kappa for unit normals; ``side`` (0/1, scalar or array) picks the threshold."""
        f1, f2 = self._erfinv_factors
        quad = np.einsum("...i,ij,...j->...", unit_normals, self.velocity_cov, unit_normals)
        return np.sqrt(2.0 * np.maximum(quad, 0.0)) * np.where(np.asarray(side) == 0, f1, f2)

    def normals_at(self, states: np.ndarray):
        """Unit normals, shape (n, N, 2) each, for cones built at predicted positions."""
        axis = self.nb_pos - states[None, :, :2]
        r = self.nb_radius[:, None] + self.host_radius
        return unit_normals_batch(axis, r)

    def margins_at(self, states: np.ndarray):
        """Constraint margins ``n_s . v_rel - back_off_s`` of both sides, shape (2, n, N)."""
        n1, n2 = self.normals_at(states)
        vrel = states[None, :, 2:] - self.nb_vel
        m1 = np.einsum("jki,jki->jk", n1, vrel) - self._back_off(n1, 0)
        m2 = np.einsum("jki,jki->jk", n2, vrel) - self._back_off(n2, 1)
        return np.stack([m1, m2])

    def select(self, u: np.ndarray, prior_sides=None, hysteresis: float | None = None):
        """Active (neighbour, step) pairs and the passing side for each neighbour.

        A pair is active when the predicted gap is positive and within the
        activation distance; predicted overlaps are left to the constraints at
        earlier steps, which already keep the relative velocity off the disk.
        Each neighbour is passed on one side for the whole horizon: the side
        better satisfied at ``u`` on its earliest active step, with exact ties
        going to the first normal (the host keeps the neighbour on its left).
        """
        n, N = self.n_neighbors, self.cfg.horizon
        if n == 0:
            return np.zeros((0, N), bool), np.zeros((0, N), int)
        states = self.rollout(u)
        gap = np.hypot(*(self.nb_pos - states[None, :, :2]).transpose(2, 0, 1))
        gap -= self.nb_radius[:, None] + self.host_radius
        active = (gap <= self.cfg.activation_distance) & (gap > 0.0)
        # an existing overlap cannot be fixed by leaving the cone; push apart instead
        separate = np.zeros_like(active)
        if self.overlapping is not None:
            separate = self.overlapping[:, None] & (gap <= 0.0)
        m = self.margins_at(states)
        vrel = states[None, :, 2:] - self.nb_vel
        tie = 1e-9 * (1.0 + np.hypot(vrel[..., 0], vrel[..., 1]))
        first = np.argmax(active, axis=1)
        rows = np.arange(n)
        pick = np.where(m[1, rows, first] > m[0, rows, first] + tie[rows, first], 1, 0)
        if prior_sides is not None:
            prior = np.asarray(prior_sides)
            gain = m[1 - prior.clip(0, 1), rows, first] - m[prior.clip(0, 1), rows, first]
            h = self.cfg.side_hysteresis if hysteresis is None else hysteresis
            keep = (prior >= 0) & (prior <= 1) & (gain <= h)
            pick = np.where(keep, prior, pick)
        sides = np.repeat(pick[:, None], N, axis=1)
        sides[separate] = 2
        return active | separate, sides

    def constraint_block(self, u: np.ndarray, active, sides) -> ConstraintBlock:
        states = self.rollout(u)
        jj, kk = np.nonzero(active)
        if self.cfg.side_mode == "joint":
            jj = np.concatenate([jj, jj])
            kk = np.concatenate([kk, kk])
            ss = np.repeat([0, 1], len(jj) // 2)
        else:
            ss = sides[jj, kk]
        order = np.lexsort((ss, jj, kk))
        jj, kk, ss = jj[order], kk[order], ss[order]
        axis = self.nb_pos[jj, kk] - states[kk, :2]
        r = self.nb_radius[jj] + self.host_radius
        d = np.hypot(axis[:, 0], axis[:, 1])
        # iterates may wander into a predicted overlap; pretend the pair just touches
        grow = np.maximum(1.0, r * (1.0 + 1e-3) / np.where(d > 0, d, 1.0))
        fallback = np.column_stack([r * (1.0 + 1e-3), np.zeros_like(r)])
        cone_axis = np.where((d > 0)[:, None], axis * grow[:, None], fallback)
        n1, n2, j1, j2 = unit_normal_jacobians(cone_axis, r)
        first = (ss == 0)[:, None]
        normals = np.where(first, n1, n2)
        jac = np.where(first[..., None], j1, j2)
        sep = ss == 2
        if np.any(sep):
            # separating rows: relative velocity along the line of centres, pointing apart
            ds = np.maximum(d[sep], 1e-9)
            ahat = np.where((d[sep] > 0)[:, None], axis[sep] / ds[:, None], [1.0, 0.0])
            normals[sep] = -ahat
            jac[sep] = -(np.eye(2) - ahat[:, :, None] * ahat[:, None, :]) / ds[:, None, None]
        margin = self._back_off(normals, ss)
        vrel = states[kk, 2:] - self.nb_vel[jj, kk]
        dres_dn = vrel - self._back_off_gradient(normals, ss)
        # axis = p_j - p_i, so d/dp_i = -d/daxis
        sens = -np.einsum("mi,mij->mj", dres_dn, jac)
        return ConstraintBlock(
            neighbor=jj, step=kk + 1, side=ss, normal=normals,
            v_other=self.nb_vel[jj, kk], margin=margin, pos_sensitivity=sens,
        )

    def _back_off_gradient(self, unit_normals, side):
        f1, f2 = self._erfinv_factors
        w = self.velocity_cov
        quad = np.einsum("...i,ij,...j->...", unit_normals, w, unit_normals)
        root = np.sqrt(2.0 * np.maximum(quad, 0.0))
        f = np.where(np.asarray(side) == 0, f1, f2)
        scale = np.where(root > 0, f / np.where(root > 0, root, 1.0), 0.0)
        return 2.0 * scale[..., None] * (unit_normals @ w)

    def linear_rows(self, block: ConstraintBlock, u: np.ndarray):
        """First-order model ``A u' >= b`` of the block around the iterate ``u``."""
        n = self.cfg.horizon
        sx, bx = _condensed(n, self.cfg.dt, self.cfg.mass)
        k = block.step - 1
        rows = bx.reshape(n, 4, -1)[k]  # (m, 4, 2N)
        a = np.einsum("mi,min->mn", block.normal, rows[:, 2:, :])
        if block.pos_sensitivity is not None:
            a += np.einsum("mi,min->mn", block.pos_sensitivity, rows[:, :2, :])
        g0 = block.residuals(self.rollout(u)[:, 2:])
        return a, a @ u - g0

    @functools.cached_property
    def bound_rows(self):
        cfg = self.cfg
        n = cfg.horizon
        sx, bx = _condensed(n, cfg.dt, cfg.mass)
        free = sx @ self.x0
        rows, rhs = [], []
        lo = np.tile(cfg.x_lower, n)
        hi = np.tile(cfg.x_upper, n)
        for idx in np.flatnonzero(np.isfinite(lo)):
            rows.append(bx[idx])
            rhs.append(lo[idx] - free[idx])
        for idx in np.flatnonzero(np.isfinite(hi)):
            rows.append(-bx[idx])
            rhs.append(free[idx] - hi[idx])
        eye = np.eye(2 * n)
        ulo = np.tile(cfg.u_lower, n)
        uhi = np.tile(cfg.u_upper, n)
        for idx in np.flatnonzero(np.isfinite(ulo)):
            rows.append(eye[idx])
            rhs.append(ulo[idx])
        for idx in np.flatnonzero(np.isfinite(uhi)):
            rows.append(-eye[idx])
            rhs.append(-uhi[idx])
        if not rows:
            return np.zeros((0, 2 * n)), np.zeros(0)
        return np.array(rows), np.array(rhs)

    def violation(self, u: np.ndarray, active, sides) -> float:
        block = self.constraint_block(u, active, sides)
        if len(block) == 0:
            return 0.0
        viol = np.maximum(0.0, -block.residuals(self.rollout(u)[:, 2:]))
        worst = np.zeros(self.n_neighbors)
        np.maximum.at(worst, block.neighbor, viol)
        return float(np.sum(worst))


def build_problem(host: AgentState, neighbors, ref, cfg: PlannerConfig, *, host_radius: float,
                  neighbor_radii=None, velocity_cov=None) -> Problem:
    """Assemble the deterministic chance-constrained problem for one host.

    ``neighbors`` is a sequence of :class:`~vorhc.dynamics.NeighborEstimate`
    (or anything with ``mean.position``/``mean.velocity``); they are
    extrapolated at constant velocity across the horizon.
    """
    n = cfg.horizon
    ref = np.asarray(ref, dtype=float)
    if ref.ndim != 2 or ref.shape[1] != 4 or ref.shape[0] < n:
        raise ConfigError(f"reference must have shape (>= {n}, 4), got {ref.shape}")
    neighbors = list(neighbors)
    radii = np.full(len(neighbors), host_radius) if neighbor_radii is None else np.asarray(neighbor_radii, float)
    if radii.shape != (len(neighbors),):
        raise ConfigError("one radius per neighbour required")
    if velocity_cov is None:
        velocity_cov = np.zeros((2, 2))
    velocity_cov = np.asarray(velocity_cov, dtype=float)
    if velocity_cov.shape != (2, 2):
        raise ConfigError("velocity covariance must be 2x2")
    if neighbors:
        pos0 = np.array([e.mean.position for e in neighbors])
        vel0 = np.array([e.mean.velocity for e in neighbors])
    else:
        pos0 = np.zeros((0, 2))
        vel0 = np.zeros((0, 2))
    return problem_from_arrays(host.as_vector(), pos0, vel0, ref[:n], cfg, host_radius, radii, velocity_cov)


def problem_from_arrays(x0, nb_pos0, nb_vel0, ref, cfg, host_radius, nb_radius, velocity_cov) -> Problem:
    from .dynamics import extrapolate

    n = cfg.horizon
    nb_pos0 = np.asarray(nb_pos0, dtype=float).reshape(-1, 2)
    nb_vel0 = np.asarray(nb_vel0, dtype=float).reshape(-1, 2)
    pos, vel = extrapolate(nb_pos0, nb_vel0, n, cfg.dt)
    x0 = np.asarray(x0, dtype=float)
    host_radius = float(host_radius) + cfg.clearance
    gaps = np.hypot(*(nb_pos0 - x0[:2]).T) - (np.asarray(nb_radius) + host_radius) if len(nb_pos0) else np.zeros(0)
    return Problem(
        cfg=cfg, x0=x0, ref=np.asarray(ref, dtype=float)[:n], host_radius=float(host_radius),
        nb_pos=pos, nb_vel=vel, nb_radius=np.asarray(nb_radius, dtype=float),
        velocity_cov=np.asarray(velocity_cov, dtype=float), overlapping=gaps <= 0.0,
    )


@dataclass
class HorizonPlan:
    states: np.ndarray  # (N, 4): x^1..x^N
    inputs: np.ndarray  # (N, 2): u^0..u^{N-1}
    cost: float
    slack_total: float
    solver_status: SolverStatus
    iterations: int = 0
    kkt_residual: float = 0.0
    constraints: ConstraintBlock | None = None
    # passing side per neighbour (-1 where no cone row was active)
    sides: np.ndarray | None = None

    @property
    def first_input(self) -> np.ndarray:
        return self.inputs[0]


def braking_plan(problem: Problem) -> HorizonPlan:
    """Stop as hard as the input bounds allow, then hold."""
    cfg = problem.cfg
    n = cfg.horizon
    u = np.zeros((n, 2))
    u[0] = np.clip(-cfg.mass * problem.x0[2:] / cfg.dt, cfg.u_lower, cfg.u_upper)
    flat = u.reshape(-1)
    return HorizonPlan(problem.rollout(flat), u, problem.cost(flat), 0.0, SolverStatus.Emergency)


def _solve_subproblem(problem: Problem, block: ConstraintBlock, u: np.ndarray):
    """Convex QP with the cone constraints linearised at ``u``; hard first, slacked on failure."""
    hess, grad0, _ = problem._quadratic
    a_b, b_b = problem.bound_rows
    a_c, b_c = problem.linear_rows(block, u)
    a = np.vstack([a_c, a_b])
    b = np.concatenate([b_c, b_b])
    try:
        res = solve_qp(hess, grad0, a, b)
        kkt = kkt_residual(hess, grad0, res.x, res.ineq_multipliers, a, b)
        return res.x, np.zeros(len(b_c)), kkt
    except QPInfeasible:
        if len(b_c) == 0:
            raise
    # one slack per neighbour, shared by all of its rows
    owners, row_owner = np.unique(block.neighbor, return_inverse=True)
    m, nu = len(owners), hess.shape[0]
    cfg = problem.cfg
    h = np.zeros((nu + m, nu + m))
    h[:nu, :nu] = hess
    h[nu:, nu:] = cfg.slack_regularization * np.eye(m)
    g = np.concatenate([grad0, np.full(m, cfg.penalty)])
    a_s = np.block([
        [a_c, np.eye(m)[row_owner]],
        [a_b, np.zeros((len(b_b), m))],
        [np.zeros((m, nu)), np.eye(m)],
    ])
    b_s = np.concatenate([b_c, b_b, np.zeros(m)])
    res = solve_qp(h, g, a_s, b_s)
    kkt = kkt_residual(h, g, res.x, res.ineq_multipliers, a_s, b_s)
    return res.x[:nu], np.maximum(res.x[nu:], 0.0), kkt


def solve_sqp(problem: Problem, warm_start=None, prior_sides=None) -> HorizonPlan:
    cfg = problem.cfg
    n = cfg.horizon
    u = np.zeros(2 * n) if warm_start is None else np.asarray(warm_start, dtype=float).reshape(-1).copy()
    active, sides = problem.select(u, prior_sides)
    rho = cfg.penalty

    def merit(v):
        return problem.cost(v) + rho * problem.violation(v, active, sides)

    def per_neighbor(sides_):
        return np.where(active.any(axis=1), np.where(sides_ < 2, sides_, -1).max(axis=1, initial=-1), -1)

    status = SolverStatus.MaxIter
    slack = np.zeros(0)
    kkt = 0.0
    block = None
    it = 0
    tried = [u]
    for it in range(1, cfg.max_iter + 1):
        if it > 1:
            # pairs the iterate has moved close to join the set; chosen sides stay fixed
            more, more_sides = problem.select(u, per_neighbor(sides), hysteresis=math.inf)
            fresh = more & ~active
            sides = np.where(fresh, more_sides, sides)
            active = active | more
        block = problem.constraint_block(u, active, sides)
        try:
            u_qp, slack, kkt = _solve_subproblem(problem, block, u)
        except QPInfeasible:
            return braking_plan(problem)
        d = u_qp - u
        if np.max(np.abs(d), initial=0.0) < cfg.tol:
            u = u_qp
            status = SolverStatus.Optimal
            break
        if len(block) == 0:
            # no frozen geometry: the QP solution is exact
            u = u_qp
            continue
        phi0 = merit(u)
        alpha = 1.0
        while alpha > 1.0 / 64:
            if merit(u + alpha * d) <= phi0:
                break
            alpha *= 0.5
        u = u + alpha * d
        tried.append(u)
    else:
        # no convergence: fall back on the best iterate under the final constraint set
        u = min(tried, key=merit)
        block = problem.constraint_block(u, active, sides)
    states = problem.rollout(u)
    slack_total = float(np.sum(slack))
    if status is SolverStatus.Optimal and slack_total > 1e-9:
        status = SolverStatus.SlackActive
    elif status is SolverStatus.MaxIter and slack_total > 1e-9:
        status = SolverStatus.SlackActive
    if problem.emergency:
        status = SolverStatus.Emergency
    return HorizonPlan(
        states=states, inputs=u.reshape(n, 2), cost=problem.cost(u), slack_total=slack_total,
        solver_status=status, iterations=it, kkt_residual=kkt, constraints=block,
        sides=per_neighbor(sides),
    )


@dataclass
class PlanningContext:
    """Per-agent mutable planning state: warm start and the last plan."""

    warm_start: np.ndarray | None = None
    last_plan: HorizonPlan | None = None
    last_solve_time: float = 0.0


@dataclass
class Snapshot:
    """What one host knows when it plans."""

    host: AgentState
    host_radius: float
    neighbor_positions: np.ndarray  # (n, 2)
    neighbor_velocities: np.ndarray  # (n, 2)
    neighbor_radii: np.ndarray  # (n,)
    reference: np.ndarray  # (>= N, 4)
    velocity_cov: np.ndarray  # (2, 2)


def _better(a: HorizonPlan, b: HorizonPlan) -> bool:
    if abs(a.slack_total - b.slack_total) > 1e-9:
        return a.slack_total < b.slack_total
    if (a.solver_status is SolverStatus.Optimal) != (b.solver_status is SolverStatus.Optimal):
        return a.solver_status is SolverStatus.Optimal
    return a.cost < b.cost


def plan_step(context: PlanningContext, snapshot: Snapshot, cfg: PlannerConfig) -> ControlInput:
    """Solve for the current host and return the first input; shifts the plan into the warm start."""
    t0 = time.perf_counter()
    problem = problem_from_arrays(
        snapshot.host.as_vector(), snapshot.neighbor_positions, snapshot.neighbor_velocities,
        snapshot.reference, cfg, snapshot.host_radius, snapshot.neighbor_radii, snapshot.velocity_cov,
    )
    prior = context.last_plan.sides if context.last_plan is not None else None
    if prior is not None and len(prior) != problem.n_neighbors:
        prior = None
    plan = solve_sqp(problem, context.warm_start, prior)
    if context.warm_start is not None and plan.solver_status in (SolverStatus.SlackActive, SolverStatus.MaxIter):
        # the shifted plan can trap the linearisation; a cold start often finds a slack-free plan
        cold = solve_sqp(problem)
        if _better(cold, plan):
            plan = cold
    context.last_solve_time = time.perf_counter() - t0
    context.last_plan = plan
    context.warm_start = np.vstack([plan.inputs[1:], plan.inputs[-1:]]).reshape(-1)
    return ControlInput(plan.first_input.copy())
