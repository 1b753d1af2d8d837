"""Dense convex QP: ``min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  A x >= b``.

:func:`solve_qp` is the production path (Goldfarb-Idnani dual active set via
``quadprog``); :func:`solve_qp_enumerate` is a brute-force oracle that tries
every active set and is only usable for a handful of inequalities.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import quadprog


class QPInfeasible(RuntimeError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    iterations: int = 0

    def active(self, tol: float = 1e-10) -> np.ndarray:
        return np.flatnonzero(self.ineq_multipliers > tol)


def _as_rows(a, n):
    if a is None:
        return np.zeros((0, n))
    return np.atleast_2d(np.asarray(a, dtype=float)).reshape(-1, n)


def _as_vec(b):
    if b is None:
        return np.zeros(0)
    return np.asarray(b, dtype=float).reshape(-1)


def objective(h, g, x) -> float:
    return float(0.5 * x @ h @ x + g @ x)


def solve_qp(h, g, a=None, b=None, a_eq=None, b_eq=None) -> QPResult:
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    a, b = _as_rows(a, n), _as_vec(b)
    a_eq, b_eq = _as_rows(a_eq, n), _as_vec(b_eq)
    meq = a_eq.shape[0]
    c = np.vstack([a_eq, a]).T
    rhs = np.concatenate([b_eq, b])
    if c.shape[1] == 0:
        c = np.zeros((n, 1))
        rhs = np.array([-1.0])  # 0 >= -1, never active
        try:
            x, f, _, it, lag, _ = quadprog.solve_qp(h, -g, c, rhs, 0)
        except ValueError as exc:
            raise QPInfeasible(str(exc)) from exc
        return QPResult(x, f, np.zeros(0), np.zeros(0), int(it[0]))
    try:
        x, f, _, it, lag, _ = quadprog.solve_qp(h, -g, c, rhs, meq)
    except ValueError as exc:
        raise QPInfeasible(str(exc)) from exc
    return QPResult(x, f, lag[:meq].copy(), lag[meq:].copy(), int(it[0]))


def kkt_residual(h, g, x, lam, a=None, b=None, mu=None, a_eq=None, b_eq=None) -> float:
    """Largest violation among stationarity, feasibility, dual sign and complementarity."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    a, b = _as_rows(a, n), _as_vec(b)
    a_eq, b_eq = _as_rows(a_eq, n), _as_vec(b_eq)
    lam = _as_vec(lam)
    mu = _as_vec(mu) if mu is not None else np.zeros(a_eq.shape[0])
    grad = h @ x + g - a.T @ lam - a_eq.T @ mu
    slack = a @ x - b
    parts = [np.max(np.abs(grad), initial=0.0),
             np.max(-slack, initial=0.0),
             np.max(np.abs(a_eq @ x - b_eq), initial=0.0),
             np.max(-lam, initial=0.0),
             np.max(np.abs(lam * slack), initial=0.0)]
    return float(max(parts))


def _solve_equality(h, g, a_w, b_w):
    n = g.size
    m = a_w.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = h
    kkt[:n, n:] = -a_w.T
    kkt[n:, :n] = a_w
    rhs = np.concatenate([-g, b_w])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    if not np.allclose(kkt @ sol, rhs, atol=1e-9, rtol=1e-9):
        return None
    return sol[:n], sol[n:]


def solve_qp_enumerate(h, g, a=None, b=None, a_eq=None, b_eq=None, tol: float = 1e-9) -> QPResult:
    """Check every working set; keep the feasible KKT point with the lowest objective.

    Subsets are visited by size and then lexicographically, so among equally
    good points the one with the fewest, smallest-index active constraints wins.
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    a, b = _as_rows(a, n), _as_vec(b)
    a_eq, b_eq = _as_rows(a_eq, n), _as_vec(b_eq)
    m, meq = a.shape[0], a_eq.shape[0]
    best = None
    for size in range(0, min(m, n) + 1):
        for subset in itertools.combinations(range(m), size):
            idx = list(subset)
            a_w = np.vstack([a_eq, a[idx]])
            b_w = np.concatenate([b_eq, b[idx]])
            sol = _solve_equality(h, g, a_w, b_w)
            if sol is None:
                continue
            x, mult = sol
            if np.any(a @ x - b < -tol) or np.any(mult[meq:] < -tol):
                continue
            f = objective(h, g, x)
            if best is None or f < best[0] - 1e-12:
                lam = np.zeros(m)
                lam[idx] = mult[meq:]
                best = (f, x, mult[:meq], lam)
    if best is None:
        raise QPInfeasible("no feasible KKT point among enumerated working sets")
    f, x, mu, lam = best
    return QPResult(x, f, mu, lam)
