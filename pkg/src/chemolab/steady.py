"""Stationary mean-field problem ``A v = Lambda e^v / int e^v`` and its energy floor."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import energy
from .elliptic import HelmholtzOperator, LinearSolveError, TridiagonalLU
from .grid import RadialGrid, integrate

log = logging.getLogger(__name__)


@dataclass
class SteadyEntry:
    Lambda: float
    v: np.ndarray
    u: np.ndarray
    energy: float
    residual: float
    converged: bool
    iterations: int
    # determinant of the 2x2 Woodbury capacitance matrix at the last Newton
    # step; values near 0 flag a nearly singular Jacobian
    capacitance_det: float = float("nan")

    @property
    def v_max(self):
        return float(np.max(self.v))


@dataclass
class SteadyBranch:
    entries: list = field(default_factory=list)
    gaps: list = field(default_factory=list)

    def best_energy(self):
        """Lowest energy among converged entries: an upper estimate of E_*."""
        es = [e.energy for e in self.entries if e.converged]
        return min(es) if es else float("nan")


def mean_field_density(grid: RadialGrid, v, Lambda):
    """``Lambda e^v / int e^v`` evaluated with the shift ``v - max v``."""
    ev = np.exp(v - np.max(v))
    return Lambda * ev / integrate(grid, ev)


def steady_residual(op: HelmholtzOperator, v, Lambda):
    return op.apply(v) - mean_field_density(op.grid, v, Lambda)


def newton_steady(Lambda, grid: RadialGrid, v_guess, helmholtz=None, tol=1e-10, max_iter=100):
    """Damped Newton on ``F(v) = A v - Lambda e^v / int e^v``.

    The Jacobian ``A - diag(u) + u (w u)^T / Lambda`` is tridiagonal plus a
    rank-one term (see ``_newton_direction``).  A step is halved until the
    residual norm decreases.  Convergence means ``|F|_inf < tol``, or below the
    roundoff floor of evaluating ``A v`` when that is larger.  Never raises
    on non-convergence.
    """
    if Lambda <= 0:
        raise ValueError("Lambda must be positive")
    op = helmholtz if helmholtz is not None else HelmholtzOperator(grid)
    v = np.array(v_guess, dtype=float)
    if v.shape != (grid.n_cells,) or not np.all(np.isfinite(v)):
        raise ValueError("guess must be a finite field on the grid")
    F = steady_residual(op, v, Lambda)
    res = float(np.max(np.abs(F)))
    it = 0
    denom = float("nan")

    def target():
        # A v is a sum of O(|v| / dx^2) terms; below that roundoff no step helps
        return max(tol, 4 * np.finfo(float).eps * float(np.max(np.abs(v))) / grid.dx**2)

    while res >= target() and it < max_iter:
        it += 1
        u = mean_field_density(grid, v, Lambda)
        dv, denom = _newton_direction(op, u, Lambda, F)
        if not np.all(np.isfinite(dv)):
            log.warning("Newton direction not finite at Lambda=%g", Lambda)
            break
        step = 1.0
        while True:
            v_try = v - step * dv
            F_try = steady_residual(op, v_try, Lambda)
            res_try = float(np.max(np.abs(F_try)))
            if np.isfinite(res_try) and (res_try < res or step < 1e-4):
                break
            step *= 0.5
        v, F, res = v_try, F_try, res_try
    u = mean_field_density(grid, v, Lambda)
    converged = res < target()
    return SteadyEntry(Lambda=float(Lambda), v=v, u=u, energy=energy(grid, u, v), residual=res,
                       converged=bool(converged), iterations=it, capacitance_det=denom)


def _newton_direction(op: HelmholtzOperator, u, Lambda, F):
    """Solve ``J dv = F`` for ``J = T + p q^T``, ``T = A - diag(u)``.

    ``T`` is singular on constant states with ``u == 1``, so the axis entry of
    its diagonal is shifted by ``sigma`` and the shift is removed again inside
    a rank-two Woodbury update.  Everything stays O(n); a dense solve is
    the fallback when the shifted matrix is itself singular.
    Returns ``(dv, det)`` with ``det`` the capacitance determinant.
    """
    n = u.size
    w = op.grid.cell_measures
    p = u / Lambda
    q = w * u
    diag = op.diag - u
    sigma = float(op.diag[0])
    shifted = diag.copy()
    shifted[0] += sigma
    try:
        lu = TridiagonalLU(op.lower, shifted, op.upper)
        U = np.column_stack([p, np.zeros(n)])
        U[0, 1] = -sigma
        Z = np.column_stack([lu(U[:, 0]), lu(U[:, 1])])
        y = lu(F)
        # V = [q, e_0]
        cap = np.eye(2) + np.array([[q @ Z[:, 0], q @ Z[:, 1]], [Z[0, 0], Z[0, 1]]])
        det = float(np.linalg.det(cap))
        rhs = np.array([q @ y, y[0]])
        dv = y - Z @ np.linalg.solve(cap, rhs)
        if np.all(np.isfinite(dv)) and abs(det) > 1e-14:
            return dv, det
    except (LinearSolveError, np.linalg.LinAlgError):
        pass
    J = np.diag(diag) + np.diag(op.lower, -1) + np.diag(op.upper, 1) + np.outer(p, q)
    return np.linalg.solve(J, F), float("nan")


def constant_branch_energy(grid: RadialGrid, Lambda):
    """``|Omega| (c log c - c^2/2)`` with ``c = Lambda/|Omega|``."""
    c = Lambda / grid.volume
    return grid.volume * (c * math.log(c) - 0.5 * c * c)


def continuation_sweep(Lambda_start, Lambda_end, steps, grid: RadialGrid, helmholtz=None,
                       v_guess=None, tol=1e-10) -> SteadyBranch:
    """March Lambda over ``steps + 1`` equispaced values with warm starts.

    The first guess defaults to the constant solution.  Non-converged values
    are recorded as gaps and the next solve restarts from the last converged
    solution.
    """
    if Lambda_start <= 0 or Lambda_end <= 0:
        raise ValueError("Lambda range must be positive")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    op = helmholtz if helmholtz is not None else HelmholtzOperator(grid)
    lams = np.linspace(Lambda_start, Lambda_end, int(steps) + 1)
    v = (np.full(grid.n_cells, Lambda_start / grid.volume) if v_guess is None
         else np.array(v_guess, dtype=float))
    branch = SteadyBranch()
    prev_lam = lams[0]
    for lam in lams:
        # shift the warm start so its mean matches the new mass
        guess = v + (lam - prev_lam) / grid.volume
        entry = newton_steady(lam, grid, guess, op, tol=tol)
        branch.entries.append(entry)
        if entry.converged:
            v = entry.v
            prev_lam = lam
        else:
            log.warning("no steady state found at Lambda=%g (residual %.3g)", lam, entry.residual)
            branch.gaps.append(float(lam))
    return branch
