"""Time integration of u_t = Delta(gamma(v) u) + mu u (1 - u), v = (I - Delta)^{-1} u."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .elliptic import HelmholtzOperator, LinearSolveError, TridiagonalLU
from .grid import RadialGrid, as_field, face_average, face_gradient
from .motility import Motility, MotilityDomainError

log = logging.getLogger(__name__)

RUNNING = "running"
FINISHED = "finished"
OVERFLOW = "overflow"
DT_COLLAPSE = "dt_collapse"

SEMI_IMPLICIT = "semi_implicit"
EXPLICIT_RK2 = "explicit_rk2"
STEPPERS = (SEMI_IMPLICIT, EXPLICIT_RK2)

DIVERGENCE = "divergence"
UPWIND = "upwind"
FLUX_FORMS = (DIVERGENCE, UPWIND)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    stepper: str = SEMI_IMPLICIT
    dt_init: float = 1e-4
    dt_min: float = 1e-12
    dt_max: float = 1e-4
    cfl_safety: float = 0.45
    t_end: float = 1.0
    overflow_cap: float = 1e12
    adaptive: bool = False
    # largest accepted sup-norm change of v per step when adaptive
    max_dv: float = 0.05
    flux_form: str = DIVERGENCE

    def __post_init__(self):
        if self.stepper not in STEPPERS:
            raise ValueError(f"unknown stepper {self.stepper!r}")
        if self.flux_form not in FLUX_FORMS:
            raise ValueError(f"unknown flux form {self.flux_form!r}")
        if not (0 < self.dt_min < self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min < dt_init <= dt_max")
        if not (0 < self.cfl_safety <= 0.9):
            raise ValueError("cfl_safety must lie in (0, 0.9]")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.overflow_cap <= 0 or self.max_dv <= 0:
            raise ValueError("overflow_cap and max_dv must be positive")


@dataclass
class SimState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0
    step: int = 0
    dt_last: float = 0.0
    status: str = RUNNING
    # proposal for the next step size (adaptive stepping only)
    dt_next: float = 0.0

    def copy(self) -> "SimState":
        return dataclasses.replace(self, u=self.u.copy(), v=self.v.copy())


def logistic_flow(u, rate):
    """Exact solution after time ``rate/mu`` of y' = mu y (1 - y) started at ``u``."""
    if rate == 0.0:
        return u
    return u / (u + (1.0 - u) * np.exp(-rate))


def face_coefficients(grid: RadialGrid, v, m: Motility, form: str = DIVERGENCE):
    """Face flux as ``F_f = alpha_f u_right + beta_f u_left`` for the given v.

    ``divergence`` is ``D(gamma u)`` = avg(gamma) Du + avg(u) Dgamma, i.e. the
    chain-rule flux gamma u_x + u gamma' v_x with the secant slope for gamma'.
    ``upwind`` averages gamma and gamma' and upwinds u in u gamma'(v) v_x.
    Signs: alpha >= 0 >= beta in both forms.  Boundary entries are zero.
    """
    g, g1, _ = m.eval(v)
    n = grid.n_cells
    alpha = np.zeros(n + 1)
    beta = np.zeros(n + 1)
    if form == DIVERGENCE:
        alpha[1:-1] = g[1:] / grid.dx
        beta[1:-1] = -g[:-1] / grid.dx
    elif form == UPWIND:
        gf = face_average(g)[1:-1]
        b = face_average(g1)[1:-1] * face_gradient(grid, v)[1:-1]
        alpha[1:-1] = gf / grid.dx + np.maximum(b, 0.0)
        beta[1:-1] = -gf / grid.dx + np.minimum(b, 0.0)
    else:
        raise ValueError(f"unknown flux form {form!r}")
    return alpha, beta


def assemble_flux(grid: RadialGrid, u, v, m: Motility, form: str = DIVERGENCE) -> np.ndarray:
    """Face values of ``gamma(v) u_x + u gamma'(v) v_x``, zero on the boundary."""
    alpha, beta = face_coefficients(grid, v, m, form)
    flux = np.zeros(grid.n_cells + 1)
    flux[1:-1] = alpha[1:-1] * u[1:] + beta[1:-1] * u[:-1]
    if not np.all(np.isfinite(flux)):
        raise FloatingPointError("non-finite flux")
    return flux


def _operator_bands(grid: RadialGrid, alpha, beta):
    """Bands of ``L u = div F`` for ``F = alpha u_R + beta u_L``."""
    s = grid.face_measures.copy()
    s[0] = 0.0
    s[-1] = 0.0
    w = grid.cell_measures
    sa = s * alpha
    sb = s * beta
    diag = (sb[1:] - sa[:-1]) / w
    lower = -sb[1:-1] / w[1:]
    upper = sa[1:-1] / w[:-1]
    return lower, diag, upper


class ChemotaxisSystem:
    """Discrete parabolic-elliptic system on a fixed grid.

    Steppers: ``semi_implicit`` lags gamma(v) at time n, solves the linear
    transport-diffusion system for u implicitly, applies the logistic term in
    closed form, then refreshes v.  ``explicit_rk2`` is Heun's method on the
    full right-hand side under the parabolic CFL limit.
    """

    def __init__(self, grid: RadialGrid, motility: Motility, mu: float = 0.0,
                 helmholtz: HelmholtzOperator | None = None):
        if mu < 0:
            raise ValueError("mu must be >= 0")
        self.grid = grid
        self.motility = motility
        self.mu = float(mu)
        self.helmholtz = helmholtz if helmholtz is not None else HelmholtzOperator(grid)

    # -- building blocks ---------------------------------------------------
    def signal(self, u) -> np.ndarray:
        return self.helmholtz.solve(u)

    def initial_state(self, u0) -> SimState:
        u0 = as_field(self.grid, u0, "u0")
        if np.any(u0 < 0):
            raise ValueError("initial density must be nonnegative")
        if not np.any(u0 > 0):
            raise ValueError("initial density vanishes identically")
        u0 = u0.copy()
        return SimState(u=u0, v=self.signal(u0))

    def _guard(self, v):
        if self.motility.singular and np.min(v) < self.motility.s_min:
            raise MotilityDomainError(
                f"min v = {np.min(v):.3g} fell below the motility cutoff {self.motility.s_min:g}")

    def flux(self, u, v, form: str = DIVERGENCE):
        return assemble_flux(self.grid, u, v, self.motility, form)

    def transport(self, u, v, form: str = DIVERGENCE) -> np.ndarray:
        """``div(gamma(v) grad u + u gamma'(v) grad v)`` per cell."""
        sf = self.flux(u, v, form) * self.grid.face_measures
        return np.diff(sf) / self.grid.cell_measures

    def rhs(self, u, v, form: str = DIVERGENCE) -> np.ndarray:
        out = self.transport(u, v, form)
        if self.mu:
            out = out + self.mu * u * (1.0 - u)
        return out

    def explicit_dt_limit(self, v, cfg: SchemeConfig) -> float:
        g, g1, _ = self.motility.eval(v)
        dx = self.grid.dx
        dt = cfg.cfl_safety * dx * dx / (2.0 * float(np.max(g)))
        if cfg.flux_form == UPWIND:
            b = np.max(np.abs(face_average(g1) * face_gradient(self.grid, v)))
            if b > 0:
                dt = min(dt, cfg.cfl_safety * dx / (2.0 * b))
        return dt

    # -- one step ----------------------------------------------------------
    def _semi_implicit(self, state: SimState, dt: float, form: str):
        alpha, beta = face_coefficients(self.grid, state.v, self.motility, form)
        lower, diag, upper = _operator_bands(self.grid, alpha, beta)
        s_mid = self.grid.face_measures[1:-1]
        w = self.grid.cell_measures

        def transport(x):
            sf = np.zeros(self.grid.n_cells + 1)
            sf[1:-1] = (alpha[1:-1] * x[1:] + beta[1:-1] * x[:-1]) * s_mid
            return np.diff(sf) / w

        solve = TridiagonalLU(-dt * lower, 1.0 - dt * diag, -dt * upper)
        u_star = solve(state.u)
        u_star = u_star + solve(state.u - (u_star - dt * transport(u_star)))
        # conservative re-evaluation: the mass change is a telescoping sum of
        # face fluxes rather than a linear-solve residual
        u_new = state.u + dt * transport(u_star)
        return logistic_flow(u_new, self.mu * dt)

    def _heun(self, state: SimState, dt: float, form: str):
        k1 = self.rhs(state.u, state.v, form)
        u1 = state.u + dt * k1
        v1 = self.signal(u1)
        self._guard(v1)
        k2 = self.rhs(u1, v1, form)
        return state.u + 0.5 * dt * (k1 + k2)

    def step(self, state: SimState, cfg: SchemeConfig) -> SimState:
        """Advance one accepted step (retrying with smaller dt when adaptive)."""
        if state.status != RUNNING:
            raise SimulationError(f"cannot step a state with status {state.status!r}")
        self._guard(state.v)
        remaining = cfg.t_end - state.t
        if cfg.adaptive and state.dt_next > 0:
            dt = min(state.dt_next, cfg.dt_max)
        else:
            dt = cfg.dt_init
        if cfg.stepper == EXPLICIT_RK2:
            limit = self.explicit_dt_limit(state.v, cfg)
            if limit < cfg.dt_min:
                return dataclasses.replace(state.copy(), status=DT_COLLAPSE)
            dt = min(dt, limit)
        while True:
            # remainders below 0.1% of dt are merged into the final step
            last = dt >= remaining - 1e-3 * dt
            h = remaining if last else dt
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    if cfg.stepper == SEMI_IMPLICIT:
                        u_new = self._semi_implicit(state, h, cfg.flux_form)
                    else:
                        u_new = self._heun(state, h, cfg.flux_form)
            except LinearSolveError as exc:
                raise SimulationError(f"linear solve failed at t={state.t:.6g}: {exc}") from exc
            if not np.all(np.isfinite(u_new)) or np.max(u_new) > cfg.overflow_cap:
                return dataclasses.replace(state.copy(), status=OVERFLOW)
            v_new = self.signal(u_new)
            dv = float(np.max(np.abs(v_new - state.v)))
            if cfg.adaptive and dv > cfg.max_dv:
                dt = 0.5 * h
                if dt < cfg.dt_min:
                    return dataclasses.replace(state.copy(), status=DT_COLLAPSE)
                continue
            break
        t_new = cfg.t_end if last else state.t + h
        dt_next = cfg.dt_init
        if cfg.adaptive:
            grow = 2.0 if dv == 0 else min(2.0, 0.9 * cfg.max_dv / dv)
            dt_next = min(cfg.dt_max, h * grow)
        return SimState(u=u_new, v=v_new, t=t_new, step=state.step + 1, dt_last=h,
                        status=FINISHED if last else RUNNING, dt_next=dt_next)

    # -- driver -------------------------------------------------------------
    def run(self, cfg: SchemeConfig, u0=None, state: SimState | None = None, hooks=()):
        """Step until ``t_end``, overflow or dt collapse.

        Each hook is called as ``hook(prev, state)`` after every accepted step
        and as ``hook(None, state)`` on the starting state.  Hooks that have a
        ``close(state)`` method get it called even when a step raises.
        Returns ``(final_state, exit_reason)``.
        """
        if (u0 is None) == (state is None):
            raise ValueError("pass exactly one of u0 or state")
        if state is None:
            state = self.initial_state(u0)
        else:
            state = state.copy()
            if state.status == FINISHED and state.t < cfg.t_end:
                state.status = RUNNING
        if state.t >= cfg.t_end and state.status == RUNNING:
            state.status = FINISHED
        for hook in hooks:
            hook(None, state)
        try:
            while state.status == RUNNING:
                prev = state
                state = self.step(prev, cfg)
                if state.status in (OVERFLOW, DT_COLLAPSE):
                    log.warning("run stopped at t=%.6g: %s", state.t, state.status)
                    break
                for hook in hooks:
                    hook(prev, state)
        finally:
            for hook in hooks:
                close = getattr(hook, "close", None)
                if close is not None:
                    close(state)
        return state, state.status
