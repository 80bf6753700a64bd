"""Monitored functionals, residuals and bound margins along a trajectory."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import RadialGrid, face_gradient, grad_sq_cells, integrate

BASE_COLUMNS = ("t", "mass", "mass_v", "energy", "dissipation", "entropy",
                "interaction", "grad_norm")
TAIL_COLUMNS = ("u_inf", "v_inf", "v_min")
RESIDUAL_COLUMNS = ("identity_residual", "bound_margin_pte1", "bound_margin_pte3")


def series_columns(alphas=(1.0,), p_values=(2.0,)):
    """CSV column order: base, exp moments, sup norms, L^p norms, residuals."""
    cols = list(BASE_COLUMNS)
    cols += [f"exp_moment_{_tag(a)}" for a in alphas]
    cols += list(TAIL_COLUMNS)
    cols += [f"Lp_{_tag(p)}" for p in p_values]
    cols += list(RESIDUAL_COLUMNS)
    return cols


def _tag(x: float) -> str:
    return repr(float(x))


def xlogx(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = u[pos] * np.log(u[pos])
    return out


def entropy(grid: RadialGrid, u) -> float:
    """``int u log u`` with 0 log 0 = 0."""
    return integrate(grid, xlogx(u))


def interaction(grid: RadialGrid, u, v) -> float:
    return integrate(grid, np.asarray(u) * np.asarray(v))


def grad_norm(grid: RadialGrid, v) -> float:
    """``int |grad v|^2 + v^2``, the squared H^1 norm."""
    v = np.asarray(v)
    return integrate(grid, grad_sq_cells(grid, v) + v * v)


def exp_moment(grid: RadialGrid, v, alpha: float) -> float:
    with np.errstate(over="ignore"):
        return integrate(grid, np.exp(alpha * np.asarray(v)))


def lp_norm(grid: RadialGrid, u, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(u)))
    return integrate(grid, np.abs(u) ** p) ** (1.0 / p)


def energy(grid: RadialGrid, u, v) -> float:
    """``E = int u log u + |grad v|^2/2 + v^2/2 - u v``."""
    u = np.asarray(u)
    v = np.asarray(v)
    dens = xlogx(u) + 0.5 * grad_sq_cells(grid, v) + 0.5 * v * v - u * v
    return integrate(grid, dens)


def _log_mean(a, b):
    """Logarithmic mean (b - a)/(log b - log a), continuous at a == b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = 0.5 * (a + b)
    pos = (a > 0) & (b > 0)
    la = np.log(np.where(pos, a, 1.0))
    lb = np.log(np.where(pos, b, 1.0))
    d = lb - la
    far = pos & (np.abs(d) > 1e-6)
    out[far] = (b[far] - a[far]) / d[far]
    near = pos & ~far
    # series about the midpoint avoids 0/0
    m = np.sqrt(a[near] * b[near])
    out[near] = m * (1.0 + d[near] ** 2 / 24.0)
    out[~pos] = 0.0
    return out


def dissipation(grid: RadialGrid, u, v, motility) -> float:
    """``int u gamma(v) |grad log u - grad v|^2`` evaluated on faces.

    Face weight is the logarithmic mean of ``gamma(v) u``; for gamma = e^{-v}
    this is exactly the rate at which the conservative scheme dissipates the
    discrete energy.  Cells with ``u < 1e-14 max u`` contribute nothing.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    live = u >= 1e-14 * np.max(u)
    logu = np.log(np.where(live, u, 1.0))
    dphi = face_gradient(grid, logu - v)
    gu = motility.gamma(v) * u
    weight = np.zeros(grid.n_cells + 1)
    weight[1:-1] = _log_mean(gu[:-1], gu[1:])
    ok = np.zeros(grid.n_cells + 1, dtype=bool)
    ok[1:-1] = live[:-1] & live[1:]
    dens = np.where(ok, weight * dphi**2, 0.0)
    return float(np.sum(grid.face_measures * grid.dx * dens))


def key_identity_residual(system, prev, state) -> float:
    """Sup norm of ``v_t + gamma(v)u + mu A^{-1}[u^2] - A^{-1}[gamma(v)u + mu u]``.

    ``v_t`` is the forward difference between the two states; every other
    term is evaluated at ``prev``.
    """
    dt = state.t - prev.t
    if dt <= 0:
        raise ValueError("states must be consecutive with positive time step")
    A = system.helmholtz
    mu = system.mu
    gu = system.motility.gamma(prev.v) * prev.u
    r = (state.v - prev.v) / dt + gu - A.solve(gu)
    if mu:
        r = r + mu * A.solve(prev.u**2) - mu * A.solve(prev.u)
    return float(np.max(np.abs(r)))


def pte1_bound(v0, gamma_star, mu, t):
    return v0 * math.exp((gamma_star + mu) * t)


def pte3_bound(v0, gamma_star, mu):
    if mu <= gamma_star:
        return None
    return v0 + mu / (mu - gamma_star)


def check_pte_bounds(trajectory, motility, mu):
    """Worst margins ``bound - v`` over a trajectory of ``(t, v)`` samples.

    The first sample supplies ``v0``; ``v_*`` is the running minimum of v up
    to each sample.  Returns ``(margin_pte1, margin_pte3)`` with the second
    ``None`` when ``mu <= gamma(v_*)`` at every sample.
    """
    it = iter(trajectory)
    t0, v0 = next(it)
    v0 = np.asarray(v0, dtype=float)
    vstar = float(np.min(v0))
    m1 = math.inf
    m3 = None
    for t, v in [(t0, v0), *it]:
        v = np.asarray(v, dtype=float)
        vstar = min(vstar, float(np.min(v)))
        gs = float(motility.gamma(vstar))
        m1 = min(m1, float(np.min(pte1_bound(v0, gs, mu, t - t0) - v)))
        b3 = pte3_bound(v0, gs, mu)
        if b3 is not None:
            m = float(np.min(b3 - v))
            m3 = m if m3 is None else min(m3, m)
    return m1, m3


def energy_positive_variation(energies) -> float:
    """``sum max(E_{k+1} - E_k, 0)`` along a sampled energy series."""
    e = np.asarray(energies, dtype=float)
    return float(np.sum(np.maximum(np.diff(e), 0.0)))


def h1_envelope(times, grad_norms) -> float:
    """``max_t ||v||_{H^1}^2 / (1 + t)``; bounded when growth is at most linear."""
    t = np.asarray(times, dtype=float)
    return float(np.max(np.asarray(grad_norms, dtype=float) / (1.0 + t)))


# -- trend fits ---------------------------------------------------------------

GROWING = "growing"
NOT_GROWING = "not-growing"
INCONCLUSIVE = "inconclusive"
MIN_TREND_SAMPLES = 20


@dataclass
class TrendFit:
    name: str
    slope: float
    intercept: float
    r2: float
    stderr: float
    n: int
    t_start: float
    t_stop: float
    flag: str


def fit_trend(name, t, y, r2_min=0.9, against="t", min_samples=MIN_TREND_SAMPLES) -> TrendFit:
    """Least-squares line of ``y`` against ``t`` (or ``log t``).

    Flags ``growing`` for a positive slope with ``R^2 > r2_min``.  Fewer than
    ``min_samples`` points gives ``inconclusive`` and NaN statistics.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(t) & np.isfinite(y)
    t, y = t[keep], y[keep]
    n = t.size
    if n < min_samples:
        nan = float("nan")
        return TrendFit(name, nan, nan, nan, nan, n,
                        float(t[0]) if n else nan, float(t[-1]) if n else nan, INCONCLUSIVE)
    x = np.log(t) if against == "log_t" else t
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    syy = float(np.sum((y - ym) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 - ss_res / syy if syy > 0 else 0.0
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    flag = GROWING if (slope > 0 and r2 > r2_min) else NOT_GROWING
    return TrendFit(name, slope, intercept, r2, stderr, n, float(t[0]), float(t[-1]), flag)


@dataclass
class BlowupIndicators:
    t: list = field(default_factory=list)
    u_inf: list = field(default_factory=list)
    interaction: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    exp_moment: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows, alpha=None):
        ind = cls()
        for row in rows:
            ind.t.append(row["t"])
            ind.u_inf.append(row["u_inf"])
            ind.interaction.append(row["interaction"])
            ind.grad_norm.append(row["grad_norm"])
            key = None
            if alpha is not None:
                key = f"exp_moment_{_tag(alpha)}"
            else:
                key = next((k for k in row if k.startswith("exp_moment_")), None)
            ind.exp_moment.append(row[key] if key else float("nan"))
        return ind


def blowup_trend(series: BlowupIndicators, window: float = 0.5, against="t", r2_min=0.9):
    """Fit each indicator over the last ``window`` fraction of the time span."""
    t = np.asarray(series.t, dtype=float)
    if t.size == 0:
        cut = np.zeros(0, dtype=bool)
    else:
        t_cut = t[0] + (1.0 - window) * (t[-1] - t[0])
        cut = t >= t_cut
    out = {}
    for name in ("u_inf", "interaction", "grad_norm", "exp_moment"):
        y = np.asarray(getattr(series, name), dtype=float)
        out[name] = fit_trend(name, t[cut], y[cut], r2_min=r2_min, against=against)
    return out


# -- per-run sink ---------------------------------------------------------------

class DiagnosticsSink:
    """Run hook producing one DiagnosticsRecord row every ``every`` steps.

    The running minimum of v (``v_*``) is tracked at every step, not only at
    sampled ones.  Rows go to ``self.rows`` and, if given, to ``writer``
    (anything with ``write_row(dict)`` and ``flush()``), flushed per row.
    """

    def __init__(self, system, every=1, alphas=(1.0,), p_values=(2.0,), writer=None,
                 v0=None, v_star=None, t0=None):
        self.system = system
        self.every = max(int(every), 1)
        self.alphas = tuple(float(a) for a in alphas)
        self.p_values = tuple(float(p) for p in p_values)
        self.columns = series_columns(self.alphas, self.p_values)
        self.writer = writer
        self.rows = []
        self.v0 = None if v0 is None else np.asarray(v0, dtype=float)
        self.v_star = v_star
        self.t0 = t0
        self._last_row_step = None

    def __call__(self, prev, state):
        if self.v0 is None:
            self.v0 = state.v.copy()
            self.t0 = state.t
        vmin = float(np.min(state.v))
        self.v_star = vmin if self.v_star is None else min(self.v_star, vmin)
        if prev is None or state.step % self.every == 0 or state.status != "running":
            self._emit(prev, state)

    def close(self, state):
        if self._last_row_step != state.step and state.status in ("overflow", "dt_collapse"):
            self._emit(None, state)
        if self.writer is not None:
            self.writer.flush()

    def record(self, prev, state) -> dict:
        g = self.system.grid
        m = self.system.motility
        mu = self.system.mu
        u, v = state.u, state.v
        row = {
            "t": state.t,
            "mass": integrate(g, u),
            "mass_v": integrate(g, v),
            "energy": energy(g, u, v),
            "dissipation": dissipation(g, u, v, m),
            "entropy": entropy(g, u),
            "interaction": interaction(g, u, v),
            "grad_norm": grad_norm(g, v),
        }
        for a in self.alphas:
            row[f"exp_moment_{_tag(a)}"] = exp_moment(g, v, a)
        row["u_inf"] = float(np.max(np.abs(u)))
        row["v_inf"] = float(np.max(np.abs(v)))
        row["v_min"] = float(np.min(v))
        for p in self.p_values:
            row[f"Lp_{_tag(p)}"] = lp_norm(g, u, p)
        if prev is not None and state.t > prev.t:
            row["identity_residual"] = key_identity_residual(self.system, prev, state)
        else:
            row["identity_residual"] = float("nan")
        gs = float(m.gamma(self.v_star))
        row["bound_margin_pte1"] = float(np.min(pte1_bound(self.v0, gs, mu, state.t - self.t0) - v))
        b3 = pte3_bound(self.v0, gs, mu)
        row["bound_margin_pte3"] = float("nan") if b3 is None else float(np.min(b3 - v))
        return row

    def _emit(self, prev, state):
        row = self.record(prev, state)
        self.rows.append(row)
        self._last_row_step = state.step
        if self.writer is not None:
            self.writer.write_row(row)
            self.writer.flush()

    def column(self, name):
        return np.array([r[name] for r in self.rows])
