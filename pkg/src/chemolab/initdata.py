"""Initial data: standard profiles and the super-critical concentration family."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .diagnostics import energy, entropy, interaction
from .elliptic import HelmholtzOperator
from .grid import DISK, ConfigurationError, RadialGrid, integrate

log = logging.getLogger(__name__)

# largest accepted drop of ubar between the axis and the first cell centre
MAX_FIRST_CELL_DROP = 0.5


def ubar(lam, xi):
    """Concentration profile ``8 lam^2 / (1 + lam^2 xi^2)^2``."""
    xi = np.asarray(xi, dtype=float)
    return 8.0 * lam**2 / (1.0 + (lam * xi) ** 2) ** 2


def ubar_ball_mass(lam, ell):
    """Mass of ``ubar`` in the disk of radius ``ell``."""
    q = (lam * ell) ** 2
    return 8.0 * math.pi * q / (1.0 + q)


def ubar_cell_average(grid: RadialGrid, lam):
    """Exact cell averages of ``ubar`` on a disk grid.

    Point values at cell centres misrepresent the mass of the peak as soon as
    ``lam dx`` is O(1); averages keep the discrete mass of the profile exact.
    """
    faces = grid.face_positions
    q = (lam * faces) ** 2
    ball = 8.0 * math.pi * q / (1.0 + q)
    return np.diff(ball) / grid.cell_measures


def bump(r, r1, xi):
    """Radial cutoff: 1 on [0, r1], 0 on [r, inf), quintic smoothstep between."""
    if not 0 < r1 < r:
        raise ValueError("need 0 < r1 < r")
    xi = np.asarray(xi, dtype=float)
    s = np.clip((xi - r1) / (r - r1), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def f_lambda(lam, r1):
    return 1.0 - 1.0 / (1.0 + (lam * r1) ** 2)


@dataclass(frozen=True)
class BlowupRecipe:
    Lambda: float
    lam: float
    r: float = 0.5
    r1: float = 0.25

    def __post_init__(self):
        if not self.Lambda > 8 * math.pi:
            raise ConfigurationError(f"Lambda={self.Lambda} must exceed 8*pi")
        q = self.Lambda / (4 * math.pi)
        if abs(q - round(q)) < 1e-9:
            raise ConfigurationError(f"Lambda={self.Lambda} lies in 4*pi*N")
        if self.lam < 1:
            raise ConfigurationError("lambda must be >= 1")
        if not 0 < self.r1 < self.r:
            raise ConfigurationError("need 0 < r1 < r")

    def a_bracket(self):
        """``(Lambda/8pi, Lambda/(8pi f(1)))``, the admissible amplitude range."""
        lo = self.Lambda / (8 * math.pi)
        return lo, lo / f_lambda(1.0, self.r1)


def required_cells(lam, extent):
    """Smallest ``n`` whose first cell centre sees at most a 50% drop of ubar."""
    # ubar(dx/2)/ubar(0) = (1 + (lam dx/2)^2)^-2 >= 1/2
    x = math.sqrt(math.sqrt(1.0 / (1.0 - MAX_FIRST_CELL_DROP)) - 1.0)
    return int(math.ceil(lam * extent / (2.0 * x)))


def first_cell_drop(grid: RadialGrid, lam):
    return 1.0 - float(ubar(lam, grid.cell_centers[0]) / ubar(lam, 0.0))


def construct_blowup(recipe: BlowupRecipe, grid: RadialGrid, helmholtz: HelmholtzOperator | None = None):
    """``u0 = a ubar_lam phi_{r,r1}`` with discrete mass exactly Lambda; ``v0 = A^{-1} u0``.

    Returns ``(u0, v0, a)``.
    """
    if grid.geometry != DISK:
        raise ConfigurationError("the concentration family lives on a disk")
    if recipe.r >= grid.extent:
        raise ConfigurationError(f"cutoff radius r={recipe.r} must be < R={grid.extent}")
    if first_cell_drop(grid, recipe.lam) > MAX_FIRST_CELL_DROP:
        need = required_cells(recipe.lam, grid.extent)
        raise ConfigurationError(
            f"lambda={recipe.lam:g} is under-resolved on {grid.n_cells} cells; need n_cells >= {need}")
    xi = grid.cell_centers
    profile = ubar_cell_average(grid, recipe.lam) * bump(recipe.r, recipe.r1, xi)
    a = recipe.Lambda / integrate(grid, profile)
    u0 = a * profile
    u0 *= recipe.Lambda / integrate(grid, u0)
    lo, hi = recipe.a_bracket()
    if not lo < a < hi:
        raise ConfigurationError(f"amplitude a={a:.6g} outside ({lo:.6g}, {hi:.6g})")
    op = helmholtz if helmholtz is not None else HelmholtzOperator(grid)
    return u0, op.solve(u0), a


@dataclass
class AsymptoticsReport:
    Lambda: float
    lambdas: list
    a: list
    entropy: list
    interaction: list
    energy: list
    excluded: list
    entropy_slope: float
    interaction_slope: float
    energy_slope: float
    entropy_bound: float
    interaction_bound: float
    energy_bound: float
    delta: float

    @property
    def entropy_ok(self):
        return self.entropy_slope <= self.entropy_bound

    @property
    def interaction_ok(self):
        return self.interaction_slope >= self.interaction_bound

    @property
    def energy_ok(self):
        return self.energy_slope <= self.energy_bound

    def as_dict(self):
        return {
            "Lambda": self.Lambda,
            "a_mean": float(np.mean(self.a)),
            "entropy_slope": self.entropy_slope,
            "interaction_slope": self.interaction_slope,
            "energy_slope": self.energy_slope,
            "entropy_bound": self.entropy_bound,
            "interaction_bound": self.interaction_bound,
            "energy_bound": self.energy_bound,
        }


def verify_construction_asymptotics(Lambda, lambdas, grid: RadialGrid, helmholtz=None,
                                    r=0.5, r1=0.25, delta=0.05) -> AsymptoticsReport:
    """Fit entropy, interaction and energy of the family against log(lambda).

    Predicted envelopes: entropy slope <= 16 a pi (1 + delta), interaction
    slope >= 32 pi a^2 (1 - delta), energy slope <= -2 Lambda (Lambda/8pi - 1).
    Under-resolved lambdas are dropped from the fit with a warning.
    """
    op = helmholtz if helmholtz is not None else HelmholtzOperator(grid)
    kept, a_s, ent, inter, en, excluded = [], [], [], [], [], []
    for lam in lambdas:
        recipe = BlowupRecipe(Lambda, lam, r, r1)
        try:
            u0, v0, a = construct_blowup(recipe, grid, op)
        except ConfigurationError as exc:
            log.warning("excluding lambda=%g from the fit: %s", lam, exc)
            excluded.append(lam)
            continue
        kept.append(lam)
        a_s.append(a)
        ent.append(entropy(grid, u0))
        inter.append(interaction(grid, u0, v0))
        en.append(energy(grid, u0, v0))
    if len(kept) < 2:
        raise ConfigurationError("need at least two resolvable lambda values")
    x = np.log(np.asarray(kept, dtype=float))
    if x.max() - x.min() < 2 * math.log(10) - 1e-9:
        log.warning("lambda range spans fewer than two decades")

    def slope(y):
        return float(np.polyfit(x, np.asarray(y), 1)[0])

    a_mean = float(np.mean(a_s))
    return AsymptoticsReport(
        Lambda=Lambda, lambdas=kept, a=a_s, entropy=ent, interaction=inter, energy=en,
        excluded=excluded,
        entropy_slope=slope(ent), interaction_slope=slope(inter), energy_slope=slope(en),
        entropy_bound=16 * a_mean * math.pi * (1 + delta),
        interaction_bound=32 * math.pi * a_mean**2 * (1 - delta),
        energy_bound=-2 * Lambda * (Lambda / (8 * math.pi) - 1),
        delta=delta,
    )


# -- standard profiles -----------------------------------------------------------

PROFILE_KINDS = ("constant", "gaussian_bump", "perturbed")


def gaussian_bump_mass(grid: RadialGrid, amp, width):
    """Closed-form mass of ``amp exp(-(xi/width)^2)`` on the grid's domain."""
    R = grid.extent
    if grid.geometry == DISK:
        return amp * math.pi * width**2 * (1.0 - math.exp(-(R / width) ** 2))
    return amp * width * math.sqrt(math.pi) / 2.0 * erf(R / width)


def standard_profile(kind, grid: RadialGrid, c=1.0, amp=1.0, width=0.3, eps=0.0) -> np.ndarray:
    """``constant`` c; ``gaussian_bump`` amp e^{-(xi/width)^2};
    ``perturbed`` c + eps cos(pi xi / R), the first radial Neumann-compatible mode.
    """
    xi = grid.cell_centers
    if kind == "constant":
        if c <= 0:
            raise ValueError("constant must be positive")
        return np.full(grid.n_cells, float(c))
    if kind == "gaussian_bump":
        if amp <= 0 or width <= 0:
            raise ValueError("amp and width must be positive")
        return amp * np.exp(-((xi / width) ** 2))
    if kind == "perturbed":
        if c <= 0 or eps < 0:
            raise ValueError("need c > 0 and eps >= 0")
        if eps > c:
            raise ValueError("eps > c would make the profile negative")
        u = c + eps * np.cos(np.pi * xi / grid.extent)
        return u
    raise ValueError(f"unknown profile kind {kind!r}")


def rescale_mass(grid: RadialGrid, u, mass):
    """Scale ``u`` so that its discrete integral equals ``mass``."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    return u * (mass / integrate(grid, u))
