"""Uniform cell-centred grids on an interval or a radially symmetric disk.

Every integral, gradient and divergence in the package goes through the
arrays stored here, so the conservation properties of the schemes reduce
to the telescoping of face fluxes weighted by ``face_measures``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTERVAL = "interval"
DISK = "disk"
GEOMETRIES = (INTERVAL, DISK)

MIN_CELLS = 2


class ConfigurationError(ValueError):
    """Raised for invalid user-supplied parameters."""


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Cell-centred discretisation of ``[0, L]`` or of ``B_R(0)`` in polar radius.

    ``cell_measures`` are exact cell lengths/areas, ``face_measures`` the
    length of each face (``2*pi*xi`` on the disk, ``1`` on the interval).
    ``conductance`` is ``face_measures / dx`` with both boundary faces set to
    zero, which is how the homogeneous Neumann condition enters every stencil.
    """

    geometry: str
    extent: float
    n_cells: int
    dx: float = field(init=False)
    cell_centers: np.ndarray = field(init=False, repr=False)
    face_positions: np.ndarray = field(init=False, repr=False)
    cell_measures: np.ndarray = field(init=False, repr=False)
    face_measures: np.ndarray = field(init=False, repr=False)
    conductance: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"unknown geometry {self.geometry!r}")
        if int(self.n_cells) != self.n_cells or self.n_cells < MIN_CELLS:
            raise ConfigurationError(f"n_cells must be an integer >= {MIN_CELLS}, got {self.n_cells}")
        if not np.isfinite(self.extent) or self.extent <= 0:
            raise ConfigurationError(f"extent must be positive, got {self.extent}")
        n = int(self.n_cells)
        dx = self.extent / n
        faces = np.arange(n + 1) * dx
        faces[-1] = self.extent
        centers = (np.arange(n) + 0.5) * dx
        if self.geometry == DISK:
            # pi*(x_{i+1/2}^2 - x_{i-1/2}^2) == 2*pi*x_i*dx on a uniform grid
            measures = 2.0 * np.pi * centers * dx
            face_meas = 2.0 * np.pi * faces
        else:
            measures = np.full(n, dx)
            face_meas = np.ones(n + 1)
        cond = face_meas / dx
        cond[0] = 0.0
        cond[-1] = 0.0
        object.__setattr__(self, "n_cells", n)
        object.__setattr__(self, "extent", float(self.extent))
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "cell_centers", _frozen(centers))
        object.__setattr__(self, "face_positions", _frozen(faces))
        object.__setattr__(self, "cell_measures", _frozen(measures))
        object.__setattr__(self, "face_measures", _frozen(face_meas))
        object.__setattr__(self, "conductance", _frozen(cond))

    @property
    def volume(self) -> float:
        """|Omega|: ``L`` for the interval, ``pi R^2`` for the disk."""
        if self.geometry == DISK:
            return np.pi * self.extent**2
        return self.extent

    def descriptor(self) -> dict:
        return {"geometry": self.geometry, "extent": self.extent, "n_cells": self.n_cells}

    def __eq__(self, other):
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash((self.geometry, self.extent, self.n_cells))


def build_grid(geometry: str, n_cells: int, extent: float = 1.0) -> RadialGrid:
    return RadialGrid(geometry=geometry, extent=extent, n_cells=n_cells)


def as_field(grid: RadialGrid, values, name: str = "field") -> np.ndarray:
    """Validate ``values`` as a finite cell field on ``grid``."""
    f = np.asarray(values, dtype=float)
    if f.ndim == 0:
        f = np.full(grid.n_cells, float(f))
    if f.shape != (grid.n_cells,):
        raise ValueError(f"{name} has shape {f.shape}, expected ({grid.n_cells},)")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def integrate(grid: RadialGrid, f) -> float:
    return float(np.dot(grid.cell_measures, as_field(grid, f)))


def inner(grid: RadialGrid, f, g) -> float:
    """Weighted inner product ``<f, g>_w``."""
    return float(np.dot(grid.cell_measures, np.asarray(f) * np.asarray(g)))


def face_gradient(grid: RadialGrid, f) -> np.ndarray:
    """Central differences at the ``n+1`` faces; zero on both boundary faces."""
    g = np.zeros(grid.n_cells + 1)
    g[1:-1] = np.diff(f) / grid.dx
    return g


def face_average(f) -> np.ndarray:
    """Arithmetic mean of neighbouring cells at faces (boundary faces copy the cell)."""
    f = np.asarray(f, dtype=float)
    out = np.empty(f.size + 1)
    out[1:-1] = 0.5 * (f[:-1] + f[1:])
    out[0] = f[0]
    out[-1] = f[-1]
    return out


def divergence(grid: RadialGrid, flux) -> np.ndarray:
    """Finite-volume divergence of a face flux.

    Boundary faces carry no flux whatever ``flux`` holds there (Neumann).
    """
    sf = np.asarray(flux, dtype=float) * grid.face_measures
    sf[0] = 0.0
    sf[-1] = 0.0
    return np.diff(sf) / grid.cell_measures


def laplacian(grid: RadialGrid, f) -> np.ndarray:
    return divergence(grid, face_gradient(grid, f))


def grad_sq_cells(grid: RadialGrid, f) -> np.ndarray:
    """|grad f|^2 per cell: the mean of the squared gradients on its two faces.

    On a uniform grid ``sum(w * grad_sq_cells)`` equals the face form
    ``sum_f s_f dx g_f^2`` exactly, i.e. the discrete Dirichlet energy.
    """
    g2 = face_gradient(grid, f) ** 2
    return 0.5 * (g2[:-1] + g2[1:])
