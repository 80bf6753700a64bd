import math

import numpy as np
import pytest

from chemolab.dynamics import ChemotaxisSystem, SchemeConfig
from chemolab.elliptic import HelmholtzOperator
from chemolab.grid import build_grid, integrate
from chemolab.motility import Motility
from chemolab.steady import (constant_branch_energy, continuation_sweep, mean_field_density,
                             newton_steady, steady_residual)


@pytest.fixture(scope="module")
def disk():
    g = build_grid("disk", 256)
    return g, HelmholtzOperator(g)


def test_constant_from_flat_guess(disk):
    g, op = disk
    e = newton_steady(math.pi, g, np.full(g.n_cells, 0.9), op)
    assert e.converged and e.residual < 1e-10
    assert np.max(np.abs(e.v - 1.0)) < 1e-10


def test_constant_from_nearby_guess(disk):
    g, op = disk
    e = newton_steady(2 * math.pi, g, 2 + 0.05 * np.cos(np.pi * g.cell_centers), op)
    assert e.converged
    assert np.max(np.abs(e.v - 2.0)) < 1e-10


def test_entry_invariants(disk):
    g, op = disk
    e = newton_steady(7 * math.pi, g, 7 + 0.5 * np.cos(np.pi * g.cell_centers), op)
    assert e.converged and np.isfinite(e.energy)
    assert np.max(np.abs(steady_residual(op, e.v, 7 * math.pi))) < 1e-10
    assert integrate(g, e.u) == pytest.approx(7 * math.pi, rel=1e-12)
    assert np.array_equal(e.u, mean_field_density(g, e.v, 7 * math.pi))


def test_nonconstant_state_above_bifurcation(disk):
    g, op = disk
    Lam = 60.0
    e = newton_steady(Lam, g, Lam / math.pi + 3 * np.cos(np.pi * g.cell_centers), op)
    assert e.converged
    assert e.v_max - np.min(e.v) > 1.0
    # the floor in the Newton tolerance is set by roundoff in the discrete Laplacian
    assert e.residual <= max(1e-10, 4 * np.finfo(float).eps * e.v_max / g.dx**2)
    assert e.energy < constant_branch_energy(g, Lam)


def test_steady_states_are_stationary(disk):
    g, op = disk
    s = ChemotaxisSystem(g, Motility("exp"), 0.0, op)
    for Lam, guess in [(7 * math.pi, 7.0), (60.0, 60 / math.pi + 3 * np.cos(np.pi * g.cell_centers))]:
        e = newton_steady(Lam, g, np.broadcast_to(guess, g.cell_centers.shape).copy(), op)
        st, _ = s.run(SchemeConfig(dt_init=1e-3, dt_max=1e-3, t_end=1.0), u0=e.u)
        assert np.max(np.abs(st.u - e.u)) < 1e-6


def test_constant_branch_matches_closed_form(disk):
    g, op = disk
    branch = continuation_sweep(math.pi, 3 * math.pi, 10, g, op)
    assert len(branch.entries) == 11 and not branch.gaps
    for e in branch.entries:
        c = e.Lambda / math.pi
        assert e.converged
        assert e.energy == pytest.approx(math.pi * (c * math.log(c) - c * c / 2), abs=1e-8)
    assert branch.best_energy() == min(e.energy for e in branch.entries)


def test_sweep_is_deterministic(disk):
    g, op = disk
    a = continuation_sweep(40.0, 70.0, 6, g, op, v_guess=40 / math.pi + np.cos(np.pi * g.cell_centers))
    b = continuation_sweep(40.0, 70.0, 6, g, op, v_guess=40 / math.pi + np.cos(np.pi * g.cell_centers))
    for x, y in zip(a.entries, b.entries):
        assert np.array_equal(x.v, y.v) and x.energy == y.energy


def test_constant_branch_energy_formula():
    g = build_grid("disk", 8)
    assert constant_branch_energy(g, math.pi) == pytest.approx(-math.pi / 2)
