import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemolab.elliptic import (HelmholtzOperator, LinearSolveError, min_comparison_check,
                               solve_tridiagonal, tridiagonal_bands)
from chemolab.grid import build_grid, inner, integrate
from chemolab.motility import Motility

N = 48
GRID = build_grid("disk", N)
OP = HelmholtzOperator(GRID)
fields = arrays(np.float64, N, elements=st.floats(-1e3, 1e3, allow_nan=False))
nonneg = arrays(np.float64, N, elements=st.floats(0, 1e3, allow_nan=False))


@pytest.mark.parametrize("c", [0.0, 1.0, -2.5, 1e6])
def test_constants_are_fixed_points(c):
    for geometry in ("disk", "interval"):
        g = build_grid(geometry, 1024)
        out = HelmholtzOperator(g).solve(np.full(1024, c))
        assert np.max(np.abs(out - c)) <= 1e-12 * max(abs(c), 1)


def test_manufactured_solution_second_order():
    errs = []
    for n in (128, 256, 512, 1024):
        g = build_grid("disk", n)
        x = g.cell_centers
        f = (1 + math.pi**2) * np.cos(math.pi * x) + math.pi * np.sin(math.pi * x) / x
        errs.append(np.max(np.abs(HelmholtzOperator(g).solve(f) - np.cos(math.pi * x))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.4) & (ratios <= 4.6)), ratios


def test_operator_structure():
    lower, diag, upper = tridiagonal_bands(GRID)
    A = np.diag(diag + 1) + np.diag(lower, -1) + np.diag(upper, 1)
    # row sums one, strictly diagonally dominant, w-symmetric
    assert np.allclose(A.sum(axis=1), 1.0, atol=1e-12 * np.max(diag))
    off = np.abs(A).sum(axis=1) - np.abs(np.diag(A))
    assert np.all(np.abs(np.diag(A)) > off)
    W = np.diag(GRID.cell_measures)
    assert np.allclose(W @ A, (W @ A).T, rtol=1e-13, atol=1e-13 * np.max(np.abs(W @ A)))


def test_apply_inverts_solve(rng):
    f = rng.normal(size=N)
    assert np.allclose(OP.apply(OP.solve(f)), f, atol=1e-12)


@settings(max_examples=200)
@given(fields)
def test_mean_preservation(f):
    scale = integrate(GRID, np.abs(f)) + 1e-300
    assert abs(integrate(GRID, OP.solve(f)) - integrate(GRID, f)) <= 1e-12 * scale


@settings(max_examples=200)
@given(nonneg)
def test_positivity(f):
    assert np.min(OP.solve(f)) >= -1e-13 * np.max(f)


@settings(max_examples=200)
@given(fields, fields)
def test_self_adjoint(f, g):
    a, b = inner(GRID, OP.solve(f), g), inner(GRID, f, OP.solve(g))
    scale = inner(GRID, np.abs(OP.solve(f)), np.abs(g)) + inner(GRID, np.abs(f), np.abs(OP.solve(g)))
    assert abs(a - b) <= 1e-11 * (scale + 1e-300)


def test_comparison_simple_cases(rng):
    f2 = rng.uniform(0, 1, N)
    assert min_comparison_check(OP, np.zeros(N), f2)
    v = OP.solve(f2)
    u = rng.uniform(0, 5, N)
    m = Motility("exp")
    assert min_comparison_check(OP, m.gamma(v) * u, m.gamma(np.min(v)) * u)


def test_comparison_random_pairs(rng):
    for _ in range(1000):
        scale = 10 ** rng.uniform(-3, 3)
        f2 = rng.uniform(0, scale, N)
        f1 = f2 * rng.uniform(0, 1, N)
        assert min_comparison_check(OP, f1, f2)


def test_comparison_detects_violation():
    f1 = np.ones(N)
    f2 = np.zeros(N)
    assert not min_comparison_check(OP, f1, f2)


def test_solve_rejects_bad_input():
    with pytest.raises(ValueError):
        OP.solve(np.ones(N + 1))
    bad = np.ones(N)
    bad[0] = np.inf
    with pytest.raises(ValueError):
        OP.solve(bad)


def test_tridiagonal_singular_raises():
    with pytest.raises(LinearSolveError):
        solve_tridiagonal(np.zeros(2), np.zeros(3), np.zeros(2), np.ones(3))
