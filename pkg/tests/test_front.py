import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqgfront import kernels
from sqgfront.errors import InvalidArgument
from sqgfront.front import (
    apply_A, b0_symbol, default_quadrature, diff_quotient, f_shape, f_shape_deriv,
    linear_term, make_quadrature, nonlinear_term, paralin_residual, pv_unit_constant, rhs,
    shifted_rows, split_quadrature,
)
from sqgfront.paradiff import make_cutoff
from sqgfront.spectral import Field, apply_multiplier, dispersive_symbol, make_grid


@pytest.fixture
def grid():
    return make_grid(16 * math.pi, 256)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e-3, 1e-3))
def test_f_shape_small_argument(s):
    series = s * s / 2 - 3 * s ** 4 / 8 + 5 * s ** 6 / 16
    assert abs(f_shape(s) - series) <= 1e-15 * s * s


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50))
def test_f_shape_closed_form(s):
    assert math.isclose(f_shape(s), 1 - 1 / math.sqrt(1 + s * s), rel_tol=1e-9, abs_tol=1e-15)
    assert 0.0 <= f_shape(s) < 1.0


def test_f_shape_derivative():
    s = np.linspace(-3, 3, 13)
    h = 1e-5
    fd = (f_shape(s + h) - f_shape(s - h)) / (2 * h)
    assert np.max(np.abs(fd - f_shape_deriv(s))) < 1e-9


def test_diff_quotient(grid):
    k = 4 * math.pi / grid.L
    f = Field.from_function(grid, lambda x: np.sin(k * x))
    y = -0.3
    dq = diff_quotient(f, y)
    assert np.allclose(dq.values, (np.sin(k * (grid.x + y)) - np.sin(k * grid.x)) / y, atol=1e-13)
    assert np.allclose(diff_quotient(f, y, absolute=True).values, -dq.values)
    with pytest.raises(InvalidArgument):
        diff_quotient(f, 0.0)


def test_quadrature_layout():
    q = make_quadrature(10.0, 64, 2.0)
    assert q.N_y == 64
    assert np.allclose(q.nodes, -q.nodes[::-1])
    assert np.allclose(q.weights, q.weights[::-1])
    assert math.isclose(q.weights.sum(), 20.0, rel_tol=1e-14)
    assert np.all(np.abs(q.nodes) > 0)
    # grading clusters nodes near zero
    pos = q.nodes[q.nodes > 0]
    assert pos[0] < 10.0 / 32 / 4
    # composite midpoint: second order in the number of cells
    errs = [abs(make_quadrature(10.0, n).integrate(lambda y: y ** 2) - 2000 / 3) for n in (64, 128)]
    assert 3.9 < errs[0] / errs[1] < 4.1


def test_quadrature_lorentzian():
    # the truncated integral is 2 arctan(Y_max); pi itself is 0.04 away at Y_max = 50
    val = make_quadrature(50.0, 400, 2.0).integrate(lambda y: 1.0 / (1.0 + y * y))
    assert abs(val - 2 * math.atan(50.0)) < 1e-3


@pytest.mark.parametrize("args", [(0.0, 64, 2.0), (1.0, 15, 2.0), (1.0, 33, 2.0), (1.0, 64, 0.5)])
def test_quadrature_rejects(args):
    with pytest.raises(InvalidArgument):
        make_quadrature(*args)


def test_default_quadrature(grid):
    q = default_quadrature(grid)
    assert q.Y_max == grid.L / 2 and q.N_y % 2 == 0 and q.N_y >= 16


def test_split_quadrature_has_edge_at_one():
    q = split_quadrature(make_quadrature(20.0, 128))
    assert q.split == 1.0 and q.N_y == 128
    inner = np.abs(q.nodes) < 1.0
    assert math.isclose(q.weights[inner].sum(), 2.0, rel_tol=1e-14)
    assert math.isclose(q.weights.sum(), 40.0, rel_tol=1e-14)
    assert split_quadrature(q) is q


def test_shifted_rows_match_spectral_shift(grid):
    f = Field.from_function(grid, lambda x: np.exp(-x ** 2 / 16))
    ys = np.array([-1.5, 0.25, 3.0])
    rows = shifted_rows(f.values, grid.xi_r, ys)
    for r, y in zip(rows, ys):
        assert np.max(np.abs(r - np.exp(-(grid.x + y) ** 2 / 16))) < 1e-12


def test_apply_A_trivial_cases(grid):
    q = make_quadrature(8.0, 64)
    phi = Field.from_function(grid, lambda x: 0.2 * np.exp(-x ** 2))
    const = Field(grid, np.full(grid.N, 3.0))
    assert not np.any(apply_A(Field.zeros(grid), phi, q).values)
    assert np.max(np.abs(apply_A(phi, const, q).values)) < 1e-15
    # A is odd in phi
    assert np.allclose(apply_A(-phi, phi, q).values, apply_A(phi, phi, q).values, atol=1e-16)


def test_apply_A_grid_mismatch(grid):
    q = make_quadrature(8.0, 64)
    a = Field.zeros(grid)
    b = Field.zeros(make_grid(grid.L, 128))
    with pytest.raises(InvalidArgument):
        apply_A(a, b, q)


def test_pv_constant_is_minus_two_gamma():
    c = pv_unit_constant()
    assert abs(c.value + 2 * np.euler_gamma) < 1e-9
    assert max(c.estimates) - min(c.estimates) < 1e-9


def test_b0_vanishes_for_zero(grid):
    q = make_quadrature(8.0, 64)
    assert not np.any(b0_symbol(Field.zeros(grid), q).values)


def test_b0_constant_shift_invariant(grid):
    q = make_quadrature(8.0, 64)
    phi = Field.from_function(grid, lambda x: 0.3 * np.exp(-x ** 2))
    shifted = Field(grid, phi.values + 1.0)
    assert np.allclose(b0_symbol(phi, q).values, b0_symbol(shifted, q).values, atol=1e-14)


def test_rhs_splits_into_linear_and_nonlinear(grid):
    q = make_quadrature(8.0, 64)
    phi = Field.from_function(grid, lambda x: 0.1 * np.exp(-x ** 2))
    total = rhs(phi, q)
    parts = nonlinear_term(phi, q) + linear_term(phi)
    assert np.array_equal(total.values, parts.values)
    lin = apply_multiplier(phi, dispersive_symbol(grid))
    assert np.array_equal(linear_term(phi).values, lin.values)
    with pytest.raises(InvalidArgument):
        nonlinear_term(phi, q, oversample=3)


def test_oversampling_changes_only_aliasing(grid):
    q = make_quadrature(8.0, 64)
    phi = Field.from_function(grid, lambda x: 0.1 * np.exp(-x ** 2 / 16))
    a, b = nonlinear_term(phi, q, 1), nonlinear_term(phi, q, 2)
    assert np.linalg.norm(a.values - b.values) < 1e-6 * np.linalg.norm(a.values)


def test_nonlinear_term_is_cubic(grid):
    q = make_quadrature(8.0, 64)
    phi = Field.from_function(grid, lambda x: 0.01 * np.exp(-x ** 2))
    a = nonlinear_term(phi, q, 2).values
    b = nonlinear_term(phi * 0.5, q, 2).values
    assert np.allclose(b, a / 8, rtol=0, atol=1e-3 * np.max(np.abs(a)))


def test_paralin_residual_grid_mismatch(grid):
    q = make_quadrature(8.0, 64)
    with pytest.raises(InvalidArgument):
        paralin_residual(Field.zeros(grid), Field.zeros(make_grid(grid.L, 128)), q,
                         make_cutoff(1.0))


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not available")
def test_numba_and_numpy_kernels_agree(grid):
    rng = np.random.Generator(np.random.Philox(0))
    phi = rng.standard_normal(grid.N) * 0.1
    v = rng.standard_normal(grid.N)
    q = make_quadrature(8.0, 32)
    ph = shifted_rows(phi, grid.xi_r, q.nodes)
    vs = shifted_rows(v, grid.xi_r, q.nodes)
    fx = kernels.shape_F_np(rng.standard_normal(grid.N))
    for nb, nf, args in (
        (kernels._nonlocal_sum_nb, kernels._nonlocal_sum_np, (ph, phi, vs, v)),
        (kernels._pv_sum_nb, kernels._pv_sum_np, (ph, phi, fx)),
        (kernels._cubic_sum_nb, kernels._cubic_sum_np, (ph, phi)),
    ):
        a, b = np.zeros(grid.N), np.zeros(grid.N)
        nb(*args, q.nodes, q.weights, a)
        nf(*args, q.nodes, q.weights, b)
        assert np.max(np.abs(a - b)) <= 1e-13 * max(1.0, np.max(np.abs(b)))


def test_scalar_kernels_match_vector_twins():
    r = np.linspace(-0.5, 1.5, 41)
    assert np.allclose([kernels.smooth_step(x) for x in r], kernels.smooth_step_np(r), atol=0)
    th = np.linspace(-0.2, 0.2, 41)
    assert np.allclose([kernels.chi_profile(x) for x in th], kernels.chi_profile_np(th), atol=0)
    s = np.linspace(-5, 5, 41)
    assert np.allclose([kernels.shape_F(x) for x in s], kernels.shape_F_np(s), atol=0)
    assert kernels.chi_profile_np(np.array([0.05, 0.1]))[0] == 1.0
    assert kernels.chi_profile_np(np.array([0.1]))[0] == 0.0
