import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sqgfront.errors import InvalidArgument
from sqgfront.spectral import (
    BandWarning, BoundaryMassWarning, Field, FourierMultiplier, abs_D_power, apply_multiplier,
    derivative, dispersive_symbol, dyadic_bands, export_csv, frequency_envelope,
    hermitian_spectrum, load_field, log_abs_D, lp_project, lp_symbol, make_grid, save_field,
    sobolev_norm, spectral_shift, x_norm, y_norm,
)


@pytest.fixture
def grid():
    return make_grid(8 * math.pi, 256)


def test_grid_layout(grid):
    assert grid.x[0] == -grid.L
    assert np.isclose(grid.dx, 2 * grid.L / grid.N)
    assert np.isclose(grid.xi[1], math.pi / grid.L)
    assert np.isclose(grid.nyquist, math.pi * grid.N / (2 * grid.L))
    assert grid.xi[grid.N // 2] < 0  # fft ordering
    with pytest.raises(ValueError):
        grid.x[0] = 0.0


@pytest.mark.parametrize("L,N", [(1.0, 100), (1.0, 8), (0.0, 64), (-1.0, 64), (math.inf, 64)])
def test_make_grid_rejects(L, N):
    with pytest.raises(InvalidArgument):
        make_grid(L, N)


def test_rescaled_grid(grid):
    g2 = grid.rescaled(2.0)
    assert g2.N == grid.N and g2.L == 2 * grid.L


def test_field_is_immutable_and_finite(grid):
    f = Field(grid, np.ones(grid.N))
    with pytest.raises(ValueError):
        f.values[0] = 2.0
    with pytest.raises(InvalidArgument):
        Field(grid, np.full(grid.N, np.nan))
    with pytest.raises(InvalidArgument):
        Field(grid, np.ones(grid.N + 1))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)))
def test_spectrum_is_exactly_hermitian(vals):
    spec = hermitian_spectrum(vals)
    n = vals.size
    k = np.arange(1, n)
    assert np.array_equal(spec[k], np.conj(spec[n - k]))
    assert spec[0].imag == 0.0


def test_from_spectrum_rejects_complex(grid):
    spec = np.zeros(grid.N, dtype=complex)
    spec[3] = 1.0  # no conjugate partner
    with pytest.raises(InvalidArgument):
        Field.from_spectrum(grid, spec)


def test_derivative_is_spectrally_exact(grid):
    f = Field.from_function(grid, lambda x: np.sin(3 * math.pi * x / grid.L))
    df = apply_multiplier(f, derivative(grid))
    exact = 3 * math.pi / grid.L * np.cos(3 * math.pi * grid.x / grid.L)
    assert np.max(np.abs(df.values - exact)) < 1e-12


def test_multipliers_are_hermitian(grid):
    for m in (derivative(grid), log_abs_D(grid), abs_D_power(grid, 0.7), dispersive_symbol(grid)):
        assert m.hermitian()
    assert dispersive_symbol(grid).symbol[grid.N // 2] == 0.0


def test_multiplier_product(grid):
    m = derivative(grid) * derivative(grid)
    keep = np.arange(grid.N) != grid.N // 2  # Nyquist is dropped for odd symbols
    assert np.allclose(m.symbol[keep], -grid.xi[keep] ** 2)


def test_multiplier_detects_non_hermitian(grid):
    sym = np.zeros(grid.N, dtype=complex)
    sym[1] = 1j
    assert not FourierMultiplier(grid, sym, "bad").hermitian()


def test_spectral_shift(grid):
    k = 5 * math.pi / grid.L
    f = Field.from_function(grid, lambda x: np.cos(k * x))
    out = spectral_shift(f, 0.37)
    assert np.max(np.abs(out.values - np.cos(k * (grid.x + 0.37)))) < 1e-12
    full = spectral_shift(f, 2 * grid.L)
    assert np.max(np.abs(full.values - f.values)) < 1e-12


def test_littlewood_paley_partition(grid):
    total = sum(lp_symbol(grid, lam) for lam in dyadic_bands(grid))
    nz = grid.xi != 0
    assert np.max(np.abs(total[nz] - 1.0)) < 1e-14
    for lam in (1.0, 4.0):
        sym = lp_symbol(grid, lam)
        a = np.abs(grid.xi)
        assert np.all(sym[(a <= lam / 2) | (a >= 2 * lam)] == 0.0)


def test_lp_project_errors(grid):
    f = Field.from_function(grid, np.cos)
    with pytest.raises(InvalidArgument):
        lp_project(f, 3.0)
    with pytest.warns(BandWarning):
        out = lp_project(f, 4 * grid.nyquist)
    assert not np.any(out.values)


def test_sobolev_norm(grid):
    f = Field.from_function(grid, lambda x: np.exp(-x ** 2))
    assert np.isclose(sobolev_norm(f, 0.0), f.l2(), rtol=1e-13)
    assert np.isclose(f.l2() ** 2, math.sqrt(math.pi / 2), rtol=1e-12)
    assert sobolev_norm(f, 2.0) > sobolev_norm(f, 1.0)
    with pytest.raises(InvalidArgument):
        sobolev_norm(f, 11.0)


def test_y_norm(grid):
    assert y_norm(Field.zeros(grid), 0.1) == 0.0
    f = Field.from_function(grid, lambda x: np.exp(-x ** 2))
    assert y_norm(f, 0.1) > 0
    for d in (0.0, 0.25, -0.1):
        with pytest.raises(InvalidArgument):
            y_norm(f, d)


def test_x_norm_boundary_warning(grid):
    edge = Field.from_function(grid, lambda x: np.exp(-(np.abs(x) - grid.L) ** 2))
    with pytest.warns(BoundaryMassWarning):
        x_norm(edge, 0.0, 1.0)
    centre = Field.from_function(grid, lambda x: np.exp(-x ** 2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        val = x_norm(centre, 1.0, 1.0)
    assert val > sobolev_norm(centre, 1.0)
    with pytest.raises(InvalidArgument):
        x_norm(centre, -1.0, 1.0)


def test_frequency_envelope(grid):
    f = Field.from_function(grid, lambda x: np.exp(-x ** 2) * np.cos(2 * x))
    env = frequency_envelope(f, 2.0, 0.5)
    assert env.is_slowly_varying()
    assert np.all(env.values >= env.band_norms)
    zero = frequency_envelope(Field.zeros(grid), 2.0, 0.5)
    assert np.all(zero.values > 0) and zero.is_slowly_varying()
    with pytest.raises(InvalidArgument):
        frequency_envelope(f, 2.0, 1.5)


def test_save_load_roundtrip(tmp_path, grid):
    f = Field.from_function(grid, lambda x: np.sin(x) * np.exp(-x ** 2))
    path = save_field(tmp_path / "snap", f, time=1.25)
    g, t = load_field(path)
    assert t == 1.25 and g.grid == grid
    assert np.array_equal(g.values, f.values)
    meta = json.loads((tmp_path / "snap.json").read_text())
    assert meta == {"L": grid.L, "N": grid.N, "time": 1.25}
    assert (tmp_path / "snap.bin").stat().st_size == 8 * grid.N


def test_export_csv(tmp_path, grid):
    f = Field.from_function(grid, np.cos)
    export_csv(tmp_path / "f.csv", f)
    data = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], f.values)


def test_field_arithmetic(grid):
    a = Field.from_function(grid, np.cos)
    b = Field.from_function(grid, np.sin)
    assert np.allclose((a + b - a).values, b.values)
    assert np.allclose((-(a * 2.0)).values, -2 * a.values)
    other = Field(make_grid(grid.L, 128), np.zeros(128))
    with pytest.raises(InvalidArgument):
        a + other
