import json
import math

import numpy as np
import pytest

from sqgfront.errors import InvalidArgument, NumericalFailure
from sqgfront.paradiff import (
    MAX_MATRIX_N, _power_norm, apply_Ta, band_noise, choose_M, default_samples, make_cutoff,
    modified_energy, operator_norm, ta_matrix,
)
from sqgfront.spectral import Field, make_grid, sobolev_norm


@pytest.fixture
def grid():
    return make_grid(8 * math.pi, 128)


def test_cutoff_profiles():
    c = make_cutoff(2.0)
    assert c.chi(0.0) == 1.0 and c.chi(0.05) == 1.0 and c.chi(0.1) == 0.0
    hp = c.high_pass(np.array([0.0, 0.5, 1.0, 2.0, 5.0]))
    assert hp[0] == 0.0 and hp[2] == 0.0 and hp[3] == 1.0 and hp[4] == 1.0
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(InvalidArgument):
            make_cutoff(bad)


def test_apply_Ta_matches_matrix(grid):
    rng = np.random.Generator(np.random.Philox(1))
    a = Field(grid, 0.5 + band_noise(grid, None, rng, lo=grid.dxi, hi=1.0).values)
    u = band_noise(grid, None, rng, lo=grid.dxi, hi=grid.nyquist)
    c = make_cutoff(0.5)
    direct = apply_Ta(a, u, c)
    via = ta_matrix(a, c).apply(u)
    assert np.max(np.abs(direct.values - via.values)) < 1e-13


def test_constant_symbol_is_high_pass_multiplication(grid):
    c = make_cutoff(1.0)
    a = Field(grid, np.full(grid.N, 2.5))
    u = Field.from_function(grid, lambda x: np.exp(-x ** 2))
    p = c.grid_high_pass(grid)
    out = apply_Ta(a, u, c)
    expect = Field.from_spectrum(grid, 2.5 * p * p * u.spectrum)
    assert np.max(np.abs(out.values - expect.values)) < 1e-13


def test_matrix_hermitian_for_real_symbol(grid):
    rng = np.random.Generator(np.random.Philox(2))
    for _ in range(5):
        a = Field(grid, rng.uniform(-1, 1) + band_noise(grid, None, rng, lo=grid.dxi, hi=2.0).values)
        assert ta_matrix(a, make_cutoff(0.5)).hermitian_defect() <= 1e-14


def test_matrix_size_guard():
    g = make_grid(8 * math.pi, 2 * MAX_MATRIX_N)
    with pytest.raises(InvalidArgument):
        ta_matrix(Field.zeros(g), make_cutoff(1.0))


def test_power_iteration_matches_dense_norm(grid):
    a = Field(grid, 0.4 * np.exp(-grid.x ** 2))
    c = make_cutoff(0.5)
    dense = np.linalg.norm(ta_matrix(a, c).matrix, 2)
    assert abs(operator_norm(a, c) - dense) <= 1e-6 * dense


def test_power_iteration_failure_reports_last():
    rng = np.random.Generator(np.random.Philox(0))
    # two nearly equal top singular values converge slowly
    m = np.diag([1.0, 1.0 - 1e-12] + list(rng.uniform(0, 0.5, 30)))
    with pytest.raises(NumericalFailure) as info:
        _power_norm(m, rtol=1e-30, max_iter=3)
    assert info.value.last > 0


def test_zero_symbol_norm(grid):
    assert operator_norm(Field.zeros(grid), make_cutoff(1.0)) == 0.0


def test_bound_on_gaussian_symbol(grid):
    a = Field(grid, 0.4 * np.exp(-grid.x ** 2))
    for M in (0.5, 1.0, 2.0):
        assert operator_norm(a, make_cutoff(M)) <= 0.4 * (1 + 1e-8) + 0.4


def test_default_samples_normalized(grid):
    samples = default_samples(grid, 1.0, 3.0, seed=4)
    assert len(samples) == 11
    for u in samples:
        assert math.isclose(sobolev_norm(u, 3.0), 1.0, rel_tol=1e-12)
    again = default_samples(grid, 1.0, 3.0, seed=4)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(samples, again))


def test_band_noise_support(grid):
    rng = np.random.Generator(np.random.Philox(5))
    u = band_noise(grid, 1.0, rng)
    assert math.isclose(u.l2(), 1.0, rel_tol=1e-12)
    a = np.abs(grid.xi)
    assert np.max(np.abs(u.spectrum[(a < 1.0) | (a >= 2.0)])) < 1e-12


def test_choose_M(grid):
    samples = default_samples(grid, 1.0, 3.0, seed=1)
    ch = choose_M(1.0, 1, 3.0, samples)
    assert ch.achieved <= 0.95
    assert ch.trace[-1] == (ch.M, ch.achieved)
    rep = json.loads(ch.to_json())
    assert rep["chosen_M"] == ch.M and rep["samples"] == len(samples)


def test_choose_M_validation(grid):
    samples = default_samples(grid, 1.0, 3.0, seed=1)
    with pytest.raises(InvalidArgument):
        choose_M(1.0, 0, 3.0, samples)
    with pytest.raises(InvalidArgument):
        choose_M(0.5, 1, 3.0, samples)  # samples exceed the radius
    with pytest.raises(InvalidArgument):
        choose_M(1.0, 1, 3.0, [])


def test_choose_M_failure_carries_trace(grid):
    samples = default_samples(grid, 1.0, 3.0, seed=1)
    with pytest.raises(NumericalFailure) as info:
        choose_M(1.0, 1, 3.0, samples, margin=0.99999)
    assert len(info.value.last.trace) > 0


def test_modified_energy_positive_and_quadratic(grid):
    c = make_cutoff(0.25)
    phi = Field(grid, 0.1 * np.exp(-grid.x ** 2))
    rng = np.random.Generator(np.random.Philox(6))
    v = band_noise(grid, 2.0, rng)
    e1 = modified_energy(phi, v, 3.0, c)
    e2 = modified_energy(phi, v * 2.0, 3.0, c)
    assert e1 > 0 and math.isclose(e2, 4 * e1, rel_tol=1e-12)
    # a flat front leaves a positive form
    flat = modified_energy(Field.zeros(grid), v, 3.0, c)
    assert flat > 0
