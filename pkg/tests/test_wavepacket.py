import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from sqgfront.errors import InvalidArgument
from sqgfront.evolution import linear_propagator
from sqgfront.front import make_quadrature
from sqgfront.spectral import Field, apply_multiplier, make_grid
from sqgfront.wavepacket import (
    ADMISSIBLE_CONST, ProfileRecord, a_prime, a_second, a_symbol, band_velocities, bump,
    build_packet, cubic_Q, cubic_Q_function, decay_report, dispersion_point, extract_profiles,
    fit_scattering, gamma_profile, phase, q_constant, xi_of_v,
)


@settings(max_examples=50, deadline=None)
@given(st.floats(-12, 12))
def test_dispersion_point_identities(v):
    pt = dispersion_point(v)
    assert math.isclose(float(a_prime(pt.xi)), v, abs_tol=1e-12)
    assert math.isclose(pt.phase, float(phase(v)), rel_tol=1e-13)
    assert math.isclose(pt.phase, -2 * pt.xi, rel_tol=1e-13)
    assert math.isclose(pt.a2 * pt.xi, -2.0, rel_tol=1e-14)
    assert pt.xi < 0


def test_symbol_derivatives():
    xi = np.linspace(0.3, 5.0, 9)
    h = 1e-6
    assert np.allclose((a_symbol(xi + h) - a_symbol(xi - h)) / (2 * h), a_prime(xi), atol=1e-8)
    assert np.allclose((a_prime(xi + h) - a_prime(xi - h)) / (2 * h), a_second(xi), atol=1e-8)


def test_band_velocities():
    vs = band_velocities(2.0, 16)
    lo, hi = float(a_prime(4.0)), float(a_prime(2.0))
    assert vs.size == 16 and np.all(np.diff(vs) > 0)
    assert lo < vs[0] and vs[-1] < hi
    assert np.allclose(np.diff(vs), (hi - lo) / 16)
    xi = xi_of_v(vs)
    assert np.all((-4.0 < xi) & (xi < -2.0))


def test_bump_unit_mass_and_support():
    y = np.linspace(-1.2, 1.2, 240001)
    b = bump(y)
    assert np.all(b[np.abs(y) >= 1] == 0) and np.all(b >= 0)
    assert math.isclose(trapezoid(b, y), 1.0, rel_tol=1e-9)


def test_build_packet_geometry():
    g = make_grid(64 * math.pi, 4096)
    pk = build_packet(-4.0, 10.0, g)
    supp = g.x[np.abs(pk.values) > 0]
    assert math.isclose(pk.width, math.sqrt(10.0 * pk.point.a2))
    assert supp.min() >= -40.0 - pk.width and supp.max() <= -40.0 + pk.width
    assert not pk.values.flags.writeable
    with pytest.raises(InvalidArgument):
        build_packet(-4.0, 0.5, g)
    with pytest.raises(InvalidArgument):
        build_packet(-4.0, 100.0, g)


def test_profile_of_linear_packet_tracks_velocity():
    g = make_grid(64 * math.pi, 4096)
    phi0 = Field.from_function(g, lambda x: 0.01 * np.exp(-x ** 2) * np.cos(2 * x))
    vs = band_velocities(2.0, 8)
    snaps = [(t, apply_multiplier(phi0, linear_propagator(g, t))) for t in (8.0, 16.0)]
    rec = extract_profiles(snaps, 2.0, vs)
    G = rec.matrix()
    assert G.shape == (2, 8)
    assert np.all(np.array(rec.admissible)[:, :] == (np.array(rec.times)[:, None] >= ADMISSIBLE_CONST / 2.0))
    # the band-summed modulus is close to constant along the linear flow
    full = extract_profiles(snaps, 2.0, vs, project=False).matrix()
    k = np.argmax(np.abs(full[0]))
    assert abs(abs(full[1, k]) / abs(full[0, k]) - 1.0) < 0.1


def test_gamma_profile_flags():
    g = make_grid(32 * math.pi, 1024)
    phi = Field.from_function(g, lambda x: np.exp(-x ** 2))
    vals, flags = gamma_profile(phi, 2.0, 1.0, band_velocities(1.0, 4))
    assert vals.dtype == np.complex128 and not flags.any()
    _, flags = gamma_profile(phi, 8.0, 1.0, band_velocities(1.0, 4))
    assert flags.all()


def test_profile_csv(tmp_path):
    rec = ProfileRecord(1.0, np.array([-3.0, -2.5]), [8.0], [np.array([1 + 2j, -1j])], [np.ones(2, bool)])
    rec.to_csv(tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["t", "v", "re", "im", "abs"]
    assert len(rows) == 3 and float(rows[1][4]) == abs(1 + 2j)


def test_cubic_Q_of_plane_wave_is_q():
    q = make_quadrature(2000.0, 2 ** 17, 2.0)
    x = np.array([0.0, 0.7])
    out = cubic_Q_function(lambda z: np.exp(1j * z), x, q)
    assert np.allclose(out / np.exp(1j * x), q_constant(1.0), rtol=1e-4)


def test_cubic_Q_field_matches_function_form():
    g = make_grid(16 * math.pi, 512)
    f = lambda z: 0.3 * np.exp(-z ** 2)  # noqa: E731
    phi = Field.from_function(g, f)
    q = make_quadrature(8.0, 128)
    a = cubic_Q(phi, q).values
    b = cubic_Q_function(f, g.x, q).real
    assert np.max(np.abs(a - b)) < 1e-10


def test_q_constant_symmetries():
    q1 = q_constant(1.0)
    assert abs(q1.imag) < 1e-10
    assert abs(q_constant(-1.0) - np.conj(q1)) < 1e-10
    assert abs(q_constant(2.0) / q1 - 4.0) < 1e-6
    with pytest.raises(InvalidArgument):
        q_constant(0.0)


def _synthetic(vs, times, W, slope):
    rec = ProfileRecord(1.0, vs)
    for t in times:
        rec.times.append(t)
        rec.gamma.append(W * np.exp(1j * slope * math.log(t)))
        rec.admissible.append(np.ones(vs.size, bool))
    return rec


def test_fit_recovers_synthetic_profile():
    vs = band_velocities(1.0, 4)
    W = np.array([0.2, 0.3j, -0.1, 0.25 - 0.1j])
    slope = np.array([0.5, -1.0, 2.0, 0.1])
    times = [4.0 * 2 ** (k / 3) for k in range(10)]
    fit = fit_scattering(_synthetic(vs, times, W, slope), window=(times[0], times[-1]))
    assert np.max(np.abs(fit.W - W)) < 1e-12
    assert np.max(np.abs(fit.slope_fit - slope)) < 1e-12
    assert np.max(fit.residual) < 1e-12
    rep = json.loads(fit.to_json())
    assert set(rep["fits"][0]) == {"v", "|W|", "phase_slope_fit", "phase_slope_pred", "residual"}


def test_fit_reference_gauge_removes_common_phase():
    vs = band_velocities(1.0, 2)
    times = [8.0 * 2 ** (k / 4) for k in range(9)]
    W = np.array([0.2, 0.1])
    lin = _synthetic(vs, times, W, np.array([3.0, -2.0]))
    nl = _synthetic(vs, times, W, np.array([3.5, -2.25]))
    fit = fit_scattering(nl, window=(8.0, 32.0), reference=lin)
    assert np.allclose(fit.slope_fit, [0.5, -0.25], atol=1e-12)


def test_fit_rejects_bad_windows():
    vs = band_velocities(1.0, 2)
    rec = _synthetic(vs, [1.0, 2.0, 3.0, 5.0, 8.0], np.ones(2), np.zeros(2))
    with pytest.raises(InvalidArgument):
        fit_scattering(rec, window=(1.0, 8.0))  # not geometric
    with pytest.raises(InvalidArgument):
        fit_scattering(rec, window=(4.0, 8.0))  # too few samples


def test_decay_report_linear_rate():
    g = make_grid(128 * math.pi, 2048)
    phi0 = Field.from_function(g, lambda x: 0.01 * np.exp(-x ** 2))
    ts = np.geomspace(5, 40, 8)
    snaps = [(t, apply_multiplier(phi0, linear_propagator(g, t))) for t in ts]
    rep = decay_report(snaps, 0.1, window=(5, 40))
    assert abs(rep.slope + 0.5) < 0.1
    assert np.allclose(rep.scaled, np.sqrt(ts) * rep.y_norms)
    assert rep.sup_scaled == np.max(rep.scaled)
