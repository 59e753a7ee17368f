"""Dispersion relation, wave packets, profile extraction, the cubic resonance and fits."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import kernels
from .errors import InvalidArgument, NumericalFailure
from .front import QuadratureScheme, shifted_rows
from .spectral import Field, GridSpec, lp_project, y_norm

__all__ = [
    "DispersionPoint", "WavePacket", "ProfileRecord", "ScatteringFit", "DecayReport",
    "a_symbol", "a_prime", "a_second", "phase", "dispersion_point", "band_velocities",
    "bump", "build_packet", "gamma_profile", "extract_profiles", "cubic_Q",
    "cubic_Q_function", "q_constant", "fit_scattering", "decay_report", "ADMISSIBLE_CONST",
]

ADMISSIBLE_CONST = 8.0


# --- dispersion relation -----------------------------------------------------------

def a_symbol(xi):
    """a(xi) = -2 xi log|xi|."""
    xi = np.asarray(xi, dtype=float)
    return -2.0 * xi * np.log(np.abs(xi))


def a_prime(xi):
    return -2.0 - 2.0 * np.log(np.abs(np.asarray(xi, dtype=float)))


def a_second(xi):
    return -2.0 / np.asarray(xi, dtype=float)


def phase(v):
    """Stationary phase v xi_v - a(xi_v), which equals -2 xi_v = 2 exp(-1 - v/2)."""
    return 2.0 * np.exp(-1.0 - 0.5 * np.asarray(v, dtype=float))


def xi_of_v(v):
    return -np.exp(-1.0 - 0.5 * np.asarray(v, dtype=float))


@dataclass(frozen=True)
class DispersionPoint:
    v: float
    xi: float
    a: float
    a2: float
    phase: float


def dispersion_point(v) -> DispersionPoint:
    xi = float(xi_of_v(v))
    a = float(a_symbol(xi))
    return DispersionPoint(float(v), xi, a, float(a_second(xi)), float(v) * xi - a)


def band_velocities(lam, n=16):
    """n velocities at the cell midpoints of J_lam = a'([-2 lam, -lam])."""
    v_lo = float(a_prime(2.0 * lam))
    v_hi = float(a_prime(lam))
    return v_lo + (v_hi - v_lo) * (np.arange(n) + 0.5) / n


# --- packets ------------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _bump_mass():
    val, _ = integrate.quad(lambda r: math.exp(1.0 - 1.0 / (1.0 - r * r)), -1.0, 1.0,
                            epsabs=1e-14, epsrel=1e-13)
    return val


def bump(y):
    """Unit-mass smooth bump supported on |y| < 1."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - y[inside] ** 2)) / _bump_mass()
    return out


@dataclass(frozen=True, eq=False)
class WavePacket:
    v: float
    t: float
    lam: float | None
    width: float
    point: DispersionPoint
    grid: GridSpec
    values: np.ndarray = field(repr=False)


def build_packet(v, t, grid: GridSpec, lam=None) -> WavePacket:
    """u^v = a''(xi_v)^{-1/2} chi(y) exp(i t phase(x/t)), y = (x - vt)/(t a'')^{1/2}."""
    if t < 1:
        raise InvalidArgument("packets are built for t >= 1")
    pt = dispersion_point(v)
    width = math.sqrt(t * pt.a2)
    centre = v * t
    if abs(centre) + width > 0.9 * grid.half_length:
        raise InvalidArgument(f"packet at v={v:g}, t={t:g} does not fit in |x| <= 0.9 L")
    x = grid.x
    yv = (x - centre) / width
    vals = np.zeros(grid.num_points, dtype=np.complex128)
    inside = np.abs(yv) < 1.0
    xs = x[inside]
    vals[inside] = bump(yv[inside]) * np.exp(1j * t * phase(xs / t)) / math.sqrt(pt.a2)
    vals.flags.writeable = False
    return WavePacket(float(v), float(t), lam, width, pt, grid, vals)


# --- profiles -------------------------------------------------------------------------------

@dataclass
class ProfileRecord:
    lam: float
    velocities: np.ndarray
    times: list = field(default_factory=list)
    gamma: list = field(default_factory=list)  # rows of complex values, one per time
    admissible: list = field(default_factory=list)

    def matrix(self):
        return np.array(self.gamma, dtype=np.complex128).reshape(len(self.times), len(self.velocities))

    def to_csv(self, path):
        g = self.matrix()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "v", "re", "im", "abs"])
            for i, t in enumerate(self.times):
                for j, v in enumerate(self.velocities):
                    z = g[i, j]
                    w.writerow([repr(float(t)), repr(float(v)), repr(float(z.real)), repr(float(z.imag)), repr(float(abs(z)))])


def _in_band(lam, v):
    lo, hi = float(a_prime(2.0 * lam)), float(a_prime(lam))
    return lo - 1e-12 <= v <= hi + 1e-12


def gamma_profile(phi: Field, t, lam, velocities, project=True):
    """gamma(t, v) = <P_lam phi, u^v> with the conjugate-linear second slot.

    With ``project=False`` the band projection is skipped, which gives the
    band-summed profile sum_lam gamma^lam = <phi, u^v> (up to the mean).
    Returns ``(values, flags)``; flags mark samples inside the admissible
    region t >= 8/lam with v in J_lam.
    """
    phil = lp_project(phi, lam).values if project else phi.values
    dx = phi.grid.dx
    vals = np.empty(len(velocities), dtype=np.complex128)
    flags = np.empty(len(velocities), dtype=bool)
    for k, v in enumerate(velocities):
        u = build_packet(v, t, phi.grid, lam).values
        vals[k] = dx * np.dot(phil, np.conj(u))
        flags[k] = t >= ADMISSIBLE_CONST / lam and _in_band(lam, v)
    return vals, flags


def extract_profiles(snapshots, lam, velocities, t_min=1.0, project=True) -> ProfileRecord:
    rec = ProfileRecord(float(lam), np.asarray(velocities, dtype=float))
    for t, phi in snapshots:
        if t < t_min:
            continue
        vals, flags = gamma_profile(phi, t, lam, rec.velocities, project)
        rec.times.append(float(t))
        rec.gamma.append(vals)
        rec.admissible.append(flags)
    return rec


# --- cubic resonance --------------------------------------------------------------------------

def cubic_Q(phi: Field, q: QuadratureScheme) -> Field:
    """Q(phi) = (1/3) int sgn(y) |delta^y phi|^2 delta^y phi dy for real phi."""
    out = np.zeros(phi.grid.num_points)
    xi_r = phi.grid.xi_r
    for s in range(0, q.N_y, 256):
        ys = np.ascontiguousarray(q.nodes[s:s + 256])
        ws = np.ascontiguousarray(q.weights[s:s + 256])
        kernels.cubic_sum(shifted_rows(phi.values, xi_r, ys), phi.values, ys, ws, out)
    return Field(phi.grid, out / 3.0)


def cubic_Q_function(f, x, q: QuadratureScheme, chunk=4096):
    """Q applied to a complex callable ``f`` at points ``x`` (no grid involved)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f0 = f(x)
    acc = np.zeros(x.shape, dtype=np.complex128)
    for s in range(0, q.N_y, chunk):
        ys = q.nodes[s:s + chunk]
        ws = q.weights[s:s + chunk]
        d = (f(x[None, :] + ys[:, None]) - f0[None, :]) / ys[:, None]
        acc += np.sum((ws * np.sign(ys))[:, None] * (d.real ** 2 + d.imag ** 2) * d, axis=0)
    return acc / 3.0


def _q_integrand(y, xi):
    b = (np.exp(1j * y * xi) - 1.0) / y
    return np.sign(y) * (b.real ** 2 + b.imag ** 2) * b / 3.0


def _q_sum(xi, Y, first=None):
    # period-pair summation on both half-lines; each pair is integrated adaptively
    period = 2.0 * math.pi / abs(xi)
    edges = np.append(np.arange(0.0, Y, 2 * period), Y)
    re = im = 0.0
    for sgn in (1.0, -1.0):
        for a, b in zip(edges[:-1], edges[1:]):
            r, _ = integrate.quad(lambda y: _q_integrand(sgn * y, xi).real, a, b,
                                  epsabs=1e-15, epsrel=1e-12, limit=100)
            i, _ = integrate.quad(lambda y: _q_integrand(sgn * y, xi).imag, a, b,
                                  epsabs=1e-15, epsrel=1e-12, limit=100)
            re += r
            im += i
    return complex(re, im)


@lru_cache(maxsize=64)
def q_constant(xi, tails=(1e3, 1e4), tol=1e-5) -> complex:
    """q(xi) = (1/3) int sgn(y) |b|^2 b dy with b = (e^{i y xi} - 1)/y.

    The y-range is cut at tails[k]/|xi|; the two truncations must agree
    to ``tol`` relative, otherwise :class:`NumericalFailure` is raised.
    """
    xi = float(xi)
    if xi == 0.0:
        raise InvalidArgument("q is defined for xi != 0")
    vals = [_q_sum(xi, T / abs(xi)) for T in tails]
    diff = abs(vals[-1] - vals[0])
    if not np.isfinite(diff) or diff > tol * max(abs(vals[-1]), 1e-300):
        raise NumericalFailure(f"q({xi}) not converged across tail lengths", last=vals)
    return vals[-1]


# --- scattering fit ----------------------------------------------------------------------------

@dataclass
class ScatteringFit:
    velocities: np.ndarray
    W: np.ndarray
    q_used: np.ndarray
    slope_fit: np.ndarray
    slope_pred: np.ndarray
    residual: np.ndarray
    window: tuple

    def to_json(self):
        rows = [{"v": float(v), "|W|": float(abs(w)), "phase_slope_fit": float(sf),
                 "phase_slope_pred": float(sp), "residual": float(r)}
                for v, w, sf, sp, r in zip(self.velocities, self.W, self.slope_fit,
                                           self.slope_pred, self.residual)]
        return json.dumps({"window": list(self.window), "fits": rows}, sort_keys=True)


def _geometric(times, rtol=1e-6):
    r = np.asarray(times[1:]) / np.asarray(times[:-1])
    return bool(np.all(np.abs(r - r[0]) <= rtol * r[0]))


def fit_scattering(rec: ProfileRecord, window=None, reference: ProfileRecord | None = None) -> ScatteringFit:
    """Fit gamma(t, v) ~ W exp(i s ln t) per velocity over a geometric time window.

    The predicted slope is q(xi_v) xi_v |W|^2. With ``reference`` (typically the
    linear-flow profile of the same datum) the phase of gamma / gamma_ref is
    fitted, which removes phase errors common to both runs.
    """
    times = np.asarray(rec.times, dtype=float)
    if window is None and times.size:
        window = (times[-1] / 10.0, times[-1])
    sel = (times >= window[0] * (1 - 1e-12)) & (times <= window[1] * (1 + 1e-12))
    ts = times[sel]
    if ts.size < 4:
        raise InvalidArgument("need at least 4 samples in the fit window")
    if not _geometric(ts):
        raise InvalidArgument("fit times must form a geometric progression")
    G = rec.matrix()[sel]
    if reference is not None:
        R = reference.matrix()[sel]
        mag = np.abs(R)
        G = G * np.where(mag > 0, np.conj(R) / np.where(mag > 0, mag, 1.0), 1.0)
    lt = np.log(ts)
    nv = len(rec.velocities)
    W = np.zeros(nv, dtype=complex)
    qs = np.zeros(nv)
    sfit = np.zeros(nv)
    spred = np.zeros(nv)
    res = np.zeros(nv)
    for j, v in enumerate(rec.velocities):
        g = G[:, j]
        xi = float(xi_of_v(v))
        qv = q_constant(round(xi, 15)).real
        qs[j] = qv
        modW = float(np.mean(np.abs(g)))
        spred[j] = qv * xi * modW ** 2
        if modW == 0.0:
            continue
        ph = np.unwrap(np.angle(g))
        A = np.column_stack([np.ones_like(lt), lt])
        (c0, s1), *_ = np.linalg.lstsq(A, ph, rcond=None)
        sfit[j] = s1
        W[j] = modW * np.exp(1j * c0)
        model = modW * np.exp(1j * (c0 + s1 * lt))
        res[j] = math.sqrt(float(np.mean(np.abs(g - model) ** 2)))
    return ScatteringFit(np.asarray(rec.velocities), W, qs, sfit, spred, res,
                         (float(ts[0]), float(ts[-1])))


# --- decay ------------------------------------------------------------------------------------------

@dataclass
class DecayReport:
    times: np.ndarray
    y_norms: np.ndarray
    scaled: np.ndarray
    slope: float
    window: tuple

    @property
    def sup_scaled(self):
        return float(np.max(self.scaled)) if self.scaled.size else 0.0

    def scaled_trend(self, window=None):
        """Log-log slope of t^{1/2}||phi||_Y, a proxy for growth."""
        return _loglog_slope(self.times, self.scaled, window or self.window)


def _loglog_slope(t, y, window):
    sel = (t >= window[0]) & (t <= window[1]) & (y > 0)
    if sel.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)[0])


def decay_report(snapshots, delta=0.1, window=None) -> DecayReport:
    """Table of (t, ||phi||_Y, t^{1/2}||phi||_Y) and the log-log slope of ||phi||_Y."""
    pts = [(t, y_norm(phi, delta)) for t, phi in snapshots if t > 0]
    t = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if window is None:
        window = (t[-1] / 10.0, t[-1]) if t.size else (0.0, 0.0)
    return DecayReport(t, y, np.sqrt(t) * y, _loglog_slope(t, y, window), tuple(window))
