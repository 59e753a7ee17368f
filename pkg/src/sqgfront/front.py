"""The nonlocal front operator, its quadrature, B0 and the equation right-hand side."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import kernels
from .errors import InvalidArgument, NumericalFailure
from .spectral import (
    Field, GridSpec, apply_multiplier, derivative, dispersive_symbol, log_abs_D,
    spectral_shift,
)

__all__ = [
    "f_shape", "f_shape_deriv", "diff_quotient", "QuadratureScheme", "make_quadrature",
    "default_quadrature", "split_quadrature", "apply_A", "PvConstant", "pv_unit_constant",
    "b0_symbol", "rhs", "nonlinear_term", "linear_term", "paralin_residual", "shifted_rows",
]

NODE_CHUNK = 256


def f_shape(s):
    """F(s) = 1 - (1+s^2)^{-1/2}, evaluated without cancellation near 0."""
    out = kernels.shape_F_np(s)
    return float(out) if np.ndim(out) == 0 else out


def f_shape_deriv(s):
    s = np.asarray(s, dtype=float)
    out = s * (1.0 + s * s) ** -1.5
    return float(out) if out.ndim == 0 else out


def diff_quotient(f: Field, y: float, absolute: bool = False) -> Field:
    """delta^y f = (f(.+y) - f)/y, or |delta|^y f with |y| when ``absolute``."""
    if y == 0:
        raise InvalidArgument("difference quotient needs y != 0")
    d = abs(y) if absolute else y
    return Field(f.grid, (spectral_shift(f, y).values - f.values) / d)


# --- quadrature -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """Symmetric nodes/weights for integrals over 0 < |y| <= Y_max."""

    nodes: np.ndarray
    weights: np.ndarray
    Y_max: float
    grading: float
    N_y: int
    split: float | None = None

    def integrate(self, fn):
        return float(np.sum(self.weights * fn(self.nodes)))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.nodes, self.weights]), delimiter=",",
                   header="y,w", comments="", fmt="%.17g")


def _graded_half(a, b, n, g):
    """Midpoint-in-u cells on [a, b] mapped by y = a + (b-a) u^g; weights are cell widths."""
    edges = a + (b - a) * (np.arange(n + 1) / n) ** g
    mids = a + (b - a) * ((np.arange(n) + 0.5) / n) ** g
    return mids, np.diff(edges)


def _symmetrize(pos, w, Y_max, g, split=None):
    nodes = np.concatenate([-pos[::-1], pos])
    weights = np.concatenate([w[::-1], w])
    for arr in (nodes, weights):
        arr.flags.writeable = False
    return QuadratureScheme(nodes, weights, float(Y_max), float(g), nodes.size, split)


def make_quadrature(Y_max, N_y, g=2.0) -> QuadratureScheme:
    """Graded composite-midpoint scheme, nodes clustered toward y = 0 for g > 1."""
    if not (np.isfinite(Y_max) and Y_max > 0):
        raise InvalidArgument(f"Y_max must be positive, got {Y_max!r}")
    if int(N_y) != N_y or N_y < 16 or N_y % 2:
        raise InvalidArgument(f"N_y must be an even integer >= 16, got {N_y!r}")
    if not g >= 1:
        raise InvalidArgument(f"grading must be >= 1, got {g!r}")
    pos, w = _graded_half(0.0, float(Y_max), int(N_y) // 2, float(g))
    return _symmetrize(pos, w, Y_max, g)


def default_quadrature(grid: GridSpec) -> QuadratureScheme:
    n_y = 2 * int(round(2.0 * math.sqrt(grid.num_points)))
    return make_quadrature(grid.half_length / 2.0, max(16, n_y), 2.0)


def split_quadrature(q: QuadratureScheme) -> QuadratureScheme:
    """Same budget as ``q`` with a cell edge exactly at |y| = 1.

    The inner block is graded toward 0, the outer block graded away from 1,
    so the split principal value sees no cell straddling the jump.
    """
    if q.split == 1.0:
        return q
    n = q.N_y // 2
    g = q.grading
    if q.Y_max <= 1.0:
        pos, w = _graded_half(0.0, q.Y_max, n, g)
        return _symmetrize(pos, w, q.Y_max, g, 1.0)
    n_in = int(round(n * (1.0 / q.Y_max) ** (1.0 / g)))
    n_in = min(max(8, n_in), n - 8) if n >= 16 else max(1, n // 2)
    p1, w1 = _graded_half(0.0, 1.0, n_in, g)
    p2, w2 = _graded_half(1.0, q.Y_max, n - n_in, g)
    return _symmetrize(np.concatenate([p1, p2]), np.concatenate([w1, w2]), q.Y_max, g, 1.0)


# --- operator evaluation ---------------------------------------------------------

def shifted_rows(values, xi_r, ys):
    """Rows f(x + y_j) of the trigonometric interpolant, one per node."""
    n = values.shape[-1]
    spec = np.fft.rfft(values)
    return np.fft.irfft(spec[None, :] * np.exp(1j * np.multiply.outer(ys, xi_r)), n=n, axis=1)


def _check(phi, v=None):
    if v is not None and phi.grid != v.grid:
        raise InvalidArgument("fields live on different grids")


def _blocks(q, chunk=NODE_CHUNK):
    for s in range(0, q.N_y, chunk):
        yield np.ascontiguousarray(q.nodes[s:s + chunk]), np.ascontiguousarray(q.weights[s:s + chunk])


def apply_A_values(phi_vals, v_vals, grid: GridSpec, q: QuadratureScheme):
    """Raw-array version of :func:`apply_A`."""
    out = np.zeros(grid.num_points)
    xi_r = grid.xi_r
    for ys, ws in _blocks(q):
        ph = shifted_rows(phi_vals, xi_r, ys)
        vs = ph if v_vals is phi_vals else shifted_rows(v_vals, xi_r, ys)
        kernels.nonlocal_sum(ph, phi_vals, vs, v_vals, ys, ws, out)
    return out


def apply_A(phi: Field, v: Field, q: QuadratureScheme) -> Field:
    """Quadrature of int F(delta^y phi) |delta|^y v dy with spectral shifts."""
    _check(phi, v)
    vals = apply_A_values(phi.values, v.values, phi.grid, q)
    return Field(phi.grid, vals)


# --- principal value constant -----------------------------------------------------

@dataclass(frozen=True)
class PvConstant:
    value: float
    schedules: tuple
    estimates: tuple
    richardson_order: int


def _pv_eps(eps):
    # int_{|y|>eps} cos(y)/|y| dy + 2 log eps, with the inner piece in log variables
    inner, _ = integrate.quad(lambda s: math.cos(math.exp(s)), math.log(eps), 0.0,
                              epsabs=1e-15, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(lambda y: 1.0 / y, 1.0, np.inf, weight="cos", wvar=1.0,
                             epsabs=1e-12, limit=200)
    return 2.0 * (inner + tail) + 2.0 * math.log(eps)


def _richardson(eps_list, vals):
    # error expansion is even in eps: fit a polynomial in eps^2, read off the constant
    h = np.asarray(eps_list, dtype=float) ** 2
    coef = np.polyfit(h, np.asarray(vals), len(h) - 1)
    return float(coef[-1])


@lru_cache(maxsize=None)
def pv_unit_constant(schedules=((1e-2, 1e-3, 1e-4), (2e-2, 2e-3, 2e-4))) -> PvConstant:
    """<pv |y|^{-1}, e^{-iy}> by an epsilon limit with Richardson extrapolation."""
    ests = tuple(_richardson(s, [_pv_eps(e) for e in s]) for s in schedules)
    spread = max(ests) - min(ests)
    if not np.all(np.isfinite(ests)) or spread > 1e-6:
        raise NumericalFailure(f"pv constant did not converge (spread {spread:.3e})", last=ests)
    return PvConstant(float(np.mean(ests)), tuple(schedules), ests, 2 * (len(schedules[0]) - 1))


# --- B0, rhs, paralinearization ---------------------------------------------------------

def _fx(phi: Field):
    return apply_multiplier(phi, derivative(phi.grid)).values


def b0_symbol(phi: Field, q: QuadratureScheme) -> Field:
    """B0(phi) = <pv|y|^{-1}, F(delta^y phi)> - F(phi_x) <pv|y|^{-1}, e^{-iy}>.

    The first pairing uses the split form at |y| = 1; the node set is rebuilt
    from ``q`` so that a cell edge falls on the split.
    """
    qs = split_quadrature(q)
    Ffx = kernels.shape_F_np(_fx(phi))
    out = np.zeros(phi.grid.num_points)
    xi_r = phi.grid.xi_r
    for ys, ws in _blocks(qs):
        ph = shifted_rows(phi.values, xi_r, ys)
        kernels.pv_sum(ph, phi.values, Ffx, ys, ws, out)
    out -= Ffx * pv_unit_constant().value
    return Field(phi.grid, out)


def linear_term(phi: Field) -> Field:
    """2 log|D| d/dx phi."""
    return apply_multiplier(phi, dispersive_symbol(phi.grid))


def _pad(vals, n_big):
    n = vals.size
    spec = np.fft.rfft(vals)
    big = np.zeros(n_big // 2 + 1, dtype=complex)
    big[: n // 2] = spec[: n // 2]
    # drop the unpaired Nyquist mode rather than splitting it
    return np.fft.irfft(big * (n_big / n), n=n_big)


def _unpad(vals, n):
    spec = np.fft.rfft(vals)[: n // 2 + 1].copy()
    spec[-1] = 0.0
    return np.fft.irfft(spec * (n / vals.size), n=n)


def nonlinear_term(phi: Field, q: QuadratureScheme, oversample: int = 1) -> Field:
    """A_phi (phi_x), optionally evaluated on a 2x zero-padded grid."""
    g = phi.grid
    if oversample not in (1, 2):
        raise InvalidArgument("oversample must be 1 or 2")
    fx = _fx(phi)
    if oversample == 1:
        return Field(g, apply_A_values(phi.values, fx, g, q))
    gb = GridSpec(g.half_length, 2 * g.num_points)
    out = apply_A_values(_pad(phi.values, gb.num_points), _pad(fx, gb.num_points), gb, q)
    return Field(g, _unpad(out, g.num_points))


def rhs(phi: Field, q: QuadratureScheme, oversample: int = 1) -> Field:
    """Time derivative A_phi phi_x + 2 log|D| phi_x."""
    return nonlinear_term(phi, q, oversample) + linear_term(phi)


def paralin_residual(phi: Field, v: Field, q: QuadratureScheme, c) -> Field:
    """R = A_phi v + T_{B0} v + 2 T_{F(phi_x)} log|D| v.

    The signs follow from expanding the y-integral at high frequency:
    A_phi v ~ -T_{B0} v - 2 T_{F(phi_x)} log|D| v.
    """
    from .paradiff import apply_Ta

    _check(phi, v)
    Av = apply_A(phi, v, q)
    tb = apply_Ta(b0_symbol(phi, q), v, c)
    Ffx = Field(phi.grid, kernels.shape_F_np(_fx(phi)))
    tl = apply_Ta(Ffx, apply_multiplier(v, log_abs_D(v.grid)), c)
    return Field(phi.grid, Av.values + tb.values + 2.0 * tl.values)
