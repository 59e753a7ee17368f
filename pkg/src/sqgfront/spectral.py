"""Periodic grid, spectra, Fourier multipliers, Littlewood-Paley pieces and norms.

The whole line is truncated to the periodic box [-L, L) sampled at N points.
Spectra use numpy's FFT ordering and normalization; all L2-type quantities
carry the factor 2L/N^2 so that they approximate integrals over the box.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .kernels import smooth_step_np

__all__ = [
    "GridSpec", "Field", "FourierMultiplier", "FrequencyEnvelope",
    "make_grid", "apply_multiplier", "spectral_shift", "lp_symbol", "lp_project",
    "dyadic_bands", "sobolev_norm", "y_norm", "x_norm", "frequency_envelope",
    "derivative", "log_abs_D", "abs_D_power", "dispersive_symbol",
    "save_field", "load_field", "export_csv", "BoundaryMassWarning", "BandWarning",
]


class BoundaryMassWarning(UserWarning):
    """More than 1% of the L2 mass sits near the periodic boundary."""


class BandWarning(UserWarning):
    """A dyadic band lies entirely above the grid's Nyquist frequency."""


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    half_length: float
    num_points: int

    @property
    def L(self):
        return self.half_length

    @property
    def N(self):
        return self.num_points

    @property
    def dx(self):
        return 2.0 * self.half_length / self.num_points

    @cached_property
    def x(self):
        x = -self.half_length + self.dx * np.arange(self.num_points)
        x.flags.writeable = False
        return x

    @cached_property
    def xi(self):
        """Wavenumbers in FFT order; (pi/L) * k for k in [-N/2, N/2)."""
        k = np.fft.fftfreq(self.num_points, d=1.0 / self.num_points)
        xi = (math.pi / self.half_length) * k
        xi.flags.writeable = False
        return xi

    @cached_property
    def xi_r(self):
        k = np.arange(self.num_points // 2 + 1)
        xi = (math.pi / self.half_length) * k
        xi.flags.writeable = False
        return xi

    @property
    def nyquist(self):
        return math.pi * self.num_points / (2.0 * self.half_length)

    @property
    def dxi(self):
        return math.pi / self.half_length

    @property
    def l2_weight(self):
        # sum |f^_k|^2 * l2_weight ~ int |f|^2 dx
        return 2.0 * self.half_length / self.num_points ** 2

    def rescaled(self, kappa):
        return GridSpec(self.half_length * kappa, self.num_points)


def make_grid(L, N):
    """Periodic grid on [-L, L) with N points (N a power of two, N >= 16)."""
    if not (isinstance(N, (int, np.integer)) and _is_pow2(int(N)) and N >= 16):
        raise InvalidArgument(f"N must be a power of two >= 16, got {N!r}")
    if not (np.isfinite(L) and L > 0):
        raise InvalidArgument(f"L must be positive, got {L!r}")
    return GridSpec(float(L), int(N))


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples on a grid. Immutable; the spectrum is computed once on demand."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.grid.num_points,):
            raise InvalidArgument(
                f"expected {self.grid.num_points} samples, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgument("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @cached_property
    def spectrum(self):
        # cached_property writes straight into __dict__; recomputation is idempotent.
        # Built from rfft so that conjugate symmetry holds bit for bit.
        s = hermitian_spectrum(self.values)
        s.flags.writeable = False
        return s

    @classmethod
    def from_function(cls, grid, fn: Callable[[np.ndarray], np.ndarray]):
        return cls(grid, fn(grid.x))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.num_points))

    @classmethod
    def from_spectrum(cls, grid, spec, check=True):
        vals = np.fft.ifft(spec)
        if check:
            _check_real(vals, spec)
        return cls(grid, vals.real)

    def l2(self):
        return math.sqrt(self.grid.dx * float(np.dot(self.values, self.values)))

    def __add__(self, other):
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c):
        return Field(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


def hermitian_spectrum(values):
    """Full FFT of real samples with exact conjugate symmetry."""
    n = values.shape[-1]
    r = np.fft.rfft(values)
    return np.concatenate([r, np.conj(r[..., 1:n - n // 2][..., ::-1])], axis=-1)


def _same_grid(a, b):
    if a.grid != b.grid:
        raise InvalidArgument("fields live on different grids")


def _check_real(vals, spec, tol=1e-12):
    # the residue is judged against sum|spec|/N, which bounds every sample
    scale = float(np.sum(np.abs(spec))) / max(1, spec.size)
    resid = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if resid > tol * scale:
        raise InvalidArgument(f"imaginary residue {resid:.3e} exceeds tolerance")
    return resid


@dataclass(frozen=True, eq=False)
class FourierMultiplier:
    grid: GridSpec
    symbol: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        sym = np.array(self.symbol, dtype=np.complex128, copy=True)
        if sym.shape != (self.grid.num_points,):
            raise InvalidArgument("symbol length must match the grid")
        if not np.all(np.isfinite(sym)):
            raise InvalidArgument("symbol must be finite at every wavenumber")
        sym.flags.writeable = False
        object.__setattr__(self, "symbol", sym)

    @classmethod
    def from_function(cls, grid, fn, name="", zero_value=0.0, odd=False):
        """Sample ``fn`` on nonzero wavenumbers; the xi = 0 value is given explicitly.

        ``odd`` zeroes the unpaired Nyquist mode so the multiplier maps real
        fields to real fields.
        """
        xi = grid.xi
        sym = np.empty(grid.num_points, dtype=np.complex128)
        nz = xi != 0
        sym[nz] = fn(xi[nz])
        sym[~nz] = zero_value
        if odd:
            sym[grid.num_points // 2] = 0.0
        return cls(grid, sym, name)

    def hermitian(self, tol=0.0):
        s = self.symbol
        n = s.size
        mirror = s[(-np.arange(n)) % n]
        pair = np.arange(n) != n // 2
        return bool(np.all(np.abs(s[pair] - np.conj(mirror[pair])) <= tol * np.max(np.abs(s)) + 0.0)
                    and abs(s[n // 2].imag) <= tol)

    def __mul__(self, other):
        if isinstance(other, FourierMultiplier):
            if other.grid != self.grid:
                raise InvalidArgument("multipliers live on different grids")
            return FourierMultiplier(self.grid, self.symbol * other.symbol,
                                     f"{self.name}*{other.name}")
        return FourierMultiplier(self.grid, self.symbol * other, self.name)

    __rmul__ = __mul__


# --- named symbols ----------------------------------------------------------

def derivative(grid):
    return FourierMultiplier.from_function(grid, lambda k: 1j * k, "d/dx", odd=True)


def log_abs_D(grid):
    return FourierMultiplier.from_function(grid, lambda k: np.log(np.abs(k)), "log|D|")


def abs_D_power(grid, a):
    return FourierMultiplier.from_function(grid, lambda k: np.abs(k) ** a, f"|D|^{a}")


def dispersive_symbol(grid):
    """2 log|D| d/dx, the linear part of the front equation (symbol -i a(xi))."""
    return FourierMultiplier.from_function(
        grid, lambda k: 2j * k * np.log(np.abs(k)), "2log|D|dx", odd=True)


def apply_multiplier(f: Field, m: FourierMultiplier) -> Field:
    if f.grid != m.grid:
        raise InvalidArgument("field and multiplier live on different grids")
    return Field.from_spectrum(f.grid, m.symbol * f.spectrum)


def spectral_shift(f: Field, y: float) -> Field:
    """Evaluate the trigonometric interpolant of f at x + y.

    The unpaired Nyquist cosine is sampled exactly, which scales its
    coefficient by cos(xi_N y); shifts are therefore invertible only on
    fields without Nyquist content.
    """
    g = f.grid
    vals = np.fft.irfft(np.fft.rfft(f.values) * np.exp(1j * g.xi_r * y), n=g.num_points)
    return Field(g, vals)


# --- Littlewood-Paley ---------------------------------------------------------

def _lowpass(k):
    # 1 on |k| <= 1, 0 on |k| >= 2
    return smooth_step_np(np.abs(k) - 1.0)


def lp_symbol(grid, lam):
    """Band-pass symbol Phi(xi/lam) - Phi(2 xi/lam), supported in lam/2 < |xi| < 2 lam."""
    xi = grid.xi
    sym = _lowpass(xi / lam) - _lowpass(2.0 * xi / lam)
    sym[xi == 0] = 0.0
    return sym


def dyadic_bands(grid):
    """Dyadic frequencies whose bands tile every nonzero grid mode."""
    lo = int(math.floor(math.log2(grid.dxi)))
    hi = int(math.ceil(math.log2(grid.nyquist)))
    return [2.0 ** k for k in range(lo, hi + 1)]


def lp_project(f: Field, lam: float) -> Field:
    """Smooth dyadic band-pass P_lam f."""
    lg = math.log2(lam)
    if lam <= 0 or abs(lg - round(lg)) > 1e-12:
        raise InvalidArgument(f"lambda must be a power of two, got {lam!r}")
    if lam / 2.0 >= f.grid.nyquist:
        warnings.warn(f"band {lam} lies above Nyquist {f.grid.nyquist:.4g}", BandWarning,
                      stacklevel=2)
        return Field.zeros(f.grid)
    sym = lp_symbol(f.grid, lam)
    return Field.from_spectrum(f.grid, sym * f.spectrum)


# --- norms --------------------------------------------------------------------

def sobolev_norm(f: Field, s: float) -> float:
    if not -4.0 <= s <= 10.0:
        raise InvalidArgument(f"s must lie in [-4, 10], got {s}")
    g = f.grid
    w = (1.0 + g.xi ** 2) ** s
    return math.sqrt(g.l2_weight * float(np.sum(w * np.abs(f.spectrum) ** 2)))


def _sup(f: Field, m: FourierMultiplier):
    return float(np.max(np.abs(apply_multiplier(f, m).values)))


def y_norm(f: Field, delta: float) -> float:
    """|| |D|^{3/4-delta} f ||_inf + || |D|^{2+delta} f ||_inf."""
    if not 0.0 < delta < 0.25:
        raise InvalidArgument(f"delta must lie in (0, 1/4), got {delta}")
    g = f.grid
    return _sup(f, abs_D_power(g, 0.75 - delta)) + _sup(f, abs_D_power(g, 2.0 + delta))


def x_norm(f: Field, t: float, s: float) -> float:
    """||f||_{H^s} + ||(x + 2t + 2t log|D|) f_x||_{L2}, x the centred sawtooth."""
    if t < 0:
        raise InvalidArgument("t must be nonnegative")
    g = f.grid
    mass = f.values ** 2
    total = float(mass.sum())
    if total > 0 and float(mass[np.abs(g.x) > 0.9 * g.L].sum()) > 0.01 * total:
        warnings.warn("more than 1% of the L2 mass lies in |x| > 0.9 L", BoundaryMassWarning,
                      stacklevel=2)
    fx = apply_multiplier(f, derivative(g))
    lfx = (g.x + 2.0 * t) * fx.values
    if t != 0.0:
        lfx = lfx + 2.0 * t * apply_multiplier(fx, log_abs_D(g)).values
    return sobolev_norm(f, s) + math.sqrt(g.dx * float(np.dot(lfx, lfx)))


# --- frequency envelopes --------------------------------------------------------

@dataclass(frozen=True)
class FrequencyEnvelope:
    indices: np.ndarray
    values: np.ndarray
    delta_env: float
    band_norms: np.ndarray

    def is_slowly_varying(self, rtol=1e-12):
        k = self.indices.astype(float)
        ratio = self.values[:, None] / self.values[None, :]
        bound = 2.0 ** (self.delta_env * np.abs(k[:, None] - k[None, :]))
        return bool(np.all(ratio <= bound * (1.0 + rtol)))


def frequency_envelope(f: Field, s: float, delta_env: float) -> FrequencyEnvelope:
    """Minimal envelope c_k = max_j 2^{-delta|j-k|} (||P_j f||_{H^s} + floor)."""
    if not 0.0 < delta_env < 1.0:
        raise InvalidArgument("delta_env must lie in (0, 1)")
    bands = dyadic_bands(f.grid)
    ks = np.array([int(round(math.log2(b))) for b in bands])
    norms = np.array([sobolev_norm(Field.from_spectrum(f.grid, lp_symbol(f.grid, b) * f.spectrum), s)
                      for b in bands])
    total = sobolev_norm(f, s)
    floor = 1e-14 * total if total > 0 else 1e-14
    base = norms + floor
    decay = 2.0 ** (-delta_env * np.abs(ks[:, None] - ks[None, :]).astype(float))
    env = np.max(decay * base[None, :], axis=1)
    return FrequencyEnvelope(ks, env, float(delta_env), norms)


# --- I/O ----------------------------------------------------------------------------

def save_field(path, f: Field, time=0.0):
    """Write ``<path>.bin`` (little-endian float64) and ``<path>.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f.values.astype("<f8").tofile(path.with_suffix(".bin"))
    meta = {"L": f.grid.half_length, "N": f.grid.num_points, "time": float(time)}
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True))
    return path.with_suffix(".bin")


def load_field(path):
    """Inverse of :func:`save_field`; returns ``(field, time)``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = make_grid(float(meta["L"]), int(meta["N"]))
    vals = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    return Field(grid, vals), float(meta["time"])


def export_csv(path, f: Field):
    data = np.column_stack([f.grid.x, f.values])
    np.savetxt(path, data, delimiter=",", header="x,value", comments="", fmt="%.17g")
