"""M-dependent paradifferential quantization, norm probes and modified energies."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgument, NumericalFailure
from .spectral import Field, GridSpec, abs_D_power, apply_multiplier, derivative, sobolev_norm

__all__ = [
    "ParaCutoff", "OperatorMatrix", "MChoice", "make_cutoff", "apply_Ta", "ta_matrix",
    "operator_norm", "choose_M", "modified_energy", "default_samples", "band_noise", "MAX_MATRIX_N",
]

MAX_MATRIX_N = 4096


@dataclass(frozen=True)
class ParaCutoff:
    M: float

    @staticmethod
    def chi(theta):
        """Even profile, 1 on |theta| <= 1/20, 0 on |theta| >= 1/10."""
        return kernels.chi_profile_np(theta)

    def chi_tilde(self, th1, th2):
        th1 = np.asarray(th1, dtype=float)
        th2 = np.asarray(th2, dtype=float)
        return self.chi(th1 ** 2 / (self.M ** 2 + th2 ** 2))

    def high_pass(self, xi):
        """Symbol of P_{>M}: 0 on |xi| <= M/2, 1 on |xi| >= M."""
        h = 0.5 * self.M
        return 1.0 - kernels.smooth_step_np((np.abs(np.asarray(xi, dtype=float)) - h) / h)

    def grid_high_pass(self, grid: GridSpec):
        p = self.high_pass(grid.xi)
        p[grid.num_points // 2] = 0.0  # unpaired Nyquist mode
        return p


def make_cutoff(M) -> ParaCutoff:
    if not (np.isfinite(M) and M > 0):
        raise InvalidArgument(f"M must be positive, got {M!r}")
    return ParaCutoff(float(M))


def _spectra(a: Field, u: Field):
    if a.grid != u.grid:
        raise InvalidArgument("symbol and argument live on different grids")
    return np.ascontiguousarray(a.spectrum), np.ascontiguousarray(u.spectrum)


def apply_Ta_spectrum(a: Field, uhat, c: ParaCutoff):
    g = a.grid
    p = c.grid_high_pass(g)
    return kernels.ta_apply(np.ascontiguousarray(a.spectrum), np.ascontiguousarray(g.xi), p,
                            c.M, np.ascontiguousarray(uhat, dtype=np.complex128))


def apply_Ta(a: Field, u: Field, c: ParaCutoff) -> Field:
    """T_a u for an x-only real symbol a, by the dense Fourier double sum."""
    _, uhat = _spectra(a, u)
    return Field.from_spectrum(a.grid, apply_Ta_spectrum(a, uhat, c))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """T_a on the Fourier coefficients it can reach (those with P_{>M} symbol != 0)."""

    matrix: np.ndarray
    grid: GridSpec
    index: np.ndarray
    tag: str = ""

    def apply(self, u: Field) -> Field:
        out = np.zeros(self.grid.num_points, dtype=np.complex128)
        out[self.index] = self.matrix @ u.spectrum[self.index]
        return Field.from_spectrum(self.grid, out)

    def hermitian_defect(self):
        m = self.matrix
        return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def ta_matrix(a: Field, c: ParaCutoff, tag="") -> OperatorMatrix:
    g = a.grid
    if g.num_points > MAX_MATRIX_N:
        raise InvalidArgument(f"dense T_a limited to N <= {MAX_MATRIX_N}")
    p = c.grid_high_pass(g)
    idx = np.nonzero(p)[0].astype(np.int64)
    mat = kernels.ta_matrix(np.ascontiguousarray(a.spectrum), np.ascontiguousarray(g.xi), p,
                            c.M, idx)
    return OperatorMatrix(mat, g, idx, tag or f"T_a(M={c.M:g})")


def _power_norm(mat, rtol=1e-8, max_iter=1000):
    if mat.size == 0 or not np.any(mat):
        return 0.0
    n = mat.shape[1]
    # fixed, generic start vector; a counter-based stream keeps it reproducible
    rng = np.random.Generator(np.random.Philox(20240611))
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        ax = mat @ x
        new = float(np.vdot(ax, ax).real)  # Rayleigh quotient of A*A at unit x
        y = mat.conj().T @ ax
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(new - lam) <= rtol * new:
            return math.sqrt(new)
        lam = new
    raise NumericalFailure("power iteration did not converge", last=math.sqrt(lam))


def operator_norm(a: Field, c: ParaCutoff, rtol=1e-8, max_iter=1000) -> float:
    """L2 operator norm of T_a via power iteration on T_a^* T_a."""
    return _power_norm(ta_matrix(a, c).matrix, rtol, max_iter)


# --- choosing M ------------------------------------------------------------------

@dataclass
class MChoice:
    M: float | None
    achieved: float | None
    r: int
    s: float
    R: float
    margin: float
    trace: list = field(default_factory=list)  # (M, max norm over samples)
    sample_norms: list = field(default_factory=list)

    def to_json(self, n_samples=None):
        return json.dumps({
            "M": [m for m, _ in self.trace], "r": self.r, "s": self.s, "R": self.R,
            "samples": n_samples if n_samples is not None else len(self.sample_norms),
            "norms": [v for _, v in self.trace], "chosen_M": self.M, "margin": self.margin,
            "achieved": self.achieved,
        }, sort_keys=True)


def _dyadic_range(grid: GridSpec):
    lo = int(math.ceil(math.log2(grid.dxi)))
    hi = int(math.floor(math.log2(grid.nyquist)))
    return [2.0 ** k for k in range(lo, hi + 1)]


def _coefficient(u: Field, r: int) -> Field:
    return Field(u.grid, 1.0 - (1.0 - kernels.shape_F_np(u.values)) ** r)


def choose_M(R, r, s, samples, margin=0.05, M_values=None) -> MChoice:
    """Smallest dyadic M with ||T_{1-(1-F(u))^r}|| <= 1 - margin over the samples."""
    if r < 1 or s <= 0.5:
        raise InvalidArgument("need r >= 1 and s > 1/2")
    if not samples:
        raise InvalidArgument("at least one sample is required")
    grid = samples[0].grid
    norms = [sobolev_norm(u, s) for u in samples]
    if max(norms) > R * (1.0 + 1e-12):
        raise InvalidArgument(f"sample exceeds H^{s} radius {R}: {max(norms):.6g}")
    coeffs = [_coefficient(u, int(r)) for u in samples]
    out = MChoice(None, None, int(r), float(s), float(R), float(margin), sample_norms=norms)
    for M in (M_values or _dyadic_range(grid)):
        c = make_cutoff(M)
        worst = max(operator_norm(a, c) for a in coeffs)
        out.trace.append((float(M), worst))
        if worst <= 1.0 - margin:
            out.M, out.achieved = float(M), worst
            return out
    raise NumericalFailure("no admissible M below Nyquist", last=out)


def default_samples(grid: GridSpec, R, s, seed=0, widths=(0.5, 1.0, 2.0, 4.0), bands=(1.0, 2.0, 4.0)):
    """Scaled Gaussians and band-limited noise, each normalized to H^s norm R."""
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for w in widths:
        for sign in (1.0, -1.0):
            f = Field(grid, sign * np.exp(-(grid.x / w) ** 2))
            out.append(f * (R / sobolev_norm(f, s)))
    for lam in bands:
        f = band_noise(grid, lam, rng)
        out.append(f * (R / sobolev_norm(f, s)))
    return out


def band_noise(grid: GridSpec, lam, rng, lo=None, hi=None):
    """Random real field with spectrum uniform on lo <= |xi| < hi (default [lam, 2 lam))."""
    lo = lam if lo is None else lo
    hi = 2.0 * lam if hi is None else hi
    xi = grid.xi_r
    mask = (xi >= lo) & (xi < hi)
    mask[-1] = False
    spec = np.zeros(xi.size, dtype=complex)
    k = int(mask.sum())
    spec[mask] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    vals = np.fft.irfft(spec, n=grid.num_points)
    nrm = np.sqrt(grid.dx * np.dot(vals, vals))
    return Field(grid, vals / nrm if nrm > 0 else vals)


# --- modified energy -------------------------------------------------------------

def _quadratic(g_vals, Tg_vals, grid):
    return grid.dx * float(np.dot(g_vals, Tg_vals))


def _energy_piece(b: Field, v: Field, s, c):
    g = v if s == 0 else apply_multiplier(v, abs_D_power(v.grid, s))
    g = apply_Ta(Field(v.grid, b.values ** s), g, c)
    return _quadratic(g.values, apply_Ta(b, g, c).values, v.grid)


def modified_energy(phi: Field, v: Field, s, c: ParaCutoff) -> float:
    """E^s(v) = E^(s)(v) + E^(0)(v), E^(s) = int g T_{1-F(phi_x)} g, g = T_{(1-F)^s}|D|^s v."""
    if phi.grid != v.grid:
        raise InvalidArgument("fields live on different grids")
    phix = apply_multiplier(phi, derivative(phi.grid))
    b = Field(phi.grid, 1.0 - kernels.shape_F_np(phix.values))
    return _energy_piece(b, v, s, c) + _energy_piece(b, v, 0, c)
