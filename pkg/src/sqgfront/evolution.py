"""Integrating-factor RK4 time stepping, trajectories, monitors and the scaling map."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BlowUp, InvalidArgument
from .front import QuadratureScheme, default_quadrature, make_quadrature, nonlinear_term
from .spectral import (
    BoundaryMassWarning, Field, FourierMultiplier, GridSpec, load_field, make_grid,
    save_field, sobolev_norm, x_norm, y_norm,
)

__all__ = [
    "SolverConfig", "Trajectory", "linear_propagator", "step_ifrk4", "evolve", "mass",
    "scaling_transform", "save_trajectory", "load_trajectory", "MONITOR_COLUMNS",
]

MONITOR_COLUMNS = ("t", "mass", "Hs", "Y", "X", "rhs_norm")


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-2
    T_final: float = 1.0
    record_stride: int = 1
    Y_max: float | None = None
    N_y: int | None = None
    grading: float = 2.0
    oversample: int = 2
    M: float = 1.0
    s: float = 3.0
    delta: float = 0.1
    blowup_threshold: float = 1e6
    nonlinear: bool = True
    monitors: bool = True
    record_times: tuple = ()

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidArgument("dt must be positive")
        if not self.T_final >= self.dt * (1 - 1e-12):
            raise InvalidArgument("T_final must be at least dt")
        if self.oversample not in (1, 2):
            raise InvalidArgument("oversample must be 1 or 2")
        if int(self.record_stride) < 1:
            raise InvalidArgument("record_stride must be >= 1")
        if any(not 0 < t <= self.T_final * (1 + 1e-12) for t in self.record_times):
            raise InvalidArgument("record_times must lie in (0, T_final]")

    @property
    def num_steps(self):
        return int(round(self.T_final / self.dt))

    def quadrature(self, grid: GridSpec) -> QuadratureScheme:
        base = default_quadrature(grid)
        Y = base.Y_max if self.Y_max is None else self.Y_max
        n = base.N_y if self.N_y is None else self.N_y
        return make_quadrature(Y, n, self.grading)


@dataclass
class Trajectory:
    grid: GridSpec
    snapshots: list = field(default_factory=list)  # (t, Field)
    monitors: list = field(default_factory=list)   # tuples in MONITOR_COLUMNS order
    boundary_warning: bool = False

    @property
    def times(self):
        return np.array([t for t, _ in self.snapshots])

    def monitor(self, name):
        k = MONITOR_COLUMNS.index(name)
        return np.array([row[k] for row in self.monitors])

    @property
    def final(self):
        return self.snapshots[-1][1]


def linear_propagator(grid: GridSpec, dt: float) -> FourierMultiplier:
    """exp(2i xi log|xi| dt); the xi = 0 value is 1 and the Nyquist mode is dropped."""
    return FourierMultiplier.from_function(
        grid, lambda k: np.exp(2j * k * np.log(np.abs(k)) * dt), f"exp(dt={dt:g})",
        zero_value=1.0, odd=True)


def mass(phi: Field) -> float:
    """Discrete int phi^2 dx."""
    return phi.grid.dx * float(np.dot(phi.values, phi.values))


class _Stepper:
    """Holds the propagator symbols and quadrature for a fixed (grid, dt)."""

    def __init__(self, grid, cfg: SolverConfig, q=None):
        self.grid = grid
        self.cfg = cfg
        self.q = q if q is not None else cfg.quadrature(grid)
        self.E1 = linear_propagator(grid, cfg.dt).symbol
        self.E2 = linear_propagator(grid, cfg.dt / 2).symbol

    def N(self, uhat):
        if not self.cfg.nonlinear:
            return np.zeros_like(uhat)
        phi = Field(self.grid, np.fft.ifft(uhat).real)
        return np.fft.fft(nonlinear_term(phi, self.q, self.cfg.oversample).values)

    def step(self, uhat, h=None):
        if h is None or h == self.cfg.dt:
            h, E1, E2 = self.cfg.dt, self.E1, self.E2
        else:
            E1 = linear_propagator(self.grid, h).symbol
            E2 = linear_propagator(self.grid, h / 2).symbol
        k1 = self.N(uhat)
        k2 = self.N(E2 * (uhat + 0.5 * h * k1))
        k3 = self.N(E2 * uhat + 0.5 * h * k2)
        k4 = self.N(E1 * uhat + h * E2 * k3)
        out = E1 * uhat + (h / 6.0) * (E1 * k1 + 2.0 * E2 * (k2 + k3) + k4)
        out[self.grid.num_points // 2] = 0.0
        return out


def step_ifrk4(phi: Field, t: float, cfg: SolverConfig, q: QuadratureScheme | None = None) -> Field:
    """One integrating-factor RK4 step; the linear flow is applied exactly."""
    out = _Stepper(phi.grid, cfg, q).step(np.fft.fft(phi.values))
    vals = np.fft.ifft(out).real
    if not np.all(np.isfinite(vals)):
        raise BlowUp(f"non-finite state at t = {t + cfg.dt:g}", last=(t, phi))
    return Field(phi.grid, vals)


def _monitor_row(t, phi, cfg, q):
    hs = sobolev_norm(phi, cfg.s)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundaryMassWarning)
        xn = x_norm(phi, t, cfg.s)
    rhs_norm = 0.0
    if cfg.nonlinear:
        nl = nonlinear_term(phi, q, cfg.oversample)
        rhs_norm = nl.l2()
    return (t, mass(phi), hs, y_norm(phi, cfg.delta), xn, rhs_norm), bool(caught)


def evolve(phi0: Field, cfg: SolverConfig, q: QuadratureScheme | None = None) -> Trajectory:
    """Advance phi0 to cfg.T_final with fixed steps.

    Raises :class:`BlowUp` whose ``last`` is the partial trajectory.
    """
    g = phi0.grid
    st = _Stepper(g, cfg, q)
    traj = Trajectory(g, [(0.0, phi0)])
    if cfg.monitors:
        row, flag = _monitor_row(0.0, phi0, cfg, st.q)
        traj.monitors.append(row)
        traj.boundary_warning |= flag
    uhat = np.fft.fft(phi0.values)
    uhat[g.num_points // 2] = 0.0
    n = cfg.num_steps
    pending = sorted(float(t) for t in cfg.record_times)
    for k in range(1, n + 1):
        t_prev = (k - 1) * cfg.dt
        t = k * cfg.dt
        # dense output: an auxiliary partial step that leaves the main march untouched
        while pending and pending[0] < t - 1e-9 * cfg.dt:
            tr = pending.pop(0)
            aux = np.fft.ifft(st.step(uhat, tr - t_prev)).real if tr > t_prev else \
                np.fft.ifft(uhat).real
            traj.snapshots.append((tr, Field(g, aux)))
        if pending and abs(pending[0] - t) <= 1e-9 * cfg.dt:
            pending.pop(0)
            record_now = True
        else:
            record_now = k % cfg.record_stride == 0 or k == n
        uhat = st.step(uhat)
        vals = np.fft.ifft(uhat).real
        if not np.all(np.isfinite(vals)):
            raise BlowUp(f"non-finite state at t = {t:g}", last=traj)
        phi = Field(g, vals)
        if cfg.monitors:
            row, flag = _monitor_row(t, phi, cfg, st.q)
            traj.monitors.append(row)
            traj.boundary_warning |= flag
            hs = row[2]
        else:
            hs = sobolev_norm(phi, cfg.s)
        if hs > cfg.blowup_threshold:
            raise BlowUp(f"H^{cfg.s} norm {hs:.3e} exceeds threshold at t = {t:g}", last=traj)
        if record_now:
            traj.snapshots.append((t, phi))
    return traj


def scaling_transform(snapshot, kappa, max_edge_fraction=1e-2):
    """Map (t, phi) to (kappa t, psi) with psi(x) = kappa phi(x/kappa - 2 log(kappa) t).

    The returned field lives on the grid with half-length kappa L. The map
    is exact for the periodic problem; profiles with more than
    ``max_edge_fraction`` of their mass in |x| > 0.9 L are rejected because
    they no longer stand in for whole-line data.
    """
    t, phi = snapshot
    if not (kappa > 0 and math.isfinite(kappa)):
        raise InvalidArgument("kappa must be positive")
    g = phi.grid
    shift = -2.0 * math.log(kappa) * t
    spec = np.fft.rfft(phi.values) * np.exp(1j * g.xi_r * shift)
    vals = np.fft.irfft(spec, n=g.num_points)
    m = vals ** 2
    if m.sum() > 0 and m[np.abs(g.x) > 0.9 * g.L].sum() > max_edge_fraction * m.sum():
        raise InvalidArgument("transformed profile does not fit inside the grid")
    g2 = make_grid(g.half_length * kappa, g.num_points)
    return kappa * t, Field(g2, kappa * vals)


# --- storage ----------------------------------------------------------------------

def save_trajectory(path, traj: Trajectory, config: dict | None = None):
    """Directory with manifest.json, snapshots/*.bin(+.json) and monitors.csv."""
    root = Path(path)
    (root / "snapshots").mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (t, phi) in enumerate(traj.snapshots):
        name = f"snap_{k:05d}"
        save_field(root / "snapshots" / name, phi, t)
        entries.append({"t": t, "file": f"snapshots/{name}.bin"})
    with open(root / "monitors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MONITOR_COLUMNS)
        for row in traj.monitors:
            w.writerow([repr(float(v)) for v in row])
    manifest = {"L": traj.grid.half_length, "N": traj.grid.num_points, "snapshots": entries,
                "boundary_warning": traj.boundary_warning, "config": config or {}}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return root


def load_trajectory(path) -> Trajectory:
    root = Path(path)
    man = json.loads((root / "manifest.json").read_text())
    grid = make_grid(man["L"], man["N"])
    traj = Trajectory(grid, boundary_warning=man.get("boundary_warning", False))
    for e in man["snapshots"]:
        f, t = load_field(root / e["file"])
        traj.snapshots.append((t, f))
    with open(root / "monitors.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    traj.monitors = [tuple(float(v) for v in r) for r in rows]
    return traj
