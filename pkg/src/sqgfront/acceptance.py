"""Acceptance criteria: measurements, pinned limits and the suite runner.

Each criterion is a function returning a :class:`CriterionResult`. The
``measured`` values are plain floats so a report payload serializes
bit-exactly; wall-clock time is kept apart as metadata.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .evolution import SolverConfig, evolve, linear_propagator, mass, scaling_transform
from .front import apply_A, f_shape, make_quadrature, paralin_residual
from .paradiff import (
    apply_Ta, band_noise, choose_M, default_samples, make_cutoff, modified_energy,
    operator_norm, ta_matrix,
)
from .spectral import (
    Field, apply_multiplier, derivative, log_abs_D, make_grid, sobolev_norm,
)
from .wavepacket import (
    ProfileRecord, a_prime, a_second, band_velocities, decay_report, extract_profiles,
    fit_scattering, phase, q_constant, xi_of_v,
)

__all__ = ["CriterionResult", "CRITERIA", "SUITES", "run_criterion", "run_suite"]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: dict
    limits: dict
    seconds: float = field(default=0.0, compare=False)

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.measured = _plain(self.measured)
        self.limits = _plain(self.limits)

    def payload(self):
        """Deterministic part of the result (no timing)."""
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "measured": self.measured, "limits": self.limits}

    def line(self):
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.name} ({self.seconds:.1f} s): {vals}"


def _plain(obj):
    """Numpy scalars and containers to builtin types, so payloads always serialize."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def _floats(xs):
    return [float(x) for x in xs]


# --- 1. linear exactness --------------------------------------------------------------

def linear_exactness():
    g = make_grid(math.pi, 64)
    phi0 = Field.from_function(g, lambda x: np.cos(2.0 * x))
    cfg = SolverConfig(dt=1e-2, T_final=1.0, nonlinear=False, monitors=False,
                       record_stride=10 ** 9)
    final = evolve(phi0, cfg).final
    # e^{2ix} picks up exp(2i * 2 log 2 * t) under u_t = 2 log|D| u_x
    exact = np.cos(2.0 * g.x + 4.0 * math.log(2.0))
    err = _rel(final.values, exact)
    return CriterionResult(1, "linear exactness", err <= 1e-10, {"rel_l2": err},
                           {"rel_l2": 1e-10})


# --- 2, 3. mass and temporal order ---------------------------------------------------------

def _mass_datum():
    g = make_grid(32.0 * math.pi, 512)
    return Field.from_function(g, lambda x: 0.1 * np.exp(-x ** 2))


@lru_cache(maxsize=None)
def _mass_run(dt):
    cfg = SolverConfig(dt=dt, T_final=5.0, monitors=False, record_stride=1)
    traj = evolve(_mass_datum(), cfg)
    m = np.array([mass(f) for _, f in traj.snapshots])
    return float(np.max(np.abs(m - m[0])) / m[0]), traj.final.values


def mass_conservation():
    d1, _ = _mass_run(1e-2)
    d2, _ = _mass_run(5e-3)
    ratio = d1 / d2 if d2 > 0 else math.inf
    ok = d1 <= 1e-6 and ratio >= 4.0
    return CriterionResult(2, "mass conservation", ok,
                           {"drift_dt": d1, "drift_half_dt": d2, "reduction": ratio},
                           {"drift_dt": 1e-6, "reduction_min": 4.0})


def temporal_order():
    u = [_mass_run(dt)[1] for dt in (4e-2, 2e-2, 1e-2)]
    p = math.log2(np.linalg.norm(u[0] - u[1]) / np.linalg.norm(u[1] - u[2]))
    return CriterionResult(3, "temporal order", abs(p - 4.0) <= 0.2,
                           {"dts": [4e-2, 2e-2, 1e-2], "order": p},
                           {"order": 4.0, "tol": 0.2})


# --- 4. operator oracle ---------------------------------------------------------------------

def _lagrange_oracle(f, fv, L, N, q, refine=16, order=10):
    """A_phi v (phi = f, v = fv) at the grid points from 10-point interpolation of fine samples."""
    nf = N * refine
    h = 2.0 * L / nf
    xf = -L + h * np.arange(nf)
    tabs = (f(xf), fv(xf))
    x = -L + (2.0 * L / N) * np.arange(N)
    f0, v0 = f(x), fv(x)
    acc = np.zeros(N)
    for y, w in zip(q.nodes, q.weights):
        s = ((x + y + L) % (2.0 * L)) / h
        k0 = np.floor(s).astype(np.int64) - order // 2 + 1
        vals = []
        for tab in tabs:
            out = np.zeros(N)
            for m in range(order):
                wm = np.ones(N)
                for l in range(order):
                    if l != m:
                        wm *= (s - (k0 + l)) / (m - l)
                out += wm * tab[(k0 + m) % nf]
            vals.append(out)
        acc += w * f_shape((vals[0] - f0) / y) * (vals[1] - v0) / abs(y)
    return acc


def operator_oracle():
    L, N = 32.0 * math.pi, 512
    g = make_grid(L, N)
    f = lambda x: 0.5 * np.exp(-x ** 2)  # noqa: E731
    fp = lambda x: -x * np.exp(-x ** 2)  # noqa: E731
    phi, v = Field.from_function(g, f), Field.from_function(g, fp)
    Y = 16.0 * math.pi
    q = make_quadrature(Y, 2048)
    # v = phi_x is the combination the equation uses; v = phi is the plain pairing
    err = max(_rel(apply_A(phi, v, q).values, _lagrange_oracle(f, fp, L, N, q)),
              _rel(apply_A(phi, phi, q).values, _lagrange_oracle(f, f, L, N, q)))
    # self-convergence in N_y at fixed Y
    A = [apply_A(phi, v, make_quadrature(Y, n)).values for n in (512, 1024, 2048)]
    order = math.log2(np.linalg.norm(A[1] - A[0]) / np.linalg.norm(A[2] - A[1]))
    # truncation in Y against a full-period reference
    Ys = [2.0 * math.pi, 4.0 * math.pi, 8.0 * math.pi, 16.0 * math.pi]
    ref = apply_A(phi, v, make_quadrature(32.0 * math.pi, 1024)).values
    tail = [float(np.linalg.norm(apply_A(phi, v, make_quadrature(y, 1024)).values - ref))
            for y in Ys]
    slope = float(np.polyfit(np.log(Ys), np.log(tail), 1)[0])
    ok = err <= 1e-6 and order >= 2.0 and abs(slope + 2.0) <= 0.3
    return CriterionResult(4, "operator oracle", ok,
                           {"oracle_rel_l2": err, "ny_order": order, "tail_slope": slope},
                           {"oracle_rel_l2": 1e-6, "ny_order_min": 2.0, "tail_slope": -2.0,
                            "tail_tol": 0.3})


# --- 5. scaling symmetry ---------------------------------------------------------------------

def scaling_symmetry():
    L = 32.0 * math.pi
    g = make_grid(L, 512)
    phi0 = Field.from_function(g, lambda x: 0.1 * np.exp(-x ** 2))
    Y, n_y, dt, T = L / 2.0, 96, 1e-2, 1.0
    cfg = SolverConfig(dt=dt, T_final=T, monitors=False, record_stride=10 ** 9)
    final = evolve(phi0, cfg, make_quadrature(Y, n_y)).final
    out = {}
    for kappa in (0.5, 2.0):
        _, psi_T = scaling_transform((T, final), kappa)
        _, psi_0 = scaling_transform((0.0, phi0), kappa)
        cfg_k = SolverConfig(dt=kappa * dt, T_final=kappa * T, monitors=False,
                             record_stride=10 ** 9)
        run = evolve(psi_0, cfg_k, make_quadrature(kappa * Y, n_y)).final
        out[f"kappa_{kappa:g}"] = _rel(run.values, psi_T.values)
    ok = max(out.values()) <= 1e-4
    return CriterionResult(5, "scaling symmetry", ok, out, {"rel_l2": 1e-4})


# --- 6. paralinearization ---------------------------------------------------------------------

def paralinearization():
    L = 8.0 * math.pi
    g = make_grid(L, 4096)
    phi = Field.from_function(g, lambda x: 0.3 * np.exp(-x ** 2))
    q = make_quadrature(L / 2.0, 1024)
    c = make_cutoff(2.0)
    rng = np.random.Generator(np.random.Philox(7))
    D = derivative(g)
    Ffx = Field(g, f_shape(apply_multiplier(phi, D).values))
    bands = (8.0, 16.0, 32.0, 64.0)
    resid, main = [], []
    for lam in bands:
        v = band_noise(g, lam, rng)
        R = paralin_residual(phi, v, q, c)
        resid.append(apply_multiplier(R, D).l2() / v.l2())
        m = apply_Ta(Ffx, apply_multiplier(v, log_abs_D(g)), c)
        main.append(apply_multiplier(m, D).l2() / v.l2())
    spread = max(resid) / min(resid)
    growth = main[-1] / main[0]
    ok = spread <= 2.0 and growth >= 6.0
    return CriterionResult(6, "paralinearization", ok,
                           {"bands": list(bands), "residual": _floats(resid),
                            "main": _floats(main), "residual_spread": spread,
                            "main_growth": growth},
                           {"residual_spread": 2.0, "main_growth_min": 6.0})


# --- 7, 8. quantization and modified energy ---------------------------------------------------

BOUND_C = 2.0


def _smooth_random_symbol(g, rng):
    lam = 2.0 ** rng.integers(-1, 3)
    return Field(g, rng.uniform(-1.0, 1.0) + band_noise(g, None, rng, lo=g.dxi, hi=lam).values)


@lru_cache(maxsize=None)
def _chosen_M():
    g = make_grid(8.0 * math.pi, 256)
    samples = default_samples(g, 1.0, 3.0, seed=1)
    return {r: choose_M(1.0, r, 3.0, samples) for r in (1, 6)}


def quantization():
    g = make_grid(8.0 * math.pi, 256)
    rng = np.random.Generator(np.random.Philox(11))
    defect = 0.0
    for _ in range(20):
        a = _smooth_random_symbol(g, rng)
        M = 2.0 ** rng.integers(-3, 3)
        defect = max(defect, ta_matrix(a, make_cutoff(M)).hermitian_defect())
    ch = _chosen_M()
    achieved = {f"achieved_r{r}": float(ch[r].achieved) for r in ch}
    # ||T_a|| <= max|a| + C ||P_{>M/2} a||_inf on Gaussian symbols
    worst = 0.0
    for amp, width in ((0.4, 1.0), (1.0, 0.5), (-0.7, 2.0), (2.0, 0.25)):
        a = Field(g, amp * np.exp(-(g.x / width) ** 2))
        for M in (0.5, 1.0, 2.0, 4.0):
            hp = make_cutoff(M / 2.0).grid_high_pass(g)
            a_hi = np.fft.ifft(hp * a.spectrum).real
            bound = np.max(np.abs(a.values)) + BOUND_C * np.max(np.abs(a_hi))
            worst = max(worst, operator_norm(a, make_cutoff(M)) / bound)
    ok = defect <= 1e-12 and max(achieved.values()) <= 0.95 and worst <= 1.0
    measured = {"hermitian_defect": defect, **achieved,
                "M_r1": ch[1].M, "M_r6": ch[6].M, "bound_ratio": worst}
    return CriterionResult(7, "quantization", ok, measured,
                           {"hermitian_defect": 1e-12, "achieved": 0.95, "bound_ratio": 1.0,
                            "C": BOUND_C})


def modified_energy_check():
    g = make_grid(8.0 * math.pi, 256)
    M = max(ch.M for ch in _chosen_M().values())
    c = make_cutoff(M)
    phi = Field(g, np.exp(-g.x ** 2))
    phi = phi * (1.0 / sobolev_norm(phi, 3.0))
    p = c.grid_high_pass(g)
    rng = np.random.Generator(np.random.Philox(3))
    lower, upper = math.inf, 0.0
    for _ in range(50):
        lo = M * 2.0 ** rng.uniform(0.0, 5.0)
        hi = min(max(lo * 2.0 ** rng.uniform(0.5, 3.0), lo + 3.0 * g.dxi), g.nyquist)
        v = band_noise(g, None, rng, lo=lo, hi=hi)
        E = modified_energy(phi, v, 3.0, c)
        pv = Field.from_spectrum(g, p * v.spectrum)
        lower = min(lower, E / sobolev_norm(pv, 3.0) ** 2)
        upper = max(upper, E / sobolev_norm(v, 3.0) ** 2)
    ratio = upper / lower
    return CriterionResult(8, "modified energy", lower > 0 and ratio <= 10.0,
                           {"M": M, "c1": lower, "c2": upper, "c2_over_c1": ratio},
                           {"c2_over_c1": 10.0})


# --- 9, 10. dispersion identities and the resonance constant ------------------------------------

def dispersion_identities():
    rng = np.random.Generator(np.random.Philox(9))
    v = rng.uniform(-10.0, 10.0, 100)
    xi = xi_of_v(v)
    e1 = float(np.max(np.abs(a_prime(xi) - v)))
    h = 1e-3  # fourth-order central difference
    dphi = (-phase(v + 2 * h) + 8 * phase(v + h) - 8 * phase(v - h) + phase(v - 2 * h)) / (12 * h)
    e2 = float(np.max(np.abs(dphi - xi)))
    e3 = float(np.max(np.abs(phase(v) + 2.0 * xi)))
    e4 = float(np.max(np.abs(a_second(xi) * xi + 2.0)))
    ok = e1 <= 1e-12 and e2 <= 1e-8 and e3 <= 1e-12 and e4 <= 1e-12
    return CriterionResult(9, "dispersion identities", ok,
                           {"group_velocity": e1, "phase_derivative_fd": e2,
                            "phase_value": e3, "curvature": e4},
                           {"group_velocity": 1e-12, "phase_derivative_fd": 1e-8,
                            "phase_value": 1e-12, "curvature": 1e-12})


def resonance_constant():
    q1 = q_constant(1.0)
    closed = -4.0 / 3.0 * math.log(2.0)
    scal = {f"xi_{xi:g}": float(abs(q_constant(xi) / (xi * xi * q1) - 1.0))
            for xi in (0.5, 2.0, 4.0)}
    conj = float(abs(q_constant(-1.0) - np.conj(q1)))
    ok = (abs(q1.imag) <= 1e-6 and abs(q1.real - closed) <= 1e-4
          and max(scal.values()) <= 1e-3 and conj <= 1e-6)
    return CriterionResult(10, "resonance constant", ok,
                           {"q1_re": q1.real, "q1_im": q1.imag, "closed_form": closed,
                            **{f"scaling_{k}": v for k, v in scal.items()}, "conj_defect": conj},
                           {"imag": 1e-6, "closed_form": 1e-4, "scaling": 1e-3,
                            "conj_defect": 1e-6})


# --- 11. dispersive decay -------------------------------------------------------------------------

DECAY_TIMES = tuple(float(t) for t in np.geomspace(1.0, 50.0, 18))


@lru_cache(maxsize=None)
def _decay_nonlinear():
    g = make_grid(128.0 * math.pi, 2048)
    phi0 = Field.from_function(g, lambda x: 0.01 * np.exp(-x ** 2))
    cfg = SolverConfig(dt=0.1, T_final=50.0, Y_max=32.0, N_y=256, monitors=False,
                       record_stride=10 ** 9, record_times=DECAY_TIMES)
    traj = evolve(phi0, cfg)
    return [(t, f) for t, f in traj.snapshots if t > 0]


def dispersive_decay():
    g = make_grid(256.0 * math.pi, 4096)
    phi0 = Field.from_function(g, lambda x: 0.01 * np.exp(-x ** 2))
    lin = [(t, apply_multiplier(phi0, linear_propagator(g, t))) for t in DECAY_TIMES]
    lin_rep = decay_report(lin, 0.1, window=(5.0, 50.0))
    nl_rep = decay_report(_decay_nonlinear(), 0.1, window=(5.0, 50.0))
    sup = nl_rep.sup_scaled
    trend = nl_rep.scaled_trend()
    # growth would show as a strictly increasing sequence over [1, 50]
    monotone = bool(np.all(np.diff(nl_rep.scaled) > 0))
    ok = (abs(lin_rep.slope + 0.5) <= 0.1 and math.isfinite(sup) and trend <= 0.1
          and not monotone)
    return CriterionResult(11, "dispersive decay", ok,
                           {"linear_slope": lin_rep.slope, "nonlinear_slope": nl_rep.slope,
                            "sup_scaled": sup, "linear_sup_scaled": lin_rep.sup_scaled,
                            "scaled_trend": trend, "monotone_growth": monotone},
                           {"linear_slope": -0.5, "slope_tol": 0.1, "scaled_trend_max": 0.1,
                            "monotone_growth": False})


# --- 12. profiles and modified scattering ------------------------------------------------------

SCATTER_LAMBDA = 4.0
SCATTER_TIMES = tuple(8.0 * 2.0 ** (k / 4.0) for k in range(9))  # 8 ... 32


@lru_cache(maxsize=None)
def _scattering_runs():
    g = make_grid(72.0 * math.pi, 2048)
    phi0 = Field.from_function(g, lambda x: 0.01 * np.exp(-x ** 2) * np.cos(5.0 * x))
    q = make_quadrature(32.0, 512)
    out = {}
    for nl in (False, True):
        cfg = SolverConfig(dt=0.05, T_final=32.0, nonlinear=nl, monitors=False,
                           record_stride=10 ** 9, record_times=SCATTER_TIMES)
        out[nl] = [(t, f) for t, f in evolve(phi0, cfg, q).snapshots if t >= 8.0 - 1e-9]
    return out


def _synthetic_fit_error():
    rng = np.random.Generator(np.random.Philox(12))
    vs = band_velocities(1.0)
    W = rng.uniform(0.1, 0.5, vs.size) * np.exp(1j * rng.uniform(-math.pi, math.pi, vs.size))
    slope = np.array([q_constant(round(float(xi_of_v(v)), 15)).real * float(xi_of_v(v))
                      for v in vs]) * np.abs(W) ** 2
    rec = ProfileRecord(1.0, vs)
    for t in SCATTER_TIMES:
        rec.times.append(t)
        rec.gamma.append(W * np.exp(1j * slope * math.log(t)))
        rec.admissible.append(np.ones(vs.size, dtype=bool))
    fit = fit_scattering(rec, window=(SCATTER_TIMES[0], SCATTER_TIMES[-1]))
    return float(max(np.max(np.abs(fit.W - W)), np.max(np.abs(fit.slope_fit - slope)),
                     np.max(np.abs(fit.slope_pred - slope))))


def scattering():
    synth = _synthetic_fit_error()
    runs = _scattering_runs()
    vs = band_velocities(SCATTER_LAMBDA)
    window = (SCATTER_TIMES[0], SCATTER_TIMES[-1])
    band = extract_profiles(runs[True], SCATTER_LAMBDA, vs, t_min=8.0 - 1e-9).matrix()
    drift = float(np.max(np.abs(np.abs(band[-1]) - np.abs(band[0]))) / np.max(np.abs(band[0])))
    full = extract_profiles(runs[True], SCATTER_LAMBDA, vs, t_min=8.0 - 1e-9, project=False)
    ref = extract_profiles(runs[False], SCATTER_LAMBDA, vs, t_min=8.0 - 1e-9, project=False)
    fit = fit_scattering(full, window=window, reference=ref)
    best = np.argsort(-np.abs(fit.W))[:3]
    ratios = fit.slope_fit[best] / fit.slope_pred[best]
    ok = synth <= 1e-10 and drift <= 0.10 and bool(np.all((ratios >= 0.5) & (ratios <= 2.0)))
    return CriterionResult(12, "profile scattering", ok,
                           {"synthetic_error": synth, "band_drift": drift,
                            "velocities": _floats(vs[best]), "slope_fit": _floats(fit.slope_fit[best]),
                            "slope_pred": _floats(fit.slope_pred[best]), "ratio": _floats(ratios)},
                           {"synthetic_error": 1e-10, "band_drift": 0.10, "ratio_range": [0.5, 2.0]})


# --- 13. determinism -------------------------------------------------------------------------------

DETERMINISM_CONFIG = {
    "kind": "paralin-check",
    "grid": {"L": 8.0 * math.pi, "N": 512},
    "solver": {"Y_max": 4.0 * math.pi, "N_y": 128},
    "datum": {"family": "gaussian", "A": 0.3, "sigma": 1.0},
    "params": {"M": 2.0, "bands": [4, 8, 16], "seed": 5},
}


def _cli(args, cwd):
    env = {k: v for k, v in os.environ.items() if k != "NUMBA_NUM_THREADS"}
    proc = subprocess.run([sys.executable, "-m", "sqgfront.cli", *args], cwd=cwd, env=env,
                          capture_output=True, text=True)
    return proc.returncode


def _payload_bytes(path):
    return json.dumps(json.loads(Path(path).read_text())["payload"], sort_keys=True).encode()


def determinism(threads=(1, 8)):
    """Core suite and a paralinearization run under different thread counts."""
    blobs, codes = {}, {}
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "probe.json"
        cfg.write_text(json.dumps(DETERMINISM_CONFIG))
        for n in threads:
            out = Path(tmp) / f"threads{n}"
            codes[f"suite_t{n}"] = _cli(["suite", "core", "--threads", str(n), "--out",
                                         str(out)], tmp)
            codes[f"run_t{n}"] = _cli(["run", str(cfg), "--threads", str(n), "--out",
                                       str(out / "run")], tmp)
            blobs[n] = (_payload_bytes(out / "suite_core.json"),
                        _payload_bytes(out / "run" / "summary.json"))
    ref = blobs[threads[0]]
    same = all(b == ref for b in blobs.values())
    clean = all(c == 0 for c in codes.values())
    digest = {f"t{n}": [hashlib.sha256(x).hexdigest()[:16] for x in b] for n, b in blobs.items()}
    return CriterionResult(13, "determinism", same and clean,
                           {"identical": same, "exit_codes": codes, "digests": digest},
                           {"identical": True})


# --- registry ---------------------------------------------------------------------------------------

CRITERIA = {
    1: linear_exactness,
    2: mass_conservation,
    3: temporal_order,
    4: operator_oracle,
    5: scaling_symmetry,
    6: paralinearization,
    7: quantization,
    8: modified_energy_check,
    9: dispersion_identities,
    10: resonance_constant,
    11: dispersive_decay,
    12: scattering,
    13: determinism,
}

SUITES = {
    "acceptance": tuple(range(1, 14)),
    "quick": (1, 5, 7, 8, 9, 10),
    # everything except the two long runs and determinism itself
    "core": tuple(range(1, 11)),
}


def run_criterion(number) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[number]()
    res.seconds = time.perf_counter() - t0
    return res


def run_suite(name, callback=None):
    """Run a named suite; ``callback`` receives each result as it completes."""
    if name not in SUITES:
        raise KeyError(name)
    out = []
    for k in SUITES[name]:
        res = run_criterion(k)
        out.append(res)
        if callback is not None:
            callback(res)
    return out
