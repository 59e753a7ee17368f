"""Hot inner loops, each with a numba path and a pure-numpy fallback.

Every reduction over quadrature nodes runs in node order for each output
point independently. Parallelism is only over output points, so results are
bitwise independent of the thread count.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, JIT, PJIT, njit, prange

CHI_INNER = 1.0 / 20.0
CHI_OUTER = 1.0 / 10.0


# --- scalar helpers -------------------------------------------------------

@njit(**JIT)
def _bump(r):
    # exp(1 - 1/(1 - r^2)) on |r| < 1, zero outside
    if r <= -1.0 or r >= 1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - r * r))


@njit(**JIT)
def smooth_step(r):
    """1 for r <= 0, 0 for r >= 1, C-infinity in between."""
    if r <= 0.0:
        return 1.0
    if r >= 1.0:
        return 0.0
    a = _bump(r)
    b = _bump(1.0 - r)
    return a / (a + b)


@njit(**JIT)
def chi_profile(theta):
    t = abs(theta)
    return smooth_step((t - CHI_INNER) / (CHI_OUTER - CHI_INNER))


@njit(**JIT)
def shape_F(s):
    # 1 - 1/sqrt(1+s^2) without cancellation for small s
    r = math.sqrt(1.0 + s * s)
    return s * s / (r * (1.0 + r))


def shape_F_np(s):
    s = np.asarray(s, dtype=float)
    r = np.sqrt(1.0 + s * s)
    return s * s / (r * (1.0 + r))


def smooth_step_np(r):
    r = np.asarray(r, dtype=float)
    out = np.where(r <= 0.0, 1.0, 0.0)
    mid = (r > 0.0) & (r < 1.0)
    if np.any(mid):
        rm = r[mid]
        a = np.exp(1.0 - 1.0 / (1.0 - rm * rm))
        b = np.exp(1.0 - 1.0 / (1.0 - (1.0 - rm) ** 2))
        out[mid] = a / (a + b)
    return out


def chi_profile_np(theta):
    t = np.abs(np.asarray(theta, dtype=float))
    return smooth_step_np((t - CHI_INNER) / (CHI_OUTER - CHI_INNER))


# --- nonlocal operator sums -------------------------------------------------

@njit(**PJIT)
def _nonlocal_sum_nb(phi_sh, phi, v_sh, v, y, w, out):
    ny, n = phi_sh.shape
    for i in prange(n):
        acc = out[i]
        for j in range(ny):
            s = (phi_sh[j, i] - phi[i]) / y[j]
            acc += w[j] * shape_F(s) * (v_sh[j, i] - v[i]) / abs(y[j])
        out[i] = acc


def _nonlocal_sum_np(phi_sh, phi, v_sh, v, y, w, out):
    s = (phi_sh - phi[None, :]) / y[:, None]
    terms = (w / np.abs(y))[:, None] * shape_F_np(s) * (v_sh - v[None, :])
    for row in terms:
        out += row


@njit(**PJIT)
def _pv_sum_nb(phi_sh, phi, fx, y, w, out):
    ny, n = phi_sh.shape
    for i in prange(n):
        acc = out[i]
        for j in range(ny):
            ay = abs(y[j])
            val = shape_F((phi_sh[j, i] - phi[i]) / y[j])
            if ay < 1.0:
                val -= fx[i]
            acc += w[j] * val / ay
        out[i] = acc


def _pv_sum_np(phi_sh, phi, fx, y, w, out):
    ay = np.abs(y)
    vals = shape_F_np((phi_sh - phi[None, :]) / y[:, None])
    vals = vals - np.where(ay < 1.0, 1.0, 0.0)[:, None] * fx[None, :]
    terms = (w / ay)[:, None] * vals
    for row in terms:
        out += row


@njit(**PJIT)
def _cubic_sum_nb(phi_sh, phi, y, w, out):
    ny, n = phi_sh.shape
    for i in prange(n):
        acc = out[i]
        for j in range(ny):
            d = (phi_sh[j, i] - phi[i]) / y[j]
            sg = 1.0 if y[j] > 0 else -1.0
            acc += w[j] * sg * d * d * d
        out[i] = acc


def _cubic_sum_np(phi_sh, phi, y, w, out):
    d = (phi_sh - phi[None, :]) / y[:, None]
    terms = (w * np.sign(y))[:, None] * d ** 3
    for row in terms:
        out += row


def nonlocal_sum(phi_sh, phi, v_sh, v, y, w, out):
    """out[i] += sum_j w_j F(dq phi)(x_i) * |dq| v(x_i) over node rows j."""
    if HAVE_NUMBA:
        _nonlocal_sum_nb(phi_sh, phi, v_sh, v, y, w, out)
    else:
        _nonlocal_sum_np(phi_sh, phi, v_sh, v, y, w, out)


def pv_sum(phi_sh, phi, fx, y, w, out):
    """Split-form principal value of F(dq phi)/|y|; ``fx`` is F(phi_x)."""
    if HAVE_NUMBA:
        _pv_sum_nb(phi_sh, phi, fx, y, w, out)
    else:
        _pv_sum_np(phi_sh, phi, fx, y, w, out)


def cubic_sum(phi_sh, phi, y, w, out):
    if HAVE_NUMBA:
        _cubic_sum_nb(phi_sh, phi, y, w, out)
    else:
        _cubic_sum_np(phi_sh, phi, y, w, out)


# --- paradifferential double sum --------------------------------------------

@njit(**PJIT)
def _ta_kernel_nb(ahat, xi, p, M, uhat, out):
    n = xi.shape[0]
    m2 = M * M
    for i in prange(n):
        if p[i] == 0.0:
            continue
        acc = 0.0 + 0.0j
        for j in range(n):
            if p[j] == 0.0:
                continue
            d = xi[i] - xi[j]
            sm = xi[i] + xi[j]
            c = chi_profile(d * d / (m2 + sm * sm))
            if c == 0.0:
                continue
            acc += c * ahat[(i - j) % n] * p[j] * uhat[j]
        out[i] = p[i] * acc / n


@njit(**PJIT)
def _ta_matrix_nb(ahat, xi, p, M, idx, out):
    n = xi.shape[0]
    m = idx.shape[0]
    m2 = M * M
    for a in prange(m):
        i = idx[a]
        for b in range(m):
            j = idx[b]
            d = xi[i] - xi[j]
            sm = xi[i] + xi[j]
            c = chi_profile(d * d / (m2 + sm * sm))
            out[a, b] = p[i] * c * ahat[(i - j) % n] * p[j] / n


def _ta_rows_np(ahat, xi, p, M, rows, cols):
    n = xi.shape[0]
    d = xi[rows][:, None] - xi[cols][None, :]
    sm = xi[rows][:, None] + xi[cols][None, :]
    c = chi_profile_np(d * d / (M * M + sm * sm))
    shift = (rows[:, None] - cols[None, :]) % n
    return p[rows][:, None] * c * ahat[shift] * p[cols][None, :] / n


def ta_apply(ahat, xi, p, M, uhat):
    """Fourier-side T_a: out_i = p_i sum_j chi~(xi_i-xi_j, xi_i+xi_j) a^_{i-j} p_j u^_j / n."""
    out = np.zeros(xi.shape[0], dtype=np.complex128)
    if HAVE_NUMBA:
        _ta_kernel_nb(ahat, xi, p, float(M), uhat, out)
        return out
    live = np.nonzero(p)[0]
    block = max(1, 2 ** 22 // max(1, live.size))
    for start in range(0, live.size, block):
        rows = live[start:start + block]
        out[rows] = _ta_rows_np(ahat, xi, p, float(M), rows, live) @ uhat[live]
    return out


def ta_matrix(ahat, xi, p, M, idx):
    """Dense T_a restricted to the retained wavenumber indices ``idx``."""
    out = np.zeros((idx.size, idx.size), dtype=np.complex128)
    if HAVE_NUMBA:
        _ta_matrix_nb(ahat, xi, p, float(M), idx, out)
        return out
    block = max(1, 2 ** 22 // max(1, idx.size))
    for start in range(0, idx.size, block):
        rows = idx[start:start + block]
        out[start:start + rows.size] = _ta_rows_np(ahat, xi, p, float(M), rows, idx)
    return out
