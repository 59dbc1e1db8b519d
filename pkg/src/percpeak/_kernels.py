"""Hot inner loops, compiled with numba when available.

Set ``PERCPEAK_DISABLE_NUMBA=1`` to force the pure-numpy fallback. Both paths
are kept importable (``*_numpy`` / ``*_numba``) so tests and the benchmark can
compare them directly.
"""
from __future__ import annotations

import itertools
import os

import numpy as np

_DISABLED = os.environ.get("PERCPEAK_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by PERCPEAK_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

try:
    # rocket-fft teaches numba np.fft; without it the APG loop stays in numpy
    import rocket_fft  # noqa: F401

    HAVE_NUMBA_FFT = HAVE_NUMBA
except ImportError:
    HAVE_NUMBA_FFT = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# DRC gain smoothing (branching one-pole in the log-gain domain)
# ---------------------------------------------------------------------------

def drc_smooth_numpy(gain_db, alpha_attack, alpha_release):
    gain_db = np.asarray(gain_db, dtype=np.float64)
    out = np.empty_like(gain_db)
    if alpha_attack == 0.0 and alpha_release == 0.0:
        out[:] = gain_db
        return out
    state = 0.0
    ba = 1.0 - alpha_attack
    br = 1.0 - alpha_release
    for n, g in enumerate(gain_db.tolist()):
        if g < state:
            state = alpha_attack * state + ba * g
        else:
            state = alpha_release * state + br * g
        out[n] = state
    return out


def _drc_smooth_loop(gain_db, alpha_attack, alpha_release):
    out = np.empty_like(gain_db)
    state = 0.0
    ba = 1.0 - alpha_attack
    br = 1.0 - alpha_release
    for n in range(gain_db.shape[0]):
        g = gain_db[n]
        if g < state:
            state = alpha_attack * state + ba * g
        else:
            state = alpha_release * state + br * g
        out[n] = state
    return out


# ---------------------------------------------------------------------------
# Active-set enumeration for tiny box-constrained quadratics
# ---------------------------------------------------------------------------
#
# minimise (x - x0)^T Q (x - x0)  s.t.  |x_i| <= lam
# pattern[i]: 0 free, 1 clamped at +lam, 2 clamped at -lam

def _quad(Q, d):
    return float(d @ Q @ d)


def enumerate_box_qp_numpy(x0, Q, lam, kkt_tol):
    n = x0.shape[0]
    best = np.clip(x0, -lam, lam)
    best_val = np.inf
    best_kkt = np.clip(x0, -lam, lam)
    best_kkt_val = np.inf
    feas_tol = 1e-12 * max(1.0, lam)
    for pattern in itertools.product((0, 1, 2), repeat=n):
        p = np.array(pattern)
        free = p == 0
        x = x0.copy()
        x[p == 1] = lam
        x[p == 2] = -lam
        if free.any() and not free.all():
            fixed = ~free
            d_fixed = x[fixed] - x0[fixed]
            rhs = -Q[np.ix_(free, fixed)] @ d_fixed
            d_free = np.linalg.lstsq(Q[np.ix_(free, free)], rhs, rcond=None)[0]
            x[free] = x0[free] + d_free
        if np.any(np.abs(x) > lam + feas_tol):
            continue
        x = np.clip(x, -lam, lam)
        d = x - x0
        val = _quad(Q, d)
        if val < best_val:
            best_val, best = val, x
        grad = 2.0 * (Q @ d)
        scale = kkt_tol * max(1.0, float(np.max(np.abs(grad))))
        ok = (
            np.all(np.abs(grad[free]) <= scale)
            and np.all(grad[p == 1] <= scale)
            and np.all(grad[p == 2] >= -scale)
        )
        if ok and val < best_kkt_val:
            best_kkt_val, best_kkt = val, x
    return best_kkt if np.isfinite(best_kkt_val) else best


def _enumerate_box_qp_loop(x0, Q, lam, kkt_tol):
    n = x0.shape[0]
    best = np.minimum(np.maximum(x0, -lam), lam)
    best_val = np.inf
    best_kkt = best.copy()
    best_kkt_val = np.inf
    feas_tol = 1e-12 * max(1.0, lam)
    total = 3 ** n
    pattern = np.zeros(n, dtype=np.int64)
    for code in range(total):
        c = code
        nfree = 0
        for i in range(n):
            pattern[i] = c % 3
            c //= 3
            if pattern[i] == 0:
                nfree += 1
        x = x0.copy()
        for i in range(n):
            if pattern[i] == 1:
                x[i] = lam
            elif pattern[i] == 2:
                x[i] = -lam
        if nfree > 0 and nfree < n:
            free_idx = np.empty(nfree, dtype=np.int64)
            fixed_idx = np.empty(n - nfree, dtype=np.int64)
            a = 0
            b = 0
            for i in range(n):
                if pattern[i] == 0:
                    free_idx[a] = i
                    a += 1
                else:
                    fixed_idx[b] = i
                    b += 1
            Qff = np.empty((nfree, nfree))
            rhs = np.zeros(nfree)
            for r in range(nfree):
                for s in range(nfree):
                    Qff[r, s] = Q[free_idx[r], free_idx[s]]
                for s in range(n - nfree):
                    j = fixed_idx[s]
                    rhs[r] -= Q[free_idx[r], j] * (x[j] - x0[j])
            d_free = np.linalg.lstsq(Qff, rhs)[0]
            for r in range(nfree):
                x[free_idx[r]] = x0[free_idx[r]] + d_free[r]
        feasible = True
        for i in range(n):
            if abs(x[i]) > lam + feas_tol:
                feasible = False
        if not feasible:
            continue
        x = np.minimum(np.maximum(x, -lam), lam)
        d = x - x0
        grad = 2.0 * (Q @ d)
        val = d @ (Q @ d)
        if val < best_val:
            best_val = val
            best = x
        gmax = 1.0
        for i in range(n):
            if abs(grad[i]) > gmax:
                gmax = abs(grad[i])
        scale = kkt_tol * gmax
        ok = True
        for i in range(n):
            if pattern[i] == 0 and abs(grad[i]) > scale:
                ok = False
            elif pattern[i] == 1 and grad[i] > scale:
                ok = False
            elif pattern[i] == 2 and grad[i] < -scale:
                ok = False
        if ok and val < best_kkt_val:
            best_kkt_val = val
            best_kkt = x
    if best_kkt_val < np.inf:
        return best_kkt
    return best


# ---------------------------------------------------------------------------
# Accelerated projected gradient for the box-constrained spectral quadratic
# ---------------------------------------------------------------------------
#
# phi(x) = sum_k mw2_k |rfft(x - x0)_k|^2, half-spectrum weights with bin
# multiplicities folded into mw2. One self-contained function (no helper
# calls) so the same source runs under numpy or numba and caches cleanly.
#
# Lower bounds on min phi come from the Frank-Wolfe gap and from the
# Lagrangian dual d(u) = u.x0 - u.Q^-1.u / 4 - lam |u|_1 evaluated at
# u = -grad restricted to correctly signed active coordinates, optimally
# scaled (requires inv_mw2, i.e. strictly positive weights).

def _apg_box_loop(x0, X0, w2_half, mw2, inv_mw2, lip, lam, x_start, max_iters, tol,
                  dual_every, feas_lo, feas_hi, infeas_above):
    n = x0.shape[0]
    have_dual = inv_mw2.shape[0] > 0
    inv_l = 1.0 / lip
    x = np.minimum(np.maximum(x_start, -lam), lam)
    R = np.fft.rfft(x, norm="ortho") - X0
    f = np.sum(mw2 * (R.real * R.real + R.imag * R.imag))
    gx = 2.0 * np.fft.irfft(w2_half * R, n, norm="ortho")
    y = x.copy()
    gy = gx.copy()
    t = 1.0
    lower = 0.0
    for it in range(0, max_iters + 1):
        if it > 0:
            x_new = np.minimum(np.maximum(y - inv_l * gy, -lam), lam)
            R = np.fft.rfft(x_new, norm="ortho") - X0
            f_new = np.sum(mw2 * (R.real * R.real + R.imag * R.imag))
            g_new = 2.0 * np.fft.irfft(w2_half * R, n, norm="ortho")
            if f_new > f:
                # momentum overshoot: restart from the last accepted iterate
                y = x.copy()
                gy = gx.copy()
                t = 1.0
                continue
        else:
            x_new = x
            f_new = f
            g_new = gx
        if it % dual_every == 0:
            gap = np.dot(g_new, x_new) + lam * np.sum(np.abs(g_new))
            lower = max(lower, f_new - max(gap, 0.0))
            if have_dual:
                u = np.where(((x_new >= lam) & (g_new <= 0.0)) | ((x_new <= -lam) & (g_new >= 0.0)),
                             -g_new, 0.0)
                lin = np.dot(u, x0) - lam * np.sum(np.abs(u))
                if lin > 0.0:
                    U = np.fft.rfft(u, norm="ortho")
                    quad = np.sum(inv_mw2 * (U.real * U.real + U.imag * U.imag))
                    if quad > 0.0:
                        lower = max(lower, lin * lin / quad)
            if f_new - lower <= tol * f_new:
                return x_new, f_new, lower, it, True
        if (feas_lo <= f_new <= feas_hi) or lower > infeas_above:
            return x_new, f_new, lower, it, True
        if it > 0:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            y = x_new + beta * (x_new - x)
            gy = g_new + beta * (g_new - gx)
            x = x_new
            gx = g_new
            f = f_new
            t = t_new
    return x, f, lower, max_iters, False


apg_box_numpy = _apg_box_loop
apg_box_numba = None

if HAVE_NUMBA:
    _drc_smooth_jit = njit(cache=True)(_drc_smooth_loop)
    _enumerate_box_qp_jit = njit(cache=True)(_enumerate_box_qp_loop)

    def drc_smooth_numba(gain_db, alpha_attack, alpha_release):
        return _drc_smooth_jit(np.ascontiguousarray(gain_db, dtype=np.float64),
                               float(alpha_attack), float(alpha_release))

    def enumerate_box_qp_numba(x0, Q, lam, kkt_tol):
        return _enumerate_box_qp_jit(np.ascontiguousarray(x0, dtype=np.float64),
                                     np.ascontiguousarray(Q, dtype=np.float64),
                                     float(lam), float(kkt_tol))

    drc_smooth = drc_smooth_numba
    enumerate_box_qp = enumerate_box_qp_numba
    if HAVE_NUMBA_FFT:
        apg_box_numba = njit(cache=True)(_apg_box_loop)
else:
    drc_smooth_numba = None
    enumerate_box_qp_numba = None
    drc_smooth = drc_smooth_numpy
    enumerate_box_qp = enumerate_box_qp_numpy

apg_box = apg_box_numba if apg_box_numba is not None else apg_box_numpy
