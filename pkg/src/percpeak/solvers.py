"""Peak/detectability optimisers.

Two dual formulations share one inner solver::

    min_detect:  min ||diag(w) W (x - x0)||_2   s.t. ||x||_inf <= lam
    min_peak:    min ||x||_inf                  s.t. ||diag(w) W (x - x0)||_2 <= c

``W`` is the unitary DFT. ``min_detect`` is a box-constrained convex
quadratic solved by accelerated projected gradient with function-value
restart; ``min_peak`` bisects on ``lam`` using the monotone value function
``g(lam)`` of ``min_detect``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .auditory import PerceptualWeights
from .signal_core import Signal

__all__ = [
    "SolverOptions",
    "SolverReport",
    "soft_threshold",
    "hard_clip",
    "solve_min_detectability",
    "solve_min_peak",
    "box_qp_oracle",
    "weight_matrix",
]


@dataclass(frozen=True)
class SolverOptions:
    max_inner_iters: int = 20000
    inner_tol: float = 1e-6
    bisection_tol: float = 1e-4
    max_bisection_iters: int = 60

    def __post_init__(self):
        for name in ("max_inner_iters", "inner_tol", "bisection_tol", "max_bisection_iters"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_mapping(cls, data) -> "SolverOptions":
        known = {k: data[k] for k in ("max_inner_iters", "inner_tol", "bisection_tol", "max_bisection_iters") if k in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**known)


@dataclass(frozen=True)
class SolverReport:
    solution: Signal
    objective: float
    constraint_value: float
    iterations: int
    converged: bool
    bisection_trace: tuple = field(default=())


# ---------------------------------------------------------------------------
# Prox operators
# ---------------------------------------------------------------------------

def _arr(x):
    return x.samples if isinstance(x, Signal) else np.asarray(x, dtype=float)


def _wrap(like, y):
    return like.with_samples(y) if isinstance(like, Signal) else y


def soft_threshold(x, lam):
    """Shrink toward zero by ``lam``; zero inside the dead zone."""
    a = _arr(x)
    return _wrap(x, np.sign(a) * np.maximum(np.abs(a) - lam, 0.0))


def hard_clip(x, lam):
    """Clamp to [-lam, lam], computed as ``x - soft_threshold(x, lam)``.

    That form makes the decomposition exact in floating point; the price is
    that a clamped value may differ from ``lam`` by half an ulp of ``x``.
    """
    if not lam > 0:
        raise ValueError("clip level must be positive")
    a = _arr(x)
    return _wrap(x, a - np.sign(a) * np.maximum(np.abs(a) - lam, 0.0))


# ---------------------------------------------------------------------------
# Box-constrained weighted least squares
# ---------------------------------------------------------------------------

def _weights_array(weights, n):
    w = weights.weights if isinstance(weights, PerceptualWeights) else np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights have length {w.shape[0] if w.ndim else 0}, signal has {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    return w


def _power(z):
    return z.real * z.real + z.imag * z.imag


class _Quadratic:
    """phi(x) = sum_k w_k^2 |(W(x - x0))_k|^2 on the real half spectrum.

    For real signals the full conjugate-symmetric spectrum is redundant, so
    the rfft half is used with bin multiplicities (2 for paired bins).
    """

    def __init__(self, x0, w2):
        n = x0.shape[0]
        self.n = n
        self.x0 = np.ascontiguousarray(x0, dtype=np.float64)
        half = n // 2 + 1
        mult = np.full(half, 2.0)
        mult[0] = 1.0
        if n % 2 == 0:
            mult[-1] = 1.0
        self.w2_half = np.ascontiguousarray(w2[:half])
        self.mw2 = mult * self.w2_half
        self.X0 = np.fft.rfft(self.x0, norm="ortho")
        self.lip = 2.0 * float(w2.max())
        # Q is invertible only with strictly positive weights
        self.inv_mw2 = self.mw2 / self.w2_half**2 if np.all(self.w2_half > 0) else np.empty(0)

    def value(self, x):
        return float(np.sum(self.mw2 * _power(np.fft.rfft(x, norm="ortho") - self.X0)))


DUAL_EVERY = 10
COARSE_WIDTH = 64.0
_NEVER = math.inf


def _apg(q: _Quadratic, lam, opts, x_start, feasible_window=(_NEVER, _NEVER), infeasible_above=_NEVER):
    """Accelerated projected gradient with function-value restart.

    Stops when the certified gap (Frank-Wolfe or Lagrangian dual bound) is
    below ``inner_tol`` relative to phi, when phi lands inside
    ``feasible_window``, or when the lower bound exceeds ``infeasible_above``.
    Returns (x, phi(x), lower_bound, iterations, stopped_on_criterion).
    """
    x_start = np.clip(np.asarray(x_start, dtype=np.float64), -lam, lam)
    if q.lip == 0.0:
        return x_start, 0.0, 0.0, 0, True
    x, f, lower, its, ok = _kernels.apg_box(
        q.x0, q.X0, q.w2_half, q.mw2, q.inv_mw2, q.lip, float(lam), x_start,
        int(opts.max_inner_iters), float(opts.inner_tol), DUAL_EVERY,
        float(feasible_window[0]), float(feasible_window[1]), float(infeasible_above))
    return x, float(f), float(lower), int(its), bool(ok)


def _check_inputs(x0: Signal, lam=None):
    a = x0.samples
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite samples")
    if lam is not None and not (lam > 0 and math.isfinite(lam)):
        raise ValueError("lambda must be positive and finite")
    return a


def solve_min_detectability(x0: Signal, weights, lam: float, opts: SolverOptions | None = None,
                            x_start=None) -> SolverReport:
    """Closest signal to ``x0`` (in weighted spectral distance) with peak <= ``lam``."""
    opts = opts or SolverOptions()
    a = _check_inputs(x0, lam)
    w = _weights_array(weights, a.shape[0])
    peak0 = float(np.max(np.abs(a)))
    if peak0 <= lam:
        return SolverReport(x0, 0.0, peak0, 0, True)
    q = _Quadratic(a, w * w)
    start = a if x_start is None else _arr(x_start)
    x, f, _, its, ok = _apg(q, lam, opts, start)
    return SolverReport(x0.with_samples(x), math.sqrt(f), float(np.max(np.abs(x))), its, ok)


def solve_min_peak(x0: Signal, weights, c: float, opts: SolverOptions | None = None) -> SolverReport:
    """Smallest-peak signal within weighted spectral distance ``c`` of ``x0``.

    ``objective`` is the attained peak, ``constraint_value`` the attained
    distance, and ``bisection_trace`` holds ``(lam, distance - c)`` per step.
    Each inner solve stops once it has either found a feasible point or
    certified (via the duality gap) that none exists at that ``lam``.
    """
    opts = opts or SolverOptions()
    a = _check_inputs(x0)
    if not (c >= 0 and math.isfinite(c)):
        raise ValueError("c must be nonnegative and finite")
    w = _weights_array(weights, a.shape[0])
    peak0 = float(np.max(np.abs(a)))
    q = _Quadratic(a, w * w)
    dist_zero = math.sqrt(q.value(np.zeros_like(a)))
    if c == 0.0 or peak0 == 0.0:
        return SolverReport(x0, peak0, 0.0, 0, True)
    if c >= dist_zero:
        return SolverReport(x0.with_samples(np.zeros_like(a)), 0.0, dist_zero, 0, True)

    c2 = c * c
    tol = opts.bisection_tol
    # An inner solve is decided once it finds a feasible point or certifies
    # infeasibility. While the bracket is wide any feasible point will do;
    # near the end it must also be close to active.
    coarse_window = (0.0, c2)
    fine_window = (c2 * (1.0 - tol) ** 2, c2)

    lo, hi = 0.0, peak0
    best_x, best_f = a.copy(), 0.0
    x_warm = a
    trace = []
    total_its = 0
    converged = False
    for _ in range(opts.max_bisection_iters):
        mid = 0.5 * (lo + hi)
        window = coarse_window if hi - lo > COARSE_WIDTH * tol * peak0 else fine_window
        x, f, lower, its, _ = _apg(q, mid, opts, x_warm, window, c2)
        total_its += its
        trace.append((mid, math.sqrt(f) - c))
        if f <= c2:
            hi, best_x, best_f = mid, x, f
            x_warm = x
        else:
            lo = mid
        near_active = best_f >= c2 * (1.0 - tol) ** 2
        if hi - lo <= tol * peak0 and (near_active or hi - lo <= 1e-3 * tol * peak0):
            converged = True
            break
    peak = float(np.max(np.abs(best_x)))
    return SolverReport(x0.with_samples(best_x), peak, math.sqrt(best_f), total_its, converged, tuple(trace))


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

def weight_matrix(weights) -> np.ndarray:
    """Dense real PSD matrix Q with (x^T Q x) = ||diag(w) W x||^2."""
    w = weights.weights if isinstance(weights, PerceptualWeights) else np.asarray(weights, dtype=float)
    n = w.shape[0]
    F = np.fft.fft(np.eye(n), norm="ortho", axis=0)
    Q = (F.conj().T @ (w[:, None] ** 2 * F)).real
    return 0.5 * (Q + Q.T)


def box_qp_oracle(x0, weight_matrix, lam: float, kkt_tol: float = 1e-8) -> np.ndarray:
    """Exact minimiser of (x-x0)^T Q (x-x0) on the box |x_i| <= lam, by enumerating
    all 3^N free/upper/lower active sets. Only for N <= 8."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    Q = np.asarray(weight_matrix, dtype=float)
    n = x0.shape[0]
    if n > 8:
        raise ValueError(f"box_qp_oracle enumerates 3^N patterns; N={n} exceeds 8")
    if Q.shape != (n, n):
        raise ValueError("weight matrix shape does not match x0")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return _kernels.enumerate_box_qp(x0, Q, float(lam), kkt_tol)
