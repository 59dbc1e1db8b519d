"""Evaluation metrics: crest factor, peak decrease and BS.1770 loudness."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal as sps

from .signal_core import Signal, resample

__all__ = [
    "MetricsReport",
    "LoudnessUndefined",
    "crest_factor",
    "peak_decrease_pct",
    "integrated_loudness",
    "loudness_match_gain",
    "metrics_report",
]

METER_RATE_HZ = 48000.0
BLOCK_S = 0.4
BLOCK_OVERLAP = 0.75
ABSOLUTE_GATE_LUFS = -70.0
RELATIVE_GATE_LU = -10.0

# K-weighting at 48 kHz: pre-filter shelf, then RLB high-pass
_SHELF_B = np.array([1.53512485958697, -2.69169618940638, 1.19839281085285])
_SHELF_A = np.array([1.0, -1.69065929318241, 0.73248077421585])
_HP_B = np.array([1.0, -2.0, 1.0])
_HP_A = np.array([1.0, -1.99004745483398, 0.99007225036621])


class LoudnessUndefined(ValueError):
    """Raised where a defined loudness is required but every block was gated."""


def crest_factor(x: Signal) -> float:
    """10 log10(||x||_inf / ||x||_2), with the plain (unnormalised) 2-norm."""
    a = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=float)
    peak = float(np.max(np.abs(a)))
    if peak == 0.0:
        raise ValueError("crest factor of an all-zero signal is undefined")
    return 10.0 * math.log10(peak / float(np.linalg.norm(a)))


def peak_decrease_pct(x0: Signal, x: Signal) -> float:
    p0 = x0.peak
    if p0 == 0.0:
        raise ValueError("reference signal is all zero")
    return 100.0 * (p0 - x.peak) / p0


def k_weight(samples: np.ndarray) -> np.ndarray:
    return sps.lfilter(_HP_B, _HP_A, sps.lfilter(_SHELF_B, _SHELF_A, samples))


def _block_powers(y: np.ndarray, fs: float) -> np.ndarray:
    size = int(round(BLOCK_S * fs))
    hop = int(round(BLOCK_S * (1.0 - BLOCK_OVERLAP) * fs))
    if y.shape[0] < size:
        return np.empty(0)
    count = 1 + (y.shape[0] - size) // hop
    view = np.lib.stride_tricks.sliding_window_view(y * y, size)[::hop][:count]
    return view.mean(axis=1)


def _lufs(power):
    return -0.691 + 10.0 * np.log10(power)


def integrated_loudness(x: Signal) -> float | None:
    """Gated integrated loudness in LUFS, or ``None`` when no block survives gating."""
    if x.sample_rate_hz != METER_RATE_HZ:
        x = resample(x, METER_RATE_HZ)
    z = _block_powers(k_weight(x.samples), METER_RATE_HZ)
    if z.size == 0:
        return None
    with np.errstate(divide="ignore"):
        level = _lufs(z)
    kept = z[level > ABSOLUTE_GATE_LUFS]
    if kept.size == 0:
        return None
    rel_gate = _lufs(kept.mean()) + RELATIVE_GATE_LU
    kept = z[(level > ABSOLUTE_GATE_LUFS) & (level > rel_gate)]
    if kept.size == 0:
        return None
    return float(_lufs(kept.mean()))


def loudness_match_gain(reference: Signal, candidate: Signal, tol_lu: float = 0.05,
                        max_refinements: int = 5) -> float:
    """Linear gain giving ``candidate`` the integrated loudness of ``reference``."""
    target = integrated_loudness(reference)
    if target is None:
        raise LoudnessUndefined("reference loudness is undefined (gated silence)")
    current = integrated_loudness(candidate)
    if current is None:
        raise LoudnessUndefined("candidate loudness is undefined (gated silence)")
    gain_db = target - current
    for _ in range(max_refinements):
        level = integrated_loudness(candidate * 10.0 ** (gain_db / 20.0))
        if level is None:
            raise LoudnessUndefined("candidate loudness became undefined under gain")
        miss = target - level
        if abs(miss) <= tol_lu:
            return 10.0 ** (gain_db / 20.0)
        gain_db += miss
    level = integrated_loudness(candidate * 10.0 ** (gain_db / 20.0))
    if level is None or abs(target - level) > tol_lu:
        raise LoudnessUndefined(f"loudness match did not converge within {max_refinements} refinements")
    return 10.0 ** (gain_db / 20.0)


@dataclass(frozen=True)
class MetricsReport:
    crest_factor_db: float
    peak_abs: float
    peak_decrease_pct: float
    loudness_lufs: float | None
    detectability: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["loudness_lufs"] is None:
            d["loudness_lufs"] = "undefined (gated silence)"
        return d


def metrics_report(x: Signal, reference: Signal | None = None, detectability: float = 0.0) -> MetricsReport:
    """Metrics for ``x``; peak decrease is relative to ``reference`` (itself if omitted)."""
    reference = reference if reference is not None else x
    return MetricsReport(
        crest_factor_db=crest_factor(x),
        peak_abs=x.peak,
        peak_decrease_pct=peak_decrease_pct(reference, x),
        loudness_lufs=integrated_loudness(x),
        detectability=float(detectability),
    )
