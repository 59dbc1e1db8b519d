"""Classical peak-control baselines: feed-forward compressor and soft clipper.

The compressor uses an instantaneous |x| level detector, a static gain
computer with quadratic soft knee, and branching one-pole smoothing of the
gain in dB.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .signal_core import Signal

__all__ = ["DrcParams", "drc_gain_curve", "drc_process", "soft_clip", "SOFT_CLIP_RATIO", "SOFT_CLIP_KNEE_DB"]

LEVEL_FLOOR_DB = -120.0
SOFT_CLIP_RATIO = 50.0
SOFT_CLIP_KNEE_DB = 20.0


@dataclass(frozen=True)
class DrcParams:
    threshold_db: float = -10.0
    ratio: float = 8.0
    knee_db: float = 0.0
    attack_s: float = 0.0
    release_s: float = 0.5
    makeup_db: float = 0.0

    def __post_init__(self):
        if not self.ratio >= 1.0:
            raise ValueError("ratio must be >= 1")
        if self.knee_db < 0 or self.attack_s < 0 or self.release_s < 0:
            raise ValueError("knee, attack and release must be nonnegative")

    @classmethod
    def from_mapping(cls, data) -> "DrcParams":
        fields = ("threshold_db", "ratio", "knee_db", "attack_s", "release_s", "makeup_db")
        unknown = set(data) - set(fields)
        if unknown:
            raise ValueError(f"unknown DRC parameter(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in data.items()})


def drc_gain_curve(input_level_db, params: DrcParams):
    """Static output level (dB) for an input level (dB); works on arrays."""
    x = np.asarray(input_level_db, dtype=float)
    T, R, W = params.threshold_db, params.ratio, params.knee_db
    over = 2.0 * (x - T)
    y = np.where(over > W, T + (x - T) / R, x)
    if W > 0:
        knee = np.abs(over) <= W
        xk = x[knee]
        y[knee] = xk + (1.0 / R - 1.0) * (xk - T + W / 2.0) ** 2 / (2.0 * W)
    return y if y.ndim else float(y)


def _coefficient(time_s: float, fs: float) -> float:
    return math.exp(-1.0 / (time_s * fs)) if time_s > 0 else 0.0


def drc_process(x: Signal, params: DrcParams) -> Signal:
    a = x.samples
    with np.errstate(divide="ignore"):
        level = np.maximum(20.0 * np.log10(np.abs(a)), LEVEL_FLOOR_DB)
    target_gain = drc_gain_curve(level, params) - level
    gain = _kernels.drc_smooth(target_gain,
                               _coefficient(params.attack_s, x.sample_rate_hz),
                               _coefficient(params.release_s, x.sample_rate_hz))
    gain_db = gain + params.makeup_db
    if not np.any(gain_db):
        return x
    return x.with_samples(a * 10.0 ** (gain_db / 20.0))


def soft_clip(x: Signal, threshold_db: float) -> Signal:
    """Memoryless compressor with ratio 50 and a 20 dB knee."""
    params = DrcParams(threshold_db=threshold_db, ratio=SOFT_CLIP_RATIO, knee_db=SOFT_CLIP_KNEE_DB,
                       attack_s=0.0, release_s=0.0)
    return drc_process(x, params)
