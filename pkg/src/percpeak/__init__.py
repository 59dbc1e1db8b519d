"""Perceptually constrained peak reduction for audio clips."""

__version__ = "0.1.0"

from .signal_core import Signal, load_wav, save_wav, resample, replicate_truncate, reamplify_to_peak
from .auditory import (
    CalibrationConstants,
    GammatoneBank,
    ModelConfig,
    PerceptualWeights,
    build_bank,
    calibrate,
    detectability,
    perceptual_weights,
)
from .solvers import (
    SolverOptions,
    SolverReport,
    box_qp_oracle,
    hard_clip,
    soft_threshold,
    solve_min_detectability,
    solve_min_peak,
)
from .baselines import DrcParams, drc_gain_curve, drc_process, soft_clip
from .metrics import crest_factor, integrated_loudness, loudness_match_gain, peak_decrease_pct

__all__ = [
    "Signal", "load_wav", "save_wav", "resample", "replicate_truncate", "reamplify_to_peak",
    "CalibrationConstants", "GammatoneBank", "ModelConfig", "PerceptualWeights",
    "build_bank", "calibrate", "detectability", "perceptual_weights",
    "SolverOptions", "SolverReport", "box_qp_oracle", "hard_clip", "soft_threshold",
    "solve_min_detectability", "solve_min_peak",
    "DrcParams", "drc_gain_curve", "drc_process", "soft_clip",
    "crest_factor", "integrated_loudness", "loudness_match_gain", "peak_decrease_pct",
]
