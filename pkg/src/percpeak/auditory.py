"""Gammatone-based spectral masking model.

The masker ``x0`` defines a diagonal weighting of the (unitary) DFT of an
error signal ``e``; the squared weighted norm is the distortion
detectability, calibrated so that 1.0 means "just detectable".

    w_k^2 = sum_i  c_s |h_ik|^2 / (||h_i * X0||^2 + c_a)
    D(x0, e) = sum_k w_k^2 |E_k|^2

``h_i`` are ERB-spaced 4th-order gammatone magnitude responses scaled by an
outer/middle-ear gain, and ``X0`` is the masker spectrum on an SPL scale. The
error spectrum ``E`` stays in full-scale units; the calibration constants
absorb that scale.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .signal_core import Signal

__all__ = [
    "GammatoneBank",
    "CalibrationConstants",
    "PerceptualWeights",
    "QuietAnchor",
    "MaskedAnchor",
    "ModelConfig",
    "erb_hz",
    "ear_gain_db",
    "bin_frequencies",
    "unitary_dft",
    "build_bank",
    "perceptual_weights",
    "detectability",
    "weighted_norm",
    "calibrate",
    "default_anchors",
    "tone",
]

DEFAULT_N_FILTERS = 64
DEFAULT_F_MIN_HZ = 30.0
DEFAULT_SPL_REFERENCE_DB = 100.0
DEFAULT_LOWFREQ_OVERRIDE_HZ = 30.0
LOWFREQ_OVERRIDE_FACTOR = 10.0


def erb_hz(f):
    """Equivalent rectangular bandwidth (Glasberg & Moore)."""
    return 24.7 * (4.37 * np.asarray(f, dtype=float) / 1000.0 + 1.0)


def _erb_number(f):
    return 21.4 * np.log10(4.37 * np.asarray(f, dtype=float) / 1000.0 + 1.0)


def _erb_number_inv(e):
    return (10.0 ** (np.asarray(e, dtype=float) / 21.4) - 1.0) * 1000.0 / 4.37


def ear_gain_db(f):
    """Outer/middle-ear gain: the negated threshold-in-quiet curve (Terhardt).

    Returns -inf at 0 Hz.
    """
    khz = np.asarray(f, dtype=float) / 1000.0
    with np.errstate(divide="ignore"):
        low = np.where(khz > 0, khz, np.inf) ** -0.8
    g = -3.64 * low + 6.5 * np.exp(-0.6 * (khz - 3.3) ** 2) - 1e-3 * khz**4
    return np.where(khz > 0, g, -np.inf)


def gammatone_magnitude(f, fc):
    """|H(f)| of a 4th-order gammatone centred on ``fc`` (all-pole approximation)."""
    u = (np.asarray(f, dtype=float) - fc) / (1.019 * erb_hz(fc))
    return (1.0 + u * u) ** -2


def bin_frequencies(n: int, sample_rate_hz: float) -> np.ndarray:
    """Absolute frequency of each DFT bin; bins k and n-k share a frequency."""
    return np.abs(np.fft.fftfreq(n, d=1.0 / sample_rate_hz))


def unitary_dft(x) -> np.ndarray:
    return np.fft.fft(np.asarray(x, dtype=float), norm="ortho")


@dataclass(frozen=True, eq=False)
class GammatoneBank:
    sample_rate_hz: float
    center_freqs_hz: np.ndarray
    responses: np.ndarray  # (n_filters, n) magnitudes incl. ear gain

    @property
    def n_filters(self) -> int:
        return self.responses.shape[0]

    @property
    def n(self) -> int:
        return self.responses.shape[1]

    @property
    def frequencies_hz(self) -> np.ndarray:
        return bin_frequencies(self.n, self.sample_rate_hz)


@dataclass(frozen=True)
class CalibrationConstants:
    c_s: float
    c_a: float
    spl_reference_db: float = DEFAULT_SPL_REFERENCE_DB

    def __post_init__(self):
        if not (self.c_s > 0 and self.c_a > 0):
            raise ValueError(f"calibration constants must be positive, got c_s={self.c_s}, c_a={self.c_a}")
        if not (math.isfinite(self.c_s) and math.isfinite(self.c_a)):
            raise ValueError("calibration constants must be finite")

    @property
    def spl_scale(self) -> float:
        """Linear factor mapping full-scale amplitude to the SPL domain."""
        return 10.0 ** (self.spl_reference_db / 20.0)


@dataclass(frozen=True, eq=False)
class PerceptualWeights:
    weights: np.ndarray
    masker_fingerprint: str = ""

    def __len__(self):
        return self.weights.shape[0]

    @classmethod
    def uniform(cls, n: int, value: float = 1.0) -> "PerceptualWeights":
        return cls(np.full(n, float(value)), masker_fingerprint="uniform")


def build_bank(sample_rate_hz: float, n: int, n_filters: int = DEFAULT_N_FILTERS,
               f_min_hz: float = DEFAULT_F_MIN_HZ, ear_gain: str = "bin") -> GammatoneBank:
    """ERB-spaced gammatone bank sampled on the ``n`` DFT bin frequencies.

    Centres run from ``f_min_hz`` to 0.95 x Nyquist. ``ear_gain="bin"``
    multiplies every response by the ear gain at each bin frequency (the ear
    filters the input before the cochlea); ``"center"`` scales each row by the
    gain at its centre frequency instead, which keeps row peaks on the centre
    bin but lets high filters' skirts dominate at very low frequencies.
    """
    if n_filters < 2:
        raise ValueError("need at least two filters")
    if sample_rate_hz <= 0:
        raise ValueError("sample rate must be positive")
    n_bins = n // 2 + 1
    if n_filters > n_bins:
        raise ValueError(f"{n_filters} filters exceed the {n_bins} available frequency bins")
    nyquist = sample_rate_hz / 2.0
    f_max = 0.95 * nyquist
    if not 0 < f_min_hz < f_max:
        raise ValueError(f"f_min_hz={f_min_hz} must lie in (0, {f_max:g})")
    centers = _erb_number_inv(np.linspace(_erb_number(f_min_hz), _erb_number(f_max), n_filters))
    freqs = bin_frequencies(n, sample_rate_hz)
    responses = gammatone_magnitude(freqs[None, :], centers[:, None])
    if ear_gain == "bin":
        responses *= 10.0 ** (ear_gain_db(freqs) / 20.0)[None, :]
    elif ear_gain == "center":
        responses *= 10.0 ** (ear_gain_db(centers) / 20.0)[:, None]
    else:
        raise ValueError(f"ear_gain must be 'bin' or 'center', got {ear_gain!r}")
    centers.setflags(write=False)
    responses.setflags(write=False)
    return GammatoneBank(float(sample_rate_hz), centers, responses)


def _fingerprint(samples: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(samples).tobytes()).hexdigest()[:16]


def _masker_energies(masker: np.ndarray, bank: GammatoneBank, calib: CalibrationConstants) -> np.ndarray:
    spec = calib.spl_scale * unitary_dft(masker)
    power = spec.real**2 + spec.imag**2
    return (bank.responses**2) @ power


def _raw_weights_sq(excitation: np.ndarray, bank: GammatoneBank, calib: CalibrationConstants) -> np.ndarray:
    return calib.c_s * ((bank.responses**2).T @ (1.0 / (excitation + calib.c_a)))


def perceptual_weights(masker: Signal, bank: GammatoneBank, calib: CalibrationConstants,
                       lowfreq_override_hz: float = DEFAULT_LOWFREQ_OVERRIDE_HZ) -> PerceptualWeights:
    """Per-bin weights for errors masked by ``masker``.

    Bins below ``lowfreq_override_hz`` are set to ten times the largest
    ordinary weight so that the optimisers leave them alone.
    """
    x0 = masker.samples
    if x0.shape[0] != bank.n:
        raise ValueError(f"masker length {x0.shape[0]} does not match bank length {bank.n}")
    if lowfreq_override_hz < 0:
        raise ValueError("lowfreq_override_hz must be nonnegative")
    w = np.sqrt(_raw_weights_sq(_masker_energies(x0, bank, calib), bank, calib))
    if lowfreq_override_hz > 0:
        low = bank.frequencies_hz < lowfreq_override_hz
        if np.any(low):
            w[low] = LOWFREQ_OVERRIDE_FACTOR * w[~low].max() if np.any(~low) else w.max()
    return PerceptualWeights(w, masker_fingerprint=_fingerprint(x0))


def weighted_norm(weights, e) -> float:
    """||diag(w) W e||_2 with the unitary DFT W."""
    w = weights.weights if isinstance(weights, PerceptualWeights) else np.asarray(weights)
    spec = unitary_dft(e)
    return float(np.sqrt(np.sum((w * w) * (spec.real**2 + spec.imag**2))))


def detectability(masker: Signal, error: Signal, bank: GammatoneBank, calib: CalibrationConstants) -> float:
    """Squared weighted spectral norm of ``error`` against ``masker`` (no low-frequency override)."""
    if len(masker) != len(error):
        raise ValueError("masker and error must have equal length")
    if masker.sample_rate_hz != error.sample_rate_hz:
        raise ValueError("masker and error must share a sample rate")
    if len(masker) != bank.n:
        raise ValueError("signal length does not match bank length")
    w2 = _raw_weights_sq(_masker_energies(masker.samples, bank, calib), bank, calib)
    spec = unitary_dft(error.samples)
    return float(np.sum(w2 * (spec.real**2 + spec.imag**2)))


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuietAnchor:
    """A tone that is just audible in silence."""

    tone_hz: float = 1000.0
    threshold_db: float = 3.0


@dataclass(frozen=True)
class MaskedAnchor:
    """A probe tone that is just audible next to a tone masker."""

    masker_hz: float = 1000.0
    masker_db: float = 70.0
    probe_hz: float = 1200.0
    probe_db: float = 52.0


def default_anchors(sample_rate_hz: float) -> tuple[QuietAnchor, MaskedAnchor]:
    """Standard 1 kHz anchors, or a version shifted below Nyquist for low rates.

    At low rates the anchors move to ``0.2 * fs`` with the masker/probe
    frequency ratio kept, and the quiet threshold follows the ear gain curve.
    """
    quiet, masked = QuietAnchor(), MaskedAnchor()
    if max(quiet.tone_hz, masked.masker_hz, masked.probe_hz) < 0.95 * sample_rate_hz / 2.0:
        return quiet, masked
    f = 0.2 * sample_rate_hz
    shift = float(-ear_gain_db(f) + ear_gain_db(1000.0))
    return (
        QuietAnchor(f, quiet.threshold_db + shift),
        MaskedAnchor(f, masked.masker_db, f * masked.probe_hz / masked.masker_hz, masked.probe_db),
    )


def tone(freq_hz: float, level_db: float, n: int, sample_rate_hz: float, spl_reference_db: float) -> Signal:
    """Sinusoid whose peak amplitude 10**((level - ref)/20) maps to ``level_db`` SPL."""
    amp = 10.0 ** ((level_db - spl_reference_db) / 20.0)
    t = np.arange(n) / sample_rate_hz
    return Signal(amp * np.sin(2.0 * np.pi * freq_hz * t), sample_rate_hz)


def calibrate(bank: GammatoneBank, anchor_quiet: QuietAnchor | None = None,
              anchor_masked: MaskedAnchor | None = None,
              spl_reference_db: float = DEFAULT_SPL_REFERENCE_DB) -> CalibrationConstants:
    """Solve for (c_s, c_a) so both anchors sit exactly at detectability 1.

    With zero masker D is proportional to c_s / c_a, which fixes the ratio;
    the masked anchor then pins the scale. The remaining scalar equation is
    monotone in log(c_a) and is solved by bracketed root finding.
    """
    da, dm = default_anchors(bank.sample_rate_hz)
    anchor_quiet = anchor_quiet or da
    anchor_masked = anchor_masked or dm
    nyq = bank.sample_rate_hz / 2.0
    for f in (anchor_quiet.tone_hz, anchor_masked.masker_hz, anchor_masked.probe_hz):
        if not 0 < f < nyq:
            raise ValueError(f"anchor frequency {f} Hz outside (0, {nyq:g}) Hz")

    fs, n, ref = bank.sample_rate_hz, bank.n, spl_reference_db
    h2 = bank.responses**2

    def filter_power(sig: Signal) -> np.ndarray:
        spec = unitary_dft(sig.samples)
        return h2 @ (spec.real**2 + spec.imag**2)

    q_quiet = filter_power(tone(anchor_quiet.tone_hz, anchor_quiet.threshold_db, n, fs, ref)).sum()
    probe = filter_power(tone(anchor_masked.probe_hz, anchor_masked.probe_db, n, fs, ref))
    masker = tone(anchor_masked.masker_hz, anchor_masked.masker_db, n, fs, ref)
    excitation = (10.0 ** (ref / 20.0)) ** 2 * filter_power(masker)

    # c_s = c_a / q_quiet; masked anchor: sum_i probe_i c_a / (E_i + c_a) = q_quiet
    if not probe.sum() > q_quiet:
        raise ValueError("anchors admit no positive calibration: masked probe is not above the quiet threshold")

    def residual(log_ca):
        ca = math.exp(log_ca)
        return float(np.sum(probe * (ca / (excitation + ca)))) / q_quiet - 1.0

    lo, hi = -50.0, 50.0
    while residual(lo) > 0:
        lo -= 50.0
        if lo < -700:
            raise ValueError("calibration root not bracketed")
    while residual(hi) < 0:
        hi += 50.0
        if hi > 700:
            raise ValueError("calibration root not bracketed")
    log_ca = optimize.brentq(residual, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
    c_a = math.exp(log_ca)
    return CalibrationConstants(c_s=float(c_a / q_quiet), c_a=float(c_a), spl_reference_db=float(ref))


@dataclass(frozen=True)
class ModelConfig:
    """Bank and calibration settings; ``c_s``/``c_a`` None means calibrate per bank."""

    n_filters: int = DEFAULT_N_FILTERS
    f_min_hz: float = DEFAULT_F_MIN_HZ
    spl_reference_db: float = DEFAULT_SPL_REFERENCE_DB
    c_s: float | None = None
    c_a: float | None = None
    lowfreq_override_hz: float = DEFAULT_LOWFREQ_OVERRIDE_HZ
    ear_gain: str = "bin"
    quiet_anchor: QuietAnchor | None = None
    masked_anchor: MaskedAnchor | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def bank(self, sample_rate_hz: float, n: int) -> GammatoneBank:
        key = ("bank", float(sample_rate_hz), int(n))
        if key not in self._cache:
            self._cache[key] = build_bank(sample_rate_hz, n, self.n_filters, self.f_min_hz, self.ear_gain)
        return self._cache[key]

    def calibration(self, bank: GammatoneBank) -> CalibrationConstants:
        if self.c_s is not None and self.c_a is not None:
            return CalibrationConstants(self.c_s, self.c_a, self.spl_reference_db)
        key = ("calib", bank.sample_rate_hz, bank.n)
        if key not in self._cache:
            self._cache[key] = calibrate(bank, self.quiet_anchor, self.masked_anchor, self.spl_reference_db)
        return self._cache[key]

    def weights_for(self, masker: Signal) -> PerceptualWeights:
        bank = self.bank(masker.sample_rate_hz, len(masker))
        return perceptual_weights(masker, bank, self.calibration(bank), self.lowfreq_override_hz)

    def detectability(self, masker: Signal, error: Signal) -> float:
        bank = self.bank(masker.sample_rate_hz, len(masker))
        return detectability(masker, error, bank, self.calibration(bank))
