"""Mono audio container, WAV I/O, resampling and amplitude bookkeeping.

Amplitude 1.0 is 0 dBFS throughout the package.
"""
from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

__all__ = [
    "Signal",
    "WavError",
    "load_wav",
    "save_wav",
    "resample",
    "replicate_truncate",
    "reamplify_to_peak",
]

TAPS_PER_PHASE = 64
KAISER_BETA = 7.0
CUTOFF_FRACTION = 0.45  # of the lower sample rate


class WavError(ValueError):
    """Raised for unreadable, unsupported or unwritable WAV data."""


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled real mono signal.

    ``samples`` is stored as a read-only float64 array.
    """

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if x.size < 1:
            raise ValueError("signal must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("signal samples must be finite")
        fs = float(self.sample_rate_hz)
        if not (fs > 0 and math.isfinite(fs)):
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", fs)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def with_samples(self, samples) -> "Signal":
        """New signal at the same rate."""
        return Signal(samples, self.sample_rate_hz)

    def __mul__(self, gain):
        return self.with_samples(self.samples * float(gain))

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def load_wav(path) -> Signal:
    """Read a PCM 16/24-bit or float32 WAV, downmixing to mono by channel mean."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError/EOFError/struct.error
        raise WavError(f"cannot read WAV file {path}: {exc}") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy returns 24-bit PCM left-justified in int32
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    else:
        raise WavError(f"unsupported WAV sample format {data.dtype} in {path}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise WavError(f"WAV file {path} contains no samples")
    if not np.all(np.isfinite(x)):
        raise WavError(f"WAV file {path} contains non-finite samples")
    return Signal(x, float(rate))


def _check_rate(signal: Signal) -> int:
    rate = signal.sample_rate_hz
    if rate != round(rate):
        raise WavError(f"WAV requires an integer sample rate, got {rate}")
    return int(round(rate))


def save_wav(signal: Signal, path, bit_depth="float32") -> None:
    """Write ``signal`` as mono WAV. ``bit_depth`` is 16, 24, "float32" or "float64".

    Integer depths refuse samples outside [-1, 1] instead of clipping them.
    """
    path = Path(path)
    rate = _check_rate(signal)
    x = signal.samples
    depth = str(bit_depth).lower()
    if depth in {"float32", "float", "f32", "32f"}:
        wavfile.write(path, rate, x.astype(np.float32))
        return
    if depth in {"float64", "f64", "64f"}:
        wavfile.write(path, rate, x.astype(np.float64))
        return
    if depth not in {"16", "24"}:
        raise WavError(f"unsupported bit depth {bit_depth!r}; use 16, 24, float32 or float64")
    peak = float(np.max(np.abs(x)))
    if peak > 1.0:
        raise WavError(f"sample magnitude {peak:.6g} exceeds full scale; refusing to clip at {depth}-bit")
    if depth == "16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        wavfile.write(path, rate, q)
        return
    q = np.clip(np.round(x * 8388608.0), -8388608, 8388607).astype("<i4")
    raw = q.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(3)
        w.setframerate(rate)
        w.writeframes(raw)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _rate_ratio(source_hz: float, target_hz: float) -> tuple[int, int]:
    ratio = Fraction(target_hz / source_hz).limit_denominator(10000)
    if ratio.numerator == 0:
        raise ValueError("target rate too small relative to source")
    return ratio.numerator, ratio.denominator


def resampling_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc for a polyphase up/down converter.

    64 taps per phase of the lower rate; cutoff at 0.45 of the lower rate,
    i.e. 0.9 of its Nyquist frequency.
    """
    max_rate = max(up, down)
    numtaps = TAPS_PER_PHASE * max_rate + 1
    cutoff = 2.0 * CUTOFF_FRACTION / max_rate
    return sps.firwin(numtaps, cutoff, window=("kaiser", KAISER_BETA))


def resample(signal: Signal, target_rate_hz: float) -> Signal:
    """Band-limited polyphase resampling to ``target_rate_hz``.

    Output length is ``round(N * target / source)``.
    """
    target = float(target_rate_hz)
    if not (target > 0 and math.isfinite(target)):
        raise ValueError(f"target rate must be positive, got {target_rate_hz!r}")
    source = signal.sample_rate_hz
    n_out = int(round(len(signal) * target / source))
    if n_out < 1:
        raise ValueError("resampled signal would be empty")
    if target == source:
        return signal
    up, down = _rate_ratio(source, target)
    h = resampling_filter(up, down)
    y = sps.resample_poly(signal.samples, up, down, window=h)
    if y.shape[0] >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - y.shape[0])])
    return Signal(y, target)


# ---------------------------------------------------------------------------
# Amplitude bookkeeping
# ---------------------------------------------------------------------------

def replicate_truncate(signal: Signal, duration_s: float) -> Signal:
    """Tile the signal periodically and cut it to ``duration_s`` seconds."""
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    n_out = int(round(duration_s * signal.sample_rate_hz))
    if n_out < 1:
        raise ValueError("duration shorter than one sample")
    idx = np.arange(n_out) % len(signal)
    return signal.with_samples(signal.samples[idx])


def reamplify_to_peak(signal: Signal, target_peak: float) -> Signal:
    """Scale so that the absolute peak equals ``target_peak``."""
    if not target_peak > 0:
        raise ValueError("target peak must be positive")
    peak = signal.peak
    if peak == 0.0:
        raise ValueError("cannot reamplify an all-zero signal")
    y = np.clip(signal.samples * (target_peak / peak), -target_peak, target_peak)
    # guard the last ulp so the peak lands exactly on target
    k = int(np.argmax(np.abs(y)))
    y[k] = math.copysign(target_peak, y[k])
    return signal.with_samples(y)
