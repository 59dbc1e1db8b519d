import math

import numpy as np
import pytest

from percpeak.metrics import (
    LoudnessUndefined,
    crest_factor,
    integrated_loudness,
    loudness_match_gain,
    metrics_report,
    peak_decrease_pct,
)
from percpeak.signal_core import Signal


def _sine(freq, fs, seconds, amp=1.0):
    t = np.arange(int(seconds * fs)) / fs
    return Signal(amp * np.sin(2 * np.pi * freq * t), fs)


def test_crest_factor_definition():
    # peak 1, ||x||_2 = sqrt(16) = 4
    assert crest_factor(Signal(np.ones(16), 100)) == pytest.approx(10 * math.log10(1 / 4))
    x = Signal([3.0, -4.0], 100)
    assert crest_factor(x) == pytest.approx(10 * math.log10(4 / 5))
    with pytest.raises(ValueError):
        crest_factor(Signal([0.0, 0.0], 100))


def test_crest_factor_scale_invariant(rng):
    x = Signal(rng.standard_normal(100), 100)
    assert crest_factor(x * 7.5) == pytest.approx(crest_factor(x))


def test_peak_decrease():
    assert peak_decrease_pct(Signal([1.0, -0.5], 1), Signal([0.7, 0.0], 1)) == pytest.approx(30.0)


@pytest.mark.parametrize("fs", [48000.0, 44100.0])
def test_reference_sine(fs):
    assert integrated_loudness(_sine(997.0, fs, 3.0)) == pytest.approx(-3.01, abs=0.02)


def test_level_shift():
    base = integrated_loudness(_sine(997.0, 48000.0, 2.0))
    quieter = integrated_loudness(_sine(997.0, 48000.0, 2.0, 10 ** (-20 / 20)))
    assert quieter - base == pytest.approx(-20.0, abs=1e-9)


def test_absolute_gate_and_short_input():
    assert integrated_loudness(Signal(np.zeros(48000), 48000.0)) is None
    assert integrated_loudness(_sine(997.0, 48000.0, 0.3)) is None
    assert integrated_loudness(_sine(997.0, 48000.0, 2.0, 10 ** (-75 / 20))) is None


def test_relative_gate_drops_quiet_section():
    loud = _sine(997.0, 48000.0, 3.0).samples
    quiet = _sine(997.0, 48000.0, 3.0, 10 ** (-40 / 20)).samples
    level = integrated_loudness(Signal(np.concatenate([loud, quiet]), 48000.0))
    # ungated energy averaging would land near -6 LUFS
    assert level == pytest.approx(-3.01, abs=0.6)
    assert level > -4.0


def test_loudness_match_gain():
    ref = _sine(997.0, 48000.0, 2.0, 0.5)
    cand = _sine(997.0, 48000.0, 2.0, 0.1)
    g = loudness_match_gain(ref, cand)
    assert 20 * math.log10(g) == pytest.approx(20 * math.log10(5.0), abs=0.05)
    with pytest.raises(LoudnessUndefined):
        loudness_match_gain(ref, Signal(np.zeros(96000), 48000.0))


def test_report_undefined_loudness():
    x = Signal(np.r_[1.0, np.zeros(99)], 1000.0)
    d = metrics_report(x, detectability=0.5).to_dict()
    assert d["loudness_lufs"] == "undefined (gated silence)"
    assert d["peak_decrease_pct"] == 0.0
    assert d["detectability"] == 0.5
