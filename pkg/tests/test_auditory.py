import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percpeak.auditory import (
    CalibrationConstants,
    MaskedAnchor,
    ModelConfig,
    QuietAnchor,
    build_bank,
    calibrate,
    default_anchors,
    detectability,
    ear_gain_db,
    erb_hz,
    gammatone_magnitude,
    perceptual_weights,
    tone,
    unitary_dft,
)
from percpeak.harness import synth_kick
from percpeak.signal_core import Signal

FS = 1000.0
N = 1000
CALIB = CalibrationConstants(c_s=2.0e9, c_a=500.0)


@pytest.fixture(scope="module")
def bank():
    return build_bank(FS, N)


@pytest.fixture(scope="module")
def kick():
    return synth_kick(FS, N / FS)


def _w(masker, bank, calib=CALIB, override=0.0):
    return perceptual_weights(masker, bank, calib, lowfreq_override_hz=override).weights


def test_erb_and_gammatone_values():
    assert erb_hz(1000.0) == pytest.approx(24.7 * 5.37)
    fc = 500.0
    b = 1.019 * erb_hz(fc)
    assert gammatone_magnitude(fc, fc) == 1.0
    assert gammatone_magnitude(fc + b, fc) == pytest.approx(0.25)
    assert gammatone_magnitude(fc - b, fc) == pytest.approx(0.25)


def test_ear_gain_terhardt():
    f = 2.0
    want = -(3.64 * f**-0.8 - 6.5 * math.exp(-0.6 * (f - 3.3) ** 2) + 1e-3 * f**4)
    assert ear_gain_db(2000.0) == pytest.approx(want)
    assert ear_gain_db(0.0) == -np.inf


def test_bank_shape_and_range(bank):
    fc = bank.center_freqs_hz
    assert bank.responses.shape == (64, N)
    assert fc[0] == pytest.approx(30.0)
    assert fc[-1] == pytest.approx(0.95 * FS / 2)
    assert np.all(np.diff(fc) > 0)
    assert np.all(bank.responses >= 0)


def test_bank_erb_spacing(bank):
    e = 21.4 * np.log10(4.37 * bank.center_freqs_hz / 1000 + 1)
    assert np.allclose(np.diff(e), np.diff(e)[0])


def test_bank_centres_independent_of_length():
    a = build_bank(FS, 1000)
    b = build_bank(FS, 2000)
    assert np.array_equal(a.center_freqs_hz, b.center_freqs_hz)
    # shared bin frequencies carry identical responses
    assert np.allclose(a.responses, b.responses[:, ::2][:, :1000])


def test_bank_rows_unimodal_without_ear_gain(bank):
    freqs = bank.frequencies_hz[: N // 2 + 1]
    g = 10 ** (ear_gain_db(freqs) / 20)
    for i, fc in enumerate(bank.center_freqs_hz):
        row = bank.responses[i, : N // 2 + 1][1:] / g[1:]
        k = int(np.argmax(row))
        assert abs(freqs[1:][k] - fc) <= FS / N
        assert np.all(np.diff(row[: k + 1]) >= 0)
        assert np.all(np.diff(row[k:]) <= 0)


def test_center_ear_gain_keeps_row_peaks():
    b = build_bank(44100.0, 4410, ear_gain="center")
    freqs = b.frequencies_hz
    for i, fc in enumerate(b.center_freqs_hz):
        assert abs(freqs[int(np.argmax(b.responses[i]))] - fc) <= 44100.0 / 4410


@pytest.mark.parametrize("kwargs", [dict(n_filters=1), dict(n_filters=600), dict(f_min_hz=480.0), dict(ear_gain="x")])
def test_bank_rejects(kwargs):
    with pytest.raises(ValueError):
        build_bank(FS, N, **kwargs)


def test_zero_masker_weights_closed_form(bank):
    w = _w(Signal(np.zeros(N), FS), bank)
    want = np.sqrt(CALIB.c_s * np.sum(bank.responses**2, axis=0) / CALIB.c_a)
    assert np.allclose(w, want, rtol=1e-12)


def test_weights_conjugate_symmetric(bank, kick):
    w = _w(kick, bank)
    assert np.array_equal(w[1:], w[1:][::-1])


def test_weights_decrease_with_masker_level(bank, kick):
    prev = _w(Signal(np.zeros(N), FS), bank)
    for g in (0.01, 0.1, 1.0, 10.0):
        cur = _w(kick * g, bank)
        assert np.all(cur <= prev * (1 + 1e-12))
        prev = cur


def test_weights_phase_invariant(bank, kick):
    shifted = kick.with_samples(np.roll(kick.samples, 137))
    assert np.allclose(_w(kick, bank), _w(shifted, bank), rtol=1e-10)


def test_lowfreq_override(bank, kick):
    w = perceptual_weights(kick, bank, CALIB, lowfreq_override_hz=30.0).weights
    low = bank.frequencies_hz < 30.0
    assert low.sum() == 59
    assert np.all(w[low] == 10 * w[~low].max())
    assert np.array_equal(w[~low], _w(kick, bank)[~low])


def test_detectability_matches_weighted_norm(bank, kick, rng):
    e = Signal(rng.standard_normal(N) * 1e-3, FS)
    w = _w(kick, bank)
    E = unitary_dft(e.samples)
    assert detectability(kick, e, bank, CALIB) == pytest.approx(np.sum(w**2 * np.abs(E) ** 2), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda a: abs(a) > 1e-6))
def test_detectability_quadratic(a):
    bank = build_bank(FS, 64, n_filters=16)
    x0 = synth_kick(FS, 0.064)
    e = Signal(np.sin(np.arange(64)) * 1e-3, FS)
    d1 = detectability(x0, e, bank, CALIB)
    assert detectability(x0, e * a, bank, CALIB) == pytest.approx(a * a * d1, rel=1e-10)


def test_single_bin():
    bank = build_bank(FS, 8, n_filters=2, f_min_hz=100.0)
    x0 = Signal(np.zeros(8), FS)
    e = np.zeros(8)
    e[0] = 1.0  # unit impulse: flat unitary spectrum 1/sqrt(8)
    w = _w(x0, bank)
    assert detectability(x0, Signal(e, FS), bank, CALIB) == pytest.approx(np.sum(w**2) / 8)


@pytest.mark.parametrize("fs,n", [(1000.0, 1000), (44100.0, 4410), (48000.0, 4800)])
def test_calibration_hits_anchors(fs, n):
    bank = build_bank(fs, n)
    cal = calibrate(bank)
    quiet, masked = default_anchors(fs)
    ref = cal.spl_reference_db
    silence = Signal(np.zeros(n), fs)
    q = tone(quiet.tone_hz, quiet.threshold_db, n, fs, ref)
    assert detectability(silence, q, bank, cal) == pytest.approx(1.0, abs=1e-6)
    m = tone(masked.masker_hz, masked.masker_db, n, fs, ref)
    p = tone(masked.probe_hz, masked.probe_db, n, fs, ref)
    assert detectability(m, p, bank, cal) == pytest.approx(1.0, abs=1e-6)


def test_calibration_scale_matters():
    bank = build_bank(FS, N)
    cal = calibrate(bank)
    quiet, _ = default_anchors(FS)
    q = tone(quiet.tone_hz, quiet.threshold_db, N, FS, cal.spl_reference_db)
    bad = CalibrationConstants(cal.c_s * 2.0, cal.c_a, cal.spl_reference_db)
    assert detectability(Signal(np.zeros(N), FS), q, bank, bad) == pytest.approx(2.0, rel=1e-6)


def test_default_anchors():
    q, m = default_anchors(44100.0)
    assert q == QuietAnchor() and m == MaskedAnchor()
    q, m = default_anchors(1000.0)
    assert q.tone_hz == m.masker_hz == 200.0
    assert m.probe_hz == pytest.approx(240.0)
    assert q.threshold_db == pytest.approx(3.0 - ear_gain_db(200.0) + ear_gain_db(1000.0))


def test_calibration_rejects_impossible_anchor():
    bank = build_bank(FS, N)
    with pytest.raises(ValueError):
        calibrate(bank, QuietAnchor(200.0, 60.0), MaskedAnchor(200.0, 70.0, 240.0, 40.0))
    with pytest.raises(ValueError):
        calibrate(bank, QuietAnchor(900.0, 3.0))


def test_calibration_constants_validated():
    with pytest.raises(ValueError):
        CalibrationConstants(0.0, 1.0)
    with pytest.raises(ValueError):
        CalibrationConstants(1.0, math.inf)


def test_model_config_caches_and_fixed_constants(kick):
    m = ModelConfig()
    assert m.bank(FS, N) is m.bank(FS, N)
    fixed = ModelConfig(c_s=CALIB.c_s, c_a=CALIB.c_a)
    assert np.array_equal(fixed.weights_for(kick).weights,
                          perceptual_weights(kick, build_bank(FS, N), CALIB).weights)
