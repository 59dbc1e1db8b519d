import json

import numpy as np
import pytest

from percpeak.cli import main
from percpeak.harness import Preprocess, preprocess, read_csv, synth_kick
from percpeak.signal_core import Signal, load_wav, save_wav


@pytest.fixture
def kick_wav(tmp_path):
    p = tmp_path / "kick.wav"
    save_wav(synth_kick(1000.0, 1.0), p)
    return p


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_process_c_zero_is_identity(tmp_path, kick_wav, capsys):
    out = tmp_path / "out.wav"
    assert main(["process", "--method", "min_peak", "--c", "0", str(kick_wav), str(out)]) == 0
    report = _json(capsys)
    assert report["peak_decrease_pct"] == 0.0
    assert np.max(np.abs(load_wav(out).samples - load_wav(kick_wav).samples)) <= 1e-9


def test_process_identity_after_resampling(tmp_path, capsys):
    src = tmp_path / "k48.wav"
    save_wav(synth_kick(48000.0, 1.5), src)
    out = tmp_path / "out.wav"
    assert main(["process", "--method", "min_peak", "--c", "0", "--bit-depth", "float64", str(src), str(out)]) == 0
    capsys.readouterr()
    want = preprocess(load_wav(src), Preprocess())
    got = load_wav(out)
    assert got.sample_rate_hz == 1000.0 and len(got) == 1000
    assert np.max(np.abs(got.samples - want.samples)) <= 1e-9


def test_process_min_peak_report(tmp_path, kick_wav, capsys):
    out = tmp_path / "out.wav"
    assert main(["process", "--method", "min_peak", "--c", "0.5", str(kick_wav), str(out)]) == 0
    r = _json(capsys)
    assert r["converged"] is True
    assert r["constraint_value"] == pytest.approx(0.5, rel=1e-3)
    assert r["detectability"] == pytest.approx(0.25, rel=2e-3)
    assert r["peak_abs"] < 1.0


@pytest.mark.parametrize("method,flag,val", [("hard_clip", "--lambda", "0.5"), ("soft_clip", "--threshold-db", "-6"),
                                             ("drc", "--threshold-db", "-6"), ("min_detect", "--lambda", "0.8")])
def test_process_methods(tmp_path, kick_wav, capsys, method, flag, val):
    out = tmp_path / "out.wav"
    assert main(["process", "--method", method, flag, val, str(kick_wav), str(out)]) == 0
    assert _json(capsys)["method"] == method
    assert out.exists()


def test_process_missing_param(tmp_path, kick_wav, capsys):
    assert main(["process", "--method", "min_peak", str(kick_wav), str(tmp_path / "o.wav")]) == 2
    assert "--c" in capsys.readouterr().err


def test_bad_arguments_exit_nonzero(capsys):
    assert main(["process", "--method", "nope", "a", "b"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main([]) == 2


def test_missing_input_reports_error(tmp_path, capsys):
    code = main(["process", "--method", "hard_clip", "--lambda", "0.5", str(tmp_path / "no.wav"), str(tmp_path / "o.wav")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_metrics_command(tmp_path, kick_wav, capsys):
    assert main(["metrics", str(kick_wav)]) == 0
    r = _json(capsys)
    assert r["peak_abs"] == pytest.approx(1.0)
    assert r["detectability"] == 0.0
    clipped = tmp_path / "c.wav"
    assert main(["process", "--method", "hard_clip", "--lambda", "0.7", str(kick_wav), str(clipped)]) == 0
    capsys.readouterr()
    assert main(["metrics", str(clipped), "--reference", str(kick_wav)]) == 0
    r = _json(capsys)
    assert r["peak_decrease_pct"] == pytest.approx(30.0, abs=1e-4)
    assert r["detectability"] > 0


def test_metrics_silence(tmp_path, capsys):
    p = tmp_path / "s.wav"
    # a faint click keeps the crest factor defined but gates every block
    save_wav(Signal(np.r_[1e-5, np.zeros(47999)], 48000.0), p)
    assert main(["metrics", str(p)]) == 0
    assert _json(capsys)["loudness_lufs"] == "undefined (gated silence)"


def test_synth_and_sweep(tmp_path, capsys):
    d = tmp_path / "kicks"
    assert main(["synth", "--out-dir", str(d), "--count", "2", "--sample-rate", "8000"]) == 0
    capsys.readouterr()
    files = sorted(p.name for p in d.iterdir())
    assert files == ["kick01.wav", "kick02.wav"]
    assert load_wav(d / "kick01.wav").sample_rate_hz == 8000
    cfg = tmp_path / "sweep.toml"
    cfg.write_text('[sweep]\nmethod = "hard_clip"\ngrid = [0.5]\nclips = ["kicks/kick01.wav", "kicks/kick02.wav"]\n')
    out = tmp_path / "curve.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert [r["clip"] for r in rows] == ["kick01.wav", "kick02.wav", "mean"]


def test_sweep_without_table(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[model]\nn_filters = 32\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 1
    assert "no [sweep] table" in capsys.readouterr().err


def test_calibrate_command(tmp_path, capsys):
    assert main(["calibrate"]) == 0
    r = _json(capsys)
    assert r["c_s"] > 0 and r["c_a"] > 0
    cfg = tmp_path / "c.toml"
    cfg.write_text("[model.quiet_anchor]\ntone_hz = 200.0\nthreshold_db = 60.0\n"
                   "[model.masked_anchor]\nmasker_hz = 200.0\nmasker_db = 70.0\nprobe_hz = 240.0\nprobe_db = 40.0\n")
    assert main(["calibrate", "--config", str(cfg)]) == 1
    assert "calibration" in capsys.readouterr().err
