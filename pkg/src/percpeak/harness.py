"""Experiment driver: preprocessing, parameter sweeps and CSV emission."""
from __future__ import annotations

import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .auditory import MaskedAnchor, ModelConfig, QuietAnchor
from .baselines import DrcParams, drc_process, soft_clip
from .metrics import (
    LoudnessUndefined,
    crest_factor,
    integrated_loudness,
    loudness_match_gain,
    peak_decrease_pct,
)
from .signal_core import Signal, load_wav, reamplify_to_peak, replicate_truncate, resample
from .solvers import SolverOptions, hard_clip, solve_min_detectability, solve_min_peak

__all__ = [
    "METHODS",
    "CSV_HEADER",
    "Preprocess",
    "SweepSpec",
    "HarnessConfig",
    "MethodResult",
    "synth_kick",
    "kick_set",
    "default_grid",
    "preprocess",
    "apply_method",
    "evaluate",
    "run_sweep",
    "format_csv",
    "load_config",
]

METHODS = ("min_peak", "min_detect", "hard_clip", "soft_clip", "drc")

CSV_HEADER = (
    "method", "param", "clip", "peak_decrease_pct", "crest_factor_db_before",
    "crest_factor_db_after", "lufs_before", "lufs_after_reamp", "detectability_matched",
    "converged", "error",
)
MEAN_LABEL = "mean"


def _fmt(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return f"{float(v):.9g}"


def _parse(s: str) -> float:
    return math.nan if s in ("nan", "undefined", "") else float(s)


# ---------------------------------------------------------------------------
# Synthetic kicks
# ---------------------------------------------------------------------------

def synth_kick(sample_rate_hz: float = 1000.0, duration_s: float = 1.0, f_start_hz: float = 150.0,
               f_end_hz: float = 45.0, decay_s: float = 0.15) -> Signal:
    """Exponentially decaying sine whose frequency glides geometrically from
    ``f_start_hz`` to ``f_end_hz`` over ``duration_s``; peak-normalised to 1."""
    if not f_start_hz > f_end_hz > 0:
        raise ValueError("need f_start_hz > f_end_hz > 0")
    if not (decay_s > 0 and duration_s > 0 and sample_rate_hz > 0):
        raise ValueError("decay, duration and sample rate must be positive")
    if f_start_hz >= sample_rate_hz / 2:
        raise ValueError("f_start_hz must lie below Nyquist")
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    log_ratio = math.log(f_end_hz / f_start_hz)
    # integral of f_start * r^(t/T)
    phase = 2.0 * math.pi * f_start_hz * duration_s / log_ratio * (np.exp(log_ratio * t / duration_s) - 1.0)
    x = np.exp(-t / decay_s) * np.sin(phase)
    return Signal(x / np.max(np.abs(x)), sample_rate_hz)


_KICK_TABLE = (
    # f_start, f_end, decay
    (150.0, 45.0, 0.15),
    (180.0, 50.0, 0.12),
    (130.0, 40.0, 0.22),
    (200.0, 55.0, 0.10),
    (160.0, 42.0, 0.18),
    (140.0, 48.0, 0.28),
    (170.0, 60.0, 0.14),
    (190.0, 52.0, 0.20),
)


def kick_set(count: int = 8, sample_rate_hz: float = 1000.0, duration_s: float = 1.0) -> list[tuple[str, Signal]]:
    """Deterministic family of synthetic kicks, named ``kick01``..."""
    if count < 1:
        raise ValueError("need at least one kick")
    out = []
    for i in range(count):
        fs0, fe0, dec = _KICK_TABLE[i % len(_KICK_TABLE)]
        # later cycles through the table get a mild, reproducible detune
        detune = 1.0 + 0.05 * (i // len(_KICK_TABLE))
        out.append((f"kick{i + 1:02d}", synth_kick(sample_rate_hz, duration_s, fs0 * detune, fe0 * detune, dec)))
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def default_grid(method: str) -> list[float]:
    """Twelve-point default sweep per method (c, lambda, or threshold dB)."""
    if method == "min_peak":
        return [float(v) for v in np.geomspace(0.05, 3.0, 12)]
    if method in ("min_detect", "hard_clip"):
        return [float(v) for v in np.geomspace(0.2, 0.98, 12)]
    if method in ("soft_clip", "drc"):
        return [float(v) for v in np.linspace(-24.0, -0.5, 12)]
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class Preprocess:
    resample_hz: float | None = 1000.0
    max_clip_s: float | None = 1.0
    replicate_to_s: float = 1.0


@dataclass(frozen=True)
class SweepSpec:
    method: str
    parameter_grid: tuple
    clip_paths: tuple = ()
    synthetic_kicks: int = 0
    preprocess: Preprocess = field(default_factory=Preprocess)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.parameter_grid:
            raise ValueError("parameter grid is empty")
        if not self.clip_paths and self.synthetic_kicks <= 0:
            raise ValueError("sweep needs clip_paths or synthetic_kicks")
        for v in self.parameter_grid:
            _check_param(self.method, v)


def _check_param(method: str, value: float):
    if not math.isfinite(value):
        raise ValueError(f"{method} parameter must be finite")
    if method == "min_peak" and value < 0:
        raise ValueError("c must be nonnegative")
    if method in ("min_detect", "hard_clip") and value <= 0:
        raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class HarnessConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    drc: DrcParams = field(default_factory=DrcParams)


def _model_from_mapping(data: dict) -> ModelConfig:
    data = dict(data)
    quiet = data.pop("quiet_anchor", None)
    masked = data.pop("masked_anchor", None)
    allowed = {"n_filters", "f_min_hz", "spl_reference_db", "c_s", "c_a", "lowfreq_override_hz", "ear_gain"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown model key(s): {', '.join(sorted(unknown))}")
    return ModelConfig(
        **data,
        quiet_anchor=QuietAnchor(**quiet) if quiet else None,
        masked_anchor=MaskedAnchor(**masked) if masked else None,
    )


def load_config(path) -> tuple[SweepSpec | None, HarnessConfig]:
    """Read a TOML config with optional [sweep], [model], [solver], [drc] tables.

    Relative clip paths resolve against the config file's directory.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - {"sweep", "model", "solver", "drc"}
    if unknown:
        raise ValueError(f"unknown config table(s): {', '.join(sorted(unknown))}")
    cfg = HarnessConfig(
        model=_model_from_mapping(data.get("model", {})),
        solver=SolverOptions.from_mapping(data.get("solver", {})),
        drc=DrcParams.from_mapping(data.get("drc", {})),
    )
    spec = None
    if "sweep" in data:
        sw = dict(data["sweep"])
        method = sw.pop("method")
        grid = sw.pop("grid", None)
        grid = tuple(float(v) for v in grid) if grid is not None else tuple(default_grid(method))
        clips = tuple(str((path.parent / p).resolve()) if not Path(p).is_absolute() else p
                      for p in sw.pop("clips", []))
        synth = int(sw.pop("synthetic_kicks", 0))
        pre_keys = {"resample_hz", "max_clip_s", "replicate_to_s"}
        pre = Preprocess(**{k: sw.pop(k) for k in list(sw) if k in pre_keys})
        if sw:
            raise ValueError(f"unknown sweep key(s): {', '.join(sorted(sw))}")
        spec = SweepSpec(method, grid, clips, synth, pre)
    return spec, cfg


# ---------------------------------------------------------------------------
# Processing
# ---------------------------------------------------------------------------

def preprocess(x: Signal, pre: Preprocess) -> Signal:
    if pre.resample_hz and x.sample_rate_hz != pre.resample_hz:
        x = resample(x, pre.resample_hz)
    if pre.max_clip_s:
        n_max = int(round(pre.max_clip_s * x.sample_rate_hz))
        if len(x) > n_max:
            x = x.with_samples(x.samples[:n_max])
    return x


@dataclass(frozen=True)
class MethodResult:
    output: Signal
    converged: bool = True
    constraint_value: float | None = None


def apply_method(method: str, x0: Signal, param: float, cfg: HarnessConfig) -> MethodResult:
    _check_param(method, param)
    if method == "hard_clip":
        return MethodResult(hard_clip(x0, param))
    if method == "soft_clip":
        return MethodResult(soft_clip(x0, param))
    if method == "drc":
        return MethodResult(drc_process(x0, replace(cfg.drc, threshold_db=param)))
    weights = cfg.model.weights_for(x0)
    if method == "min_peak":
        rep = solve_min_peak(x0, weights, param, cfg.solver)
    elif method == "min_detect":
        rep = solve_min_detectability(x0, weights, param, cfg.solver)
    else:
        raise ValueError(f"unknown method {method!r}")
    return MethodResult(rep.solution, rep.converged, rep.constraint_value)


def evaluate(method: str, param: float, clip_name: str, x0: Signal, cfg: HarnessConfig,
             pre: Preprocess) -> dict:
    """One CSV row (unformatted) for a preprocessed clip."""
    row = {k: math.nan for k in CSV_HEADER}
    row.update(method=method, param=param, clip=clip_name, converged=False, error="")
    errors = []
    if x0.peak == 0.0:
        row["error"] = "input is all zero"
        return row
    try:
        res = apply_method(method, x0, param, cfg)
    except Exception as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    x = res.output
    row["converged"] = res.converged
    row["peak_decrease_pct"] = peak_decrease_pct(x0, x)
    row["crest_factor_db_before"] = crest_factor(x0)
    ref_rep = replicate_truncate(x0, pre.replicate_to_s)
    row["lufs_before"] = integrated_loudness(ref_rep)
    if x.peak == 0.0:
        errors.append("output is all zero")
    else:
        row["crest_factor_db_after"] = crest_factor(x)
        row["lufs_after_reamp"] = integrated_loudness(
            replicate_truncate(reamplify_to_peak(x, x0.peak), pre.replicate_to_s))
        try:
            g = loudness_match_gain(ref_rep, replicate_truncate(x, pre.replicate_to_s))
            row["detectability_matched"] = cfg.model.detectability(x0, x0.with_samples(g * x.samples - x0.samples))
        except LoudnessUndefined as exc:
            errors.append(str(exc))
    row["error"] = "; ".join(errors)
    return row


def _cell(args):
    method, param, name, x0, cfg, pre = args
    return evaluate(method, param, name, x0, cfg, pre)


def run_sweep(spec: SweepSpec, cfg: HarnessConfig | None = None, jobs: int = 1) -> list[dict]:
    """Per-clip rows in (param, clip) order followed by one mean row per param.

    Clip load failures are recorded as error rows rather than aborting.
    """
    cfg = cfg or HarnessConfig()
    loaded = []
    for p in spec.clip_paths:
        try:
            loaded.append((Path(p).name, preprocess(load_wav(p), spec.preprocess), None))
        except Exception as exc:
            loaded.append((Path(p).name, None, f"{type(exc).__name__}: {exc}"))
    if spec.synthetic_kicks:
        rate = spec.preprocess.resample_hz or 1000.0
        for name, sig in kick_set(spec.synthetic_kicks, rate):
            loaded.append((name, preprocess(sig, spec.preprocess), None))

    cells = []
    for param in spec.parameter_grid:
        for name, sig, err in loaded:
            cells.append((spec.method, float(param), name, sig, err))
    work = [(m, p, n, s, cfg, spec.preprocess) for m, p, n, s, e in cells if e is None]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_cell, work))
    else:
        done = [_cell(w) for w in work]
    it = iter(done)
    rows = []
    for m, p, n, s, e in cells:
        if e is None:
            rows.append(next(it))
        else:
            row = {k: math.nan for k in CSV_HEADER}
            row.update(method=m, param=p, clip=n, converged=False, error=e)
            rows.append(row)
    return rows


def _mean_rows(formatted: list[list[str]]) -> list[list[str]]:
    numeric = CSV_HEADER[3:9]
    out = []
    by_param: dict[str, list[list[str]]] = {}
    for r in formatted:
        by_param.setdefault(r[1], []).append(r)
    for param, group in by_param.items():
        row = [group[0][0], param, MEAN_LABEL]
        for j, _ in enumerate(numeric, start=3):
            vals = [_parse(r[j]) for r in group]
            row.append(_fmt(float(np.mean(vals))))
        row.append(_fmt(all(r[9] == "true" for r in group)))
        row.append("")
        out.append(row)
    return out


def format_csv(rows: list[dict]) -> str:
    """CSV text with fixed header, 9-significant-digit floats, '\\n' line endings."""
    formatted = []
    for r in rows:
        formatted.append([
            r["method"], _fmt(r["param"]), r["clip"],
            *(_fmt(r[k]) for k in CSV_HEADER[3:9]),
            _fmt(bool(r["converged"])), r["error"],
        ])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(formatted)
    w.writerows(_mean_rows(formatted))
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
