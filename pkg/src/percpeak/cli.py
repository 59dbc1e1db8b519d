"""``percpeak`` command line: process, sweep, metrics, synth, calibrate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .auditory import build_bank, calibrate
from .harness import (
    METHODS,
    HarnessConfig,
    Preprocess,
    apply_method,
    format_csv,
    kick_set,
    load_config,
    preprocess,
    run_sweep,
    synth_kick,
)
from .metrics import metrics_report
from .signal_core import load_wav, save_wav

log = logging.getLogger("percpeak")

BIT_DEPTHS = ("16", "24", "float32", "float64")


def _config(args) -> HarnessConfig:
    if getattr(args, "config", None):
        return load_config(args.config)[1]
    return HarnessConfig()


def _preprocess_from(args) -> Preprocess:
    return Preprocess(
        resample_hz=args.resample_hz if args.resample_hz > 0 else None,
        max_clip_s=args.max_clip_s if args.max_clip_s > 0 else None,
    )


def _method_param(args) -> float:
    chosen = {"min_peak": args.c, "min_detect": args.lam, "hard_clip": args.lam,
              "soft_clip": args.threshold_db, "drc": args.threshold_db}[args.method]
    if chosen is None:
        flag = {"min_peak": "--c", "min_detect": "--lambda", "hard_clip": "--lambda"}.get(args.method, "--threshold-db")
        raise SystemExit(f"percpeak process: error: method {args.method} requires {flag}")
    return chosen


def cmd_process(args) -> int:
    cfg = _config(args)
    param = _method_param(args)
    x0 = preprocess(load_wav(args.input), _preprocess_from(args))
    res = apply_method(args.method, x0, param, cfg)
    save_wav(res.output, args.output, args.bit_depth)
    d = cfg.model.detectability(x0, x0.with_samples(res.output.samples - x0.samples))
    report = metrics_report(res.output, x0, d).to_dict()
    report.update(method=args.method, param=param, converged=res.converged,
                  sample_rate_hz=res.output.sample_rate_hz, n_samples=len(res.output))
    if res.constraint_value is not None:
        report["constraint_value"] = res.constraint_value
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_sweep(args) -> int:
    spec, cfg = load_config(args.config)
    if spec is None:
        raise ValueError(f"{args.config} has no [sweep] table")
    text = format_csv(run_sweep(spec, cfg, jobs=args.jobs))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
        log.info("wrote %s", args.out)
    return 0


def cmd_metrics(args) -> int:
    x = load_wav(args.input)
    detect = 0.0
    ref = None
    if args.reference:
        cfg = _config(args)
        ref = load_wav(args.reference)
        if ref.sample_rate_hz != x.sample_rate_hz or len(ref) != len(x):
            raise ValueError("reference and input must share sample rate and length")
        detect = cfg.model.detectability(ref, x.with_samples(x.samples - ref.samples))
    json.dump(metrics_report(x, ref, detect).to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.single:
        kicks = [("kick", synth_kick(args.sample_rate, args.duration, args.f_start, args.f_end, args.decay))]
    else:
        kicks = kick_set(args.count, args.sample_rate, args.duration)
    for name, sig in kicks:
        path = out / f"{name}.wav"
        save_wav(sig, path, args.bit_depth)
        print(path)
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args).model
    bank = build_bank(args.sample_rate, args.n, cfg.n_filters, cfg.f_min_hz, cfg.ear_gain)
    const = calibrate(bank, cfg.quiet_anchor, cfg.masked_anchor, cfg.spl_reference_db)
    json.dump({"c_s": const.c_s, "c_a": const.c_a, "spl_reference_db": const.spl_reference_db,
               "sample_rate_hz": args.sample_rate, "n": args.n}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="percpeak", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("process", help="apply one method to one clip")
    pp.add_argument("input")
    pp.add_argument("output")
    pp.add_argument("--method", required=True, choices=METHODS)
    pp.add_argument("--c", type=float, help="detectability bound (min_peak)")
    pp.add_argument("--lambda", dest="lam", type=float, help="peak bound (min_detect, hard_clip)")
    pp.add_argument("--threshold-db", type=float, help="threshold in dBFS (soft_clip, drc)")
    pp.add_argument("--config", help="TOML file with [model], [solver], [drc] tables")
    pp.add_argument("--resample-hz", type=float, default=1000.0, help="preprocessing rate; 0 keeps the input rate")
    pp.add_argument("--max-clip-s", type=float, default=1.0, help="truncate longer clips; 0 disables")
    pp.add_argument("--bit-depth", choices=BIT_DEPTHS, default="float32")
    pp.set_defaults(func=cmd_process)

    ps = sub.add_parser("sweep", help="run a parameter sweep from a config file")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", required=True, help="CSV path, or - for stdout")
    ps.add_argument("--jobs", type=int, default=1)
    ps.set_defaults(func=cmd_sweep)

    pm = sub.add_parser("metrics", help="crest factor, peak, loudness (and detectability vs a reference)")
    pm.add_argument("input")
    pm.add_argument("--reference")
    pm.add_argument("--config")
    pm.set_defaults(func=cmd_metrics)

    pg = sub.add_parser("synth", help="write synthetic kick clips")
    pg.add_argument("--out-dir", required=True)
    pg.add_argument("--count", type=int, default=8)
    pg.add_argument("--sample-rate", type=float, default=48000.0)
    pg.add_argument("--duration", type=float, default=1.0)
    pg.add_argument("--single", action="store_true", help="one kick from the --f-start/--f-end/--decay values")
    pg.add_argument("--f-start", type=float, default=150.0)
    pg.add_argument("--f-end", type=float, default=45.0)
    pg.add_argument("--decay", type=float, default=0.15)
    pg.add_argument("--bit-depth", choices=BIT_DEPTHS, default="float32")
    pg.set_defaults(func=cmd_synth)

    pc = sub.add_parser("calibrate", help="derive c_s, c_a from the anchors in a config")
    pc.add_argument("--config")
    pc.add_argument("--sample-rate", type=float, default=1000.0)
    pc.add_argument("--n", type=int, default=1000, help="transform length")
    pc.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 2
        return int(exc.code or 0)
    except Exception as exc:
        print(f"percpeak {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
