"""Command-line front end: synthesize / ingest scenes, estimate, evaluate.

Exit codes: 0 success, 1 configuration or input error, 2 partial failure
(some bins could not be estimated; they are listed on stderr).
The log level is read from the SCFA_LOG_LEVEL environment variable.
"""

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import io
from .config import METHOD_NAMES, load_config
from .errors import ScfaError
from .pipeline import (
    bundle_from_signal,
    evaluate_estimate,
    load_bundle,
    load_estimate,
    make_scene_bundle,
    run_method,
    save_bundle,
    save_estimate,
)

log = logging.getLogger("scfa")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

METRICS_SCHEMA_VERSION = 1
METRICS_HEADER = (
    "schema_version", "method", "objective", "frames_per_segment", "seed",
    "E_s", "E_s_ov", "E_s_un", "E_l", "E_l_ov", "E_l_un", "E_v", "E_v_ov", "E_v_un",
    "E_A", "SSNR", "runtime_s",
)


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, keep exit code 2 for partial failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def cmd_synth(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    bundle = make_scene_bundle(cfg)
    save_bundle(bundle, args.out)
    log.info("scene bundle written to %s (%d bins)", args.out, len(bundle.bins))
    return EXIT_OK


def cmd_ingest(args):
    cfg = load_config(args.config)
    signal, rate = io.read_pcm(args.pcm, args.sidecar)
    bundle = bundle_from_signal(cfg, signal, rate)
    save_bundle(bundle, args.out)
    log.info("recording bundle written to %s (%d frames)", args.out, bundle.n_frames)
    return EXIT_OK


def cmd_estimate(args):
    bundle = load_bundle(args.bundle)
    if args.config:
        est_cfg = load_config(args.config).estimation
        bundle.config = bundle.config.model_copy(update={"estimation": est_cfg})
    method = args.method or bundle.config.estimation.method
    objective = args.objective or bundle.config.estimation.objective
    start = time.perf_counter()
    est = run_method(bundle, method, objective, args.frames_per_segment, args.seed,
                     workers=args.threads)
    runtime = time.perf_counter() - start
    manifest = io.read_json(os.path.join(args.bundle, "manifest.json"))
    save_estimate(est, args.out, manifest.get("config_hash"))
    # kept apart so the estimate files stay byte-identical across runs
    io.write_json(os.path.join(args.out, "timing.json"), {"runtime_s": runtime})
    n_conv = sum(rep.converged for _, _, rep in est.reports)
    if est.reports:
        log.info("%d of %d segment problems converged", n_conv, len(est.reports))
    if est.failed:
        for k, msg in sorted(est.failed.items()):
            print(f"bin {k} failed: {msg}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _fmt(x):
    if x is None:
        return "nan"
    return f"{float(x) + 0.0:.10g}"


def _metric_row(est, report, runtime):
    row = [METRICS_SCHEMA_VERSION, est.method, est.objective or "", est.frames_per_segment,
           est.seed]
    for err in (report.E_s, report.E_l, report.E_v):
        row += [_fmt(None), _fmt(None), _fmt(None)] if err is None else \
            [_fmt(err.total), _fmt(err.over), _fmt(err.under)]
    row += [_fmt(report.E_A), _fmt(report.ssnr), "" if runtime is None else _fmt(runtime)]
    return row


def cmd_evaluate(args):
    bundle = load_bundle(args.bundle)
    rows = []
    for path in args.estimates:
        est = load_estimate(path)
        report = evaluate_estimate(bundle, est, with_ssnr=not args.no_ssnr)
        runtime = None
        timing = os.path.join(path, "timing.json")
        if not args.no_timing and os.path.exists(timing):
            runtime = io.read_json(timing).get("runtime_s")
        rows.append(_metric_row(est, report, runtime))
    new_file = not (args.append and os.path.exists(args.out))
    with open(args.out, "a" if not new_file else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new_file:
            writer.writerow(METRICS_HEADER)
        writer.writerows(rows)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="scfa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesize a scene bundle from a JSON config")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a bundle from raw float32 PCM")
    p.add_argument("--config", required=True, help="JSON run configuration (array, frames, bins)")
    p.add_argument("--pcm", required=True, help="interleaved little-endian float32 samples")
    p.add_argument("--sidecar", required=True, help="JSON with sampling_rate and channels")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("estimate", help="estimate model parameters of a bundle")
    p.add_argument("bundle", help="scene bundle directory")
    p.add_argument("--method", choices=METHOD_NAMES, default=None,
                   help="estimator (default: the bundle config's method)")
    p.add_argument("--out", required=True, help="estimates directory to write")
    p.add_argument("--frames-per-segment", type=int, default=None,
                   help="frames per time-segment (overrides the config)")
    p.add_argument("--seed", type=int, default=None, help="initialization seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes over bins")
    p.add_argument("--objective", choices=("ml", "ls", "gls"), default=None)
    p.add_argument("--config", default=None,
                   help="JSON config whose estimation section replaces the bundle's")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="metrics of one or more estimate directories")
    p.add_argument("bundle", help="scene bundle directory with ground truth")
    p.add_argument("estimates", nargs="+", help="estimate directories")
    p.add_argument("--out", required=True, help="metrics CSV to write")
    p.add_argument("--append", action="store_true", help="append rows to an existing CSV")
    p.add_argument("--no-timing", action="store_true",
                   help="leave runtime_s empty so the CSV is reproducible byte for byte")
    p.add_argument("--no-ssnr", action="store_true", help="skip the MWF / SSNR evaluation")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    level = os.environ.get("SCFA_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "frames_per_segment", None) is not None and args.frames_per_segment < 1:
        print("scfa: error: --frames-per-segment must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "threads", 1) < 1:
        print("scfa: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except ScfaError as exc:
        print(f"scfa: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
