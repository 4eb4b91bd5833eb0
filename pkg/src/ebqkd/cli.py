"""Command-line entry point (``ebqkd``).

Exit codes: 0 success, 2 configuration error, 3 pipeline-stage failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .bias import RateModel, bias_curve, improvement, optimize_bias
from .config import RunConfig, load_config
from .errors import ConfigError, DomainError, ParseError, PipelineError, QKDError
from .finite_key import DEFAULT_EPS_PER_BASIS, FiniteKeyInput, key_length, key_rate
from .pipeline import analyze, render_table, report_json, run_e2e, simulate, table1, thread_limit
from .sifting import compute_error_rates, sift
from .sync import (
    DEFAULT_COARSE_BIN_PS, DEFAULT_COARSE_HALF_RANGE_PS, DEFAULT_FINE_BIN_PS, DEFAULT_WINDOW_PS,
    build_histogram, estimate_offset, fwhm, match_coincidences,
)

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _emit(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.override(**{
        "session.seed": getattr(args, "seed", None),
        "session.bias_z": getattr(args, "bias_z", None),
        "session.duration_s": getattr(args, "duration_s", None),
        "session.clock_offset_ps": getattr(args, "clock_offset_ps", None),
        "window_ps": getattr(args, "window_ps", None),
    })


def _add_session_flags(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--bias-z", type=float, help="probability of choosing Z on each side")
    p.add_argument("--duration-s", type=float)
    p.add_argument("--clock-offset-ps", type=int, help="offset injected into Bob's clock")
    p.add_argument("--out", required=True, help="output directory")


def _add_model_flags(p, raw_required):
    p.add_argument("--ebx", type=float, required=True)
    p.add_argument("--ebz", type=float, required=True)
    p.add_argument("--fx", type=float, default=1.1)
    p.add_argument("--fz", type=float, default=1.1)
    p.add_argument("--eps-per-basis", type=float, default=DEFAULT_EPS_PER_BASIS)
    p.add_argument("--raw", type=int, required=raw_required)
    p.add_argument("--asymptotic", action="store_true")


def cmd_simulate(args):
    cfg = _config(args)
    stream_a, stream_b, truth = simulate(cfg, args.out)
    _emit({"events_a": len(stream_a), "events_b": len(stream_b), "true_pairs": len(truth),
           "config": cfg.to_dict()})


def cmd_sync(args):
    try:
        stream_a = io.read_stream(args.alice)
        stream_b = io.read_stream(args.bob)
    except ParseError as exc:
        raise PipelineError("parse", exc) from exc
    try:
        offset = estimate_offset(stream_a, stream_b, args.coarse_range_ps, args.coarse_bin_ps, args.fine_bin_ps)
        hist = build_histogram(stream_a, stream_b, offset, args.histogram_bin_ps, args.histogram_half_range_ps)
        width = fwhm(hist)
    except QKDError as exc:
        raise PipelineError("sync", exc) from exc
    pairs = match_coincidences(stream_a, stream_b, offset, args.window_ps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_histogram(out / "histogram.csv", hist)
    io.write_pairs(out / "pairs.csv", pairs)
    _emit({"offset_ps": offset, "fwhm_ps": width, "matched_pairs": len(pairs), "window_ps": args.window_ps},
          out / "sync.json")


def cmd_sift(args):
    try:
        pairs = io.read_pairs(args.pairs)
    except ParseError as exc:
        raise PipelineError("parse", exc) from exc
    result = sift(pairs)
    summary = result.summary()
    try:
        rates = compute_error_rates(result)
        summary.update(e_bx=rates.e_bx, e_bz=rates.e_bz)
    except QKDError as exc:
        summary.update(e_bx=None, e_bz=None, error=str(exc))
    if args.bits_dir:
        d = Path(args.bits_dir)
        d.mkdir(parents=True, exist_ok=True)
        io.write_bits(d / "bits_x.csv", result.bits_x, result.times_x)
        io.write_bits(d / "bits_z.csv", result.bits_z, result.times_z)
    _emit(summary, args.out)


def cmd_keyrate(args):
    try:
        inp = FiniteKeyInput(args.nx, args.nz, args.ebx, args.ebz, args.fx, args.fz, args.eps_per_basis)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    res = key_length(inp, asymptotic=args.asymptotic)
    out = res.as_dict()
    out["rate_per_raw"] = key_rate(res, args.raw) if args.raw else None
    _emit(out)


def cmd_optimize(args):
    try:
        model = RateModel(args.raw, args.ebx, args.ebz, args.fx, args.fz, args.eps_per_basis, args.asymptotic)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    opt = optimize_bias(model, (args.q_min, args.q_max))
    out = {
        "q_opt": opt.q_opt,
        "q_opt_grid": opt.grid_q,
        "key_at_opt": opt.final_key_len,
        "improvement_vs_unbiased_pct": improvement(model, opt.grid_q),
        "flags": list(opt.flags),
    }
    if args.curve:
        points = bias_curve(model, (0.0, 1.0))
        with open(args.curve, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("q,n_x,n_z,final_key_len\n")
            for p in points:
                fh.write(f"{p.q!r},{p.n_x},{p.n_z},{p.final_key_len}\n")
    _emit(out)


def cmd_run_e2e(args):
    report = run_e2e(_config(args), args.out)
    sys.stdout.write(report_json(report))


def cmd_analyze(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.window_ps is not None:
        cfg = cfg.override(window_ps=args.window_ps)
    report = analyze(args.alice, args.bob, cfg, args.duration_s, args.out)
    sys.stdout.write(report_json(report))


def cmd_table1(args):
    table = table1(args.asymptotic, args.raw)
    if args.json:
        _emit({"rows": [{"quantity": n, "published": p, "computed": c} for n, p, c in table["rows"]],
               "bias": table["bias"], "finite_key": table["finite_key"]})
    else:
        sys.stdout.write(render_table(table) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebqkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate Alice/Bob time-tag CSVs")
    _add_session_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sync", help="estimate clock offset, FWHM and match coincidences")
    p.add_argument("alice")
    p.add_argument("bob")
    p.add_argument("--out", required=True)
    p.add_argument("--window-ps", type=int, default=DEFAULT_WINDOW_PS)
    p.add_argument("--coarse-range-ps", type=int, default=DEFAULT_COARSE_HALF_RANGE_PS)
    p.add_argument("--coarse-bin-ps", type=int, default=DEFAULT_COARSE_BIN_PS)
    p.add_argument("--fine-bin-ps", type=int, default=DEFAULT_FINE_BIN_PS)
    p.add_argument("--histogram-bin-ps", type=int, default=100)
    p.add_argument("--histogram-half-range-ps", type=int, default=10_000)
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("sift", help="sift matched pairs and compute error rates")
    p.add_argument("pairs")
    p.add_argument("--out", help="write the JSON summary here as well")
    p.add_argument("--bits-dir", help="write per-basis bit files here")
    p.set_defaults(func=cmd_sift)

    p = sub.add_parser("keyrate", help="finite-key secure key length")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nz", type=int, required=True)
    _add_model_flags(p, raw_required=False)
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("optimize", help="optimal basis bias")
    _add_model_flags(p, raw_required=True)
    p.add_argument("--q-min", type=float, default=0.5)
    p.add_argument("--q-max", type=float, default=1.0)
    p.add_argument("--curve", help="write the q,n_x,n_z,final_key_len curve CSV")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run-e2e", help="simulate and analyse one session")
    _add_session_flags(p)
    p.add_argument("--window-ps", type=int)
    p.set_defaults(func=cmd_run_e2e)

    p = sub.add_parser("analyze", help="analyse recorded time-tag CSVs")
    p.add_argument("alice")
    p.add_argument("bob")
    p.add_argument("--config")
    p.add_argument("--duration-s", type=float)
    p.add_argument("--window-ps", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("table1", help="recompute the reference post-processing table")
    p.add_argument("--asymptotic", action="store_true")
    p.add_argument("--raw", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_table1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        thread_limit()
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except QKDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
