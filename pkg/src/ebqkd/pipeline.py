"""End-to-end pipelines: simulate, synchronise, match, sift, finite-key.

Reports are plain JSON-serialisable dicts. Everything except the
``generated_at`` field is a deterministic function of the inputs.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import io
from .basis import WORDS, set_bias
from .bias import RateModel, improvement, key_length_vs_bias, optimize_bias
from .config import RunConfig
from .errors import ConfigError, PipelineError, QKDError
from .finite_key import FiniteKeyInput, key_length, key_rate
from .model import TimeTagStream
from .photonics import analytic_expectations, simulate_session
from .sifting import compute_error_rates, sift
from .sync import build_histogram, estimate_offset, fwhm, match_coincidences

REPORT_VERSION = 1
TIMESTAMP_FIELD = "generated_at"

# Published results of the reference experiment (20:80 bias, 10206 s).
REFERENCE = {
    "raw_count": 34644,
    "n_x": 1395,
    "n_z": 22300,
    "f_x": 1.1,
    "f_z": 1.12,
    "eps_ph": 6e-3,
    "eps_per_basis": 3e-3,
    "theta_x": 0.02,
    "theta_z": 0.019,
    "e_bx": 0.069,
    "e_bz": 0.065,
    "q_act": 0.8,
    "q_opt": 0.79,
    "final_key_len": 4293,
    "improvement_pct": 14.8,
    "rate_per_raw": 0.124,
    "unbiased_rate_per_raw": 0.108,
    "duration_s": 10206,
    "rate_per_s": 0.42,
    "asymptotic_improvement_pct": 36.0,
    "projection_raw_count": 1_000_000,
    "projection_q_opt": 0.96,
    "projection_improvement_pct": 71.0,
}


def thread_limit() -> int:
    """Parallelism cap from ``QKD_SIM_THREADS``; the pipeline itself runs on one thread."""
    value = os.environ.get("QKD_SIM_THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"QKD_SIM_THREADS must be a positive integer, got {value!r}") from None
    if n <= 0:
        raise ConfigError(f"QKD_SIM_THREADS must be a positive integer, got {value!r}")
    return n


def _stage(name):
    def wrap(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except QKDError as exc:
            raise PipelineError(name, exc) from exc
    return wrap


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


def analyze_streams(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    config: RunConfig,
    duration_s: float | None = None,
    out_dir: Path | None = None,
) -> dict:
    """Sync, match, sift and evaluate the key of two recorded streams.

    Intermediate CSVs (histogram, matched pairs) go to ``out_dir`` when given.
    ``duration_s`` defaults to the span of the recorded tags.
    """
    sp = config.sync
    offset = _stage("sync")(
        estimate_offset, stream_a, stream_b, sp.coarse_half_range_ps, sp.coarse_bin_ps, sp.fine_bin_ps
    )
    hist = _stage("sync")(build_histogram, stream_a, stream_b, offset, sp.histogram_bin_ps, sp.histogram_half_range_ps)
    width = _stage("sync")(fwhm, hist)
    if out_dir is not None:
        io.write_histogram(out_dir / "histogram.csv", hist)
    pairs = _stage("match")(match_coincidences, stream_a, stream_b, offset, config.window_ps)
    if out_dir is not None:
        io.write_pairs(out_dir / "pairs.csv", pairs)
    sifted = _stage("sift")(sift, pairs)
    rates = _stage("sift")(compute_error_rates, sifted)
    fk = config.finite_key
    result = _stage("finite-key")(
        key_length, FiniteKeyInput(sifted.n_x, sifted.n_z, rates.e_bx, rates.e_bz, fk.f_x, fk.f_z, fk.eps_per_basis)
    )
    if duration_s is None:
        times = [s.times[[0, -1]] for s in (stream_a, stream_b) if len(s)]
        span = (max(t[1] for t in times) - min(t[0] for t in times)) / 1e12 if times else 0.0
        duration_s = span
    return {
        "offset_ps": int(offset),
        "fwhm_ps": float(width),
        "events_a": len(stream_a),
        "events_b": len(stream_b),
        "raw_count": sifted.raw_count,
        "n_x": sifted.n_x,
        "n_z": sifted.n_z,
        "sift_fraction": _finite(sifted.sift_fraction),
        "e_bx": rates.e_bx,
        "e_bz": rates.e_bz,
        "finite_key": result.as_dict(),
        "key_rate_per_raw": key_rate(result, sifted.raw_count) if sifted.raw_count else 0.0,
        "duration_s": float(duration_s),
        "key_rate_per_s": result.final_key_len / duration_s if duration_s > 0 else None,
    }


def _bias_block(q_z):
    comp = set_bias(q_z)
    return {"requested_q_z": q_z, "reference_N0": comp.reference, "realized_q_z": comp.reference / WORDS}


def report_json(report: dict, include_timestamp: bool = True) -> str:
    data = dict(report)
    if not include_timestamp:
        data.pop(TIMESTAMP_FIELD, None)
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _stamp(report):
    report[TIMESTAMP_FIELD] = datetime.now(timezone.utc).isoformat()
    return report


class _OutputDir:
    """Creates ``path`` and holds an exclusive lock file inside it."""

    def __init__(self, path):
        self.path = Path(path) if path is not None else None
        self._lock = None

    def __enter__(self):
        if self.path is None:
            return None
        self.path.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.path / ".lock"))
        try:
            self._lock.acquire(timeout=0)
        except Timeout:
            raise ConfigError(f"output directory {self.path} is in use by another run") from None
        return self.path

    def __exit__(self, *exc):
        if self._lock is not None:
            self._lock.release()
        return False


def _write_failure(out, exc):
    if out is not None and isinstance(exc, PipelineError):
        (out / "error.json").write_text(
            json.dumps({"stage": exc.stage, "error": str(exc)}, indent=2) + "\n", encoding="utf-8"
        )


def simulate(config: RunConfig, out_dir=None):
    """Run the photonics simulation and optionally persist streams and truth."""
    sim = _stage("simulate")(simulate_session, config.source, config.link_a, config.link_b, config.session)
    with _OutputDir(out_dir) as out:
        if out is not None:
            stream_a, stream_b, truth = sim
            io.write_stream(out / "alice.csv", stream_a)
            io.write_stream(out / "bob.csv", stream_b)
            io.write_truth(out / "truth.csv", truth)
    return sim


def run_e2e(config: RunConfig, out_dir=None) -> dict:
    """Simulate a session, then analyse it blind to the injected clock offset."""
    with _OutputDir(out_dir) as out:
        try:
            stream_a, stream_b, truth = _stage("simulate")(
                simulate_session, config.source, config.link_a, config.link_b, config.session
            )
            if out is not None:
                io.write_stream(out / "alice.csv", stream_a)
                io.write_stream(out / "bob.csv", stream_b)
                io.write_truth(out / "truth.csv", truth)
            expected = analytic_expectations(config.source, config.link_a, config.link_b, window_ps=config.window_ps)
            analysis = analyze_streams(stream_a, stream_b, config, config.session.duration_s, out)
        except PipelineError as exc:
            _write_failure(out, exc)
            raise
        report = {
            "report_version": REPORT_VERSION,
            "config": config.to_dict(),
            "seeds": {"session": config.session.seed},
            "bias": _bias_block(config.session.bias_z),
            "simulation": {
                "injected_offset_ps": config.session.clock_offset_ps,
                "true_pairs": len(truth),
                "expected_rates": asdict(expected),
            },
            "analysis": analysis,
        }
        _stamp(report)
        if out is not None:
            (out / "report.json").write_text(report_json(report), encoding="utf-8")
    return report


def analyze(stream_a_path, stream_b_path, config: RunConfig | None = None, duration_s=None, out_dir=None) -> dict:
    """Offline analysis of two recorded time-tag CSV files."""
    config = config or RunConfig()
    with _OutputDir(out_dir) as out:
        try:
            stream_a = _stage("parse")(io.read_stream, stream_a_path)
            stream_b = _stage("parse")(io.read_stream, stream_b_path)
            analysis = analyze_streams(stream_a, stream_b, config, duration_s, out)
        except PipelineError as exc:
            _write_failure(out, exc)
            raise
        report = {
            "report_version": REPORT_VERSION,
            "config": config.to_dict(),
            "inputs": {"alice": str(stream_a_path), "bob": str(stream_b_path)},
            "analysis": analysis,
        }
        _stamp(report)
        if out is not None:
            (out / "report.json").write_text(report_json(report), encoding="utf-8")
    return report


def reference_model(raw_count: int | None = None, asymptotic: bool = False) -> RateModel:
    r = REFERENCE
    return RateModel(
        raw_count or r["raw_count"], r["e_bx"], r["e_bz"], r["f_x"], r["f_z"], r["eps_per_basis"], asymptotic
    )


def table1(asymptotic: bool = False, raw_count: int | None = None) -> dict:
    """Recompute the reference experiment's post-processing table.

    Returns ``{"rows": [(name, published, computed), ...], "bias": ...}``.
    ``asymptotic`` adds the infinite-key gain at q = 0.8; ``raw_count``
    adds the optimal bias and gain for a longer raw key.
    """
    r = REFERENCE
    inp = FiniteKeyInput(r["n_x"], r["n_z"], r["e_bx"], r["e_bz"], r["f_x"], r["f_z"], r["eps_per_basis"])
    res = key_length(inp)
    half = r["raw_count"] // 4
    unbiased = key_length(FiniteKeyInput(half, half, r["e_bx"], r["e_bz"], r["f_x"], r["f_z"], r["eps_per_basis"]))
    model = reference_model()
    opt = optimize_bias(model)
    rows = [
        ("theta_x", r["theta_x"], res.theta_x),
        ("theta_z", r["theta_z"], res.theta_z),
        ("eps_ph", r["eps_ph"], res.eps_ph),
        ("final_key_len", r["final_key_len"], res.final_key_len),
        ("rate_per_raw", r["rate_per_raw"], key_rate(res, r["raw_count"])),
        ("rate_per_s", r["rate_per_s"], res.final_key_len / r["duration_s"]),
        ("unbiased_rate_per_raw", r["unbiased_rate_per_raw"], key_rate(unbiased, r["raw_count"])),
        ("improvement_observed_pct", r["improvement_pct"],
         100.0 * (res.final_key_len / unbiased.final_key_len - 1.0)),
        ("improvement_model_q0.8_pct", r["improvement_pct"], improvement(model, r["q_act"])),
        ("key_model_q0.8", r["final_key_len"], key_length_vs_bias(model, r["q_act"]).final_key_len),
        ("q_opt", r["q_opt"], opt.q_opt),
    ]
    if asymptotic:
        e = 0.5 * (r["e_bx"] + r["e_bz"])
        f = 0.5 * (r["f_x"] + r["f_z"])
        equal = RateModel(r["raw_count"], e, e, f, f, asymptotic=True)
        rows.append(("asymptotic_improvement_equal_errors_pct", r["asymptotic_improvement_pct"],
                     improvement(equal, r["q_act"])))
        rows.append(("asymptotic_improvement_measured_errors_pct", r["asymptotic_improvement_pct"],
                     improvement(reference_model(asymptotic=True), r["q_act"])))
    if raw_count is not None:
        big = reference_model(raw_count)
        big_opt = optimize_bias(big)
        rows.append((f"q_opt_raw{raw_count}", r["projection_q_opt"], big_opt.q_opt))
        rows.append((f"improvement_raw{raw_count}_pct", r["projection_improvement_pct"],
                     improvement(big, big_opt.grid_q)))
    return {"rows": rows, "bias": _bias_block(r["q_act"]), "finite_key": res.as_dict()}


def render_table(table: dict) -> str:
    lines = [f"{'quantity':<44}{'published':>12}{'computed':>14}{'delta':>12}"]
    for name, pub, comp in table["rows"]:
        delta = comp - pub
        lines.append(f"{name:<44}{pub:>12.6g}{comp:>14.6g}{delta:>12.4g}")
    b = table["bias"]
    lines.append(f"bias comparator: N0={b['reference_N0']} realized q_z={b['realized_q_z']:.6f}")
    return "\n".join(lines)
