"""CSV readers and writers for time tags, matched pairs and histograms.

All files are UTF-8 with LF line endings and a single header row.
"""
from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np

from .errors import ParseError
from .model import TimeTagStream, validate_stream
from .sync import Coincidences, CorrelationHistogram

STREAM_HEADER = ("time_ps", "channel")
TRUTH_HEADER = ("alice_idx", "bob_idx", "error_flag")
PAIRS_HEADER = ("alice_time_ps", "alice_channel", "bob_time_ps", "bob_channel", "dt_ps")
HISTOGRAM_HEADER = ("bin_center_ps", "count")


def _write_int_columns(path, header, columns):
    path = Path(path)
    cols = [np.asarray(c, dtype=np.int64).tolist() for c in columns]
    template = ",".join(["%d"] * len(cols)) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        fh.writelines(template % row for row in zip(*cols))


def _locate_bad_line(path, ncols):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1:
                continue
            if len(row) != ncols:
                return lineno, f"expected {ncols} fields, got {len(row)}"
            for v in row:
                try:
                    int(v)
                except ValueError:
                    return lineno, f"not an integer: {v!r}"
    return None, "unreadable file"


def _read_int_columns(path, header):
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            first = fh.readline().rstrip("\r\n")
            if tuple(first.split(",")) != header:
                raise ParseError(f"expected header {','.join(header)!r}, got {first!r}", path, 1)
            try:
                with warnings.catch_warnings():
                    warnings.filterwarnings("ignore", "loadtxt: input contained no data")
                    data = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
            except ValueError:
                line, msg = _locate_bad_line(path, len(header))
                raise ParseError(msg, path, line) from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}", path) from None
    if data.size == 0:
        return [np.empty(0, np.int64) for _ in header]
    if data.shape[1] != len(header):
        line, msg = _locate_bad_line(path, len(header))
        raise ParseError(msg, path, line)
    return [data[:, i] for i in range(len(header))]


def write_stream(path, stream: TimeTagStream) -> None:
    _write_int_columns(path, STREAM_HEADER, [stream.times, stream.channels])


def read_stream(path) -> TimeTagStream:
    """Read and validate a ``time_ps,channel`` file."""
    times, channels = _read_int_columns(path, STREAM_HEADER)
    if len(channels) and (channels.min() < 0 or channels.max() > 3):
        bad = int(np.flatnonzero((channels < 0) | (channels > 3))[0])
        raise ParseError(f"channel {int(channels[bad])} outside 0..3", path, bad + 2)
    if len(times) and times.min() < 0:
        bad = int(np.flatnonzero(times < 0)[0])
        raise ParseError("negative timestamp", path, bad + 2)
    unsorted = np.flatnonzero(np.diff(times) < 0)
    if unsorted.size:
        raise ParseError("rows not sorted by time_ps", path, int(unsorted[0]) + 3)
    stream = TimeTagStream(times, channels.astype(np.uint8))
    validate_stream(stream.times, stream.channels)
    return stream


def write_truth(path, truth) -> None:
    _write_int_columns(path, TRUTH_HEADER, [truth.alice_idx, truth.bob_idx, truth.error.astype(np.int64)])


def read_truth(path):
    return _read_int_columns(path, TRUTH_HEADER)


def write_pairs(path, pairs: Coincidences) -> None:
    _write_int_columns(
        path,
        PAIRS_HEADER,
        [pairs.alice_times, pairs.alice_channels, pairs.bob_times, pairs.bob_channels, pairs.dt_ps],
    )


def read_pairs(path) -> Coincidences:
    ta, ca, tb, cb, dt = _read_int_columns(path, PAIRS_HEADER)
    for col, name in ((ca, "alice_channel"), (cb, "bob_channel")):
        if len(col) and (col.min() < 0 or col.max() > 3):
            bad = int(np.flatnonzero((col < 0) | (col > 3))[0])
            raise ParseError(f"{name} {int(col[bad])} outside 0..3", path, bad + 2)
    return Coincidences(ta, ca.astype(np.uint8), tb, cb.astype(np.uint8), dt)


def write_histogram(path, hist: CorrelationHistogram) -> None:
    """Bin centres are written as absolute offsets, rounded down to whole ps."""
    centers = np.floor(hist.offsets).astype(np.int64)
    _write_int_columns(path, HISTOGRAM_HEADER, [centers, hist.counts])


def write_bits(path, bits: np.ndarray, times: np.ndarray) -> None:
    _write_int_columns(path, ("time_ps", "alice_bit", "bob_bit"), [times, bits[:, 0], bits[:, 1]])
