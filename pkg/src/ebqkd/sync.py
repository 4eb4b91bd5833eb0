"""Clock offset recovery, correlation histograms and coincidence matching.

Offsets follow one convention throughout: ``dt = t_bob - t_alice - offset``,
so the offset of a true pair is how far Bob's clock runs ahead of Alice's.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.stats import poisson

from .errors import NoPeak, SyncFailed
from .model import TimeTagRecord, TimeTagStream, validate_stream

DEFAULT_WINDOW_PS = 2500
DEFAULT_COARSE_HALF_RANGE_PS = 1_000_000_000
DEFAULT_COARSE_BIN_PS = 1_000_000
DEFAULT_FINE_BIN_PS = 100
PEAK_SIGMAS = 5.0
# one-sided 5 sigma, applied to the whole histogram rather than per bin
FALSE_ALARM = 2.87e-7
_CHUNK = 4_000_000


@dataclass(frozen=True)
class CorrelationHistogram:
    """Counts of ``t_b - t_a - trial_offset_ps`` in bins starting at ``origin_ps``."""

    bin_width_ps: int
    origin_ps: int
    counts: np.ndarray
    trial_offset_ps: int = 0

    @property
    def centers(self) -> np.ndarray:
        """Bin centres in ``dt`` coordinates (relative to the trial offset)."""
        return self.origin_ps + (np.arange(len(self.counts)) + 0.5) * self.bin_width_ps

    @property
    def offsets(self) -> np.ndarray:
        """Bin centres as absolute clock offsets."""
        return self.centers + self.trial_offset_ps

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _check_sorted(stream: TimeTagStream):
    validate_stream(stream.times)
    return stream.times


def _pair_differences(ta, tb, lo_edge, hi_edge):
    """Yield chunks of all ``tb[j] - ta[i]`` with ``lo_edge <= diff < hi_edge``."""
    lo = np.searchsorted(tb, ta + lo_edge, side="left")
    hi = np.searchsorted(tb, ta + hi_edge, side="left")
    n = hi - lo
    has = np.flatnonzero(n)
    if not has.size:
        return
    cum = np.cumsum(n[has])
    start = 0
    while start < len(has):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _CHUNK, side="right"))
        stop = max(stop, start + 1)
        sel = has[start:stop]
        counts = n[sel]
        rep_a = np.repeat(ta[sel], counts)
        first = np.repeat(lo[sel] - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        j = first + np.arange(counts.sum())
        yield tb[j] - rep_a
        start = stop


def build_histogram(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    trial_offset_ps: int,
    bin_width_ps: int,
    half_range_ps: int,
) -> CorrelationHistogram:
    """Histogram of pairwise time differences within ``+-half_range_ps`` of the trial offset.

    Bins are half-open ``[left, right)``; the range is ``[-half_range, +half_range)``.
    Work is proportional to the number of tag pairs inside the range.
    """
    if bin_width_ps <= 0 or half_range_ps <= 0:
        raise ValueError("bin width and half range must be positive")
    if (2 * half_range_ps) % bin_width_ps:
        raise ValueError("bin width must divide twice the half range")
    ta = _check_sorted(stream_a)
    tb = _check_sorted(stream_b)
    nbins = 2 * half_range_ps // bin_width_ps
    counts = np.zeros(nbins, np.int64)
    lo_edge = np.int64(trial_offset_ps - half_range_ps)
    hi_edge = np.int64(trial_offset_ps + half_range_ps)
    for diffs in _pair_differences(ta, tb, lo_edge, hi_edge):
        k = (diffs - lo_edge) // bin_width_ps
        counts += np.bincount(k, minlength=nbins)
    return CorrelationHistogram(int(bin_width_ps), -int(half_range_ps), counts, int(trial_offset_ps))


def _significant(counts) -> bool:
    """Peak test: ``max >= mean + 5 sqrt(mean)`` and unlikely anywhere under pure Poisson background."""
    if counts.size == 0 or counts.max() <= 0:
        return False
    mean = float(counts.mean())
    peak = int(counts.max())
    if peak < mean + PEAK_SIGMAS * math.sqrt(mean):
        return False
    return counts.size * poisson.sf(peak - 1, mean) < FALSE_ALARM


def fwhm(hist: CorrelationHistogram) -> float:
    """Full width at half maximum above a median baseline, by linear interpolation.

    Raises:
        NoPeak: the maximum does not rise above the baseline.
    """
    c = np.asarray(hist.counts, dtype=float)
    if c.size == 0:
        raise NoPeak("empty histogram")
    baseline = float(np.median(c))
    k = int(np.argmax(c))
    peak = c[k]
    if peak <= baseline:
        raise NoPeak("histogram has no maximum above its baseline")
    half = baseline + 0.5 * (peak - baseline)

    left = float(k)
    i = k
    while i > 0 and c[i - 1] >= half:
        i -= 1
    if i > 0:
        left = i - (c[i] - half) / (c[i] - c[i - 1])
    else:
        left = -0.5
    right = float(k)
    i = k
    while i < c.size - 1 and c[i + 1] >= half:
        i += 1
    if i < c.size - 1:
        right = i + (c[i] - half) / (c[i] - c[i + 1])
    else:
        right = c.size - 0.5
    return (right - left) * hist.bin_width_ps


def _refine_peak(hist: CorrelationHistogram) -> float:
    """Background-subtracted centroid of the peak, in ``dt`` coordinates."""
    c = hist.counts.astype(float)
    baseline = float(np.median(c))
    sig = c - baseline
    # smooth before locating the maximum so single-bin noise cannot win
    width = 9 if c.size >= 9 else 1
    smooth = np.convolve(sig, np.ones(width) / width, mode="same")
    k = int(np.argmax(smooth))
    centers = hist.centers
    center = float(centers[k])
    try:
        reach = max(fwhm(CorrelationHistogram(hist.bin_width_ps, hist.origin_ps, smooth)), hist.bin_width_ps)
    except NoPeak:
        return center
    for _ in range(3):
        sel = np.abs(centers - center) <= reach
        w = np.clip(sig[sel], 0.0, None)
        if w.sum() <= 0:
            break
        center = float((w * centers[sel]).sum() / w.sum())
    return center


def estimate_offset(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    coarse_half_range_ps: int = DEFAULT_COARSE_HALF_RANGE_PS,
    coarse_bin_ps: int = DEFAULT_COARSE_BIN_PS,
    fine_bin_ps: int = DEFAULT_FINE_BIN_PS,
    center_ps: int = 0,
) -> int:
    """Two-stage clock offset estimate.

    A coarse histogram over ``center_ps +- coarse_half_range_ps`` locates the
    peak to within one coarse bin; a fine histogram spanning three coarse bins
    around it is then reduced to a background-subtracted peak centroid.

    Raises:
        SyncFailed: the coarse or fine histogram has no significant peak.
    """
    coarse = build_histogram(stream_a, stream_b, center_ps, coarse_bin_ps, coarse_half_range_ps)
    if not _significant(coarse.counts):
        raise SyncFailed("no significant coincidence peak in the coarse histogram")
    # ties go to the smallest offset
    guess = int(round(coarse.offsets[int(np.argmax(coarse.counts))]))
    fine_half = int(math.ceil(1.5 * coarse_bin_ps / fine_bin_ps)) * fine_bin_ps
    fine = build_histogram(stream_a, stream_b, guess, fine_bin_ps, fine_half)
    if not _significant(fine.counts):
        raise SyncFailed("no significant coincidence peak in the fine histogram")
    return int(round(guess + _refine_peak(fine)))


@dataclass(frozen=True)
class CoincidencePair:
    alice: TimeTagRecord
    bob: TimeTagRecord
    dt_ps: int


@dataclass(frozen=True)
class Coincidences:
    """Matched pairs stored column-wise, ordered by Alice's tag."""

    alice_times: np.ndarray
    alice_channels: np.ndarray
    bob_times: np.ndarray
    bob_channels: np.ndarray
    dt_ps: np.ndarray
    alice_idx: np.ndarray | None = None
    bob_idx: np.ndarray | None = None

    def __len__(self):
        return len(self.dt_ps)

    def __iter__(self) -> Iterator[CoincidencePair]:
        for ta, ca, tb, cb, dt in zip(
            self.alice_times.tolist(), self.alice_channels.tolist(),
            self.bob_times.tolist(), self.bob_channels.tolist(), self.dt_ps.tolist(),
        ):
            yield CoincidencePair(TimeTagRecord(ta, ca), TimeTagRecord(tb, cb), dt)

    @classmethod
    def from_pairs(cls, pairs) -> "Coincidences":
        pairs = list(pairs)
        cols = [
            np.array([p.alice.time_ps for p in pairs], np.int64),
            np.array([p.alice.channel for p in pairs], np.uint8),
            np.array([p.bob.time_ps for p in pairs], np.int64),
            np.array([p.bob.channel for p in pairs], np.uint8),
            np.array([p.dt_ps for p in pairs], np.int64),
        ]
        return cls(*cols)


def match_coincidences(
    stream_a: TimeTagStream, stream_b: TimeTagStream, offset_ps: int, window_ps: int = DEFAULT_WINDOW_PS
) -> Coincidences:
    """Greedy chronological matching within a full-width gate.

    Alice's tags are visited in time order. Each takes the unused Bob tag with
    the smallest ``|dt|`` satisfying ``2 |dt| <= window_ps``; ties go to the
    earlier Bob tag. Every tag is used at most once.
    """
    if window_ps <= 0:
        raise ValueError("window_ps must be positive")
    ta = _check_sorted(stream_a)
    tb = _check_sorted(stream_b)
    half = window_ps // 2
    lo = np.searchsorted(tb, ta + np.int64(offset_ps - half), side="left")
    hi = np.searchsorted(tb, ta + np.int64(offset_ps + half), side="right")
    cand = np.flatnonzero(hi > lo)
    used = set()
    ia, ib = [], []
    for i in cand.tolist():
        t = int(ta[i]) + offset_ps
        best_j, best_d = -1, None
        for j in range(int(lo[i]), int(hi[i])):
            if j in used:
                continue
            d = abs(int(tb[j]) - t)
            if 2 * d > window_ps:
                continue
            if best_d is None or d < best_d:
                best_j, best_d = j, d
        if best_j >= 0:
            used.add(best_j)
            ia.append(i)
            ib.append(best_j)
    ia = np.array(ia, np.int64)
    ib = np.array(ib, np.int64)
    return Coincidences(
        alice_times=ta[ia],
        alice_channels=stream_a.channels[ia],
        bob_times=tb[ib],
        bob_channels=stream_b.channels[ib],
        dt_ps=tb[ib] - ta[ia] - np.int64(offset_ps),
        alice_idx=ia,
        bob_idx=ib,
    )
