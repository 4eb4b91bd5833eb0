import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from ebqkd.errors import NoPeak, StreamOrderError, SyncFailed
from ebqkd.model import TimeTagStream
from ebqkd.sync import CorrelationHistogram, build_histogram, estimate_offset, fwhm, match_coincidences


def stream(times, channels=None):
    times = np.asarray(times, np.int64)
    if channels is None:
        channels = np.zeros(len(times), np.uint8)
    return TimeTagStream(times, channels)


def histogram_oracle(ta, tb, offset, width, half):
    counts = np.zeros(2 * half // width, np.int64)
    for x in ta:
        for y in tb:
            d = y - x - offset
            if -half <= d < half:
                counts[(d + half) // width] += 1
    return counts


def greedy_oracle(ta, tb, offset, window):
    used = set()
    out = []
    for i, x in enumerate(ta):
        best = None
        for j, y in enumerate(tb):
            if j in used:
                continue
            d = abs(y - x - offset)
            if 2 * d > window:
                continue
            if best is None or d < best[0]:
                best = (d, j)
        if best is not None:
            used.add(best[1])
            out.append((i, best[1]))
    return out


def random_pair_streams(rng, n_pairs, n_noise, span, jitter, offset):
    t0 = rng.integers(0, span, n_pairs)
    ta = np.concatenate([t0 + rng.normal(0, jitter, n_pairs).astype(np.int64), rng.integers(0, span, n_noise)])
    tb = np.concatenate([t0 + offset + rng.normal(0, jitter, n_pairs).astype(np.int64),
                         rng.integers(0, span, n_noise) + offset])
    ta = np.sort(np.clip(ta, 0, None))
    tb = np.sort(np.clip(tb, 0, None))
    return stream(ta), stream(tb)


def test_self_pair_central_bin():
    a = stream([1000])
    h = build_histogram(a, a, 0, 10, 50)
    assert h.counts.tolist() == [0, 0, 0, 0, 0, 1, 0, 0, 0, 0]
    assert h.centers[5] == 5


@pytest.mark.parametrize("seed", range(6))
def test_histogram_matches_all_pairs(seed):
    rng = np.random.default_rng(seed)
    offset = int(rng.integers(-50_000, 50_000))
    a, b = random_pair_streams(rng, 300, 300, 2_000_000, 400, offset)
    for trial, width, half in ((offset, 100, 5000), (0, 1000, 100_000), (offset + 333, 250, 2500)):
        h = build_histogram(a, b, trial, width, half)
        assert np.array_equal(h.counts, histogram_oracle(a.times, b.times, trial, width, half))


def test_histogram_peak_at_true_offset():
    rng = np.random.default_rng(11)
    a, b = random_pair_streams(rng, 500, 500, 10**9, 300, 77_000)
    h = build_histogram(a, b, 77_000, 1000, 20_000)
    assert h.counts[20] > 10 * np.median(h.counts + 1)


def test_uncorrelated_streams_flat():
    rng = np.random.default_rng(5)
    a = stream(np.sort(rng.integers(0, 10**10, 20_000)))
    b = stream(np.sort(rng.integers(0, 10**10, 20_000)))
    h = build_histogram(a, b, 0, 10_000, 1_000_000)
    mean = h.counts.mean()
    assert h.counts.max() <= mean + 5 * np.sqrt(mean)


def test_histogram_rejects_unsorted():
    with pytest.raises(StreamOrderError):
        build_histogram(stream([5, 1]), stream([1]), 0, 10, 50)
    with pytest.raises(ValueError):
        build_histogram(stream([1]), stream([1]), 0, 30, 50)


def test_fwhm_triangle():
    w, h = 6, 50
    peak = [2 * h * (1 - abs(j) / w) for j in range(-w, w + 1)]
    counts = np.array([0] * 20 + peak + [0] * 20, float)
    assert fwhm(CorrelationHistogram(100, 0, counts)) == pytest.approx(w * 100)


def test_fwhm_flat():
    with pytest.raises(NoPeak):
        fwhm(CorrelationHistogram(100, 0, np.full(50, 7)))


def test_offset_zero_shift():
    rng = np.random.default_rng(3)
    a, b = random_pair_streams(rng, 4000, 4000, 10**10, 300, 0)
    assert abs(estimate_offset(a, b)) <= 100


def test_sync_fails_without_correlation():
    rng = np.random.default_rng(4)
    a = stream(np.sort(rng.integers(0, 10**11, 20_000)))
    b = stream(np.sort(rng.integers(0, 10**11, 20_000)))
    with pytest.raises(SyncFailed):
        estimate_offset(a, b)
    with pytest.raises(SyncFailed):
        estimate_offset(stream([]), stream([]))


def test_offset_on_reference_session(reference_session):
    a, b, _, session = reference_session
    assert abs(estimate_offset(a, b) - session.clock_offset_ps) <= 100


def test_match_boundary_inclusive():
    pairs = match_coincidences(stream([1000]), stream([2250]), 0, 2500)
    assert len(pairs) == 1 and pairs.dt_ps[0] == 1250
    assert len(match_coincidences(stream([1000]), stream([2251]), 0, 2500)) == 0


def test_match_nearest():
    pairs = match_coincidences(stream([10_000]), stream([9_800, 10_300]), 0, 2500)
    assert len(pairs) == 1 and pairs.dt_ps[0] == -200


def test_match_tie_goes_to_earlier():
    pairs = match_coincidences(stream([10_000]), stream([9_800, 10_200]), 0, 2500)
    assert pairs.bob_times[0] == 9_800


def test_match_reference_equals_truth_when_noiseless():
    from ebqkd.photonics import LinkParams, SessionConfig, SourceParams, simulate_session

    src = SourceParams(1e3)
    a, b, truth = simulate_session(src, LinkParams(0, 0), LinkParams(0, 0), SessionConfig(10.0, seed=9))
    assert len(a) == len(b) == len(truth)
    pairs = match_coincidences(a, b, 0, 2500)
    got = set(zip(pairs.alice_idx.tolist(), pairs.bob_idx.tolist()))
    dt = b.times[truth.bob_idx] - a.times[truth.alice_idx]
    inside = 2 * np.abs(dt) <= 2500
    assert (~inside).sum() < 0.01 * len(truth)
    expected = set(zip(truth.alice_idx[inside].tolist(), truth.bob_idx[inside].tolist()))
    assert got == expected


@pytest.mark.parametrize("seed", range(10))
def test_match_equals_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    offset = int(rng.integers(-10**6, 10**6))
    a, b = random_pair_streams(rng, 150, 150, 5_000_000, 500, offset)
    window = int(rng.choice([1000, 2500, 4001]))
    pairs = match_coincidences(a, b, offset, window)
    got = list(zip(pairs.alice_idx.tolist(), pairs.bob_idx.tolist()))
    assert got == greedy_oracle(a.times.tolist(), b.times.tolist(), offset, window)


def maximum_matching_size(ta, tb, offset, window):
    rows, cols = [], []
    for i, x in enumerate(ta):
        for j, y in enumerate(tb):
            if 2 * abs(y - x - offset) <= window:
                rows.append(i)
                cols.append(j)
    if not rows:
        return 0
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ta), len(tb)))
    return int((maximum_bipartite_matching(graph, perm_type="column") >= 0).sum())


@pytest.mark.parametrize("seed", range(5))
def test_match_is_maximum_at_realistic_density(seed):
    rng = np.random.default_rng(200 + seed)
    a, b = random_pair_streams(rng, 300, 300, 10**9, 300, 0)
    pairs = match_coincidences(a, b, 0, 2500)
    assert len(pairs) == maximum_matching_size(a.times.tolist(), b.times.tolist(), 0, 2500)


def test_translation_invariance():
    rng = np.random.default_rng(8)
    a, b = random_pair_streams(rng, 400, 400, 10**8, 300, 5000)
    delta = 123_457
    h1 = build_histogram(a, b, 5000, 100, 5000)
    h2 = build_histogram(a, b.shifted(delta), 5000 + delta, 100, 5000)
    assert np.array_equal(h1.counts, h2.counts)
    m1 = match_coincidences(a, b, 5000, 2500)
    m2 = match_coincidences(a, b.shifted(delta), 5000 + delta, 2500)
    assert np.array_equal(m1.dt_ps, m2.dt_ps)
    assert fwhm(h1) == fwhm(h2)


def test_window_monotone_and_single_use():
    rng = np.random.default_rng(9)
    a, b = random_pair_streams(rng, 300, 600, 10**7, 800, 0)
    prev = 0
    for w in (200, 1000, 2500, 5000, 20_000):
        m = match_coincidences(a, b, 0, w)
        assert len(m) >= prev
        assert len(set(m.alice_idx.tolist())) == len(m) == len(set(m.bob_idx.tolist()))
        assert len(m) <= min(len(a), len(b))
        prev = len(m)
