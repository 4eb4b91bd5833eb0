import math

import numpy as np
import pytest

from ebqkd.errors import ConfigError
from ebqkd.photonics import (
    DEFAULT_JITTER_SIGMA_PS, FWHM_PER_SIGMA, LinkParams, SessionConfig, SourceParams, analytic_expectations,
    simulate_session,
)

from conftest import LINK_A, LINK_B, REFERENCE_SOURCE


def test_total_loss_gives_empty_streams():
    blocked = LinkParams(math.inf, 0.0)
    a, b, truth = simulate_session(SourceParams(), blocked, blocked, SessionConfig(1.0))
    assert len(a) == len(b) == len(truth) == 0


def test_expectations_lossless():
    r = analytic_expectations(SourceParams(1000.0), LinkParams(0, 0), LinkParams(0, 0))
    assert r.singles_a_cps == r.singles_b_cps == r.coincidence_cps == 1000.0


def test_expectations_reference():
    r = analytic_expectations(SourceParams(), LinkParams(29, 0), LinkParams(21, 0))
    assert r.coincidence_cps == pytest.approx(100.0, rel=1e-12)


def test_accidental_product_formula():
    src = SourceParams(1e-9)
    r = analytic_expectations(src, LinkParams(0, 25.0), LinkParams(0, 25.0), window_ps=2500)
    assert r.singles_a_cps == pytest.approx(100.0)
    assert r.accidental_cps == pytest.approx(2.5e-5)


def test_true_coincidences_in_poisson_bounds(reference_session):
    _, _, truth, session = reference_session
    lam = 1e7 * 10**-2.9 * 10**-2.1 * session.duration_s
    assert lam == pytest.approx(6000)
    assert abs(len(truth) - lam) <= 3 * math.sqrt(lam)


def test_noiseless_pairs_agree():
    src = SourceParams(2e6, 0.0)
    a, b, truth = simulate_session(src, LinkParams(10, 0), LinkParams(10, 0), SessionConfig(1.0, 0.7, seed=3))
    same = truth.same_basis
    assert same.sum() > 1000
    assert not truth.error[same].any()
    ca, cb = a.channels[truth.alice_idx], b.channels[truth.bob_idx]
    assert np.array_equal(ca[same], cb[same])


def test_streams_sorted_and_deterministic(reference_session):
    a, b, truth, session = reference_session
    a.validate()
    b.validate()
    a2, b2, truth2 = simulate_session(REFERENCE_SOURCE, LINK_A, LINK_B, session)
    assert np.array_equal(a.times, a2.times) and np.array_equal(b.channels, b2.channels)
    assert np.array_equal(truth.bob_idx, truth2.bob_idx)


def test_truth_indices_consistent(reference_session):
    a, b, truth, session = reference_session
    dt = b.times[truth.bob_idx] - a.times[truth.alice_idx] - session.clock_offset_ps
    assert np.abs(dt).max() < 10 * math.sqrt(2) * DEFAULT_JITTER_SIGMA_PS
    assert not truth.background_a[truth.alice_idx].any()


def test_same_basis_error_frequency(reference_session):
    _, _, truth, _ = reference_session
    n = int(truth.same_basis.sum())
    k = int(truth.error[truth.same_basis].sum())
    p = 0.065
    assert abs(k / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_dt_fwhm_matches_jitter(reference_session):
    a, b, truth, session = reference_session
    dt = b.times[truth.bob_idx] - a.times[truth.alice_idx] - session.clock_offset_ps
    counts, edges = np.histogram(dt, bins=np.arange(-3000, 3001, 100))
    half = counts.max() / 2
    above = np.flatnonzero(counts >= half)
    width = (above[-1] - above[0] + 1) * 100
    expected = FWHM_PER_SIGMA * math.sqrt(2) * DEFAULT_JITTER_SIGMA_PS
    assert expected == pytest.approx(1000.0)
    assert abs(width - expected) <= 0.15 * expected


def test_negative_offset_drops_early_tags():
    a, b, truth = simulate_session(SourceParams(1e5), LinkParams(0, 0), LinkParams(0, 0),
                                   SessionConfig(0.01, seed=1, clock_offset_ps=-5_000_000_000))
    assert b.times.min() >= 0
    assert len(b) < len(a)


@pytest.mark.parametrize("kwargs", [dict(duration_s=0.0), dict(duration_s=1.0, bias_z=1.5),
                                    dict(duration_s=-1.0), dict(duration_s=1.0, seed=-1)])
def test_session_validation(kwargs):
    with pytest.raises(ConfigError):
        SessionConfig(**kwargs)


def test_source_validation():
    with pytest.raises(ConfigError):
        SourceParams(0.0)
    with pytest.raises(ConfigError):
        SourceParams(1.0, 0.6)
    with pytest.raises(ConfigError):
        LinkParams(-1.0)


def test_background_counts_are_poisson_dispersed():
    # one count per seed, so the spread across seeds must match sqrt(lambda)
    source = SourceParams(1e4)
    link = LinkParams(30.0, 100.0)
    lam = link.background_cps * 1.0
    z = []
    for seed in range(200):
        _, b, truth = simulate_session(source, link, link, SessionConfig(1.0, seed=seed))
        z.append((truth.background_b.sum() - lam) / math.sqrt(lam))
    assert abs(np.mean(z)) < 3 / math.sqrt(200)
    assert 0.85 < np.std(z) < 1.15
