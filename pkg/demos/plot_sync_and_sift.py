"""
Simulate, synchronise and sift
==============================

Two receivers with independent clocks record a minute of entangled pairs.
The clock offset is recovered from the cross-correlation of the tag streams
alone, then coincidences are matched and sifted.
"""

from ebqkd import (
    LinkParams, SessionConfig, SourceParams, build_histogram, compute_error_rates, estimate_offset, fwhm,
    match_coincidences, sift, simulate_session,
)

source = SourceParams(pair_rate_hz=1e7, polarization_error_prob=0.065)
alice, bob = LinkParams(29.0, 100.0), LinkParams(21.0, 100.0)
session = SessionConfig(duration_s=60.0, bias_z=0.8, seed=3, clock_offset_ps=-431_337_000)

a, b, truth = simulate_session(source, alice, bob, session)
print("singles: %d / %d, true pairs: %d" % (len(a), len(b), len(truth)))

offset = estimate_offset(a, b)
print("offset %d ps (injected %d)" % (offset, session.clock_offset_ps))

# the coincidence peak is the convolution of both detectors' jitter
h = build_histogram(a, b, offset, 100, 10_000)
print("peak FWHM %.0f ps" % fwhm(h))

pairs = match_coincidences(a, b, offset, 2500)
res = sift(pairs)
rates = compute_error_rates(res)
print("coincidences %d, sifted X %d, Z %d" % (res.raw_count, res.n_x, res.n_z))
print("QBER X %.3f  Z %.3f" % (rates.e_bx, rates.e_bz))
