"""Time-tag simulation of an entangled-pair source feeding two lossy links.

Only detected photons are generated. Poisson thinning splits the pair
emission process into three independent processes: both photons detected,
only Alice's, only Bob's. Each receiver additionally sees background counts
spread uniformly over its four detector channels.

Bob's timestamps are shifted by ``SessionConfig.clock_offset_ps``, the
quantity the synchronisation stage has to recover; detections that would
land before time zero are dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import RandomBitSource, set_bias
from .errors import ConfigError
from .model import TimeTagStream, encode_channels

PS_PER_S = 10**12
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
# per-photon sigma giving a 1 ns FWHM for the Bob-minus-Alice time difference
DEFAULT_JITTER_SIGMA_PS = 1000.0 / (FWHM_PER_SIGMA * math.sqrt(2.0))
N_CHANNELS = 4


@dataclass(frozen=True)
class SourceParams:
    pair_rate_hz: float = 1.0e7
    polarization_error_prob: float = 0.0
    jitter_sigma_ps: float = DEFAULT_JITTER_SIGMA_PS

    def __post_init__(self):
        if not self.pair_rate_hz > 0:
            raise ConfigError("pair_rate_hz must be positive")
        if not 0.0 <= self.polarization_error_prob <= 0.5:
            raise ConfigError("polarization_error_prob outside [0, 0.5]")
        if not self.jitter_sigma_ps >= 0:
            raise ConfigError("jitter_sigma_ps must be non-negative")


@dataclass(frozen=True)
class LinkParams:
    loss_db: float
    background_cps_per_detector: float = 100.0

    def __post_init__(self):
        if not self.loss_db >= 0:
            raise ConfigError("loss_db must be non-negative")
        if not self.background_cps_per_detector >= 0 or math.isinf(self.background_cps_per_detector):
            raise ConfigError("background_cps_per_detector must be finite and non-negative")

    @property
    def transmittance(self) -> float:
        return 0.0 if math.isinf(self.loss_db) else 10.0 ** (-self.loss_db / 10.0)

    @property
    def background_cps(self) -> float:
        """Background summed over the receiver's four channels."""
        return N_CHANNELS * self.background_cps_per_detector


@dataclass(frozen=True)
class SessionConfig:
    duration_s: float
    bias_z: float = 0.5
    seed: int = 0
    clock_offset_ps: int = 0

    def __post_init__(self):
        if not self.duration_s > 0 or math.isinf(self.duration_s):
            raise ConfigError("duration_s must be positive and finite")
        if not 0.0 <= self.bias_z <= 1.0:
            raise ConfigError("bias_z outside [0, 1]")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class GroundTruth:
    """Which tags come from the same photon pair.

    ``alice_idx``/``bob_idx`` index the emitted streams; ``error`` marks pairs
    whose bits disagree and ``same_basis`` those measured in one basis. The
    ``background_a``/``background_b`` masks flag background events per stream.
    """

    alice_idx: np.ndarray
    bob_idx: np.ndarray
    error: np.ndarray
    same_basis: np.ndarray
    background_a: np.ndarray
    background_b: np.ndarray

    def __len__(self):
        return len(self.alice_idx)


@dataclass(frozen=True)
class ExpectedRates:
    singles_a_cps: float
    singles_b_cps: float
    coincidence_cps: float
    accidental_cps: float
    background_a_cps: float
    background_b_cps: float


def analytic_expectations(
    source: SourceParams, link_a: LinkParams, link_b: LinkParams, session: SessionConfig | None = None,
    window_ps: int = 2500,
) -> ExpectedRates:
    """Expected singles, true-coincidence and accidental rates (per second)."""
    eta_a, eta_b = link_a.transmittance, link_b.transmittance
    s_a = source.pair_rate_hz * eta_a + link_a.background_cps
    s_b = source.pair_rate_hz * eta_b + link_b.background_cps
    return ExpectedRates(
        singles_a_cps=s_a,
        singles_b_cps=s_b,
        coincidence_cps=source.pair_rate_hz * eta_a * eta_b,
        accidental_cps=s_a * s_b * window_ps / PS_PER_S,
        background_a_cps=link_a.background_cps,
        background_b_cps=link_b.background_cps,
    )


def _uniform_times(rng, rate, duration_ps):
    n = rng.poisson(rate * duration_ps / PS_PER_S)
    return rng.uniform(0.0, duration_ps, size=n)


def simulate_session(
    source: SourceParams, link_a: LinkParams, link_b: LinkParams, session: SessionConfig
) -> tuple[TimeTagStream, TimeTagStream, GroundTruth]:
    """Generate Alice's and Bob's time-tag streams with ground truth.

    Deterministic for fixed arguments.
    """
    seq = np.random.SeedSequence(session.seed)
    rng_times, rng_bits, qrng_a_seed, qrng_b_seed = seq.spawn(4)
    rng = np.random.default_rng(rng_times)
    bit_rng = np.random.default_rng(rng_bits)
    comparator = set_bias(session.bias_z)
    qrng_a = RandomBitSource(qrng_a_seed)
    qrng_b = RandomBitSource(qrng_b_seed)

    duration_ps = session.duration_s * PS_PER_S
    eta_a, eta_b = link_a.transmittance, link_b.transmittance
    rate = source.pair_rate_hz
    t_pair = _uniform_times(rng, rate * eta_a * eta_b, duration_ps)
    t_a_only = _uniform_times(rng, rate * eta_a * (1.0 - eta_b), duration_ps)
    t_b_only = _uniform_times(rng, rate * (1.0 - eta_a) * eta_b, duration_ps)
    t_bg_a = _uniform_times(rng, link_a.background_cps, duration_ps)
    t_bg_b = _uniform_times(rng, link_b.background_cps, duration_ps)
    n_pair = len(t_pair)

    z_a = qrng_a.bases(comparator, n_pair + len(t_a_only))
    z_b = qrng_b.bases(comparator, n_pair + len(t_b_only))
    bits_a = bit_rng.integers(0, 2, size=len(z_a), dtype=np.uint8)
    bits_b = bit_rng.integers(0, 2, size=len(z_b), dtype=np.uint8)
    flips = (bit_rng.random(n_pair) < source.polarization_error_prob).astype(np.uint8)
    same = z_a[:n_pair] == z_b[:n_pair]
    bits_b[:n_pair] = np.where(same, bits_a[:n_pair] ^ flips, bits_b[:n_pair])

    ch_a = np.concatenate([
        encode_channels(z_a, bits_a),
        bit_rng.integers(0, N_CHANNELS, size=len(t_bg_a), dtype=np.uint8),
    ])
    ch_b = np.concatenate([
        encode_channels(z_b, bits_b),
        bit_rng.integers(0, N_CHANNELS, size=len(t_bg_b), dtype=np.uint8),
    ])
    sigma = source.jitter_sigma_ps
    raw_a = np.concatenate([t_pair, t_a_only])
    raw_b = np.concatenate([t_pair, t_b_only])
    raw_a = raw_a + rng.normal(0.0, sigma, size=len(raw_a)) if sigma > 0 else raw_a
    raw_b = raw_b + rng.normal(0.0, sigma, size=len(raw_b)) if sigma > 0 else raw_b
    times_a = np.rint(np.concatenate([raw_a, t_bg_a])).astype(np.int64)
    times_b = np.rint(np.concatenate([raw_b, t_bg_b])).astype(np.int64) + np.int64(session.clock_offset_ps)

    # event origin: pair id for the first n_pair entries, -1 otherwise
    origin_a = np.full(len(times_a), -1, np.int64)
    origin_a[:n_pair] = np.arange(n_pair)
    origin_b = np.full(len(times_b), -1, np.int64)
    origin_b[:n_pair] = np.arange(n_pair)
    bg_a = np.zeros(len(times_a), bool)
    bg_a[len(raw_a):] = True
    bg_b = np.zeros(len(times_b), bool)
    bg_b[len(raw_b):] = True

    def finish(times, channels, origin, bg):
        keep = times >= 0
        times, channels, origin, bg = times[keep], channels[keep], origin[keep], bg[keep]
        order = np.argsort(times, kind="stable")
        return TimeTagStream(times[order], channels[order]), origin[order], bg[order]

    stream_a, origin_a, bg_a = finish(times_a, ch_a, origin_a, bg_a)
    stream_b, origin_b, bg_b = finish(times_b, ch_b, origin_b, bg_b)

    pos_a = np.full(n_pair, -1, np.int64)
    pos_b = np.full(n_pair, -1, np.int64)
    idx = np.flatnonzero(origin_a >= 0)
    pos_a[origin_a[idx]] = idx
    idx = np.flatnonzero(origin_b >= 0)
    pos_b[origin_b[idx]] = idx
    both = (pos_a >= 0) & (pos_b >= 0)
    # ground truth ordered by Alice's tag
    order = np.argsort(pos_a[both], kind="stable")
    alice_idx = pos_a[both][order]
    bob_idx = pos_b[both][order]
    truth = GroundTruth(
        alice_idx=alice_idx,
        bob_idx=bob_idx,
        error=(stream_a.channels[alice_idx] & 1) != (stream_b.channels[bob_idx] & 1),
        same_basis=(stream_a.channels[alice_idx] < 2) == (stream_b.channels[bob_idx] < 2),
        background_a=bg_a,
        background_b=bg_b,
    )
    return stream_a, stream_b, truth
