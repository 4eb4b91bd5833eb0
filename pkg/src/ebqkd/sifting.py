"""Basis sifting of matched coincidences and per-basis bit error rates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import EmptyBasis, InvalidChannel
from .model import Basis, SiftedBitPair, channel_basis, channel_bit
from .sync import Coincidences


@dataclass(frozen=True)
class SiftResult:
    """Sifted bits per basis. ``bits_*`` have shape ``(n, 2)``: Alice's, Bob's bit."""

    raw_count: int
    bits_x: np.ndarray
    bits_z: np.ndarray
    times_x: np.ndarray
    times_z: np.ndarray

    @property
    def n_x(self) -> int:
        return len(self.bits_x)

    @property
    def n_z(self) -> int:
        return len(self.bits_z)

    @property
    def sift_fraction(self) -> float:
        return (self.n_x + self.n_z) / self.raw_count if self.raw_count else float("nan")

    def pairs(self, basis: Basis) -> Iterator[SiftedBitPair]:
        bits, times = (self.bits_x, self.times_x) if basis is Basis.X else (self.bits_z, self.times_z)
        for (a, b), t in zip(bits.tolist(), times.tolist()):
            yield SiftedBitPair(basis, a, b, t)

    def summary(self) -> dict:
        return {"raw_count": self.raw_count, "n_x": self.n_x, "n_z": self.n_z}


def sift(pairs: Coincidences) -> SiftResult:
    """Keep coincidences where both parties measured in the same basis.

    Output within each basis is ordered by Alice's timestamp.
    """
    if not isinstance(pairs, Coincidences):
        pairs = Coincidences.from_pairs(pairs)
    order = np.argsort(pairs.alice_times, kind="stable")
    ta = pairs.alice_times[order]
    ca = pairs.alice_channels[order]
    cb = pairs.bob_channels[order]
    for ch in (ca, cb):
        if len(ch) and int(ch.max()) > 3:
            raise InvalidChannel(f"channel code {int(ch.max())} outside 0..3")
    za, zb = channel_basis(ca), channel_basis(cb)
    bits = np.stack([channel_bit(ca), channel_bit(cb)], axis=1)
    keep_z = (za == 1) & (zb == 1)
    keep_x = (za == 0) & (zb == 0)
    return SiftResult(
        raw_count=len(ta),
        bits_x=bits[keep_x],
        bits_z=bits[keep_z],
        times_x=ta[keep_x],
        times_z=ta[keep_z],
    )


@dataclass(frozen=True)
class ErrorRates:
    e_bx: float
    e_bz: float
    errors_x: int
    errors_z: int


def basis_error_rate(bits: np.ndarray, basis: Basis) -> tuple[float, int]:
    if len(bits) == 0:
        raise EmptyBasis(basis)
    errors = int(np.count_nonzero(bits[:, 0] != bits[:, 1]))
    return errors / len(bits), errors


def compute_error_rates(result: SiftResult) -> ErrorRates:
    """Fraction of disagreeing sifted bits per basis.

    Raises:
        EmptyBasis: a basis has no sifted bits.
    """
    e_x, k_x = basis_error_rate(result.bits_x, Basis.X)
    e_z, k_z = basis_error_rate(result.bits_z, Basis.Z)
    return ErrorRates(e_x, e_z, k_x, k_z)
