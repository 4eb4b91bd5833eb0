"""Shared domain types and the four-state detector channel encoding.

Detector channels carry both the measurement basis and the bit::

    code  bits  basis  bit  state
    0     00    Z      0    |H>
    1     01    Z      1    |V>
    2     10    X      0    |+>
    3     11    X      1    |->

Time-tag streams are held as a pair of numpy arrays (``int64`` picosecond
timestamps and ``uint8`` channel codes) rather than lists of records, because
a single 60 s session already contains millions of detections.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import InvalidChannel, StreamOrderError


class Basis(enum.IntEnum):
    """Measurement basis. The integer values give the ordering ``Z > X``."""

    X = 0
    Z = 1

    def __str__(self):
        return self.name


def channel_encode(basis: Basis, bit: int) -> int:
    """Return the detector channel code for a (basis, bit) outcome."""
    if bit not in (0, 1):
        raise InvalidChannel(f"bit must be 0 or 1, got {bit!r}")
    return (0 if Basis(basis) is Basis.Z else 2) | int(bit)


def channel_decode(channel: int) -> tuple[Basis, int]:
    """Inverse of :func:`channel_encode`."""
    if isinstance(channel, bool) or not isinstance(channel, (int, np.integer)):
        raise InvalidChannel(f"channel must be an integer, got {channel!r}")
    if not 0 <= channel <= 3:
        raise InvalidChannel(f"channel code {channel} outside 0..3")
    return (Basis.Z if channel < 2 else Basis.X), int(channel) & 1


def channel_basis(channels: np.ndarray) -> np.ndarray:
    """Vectorised basis lookup: 1 for Z, 0 for X (matches ``Basis`` values)."""
    return (np.asarray(channels) < 2).astype(np.uint8)


def channel_bit(channels: np.ndarray) -> np.ndarray:
    return (np.asarray(channels) & 1).astype(np.uint8)


def encode_channels(basis_is_z: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Vectorised :func:`channel_encode`; ``basis_is_z`` is boolean."""
    basis_is_z = np.asarray(basis_is_z, dtype=bool)
    return (np.where(basis_is_z, 0, 2) | np.asarray(bits, dtype=np.uint8)).astype(np.uint8)


class TimeTagRecord(NamedTuple):
    time_ps: int
    channel: int


class SiftedBitPair(NamedTuple):
    basis: Basis
    alice_bit: int
    bob_bit: int
    time_ps: int


@dataclass(frozen=True)
class TimeTagStream:
    """Time-ordered detection events from one receiver."""

    times: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.int64)
        channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if times.shape != channels.shape or times.ndim != 1:
            raise ValueError("times and channels must be 1-d arrays of equal length")
        times.flags.writeable = False
        channels.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "channels", channels)

    @classmethod
    def empty(cls) -> "TimeTagStream":
        return cls(np.empty(0, np.int64), np.empty(0, np.uint8))

    @classmethod
    def from_records(cls, records) -> "TimeTagStream":
        records = list(records)
        if not records:
            return cls.empty()
        t, c = zip(*records)
        return cls(np.array(t, np.int64), np.array(c, np.uint8))

    def __len__(self):
        return len(self.times)

    def __iter__(self) -> Iterator[TimeTagRecord]:
        for t, c in zip(self.times.tolist(), self.channels.tolist()):
            yield TimeTagRecord(t, c)

    def __getitem__(self, i) -> TimeTagRecord:
        return TimeTagRecord(int(self.times[i]), int(self.channels[i]))

    def shifted(self, delta_ps: int) -> "TimeTagStream":
        return TimeTagStream(self.times + np.int64(delta_ps), self.channels)

    def validate(self) -> "TimeTagStream":
        """Check ordering, non-negative times and channel range; return self."""
        validate_stream(self.times, self.channels)
        return self


def validate_stream(times: np.ndarray, channels: np.ndarray | None = None) -> None:
    if len(times) and times[0] < 0:
        raise StreamOrderError("negative timestamp")
    if len(times) > 1:
        bad = np.flatnonzero(np.diff(times) < 0)
        if bad.size:
            raise StreamOrderError(f"stream not sorted at index {int(bad[0]) + 1}")
    if channels is not None and len(channels) and int(channels.max()) > 3:
        raise InvalidChannel(f"channel code {int(channels.max())} outside 0..3")
