"""Biased basis choice from a 10-bit random word.

The logic module compares a random word ``r`` against a reference ``N0`` and
selects Z when ``r < N0``, so ``P(Z) = N0 / 1024`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidProbability, InvalidRandomWord
from .model import Basis

WIDTH_BITS = 10
WORDS = 1 << WIDTH_BITS


@dataclass(frozen=True)
class BiasComparator:
    reference: int
    width_bits: int = WIDTH_BITS

    def __post_init__(self):
        if self.width_bits != WIDTH_BITS:
            raise ValueError("only 10-bit comparators are supported")
        if not 0 <= self.reference <= WORDS:
            raise InvalidProbability(f"reference {self.reference} outside [0, {WORDS}]")

    @property
    def probability_z(self) -> float:
        return self.reference / WORDS


def set_bias(q_z: float) -> BiasComparator:
    """Comparator whose realized Z probability is the nearest multiple of 2**-10 to ``q_z``."""
    if not 0.0 <= q_z <= 1.0:
        raise InvalidProbability(f"q_z={q_z} outside [0, 1]")
    return BiasComparator(int(np.floor(q_z * WORDS + 0.5)))


def draw_basis(comparator: BiasComparator, r: int) -> Basis:
    if not 0 <= r < WORDS:
        raise InvalidRandomWord(f"random word {r} outside [0, {WORDS - 1}]")
    return Basis.Z if r < comparator.reference else Basis.X


def draw_bases(comparator: BiasComparator, words: np.ndarray) -> np.ndarray:
    """Vectorised :func:`draw_basis`. Returns a boolean array, True for Z."""
    words = np.asarray(words)
    if words.size and (words.min() < 0 or words.max() >= WORDS):
        raise InvalidRandomWord("random word outside [0, 1023]")
    return words < comparator.reference


class RandomBitSource:
    """Seeded stand-in for the hardware QRNG, emitting uniform 10-bit words.

    Not safe to share between threads.
    """

    def __init__(self, seed: int | np.random.SeedSequence):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def words(self, n: int) -> np.ndarray:
        return self._rng.integers(0, WORDS, size=n, dtype=np.int64)

    def word(self) -> int:
        return int(self._rng.integers(0, WORDS))

    def bases(self, comparator: BiasComparator, n: int) -> np.ndarray:
        return draw_bases(comparator, self.words(n))
