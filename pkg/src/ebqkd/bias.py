"""Key length as a function of the basis bias, and its optimisation.

Both parties pick Z with probability ``q``, so out of ``N`` raw coincidences
the expected sifted counts are ``N (1 - q)**2`` in X and ``N q**2`` in Z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .basis import WORDS
from .errors import DomainError, NoSecureBias
from .finite_key import DEFAULT_EPS_PER_BASIS, FiniteKeyInput, key_length

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RateModel:
    raw_count: int
    e_bx: float
    e_bz: float
    f_x: float = 1.1
    f_z: float = 1.1
    eps_per_basis: float = DEFAULT_EPS_PER_BASIS
    asymptotic: bool = False

    def __post_init__(self):
        if self.raw_count <= 0:
            raise DomainError("raw_count must be positive")

    def mirrored(self) -> "RateModel":
        """Same model with the roles of X and Z exchanged."""
        return replace(self, e_bx=self.e_bz, e_bz=self.e_bx, f_x=self.f_z, f_z=self.f_x)


@dataclass(frozen=True)
class BiasCurvePoint:
    q: float
    n_x: int
    n_z: int
    final_key_len: int
    raw_key: float
    flags: tuple[str, ...] = field(default=())


@dataclass(frozen=True)
class BiasOptimum:
    q_opt: float
    final_key_len: int
    grid_q: float
    grid_key_len: int
    flags: tuple[str, ...] = field(default=())


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def expected_counts(raw_count: int, q: float) -> tuple[int, int]:
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q={q} outside [0, 1]")
    return _round_half_up(raw_count * (1.0 - q) ** 2), _round_half_up(raw_count * q * q)


def key_length_vs_bias(model: RateModel, q: float) -> BiasCurvePoint:
    n_x, n_z = expected_counts(model.raw_count, q)
    if n_x + n_z == 0 or (not model.asymptotic and (n_x == 0 or n_z == 0)):
        return BiasCurvePoint(q, n_x, n_z, 0, 0.0, ("empty_basis",))
    res = key_length(
        FiniteKeyInput(n_x, n_z, model.e_bx, model.e_bz, model.f_x, model.f_z, model.eps_per_basis),
        asymptotic=model.asymptotic,
    )
    return BiasCurvePoint(q, n_x, n_z, res.final_key_len, res.raw_key, res.flags)


def bias_curve(model: RateModel, q_range=(0.0, 1.0)) -> list[BiasCurvePoint]:
    """Key length on every hardware-realizable bias ``k / 1024`` within ``q_range``."""
    lo = math.ceil(q_range[0] * WORDS - 1e-9)
    hi = math.floor(q_range[1] * WORDS + 1e-9)
    return [key_length_vs_bias(model, k / WORDS) for k in range(lo, hi + 1)]


def _golden_max(f, a, b, tol=1e-6):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_bias(model: RateModel, q_range=(0.5, 1.0)) -> BiasOptimum:
    """Bias maximizing the final key length.

    ``q_range`` defaults to Z-majority biases. A grid over the comparator's
    1/1024 steps is refined by golden-section search between the neighbours
    of the best grid point; the refined value is kept only if it does not
    lose key, and is flagged ``below_hardware_resolution``.

    Raises:
        NoSecureBias: every bias in range yields zero key.
    """
    curve = bias_curve(model, q_range)
    # max() keeps the first maximum, i.e. ties go to the smaller q
    best_i = max(range(len(curve)), key=lambda i: (curve[i].final_key_len, curve[i].raw_key, -i))
    best = curve[best_i]
    if best.final_key_len <= 0:
        raise NoSecureBias(f"no bias in {q_range} yields a positive key")
    flags = []
    if best_i in (0, len(curve) - 1) and best.q in (0.0, 1.0):
        flags.append("boundary")
    a = curve[max(best_i - 1, 0)].q
    b = curve[min(best_i + 1, len(curve) - 1)].q
    q_opt, key_opt = best.q, best.final_key_len
    if b > a:
        q_ref, _ = _golden_max(lambda q: key_length_vs_bias(model, q).raw_key, a, b)
        ref = key_length_vs_bias(model, q_ref)
        if ref.final_key_len > best.final_key_len:
            q_opt, key_opt = q_ref, ref.final_key_len
            flags.append("below_hardware_resolution")
    return BiasOptimum(q_opt, key_opt, best.q, best.final_key_len, tuple(flags))


def improvement(model: RateModel, q: float) -> float:
    """Percent gain in final key length over the unbiased (q = 0.5) case."""
    base = key_length_vs_bias(model, 0.5).final_key_len
    if base <= 0:
        raise NoSecureBias("unbiased case yields no key; improvement undefined")
    return 100.0 * (key_length_vs_bias(model, q).final_key_len / base - 1.0)
