"""Finite-key secure key length for biased-basis BBM92.

The sifted key consists of ``n_x`` bits measured in X and ``n_z`` in Z. Phase
errors of each basis are estimated from the bit errors of the other one, plus
a statistical deviation ``theta`` that is chosen so that the probability of
underestimation stays below a per-basis failure budget::

    P(theta) < sqrt(n) / sqrt(n_x n_z e (1 - e)) * 2 ** (-n * xi(theta))
    xi(theta) = H(e + theta - q theta) - q H(e) - (1 - q) H(e + theta)

where ``q`` is the fraction of sifted bits in the sampled basis. The key
length is then ``n_sift - k_ec - k_pr`` with

    k_ec = n_x f_x H(e_bx) + n_z f_z H(e_bz)
    k_pr = n_x H(e_bz + theta_z) + n_z H(e_bx + theta_x)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DegenerateErrorRate, DomainError, EmptyBasis, InsecureRegime
from .model import Basis

DEFAULT_EPS_PER_BASIS = 3e-3
THETA_TOL = 1e-10


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits, with H(0) = H(1) = 0."""
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise DomainError(f"binary entropy argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def xi(e_b: float, q: float, theta: float) -> float:
    """Exponent of the phase-error fluctuation bound.

    ``q`` is the fraction of sifted bits belonging to the sampled basis.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"sample fraction {q} outside [0, 1]")
    if theta < 0:
        raise DomainError(f"theta must be non-negative, got {theta}")
    if theta == 0.0:
        return 0.0
    return (
        binary_entropy(e_b + theta - q * theta)
        - q * binary_entropy(e_b)
        - (1.0 - q) * binary_entropy(e_b + theta)
    )


def _sample_fraction(n_x: int, n_z: int, sample: Basis) -> float:
    return (n_x if Basis(sample) is Basis.X else n_z) / (n_x + n_z)


def log_p_theta(n_x: int, n_z: int, e_b: float, theta: float, sample: Basis = Basis.X) -> float:
    """Natural log of the uncapped bound; see :func:`p_theta`."""
    if n_x <= 0 or n_z <= 0:
        raise EmptyBasis(Basis.X if n_x <= 0 else Basis.Z)
    if e_b <= 0.0 or e_b >= 1.0:
        raise DegenerateErrorRate(f"error rate {e_b} makes the bound singular")
    n = n_x + n_z
    log_prefactor = 0.5 * (math.log(n) - math.log(n_x) - math.log(n_z) - math.log(e_b * (1.0 - e_b)))
    return log_prefactor - n * xi(e_b, _sample_fraction(n_x, n_z, sample), theta) * math.log(2.0)


def p_theta(n_x: int, n_z: int, e_b: float, theta: float, sample: Basis = Basis.X) -> float:
    """Probability that the unsampled basis' phase error exceeds ``e_b + theta``.

    ``sample`` names the basis whose bit error rate ``e_b`` was measured;
    Z-sample calls mirror the X-sample bound. The result is capped at 1.
    """
    return math.exp(min(0.0, log_p_theta(n_x, n_z, e_b, theta, sample)))


def solve_theta(
    n_x: int,
    n_z: int,
    e_b: float,
    eps_target: float,
    sample: Basis = Basis.X,
    tol: float = THETA_TOL,
) -> float:
    """Smallest deviation with ``p_theta <= eps_target``, found by bisection.

    Raises:
        InsecureRegime: no deviation below ``0.5 - e_b`` meets the target.
    """
    if not 0.0 < eps_target < 1.0:
        raise DomainError(f"eps_target {eps_target} outside (0, 1)")
    log_eps = math.log(eps_target)

    def excess(theta):
        return log_p_theta(n_x, n_z, e_b, theta, sample) - log_eps

    if excess(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, 0.5 - e_b
    if hi <= 0.0 or excess(hi) > 0.0:
        raise InsecureRegime(
            f"no theta in [0, {max(hi, 0.0):.4g}] reaches failure probability {eps_target:g} "
            f"(n_x={n_x}, n_z={n_z}, e_b={e_b:.4g}, sample={Basis(sample)})"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class FiniteKeyInput:
    n_x: int
    n_z: int
    e_bx: float
    e_bz: float
    f_x: float = 1.1
    f_z: float = 1.1
    eps_per_basis: float = DEFAULT_EPS_PER_BASIS

    def __post_init__(self):
        if self.n_x < 0 or self.n_z < 0 or self.n_x + self.n_z == 0:
            raise DomainError("sifted counts must be non-negative with a positive total")
        for name in ("e_bx", "e_bz"):
            e = getattr(self, name)
            if not 0.0 <= e <= 1.0:
                raise DomainError(f"{name}={e} outside [0, 1]")
        if self.f_x < 1.0 or self.f_z < 1.0:
            raise DomainError("error-correction inefficiency must be >= 1")
        if not 0.0 < self.eps_per_basis < 1.0:
            raise DomainError("eps_per_basis outside (0, 1)")


@dataclass(frozen=True)
class FiniteKeyResult:
    theta_x: float
    theta_z: float
    k_ec: float
    k_pr: float
    n_sift: int
    final_key_len: int
    eps_ph: float
    raw_key: float
    flags: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "theta_x": self.theta_x,
            "theta_z": self.theta_z,
            "k_ec": self.k_ec,
            "k_pr": self.k_pr,
            "n_sift": self.n_sift,
            "final_key_len": self.final_key_len,
            "eps_ph": self.eps_ph,
            "flags": list(self.flags),
        }


def _deviation(n_x, n_z, e_b, eps, sample, flags, tag):
    """theta and achieved failure probability for one sampled basis."""
    if e_b >= 0.5:
        flags.append(f"insecure_{tag}")
        return 0.5 - min(e_b, 0.5), 0.0
    e_eff = e_b
    floor = 1.0 / (n_x + n_z)
    if e_b < floor:
        e_eff = floor
        flags.append(f"clamped_e_b{tag}")
    try:
        theta = solve_theta(n_x, n_z, e_eff, eps, sample)
    except InsecureRegime:
        flags.append(f"insecure_{tag}")
        return 0.5 - e_b, 0.0
    if e_b + theta >= 0.5:
        flags.append(f"insecure_{tag}")
    return theta, p_theta(n_x, n_z, e_eff, theta, sample)


def key_length(inp: FiniteKeyInput, asymptotic: bool = False) -> FiniteKeyResult:
    """Secure key length after error correction and privacy amplification.

    With ``asymptotic=True`` both deviations are zero and either basis may be
    empty. Otherwise a basis whose deviation cannot meet the failure budget
    has its privacy-amplification entropy capped at 1 and is flagged
    ``insecure_x`` / ``insecure_z``; the key is clamped at zero.

    Raises:
        EmptyBasis: a basis has no sifted bits in finite-key mode.
    """
    flags: list[str] = []
    n_x, n_z = int(inp.n_x), int(inp.n_z)
    if asymptotic:
        flags.append("asymptotic")
        theta_x = theta_z = 0.0
        eps_ph = 0.0
    else:
        if n_x == 0:
            raise EmptyBasis(Basis.X)
        if n_z == 0:
            raise EmptyBasis(Basis.Z)
        theta_x, p_x = _deviation(n_x, n_z, inp.e_bx, inp.eps_per_basis, Basis.X, flags, "x")
        theta_z, p_z = _deviation(n_x, n_z, inp.e_bz, inp.eps_per_basis, Basis.Z, flags, "z")
        eps_ph = p_x + p_z
    h = binary_entropy
    k_ec = n_x * inp.f_x * h(inp.e_bx) + n_z * inp.f_z * h(inp.e_bz)
    k_pr = n_x * h(min(inp.e_bz + theta_z, 0.5)) + n_z * h(min(inp.e_bx + theta_x, 0.5))
    n_sift = n_x + n_z
    raw = n_sift - k_ec - k_pr
    final = max(0, math.floor(raw))
    if final == 0:
        flags.append("no_key")
    return FiniteKeyResult(theta_x, theta_z, k_ec, k_pr, n_sift, final, eps_ph, raw, tuple(flags))


def key_rate(result: FiniteKeyResult, raw_count: int) -> float:
    """Final key bits per raw (matched, unsifted) coincidence."""
    if raw_count <= 0:
        raise DomainError("raw_count must be positive")
    return result.final_key_len / raw_count


def key_rate_per_second(result: FiniteKeyResult, duration_s: float) -> float:
    if duration_s <= 0:
        raise DomainError("duration must be positive")
    return result.final_key_len / duration_s
