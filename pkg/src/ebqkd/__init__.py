"""Simulation and finite-key analysis of entanglement-based QKD with biased basis choice."""
from .basis import BiasComparator, RandomBitSource, draw_basis, draw_bases, set_bias
from .bias import RateModel, bias_curve, expected_counts, improvement, key_length_vs_bias, optimize_bias
from .finite_key import (
    FiniteKeyInput, FiniteKeyResult, binary_entropy, key_length, key_rate, p_theta, solve_theta, xi,
)
from .model import Basis, TimeTagRecord, TimeTagStream, channel_decode, channel_encode
from .photonics import LinkParams, SessionConfig, SourceParams, analytic_expectations, simulate_session
from .sifting import compute_error_rates, sift
from .sync import build_histogram, estimate_offset, fwhm, match_coincidences

__version__ = "0.1.0"
