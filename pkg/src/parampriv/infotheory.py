"""Leakage bounds: Fano's lower bound and the data-processing certificate.

Everything is in nats.  The ``-1`` in Fano's bound is taken in nats as well,
which is the convention used throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .model_core import ParameterPrior, prior_entropy
from .randomizer import RandomizerPolicy, mutual_information

__all__ = [
    "PrivacyReport",
    "fano_bound",
    "fano_bound_raw",
    "data_processing_bound",
    "privacy_report",
    "nats_to_bits",
    "bits_to_nats",
]

LN2 = math.log(2.0)


def nats_to_bits(x: float) -> float:
    return x / LN2


def bits_to_nats(x: float) -> float:
    return x * LN2


def fano_bound_raw(H: float, I0: float, alphabet_size: int) -> float:
    """``(H - I0 - 1) / ln m``, possibly negative."""
    if alphabet_size < 2:
        raise ValueError("Fano's bound needs an alphabet of at least two values")
    if H < 0 or I0 < 0:
        raise ValueError("entropy and leakage must be non-negative")
    return (H - I0 - 1.0) / math.log(alphabet_size)


def fano_bound(H: float, I0: float, alphabet_size: int) -> float:
    """Lower bound on any estimator's error probability, clamped to ``[0, 1]``."""
    return min(1.0, max(0.0, fano_bound_raw(H, I0, alphabet_size)))


def data_processing_bound(prior, policy) -> float:
    """Certified upper bound on the leakage of the whole disguised record.

    The disguised record depends on the private parameter only through the
    pseudo parameter, so its leakage cannot exceed ``I(true; pseudo)``.
    """
    return mutual_information(prior, policy)


@dataclass(frozen=True)
class PrivacyReport:
    H_theta: float
    I_theta_thetatilde: float
    fano_lower_bound: float
    fano_lower_bound_raw: float
    leakage_budget: float | None
    alphabet_size: int

    def to_json(self) -> dict:
        out = asdict(self)
        out["H_theta_bits"] = nats_to_bits(self.H_theta)
        out["I_theta_thetatilde_bits"] = nats_to_bits(self.I_theta_thetatilde)
        return out


def privacy_report(prior: ParameterPrior, policy: RandomizerPolicy,
                   budget: float | None = None) -> PrivacyReport:
    """Entropy, leakage bound and Fano bound for a prior/policy pair.

    With a ``budget`` the Fano bound is evaluated at the budget (the
    guarantee the design promises); otherwise at the achieved leakage.
    """
    H = prior_entropy(prior)
    mi = data_processing_bound(prior, policy)
    m = prior.size
    at = mi if budget is None else budget
    raw = fano_bound_raw(H, at, m) if m >= 2 else float("nan")
    clamped = fano_bound(H, at, m) if m >= 2 else 0.0
    return PrivacyReport(H, mi, clamped, raw, budget, m)
