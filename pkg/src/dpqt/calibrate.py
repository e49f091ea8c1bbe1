"""Analytic calibration of the Gaussian mechanism.

A mechanism ``f(S) + N(0, sigma^2 I)`` whose neighbouring outputs differ by
at most ``D`` in L2 norm satisfies (epsilon, delta)-DP exactly when

    Phi(D/(2 sigma) - eps sigma/D) - e^eps Phi(-D/(2 sigma) - eps sigma/D) <= delta.

The left-hand side (the "slack") depends on D and sigma only through D/sigma,
so every calibration is done at unit sensitivity and rescaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from dpqt.errors import DomainError, ZeroSensitivityError
from dpqt.numcore import bisect, std_normal_cdf


@dataclass(frozen=True)
class PrivacyLevel:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise DomainError(f"epsilon must be > 0, got {self.epsilon!r}")
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta!r}")


def _check_sensitivity(sensitivity: float) -> float:
    sensitivity = float(sensitivity)
    if not math.isfinite(sensitivity) or sensitivity < 0:
        raise DomainError(f"sensitivity must be finite and >= 0, got {sensitivity!r}")
    if sensitivity == 0:
        raise ZeroSensitivityError("zero sensitivity: release without noise")
    return sensitivity


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not (math.isfinite(sigma) and sigma > 0):
        raise DomainError(f"sigma must be finite and > 0, got {sigma!r}")
    return sigma


def _slack_at_ratio(epsilon: float, ratio: float) -> float:
    # ratio = D / sigma
    a = 0.5 * ratio
    b = epsilon / ratio
    return std_normal_cdf(a - b) - math.exp(epsilon) * std_normal_cdf(-a - b)


def dp_slack(epsilon: float, sensitivity: float, sigma: float) -> float:
    """Left-hand side of the analytic Gaussian-mechanism condition."""
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise DomainError(f"epsilon must be > 0, got {epsilon!r}")
    sensitivity, sigma = _check_sensitivity(sensitivity), _check_sigma(sigma)
    return _slack_at_ratio(float(epsilon), sensitivity / sigma)


def delta_of(epsilon: float, sensitivity: float, sigma: float) -> float:
    """Smallest delta for which (epsilon, delta)-DP holds at this noise scale."""
    return min(max(dp_slack(epsilon, sensitivity, sigma), 0.0), 1.0)


def classical_sigma(level: PrivacyLevel, sensitivity: float) -> float:
    """sqrt(2 ln(1.25/delta)) * D / eps; sufficient for eps <= 1."""
    sensitivity = _check_sensitivity(sensitivity)
    return math.sqrt(2.0 * math.log(1.25 / level.delta)) * sensitivity / level.epsilon


def _unit_min_sigma(epsilon: float, delta: float) -> float:
    def excess(sigma):
        return _slack_at_ratio(epsilon, 1.0 / sigma) - delta

    lo = 1e-6
    hi = 2.0 * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon
    while excess(hi) > 0:
        lo, hi = hi, 2.0 * hi
    sigma = bisect(excess, lo, hi, tol=0.0)
    # Land on the private side of the boundary.
    while excess(sigma) > 0:
        sigma = math.nextafter(sigma, math.inf)
    return sigma


def min_sigma(level: PrivacyLevel, sensitivity: float) -> float:
    """Smallest sigma for which the Gaussian mechanism is (eps, delta)-DP."""
    sensitivity = _check_sensitivity(sensitivity)
    return sensitivity * _unit_min_sigma(level.epsilon, level.delta)
