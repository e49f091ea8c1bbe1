"""Query scalings for a fixed dataset released through a Gaussian mechanism.

The analyst poses ``f_xi(S) = Diag(xi)^{1/2} f(S)`` instead of ``f(S)`` and
undoes the scaling afterwards. With the noise scale held fixed, every scaling
with the same ``psi^T Diag(xi) psi`` has the same privacy level, where ``psi``
is the coordinate-wise displacement at the worst neighbouring pair.

Queries are per-coordinate means of row values ``q_i`` confined to boxes
``[a_i, b_i]``; the worst pair then places the replaced row at opposite
corners, which gives ``psi_i = (b_i - a_i) / n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from dpqt.errors import DomainError
from dpqt.numcore import chisq_quantile, std_normal_quantile, std_normal_sf

MIN_CR_SCALE = 1e-12
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class BoxUniverse:
    n: int
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"sample size must be a positive integer, got {self.n!r}")
        if len(self.bounds) < 1:
            raise DomainError("at least one coordinate is required")
        for i, (a, b) in enumerate(self.bounds):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise DomainError(f"bounds for coordinate {i} must be finite")
            if a == b:
                raise DomainError(f"coordinate {i} has zero sensitivity (a == b == {a})")
            if a > b:
                raise DomainError(f"coordinate {i}: lower bound {a} exceeds upper bound {b}")

    @property
    def k(self) -> int:
        return len(self.bounds)


def _vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def _check_psi(psi) -> np.ndarray:
    psi = _vector(psi, "psi")
    if np.any(psi * psi <= 0):
        raise DomainError("every psi_i^2 must be > 0")
    return psi


def _check_xi(xi, k: int, strictly_positive: bool) -> np.ndarray:
    xi = _vector(xi, "xi")
    if xi.size != k:
        raise DomainError(f"xi has length {xi.size}, expected {k}")
    if strictly_positive and np.any(xi <= MIN_CR_SCALE):
        raise DomainError(f"confidence-region scalings must exceed {MIN_CR_SCALE}")
    if np.any(xi < 0):
        raise DomainError("scalings must be nonnegative")
    return xi


def sensitivity_psi(universe: BoxUniverse) -> np.ndarray:
    widths = np.array([b - a for a, b in universe.bounds], dtype=float)
    return widths / universe.n


def lambda_xi(xi, psi, sigma: float) -> float:
    """Sensitivity-to-noise ratio of the scaled query; fixes the DP level."""
    psi = _check_psi(psi)
    xi = _check_xi(xi, psi.size, strictly_positive=False)
    return math.sqrt(float(np.sum(xi * psi * psi))) / sigma


def xi_star_cr(psi) -> np.ndarray:
    """Volume-minimising scaling, ``xi_i = (|psi|^2 / k) / psi_i^2``."""
    psi = _check_psi(psi)
    sq = psi * psi
    return (np.sum(sq) / sq.size) / sq


def unit_ball_volume(k: int) -> float:
    return math.exp(0.5 * k * math.log(math.pi) - special.gammaln(0.5 * k + 1.0))


def cr_volume(xi, sigma: float, t: float, k: int | None = None) -> float:
    xi = _vector(xi, "xi")
    k = xi.size if k is None else k
    xi = _check_xi(xi, k, strictly_positive=True)
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t!r}")
    log_vol = (0.5 * k * math.log(sigma * sigma * t)
               - 0.5 * float(np.sum(np.log(xi))))
    return unit_ball_volume(k) * math.exp(log_vol)


def volume_ratio(psi) -> float:
    """Vol(CR at xi*) / Vol(CR at xi = 1): (GM / AM of psi_i^2) ** (k/2)."""
    psi = _check_psi(psi)
    sq = psi * psi
    if np.all(sq == sq[0]):
        return 1.0
    k = sq.size
    log_gm = float(np.mean(np.log(sq)))
    log_am = math.log(float(np.mean(sq)))
    # AM >= GM; the clamp only absorbs rounding for nearly equal entries.
    return min(math.exp(0.5 * k * (log_gm - log_am)), 1.0)


def xi_star_test(psi, eta) -> np.ndarray:
    """One-hot scaling that maximises likelihood-ratio power against ``eta``.

    All of the privacy budget goes to the coordinate with the largest
    eta_i^2 / psi_i^2; ratios within a relative 1e-12 of the maximum count as
    ties and the lowest index wins.
    """
    psi = _check_psi(psi)
    eta = _vector(eta, "eta")
    if eta.size != psi.size:
        raise DomainError("eta and psi differ in length")
    if np.all(eta == 0):
        raise DomainError("eta must not be the zero vector")
    ratios = (eta * eta) / (psi * psi)
    j = int(np.flatnonzero(ratios >= ratios.max() * (1.0 - TIE_RTOL))[0])
    xi = np.zeros(psi.size)
    xi[j] = np.sum(psi * psi) / (psi[j] * psi[j])
    return xi


def _signal(xi, eta, sigma: float) -> float:
    eta = _vector(eta, "eta")
    xi = _check_xi(xi, eta.size, strictly_positive=False)
    return math.sqrt(float(np.sum(xi * eta * eta))) / sigma


def test_power_fixed(xi, eta, sigma: float, alpha: float) -> float:
    """Power of the level-alpha likelihood-ratio test of f(S)=0 vs f(S)=eta."""
    z = std_normal_quantile(1.0 - alpha)
    return std_normal_sf(z - _signal(xi, eta, sigma))


test_power_fixed.__test__ = False  # not a pytest test despite the name


def rejection_stat_fixed(response, xi, eta, sigma: float, alpha: float) -> tuple[float, float]:
    """Likelihood-ratio statistic and critical value; reject when stat > threshold."""
    response = _vector(response, "response")
    eta = _vector(eta, "eta")
    xi = _check_xi(xi, eta.size, strictly_positive=False)
    if response.size != eta.size:
        raise DomainError("response and eta differ in length")
    stat = float(response @ (np.sqrt(xi) * eta)) / (sigma * sigma)
    threshold = std_normal_quantile(1.0 - alpha) * _signal(xi, eta, sigma)
    return stat, threshold


def cr_statistic(response, xi, sigma: float, mu) -> float:
    response = _vector(response, "response")
    mu = _vector(mu, "mu")
    xi = _check_xi(xi, mu.size, strictly_positive=True)
    if response.size != mu.size:
        raise DomainError("response and mu differ in length")
    resid = response / np.sqrt(xi) - mu
    return float(np.sum(xi * resid * resid)) / (sigma * sigma)


def cr_contains(response, xi, sigma: float, t: float, mu) -> bool:
    """Whether ``mu`` lies in the closed confidence ellipsoid around ``response``."""
    return cr_statistic(response, xi, sigma, mu) <= t


def t_for_coverage(k: int, coverage: float) -> float:
    return chisq_quantile(k, coverage)
