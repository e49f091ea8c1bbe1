"""Random-data planning: privacy sets, the three mechanisms, volumes and powers.

Rows are iid N(mu, Sigma) with Sigma known, the raw query ``f`` is the sample
mean (covariance ``Sigma_n = Sigma / n``) and the whitened query is
``g = Sigma_n^{-1/2} f``. For a neighbouring pair that swaps the last row,

    ||g(S) - g(S')||^2 ~ (2/n) chi2_k
    ||f(S) - f(S')||^2 ~ (2/n) sum_i lambda_i X_i,   lambda = eig(Sigma_n)

so each privacy set is a ball holding probability 1 - gamma, and its radius
is the sensitivity fed to the Gaussian calibration. Three mechanisms are
compared at the same (eps, delta, gamma):

    g  : g(S) + N(0, sigma_g^2 I), privacy set H_g
    fg : f(S) + N(0, sigma_fg^2 I), privacy set H_g
    f  : f(S) + N(0, sigma_f^2 I), privacy set H_f
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from dpqt.calibrate import PrivacyLevel, min_sigma
from dpqt.errors import DomainError
from dpqt.fixed import unit_ball_volume
from dpqt.lincore import EigenDecomposition, as_symmetric, check_positive_definite, sym_eigen
from dpqt.numcore import (
    chisq_cdf,
    chisq_quantile,
    chisq_sf,
    std_normal_quantile,
    std_normal_sf,
    weighted_chisq_cdf,
    weighted_chisq_quantile,
)

# gamma below which the whitened mechanism's region is never larger than the
# H_f one, for the dimensions where these bounds are tabulated.
TABULATED_GAMMA_THRESHOLDS = {6: 0.062, 10: 0.03, 20: 0.005, 30: 0.001}


@dataclass(frozen=True)
class RdpLevel:
    epsilon: float
    delta: float
    gamma: float

    def __post_init__(self):
        PrivacyLevel(self.epsilon, self.delta)
        if not 0 < self.gamma < 1:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma!r}")

    @property
    def dp(self) -> PrivacyLevel:
        return PrivacyLevel(self.epsilon, self.delta)


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Population covariance ``sigma`` of one row and the sample size ``n``."""

    sigma: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "sigma", as_symmetric(self.sigma))
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        check_positive_definite(self.eigen)

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    @cached_property
    def sigma_n(self) -> np.ndarray:
        return self.sigma / self.n

    @cached_property
    def eigen(self) -> EigenDecomposition:
        """Eigendecomposition of ``sigma_n``."""
        return sym_eigen(self.sigma_n)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigen.eigenvalues

    @property
    def lambda_max(self) -> float:
        return self.eigen.lambda_max

    @cached_property
    def sqrt_sigma_n(self) -> np.ndarray:
        return self.eigen.apply(np.sqrt)

    @cached_property
    def inv_sqrt_sigma_n(self) -> np.ndarray:
        return self.eigen.apply(lambda lam: 1.0 / np.sqrt(lam))

    @cached_property
    def sqrt_sigma(self) -> np.ndarray:
        """Symmetric square root of the row covariance, used for sampling."""
        return math.sqrt(self.n) * self.sqrt_sigma_n

    def inv_quad(self, eta, shift: float = 0.0) -> float:
        """eta^T (Sigma_n + shift I)^{-1} eta."""
        coords = self.eigen.eigenvectors.T @ np.asarray(eta, dtype=float)
        return float(np.sum(coords * coords / (self.eigenvalues + shift)))

    def log_det_shifted(self, shift: float = 0.0, factor: float = 1.0) -> float:
        """log det(factor * Sigma_n + shift I)."""
        return float(np.sum(np.log(factor * self.eigenvalues + shift)))


@dataclass(frozen=True)
class PrivacySet:
    """A ball of neighbouring pairs: ``||h(S) - h(S')||^2 <= radius_sq``."""

    kind: str  # "Hg" or "Hf"
    radius_sq: float

    def __post_init__(self):
        if self.kind not in ("Hg", "Hf"):
            raise DomainError(f"unknown privacy set {self.kind!r}")
        if not self.radius_sq > 0:
            raise DomainError("privacy-set radius must be > 0")


@dataclass(frozen=True)
class Radii:
    d_g: float
    d_fg: float
    d_f: float
    h_g: PrivacySet
    h_f: PrivacySet


@dataclass(frozen=True)
class Mechanism:
    query: str  # "g" or "f"
    privacy_set: PrivacySet
    sensitivity: float
    sigma: float

    @property
    def ratio(self) -> float:
        return self.sensitivity / self.sigma


@dataclass(frozen=True)
class MechanismSuite:
    level: RdpLevel
    g: Mechanism
    fg: Mechanism
    f: Mechanism

    def __iter__(self):
        return iter((self.g, self.fg, self.f))


@dataclass(frozen=True)
class Volumes:
    g: float
    fg: float
    f: float


@dataclass(frozen=True)
class Powers:
    g: float
    fg: float
    f: float
    naive: float
    super_naive: float
    level_super_naive: float


def privacy_radii(model: CovarianceModel, gamma: float) -> Radii:
    """Sensitivities of g and f on H_g, and of f on H_f, at coverage 1 - gamma."""
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma!r}")
    k, n = model.k, model.n
    r_sq = chisq_quantile(k, 1.0 - gamma)
    hg_radius = 2.0 * r_sq / n
    d_g = math.sqrt(hg_radius)
    # Rayleigh: the largest ||f diff|| over the H_g ball is along the top eigenvector.
    d_fg = math.sqrt(model.lambda_max) * d_g
    c_sq = (2.0 / n) * weighted_chisq_quantile(model.eigenvalues, 1.0 - gamma)
    return Radii(d_g=d_g, d_fg=d_fg, d_f=math.sqrt(c_sq),
                 h_g=PrivacySet("Hg", hg_radius), h_f=PrivacySet("Hf", c_sq))


def mechanism_suite(model: CovarianceModel, level: RdpLevel,
                    radii: Radii | None = None) -> MechanismSuite:
    radii = privacy_radii(model, level.gamma) if radii is None else radii
    dp = level.dp
    return MechanismSuite(
        level=level,
        g=Mechanism("g", radii.h_g, radii.d_g, min_sigma(dp, radii.d_g)),
        fg=Mechanism("f", radii.h_g, radii.d_fg, min_sigma(dp, radii.d_fg)),
        f=Mechanism("f", radii.h_f, radii.d_f, min_sigma(dp, radii.d_f)),
    )


def log_cr_volumes(model: CovarianceModel, suite: MechanismSuite, t: float) -> Volumes:
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t!r}")
    k = model.k
    log_b = math.log(unit_ball_volume(k)) + 0.5 * k * math.log(t)
    return Volumes(
        g=log_b + 0.5 * model.log_det_shifted(factor=1.0 + suite.g.sigma ** 2),
        fg=log_b + 0.5 * model.log_det_shifted(shift=suite.fg.sigma ** 2),
        f=log_b + 0.5 * model.log_det_shifted(shift=suite.f.sigma ** 2),
    )


def cr_volumes(model: CovarianceModel, suite: MechanismSuite, t: float) -> Volumes:
    logs = log_cr_volumes(model, suite, t)
    return Volumes(g=math.exp(logs.g), fg=math.exp(logs.fg), f=math.exp(logs.f))


def _check_eta(model: CovarianceModel, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (model.k,):
        raise DomainError(f"eta must have length {model.k}")
    if np.all(eta == 0):
        raise DomainError("eta must not be the zero vector")
    return eta


def naive_moments(model: CovarianceModel, eta, sigma: float) -> tuple[float, float]:
    """Null mean-shift and true variance of the noise-free statistic M^T Sigma_n^{-1} eta.

    Returns ``(a, b)`` with a = eta^T Sigma_n^{-1} eta (also the nominal
    variance) and b = eta^T Sigma_n^{-1} (Sigma_n + sigma^2 I) Sigma_n^{-1} eta.
    """
    v = model.eigen.eigenvectors
    coords = v.T @ eta
    a = float(np.sum(coords * coords / model.eigenvalues))
    w = coords / model.eigenvalues
    return a, a + sigma * sigma * float(np.sum(w * w))


def power_suite(model: CovarianceModel, suite: MechanismSuite, eta, alpha: float,
                naive_sigma: float | None = None) -> Powers:
    """Analytic powers of the four analysis styles at level ``alpha``.

    The naive and super-naive analyses use the H_f mechanism's noise unless
    ``naive_sigma`` is given.
    """
    eta = _check_eta(model, eta)
    z = std_normal_quantile(1.0 - alpha)
    signal = model.inv_quad(eta)
    pi_g = std_normal_sf(z - math.sqrt(signal / (1.0 + suite.g.sigma ** 2)))
    pi_fg = std_normal_sf(z - math.sqrt(model.inv_quad(eta, suite.fg.sigma ** 2)))
    pi_f = std_normal_sf(z - math.sqrt(model.inv_quad(eta, suite.f.sigma ** 2)))

    sigma = suite.f.sigma if naive_sigma is None else naive_sigma
    a, b = naive_moments(model, eta, sigma)
    sd = math.sqrt(b)
    pi_naive = std_normal_sf(z - a / sd)
    nominal = z * math.sqrt(a)
    return Powers(g=pi_g, fg=pi_fg, f=pi_f, naive=pi_naive,
                  super_naive=std_normal_sf((nominal - a) / sd),
                  level_super_naive=std_normal_sf(nominal / sd))


# -- statistics on released outputs (rows of a 2-d array are replications) ---

def release_covariance(model: CovarianceModel, mech: Mechanism) -> np.ndarray:
    """Covariance of the mechanism output mapped back to the scale of f."""
    k = model.k
    if mech.query == "g":
        return model.sigma_n * (1.0 + mech.sigma ** 2)
    return model.sigma_n + mech.sigma ** 2 * np.eye(k)


def to_mean_scale(model: CovarianceModel, mech: Mechanism, outputs) -> np.ndarray:
    """Map outputs to estimates of mu: Sigma_n^{1/2} M for g, M itself for f."""
    outputs = np.asarray(outputs, dtype=float)
    if mech.query == "g":
        return outputs @ model.sqrt_sigma_n
    return outputs


def cr_statistic(model: CovarianceModel, mech: Mechanism, outputs, mu) -> np.ndarray:
    """(X - mu)^T Cov^{-1} (X - mu) for each output; the region is ``<= t``."""
    resid = to_mean_scale(model, mech, outputs) - np.asarray(mu, dtype=float)
    eig = sym_eigen(release_covariance(model, mech))
    coords = resid @ eig.eigenvectors
    return np.sum(coords * coords / eig.eigenvalues, axis=-1)


def rejection_region_stat(outputs, mech: Mechanism, model: CovarianceModel, eta,
                          alpha: float) -> tuple[np.ndarray, float]:
    """Likelihood-ratio statistic(s) and critical value; reject when stat > threshold."""
    eta = _check_eta(model, eta)
    outputs = np.asarray(outputs, dtype=float)
    if outputs.shape[-1] != model.k:
        raise DomainError(f"outputs must have trailing dimension {model.k}")
    z = std_normal_quantile(1.0 - alpha)
    s2 = mech.sigma ** 2
    if mech.query == "g":
        direction = (model.inv_sqrt_sigma_n @ eta) / (1.0 + s2)
        threshold = z * math.sqrt(model.inv_quad(eta) / (1.0 + s2))
    else:
        v = model.eigen.eigenvectors
        direction = v @ ((v.T @ eta) / (model.eigenvalues + s2))
        threshold = z * math.sqrt(model.inv_quad(eta, s2))
    return outputs @ direction, threshold


def naive_stat(outputs, model: CovarianceModel, eta, alpha: float, sigma: float,
               super_naive: bool = False) -> tuple[np.ndarray, float]:
    """Noise-free LR statistic with either the corrected or the noise-free threshold."""
    eta = _check_eta(model, eta)
    v = model.eigen.eigenvectors
    direction = v @ ((v.T @ eta) / model.eigenvalues)
    a, b = naive_moments(model, eta, sigma)
    z = std_normal_quantile(1.0 - alpha)
    threshold = z * math.sqrt(a if super_naive else b)
    return np.asarray(outputs, dtype=float) @ direction, threshold


# -- the weighted chi-square domination fact ---------------------------------

def fact_gamma_threshold(k: int) -> float:
    """gamma below which the chi2_k quantile is at least 2k."""
    return TABULATED_GAMMA_THRESHOLDS.get(k, chisq_sf(k, 2.0 * k))


def fact_holds(weights, x: float) -> bool:
    """Whether P(sum w_i X_i <= x) <= P(chi2_k <= x) after scaling w to mean 1."""
    w = np.asarray(weights, dtype=float)
    w = w / w.mean()
    return weighted_chisq_cdf(w, x) <= chisq_cdf(w.size, x)


def whitening_beats_hf_volume(model: CovarianceModel, gamma: float) -> bool:
    """True when gamma is small enough for Vol_g <= Vol_f to be guaranteed."""
    k = model.k
    if k in TABULATED_GAMMA_THRESHOLDS:
        return gamma <= TABULATED_GAMMA_THRESHOLDS[k]
    return gamma <= fact_gamma_threshold(k) and fact_holds(model.eigenvalues, 2.0 * k)
