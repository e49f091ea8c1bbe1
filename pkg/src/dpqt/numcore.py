"""Scalar special functions, quantiles and root finding.

Everything here is a pure function of its arguments. Quantiles are obtained
by bisection on the matching CDF (or survival function in the upper tail), so
they inherit the CDF's accuracy rather than that of an approximation formula.
"""

from __future__ import annotations

import functools
import math
import warnings
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from dpqt.errors import BracketError, DomainError

__all__ = [
    "bisect",
    "chisq_cdf",
    "chisq_quantile",
    "chisq_sf",
    "std_normal_cdf",
    "std_normal_quantile",
    "std_normal_sf",
    "weighted_chisq_cdf",
    "weighted_chisq_quantile",
    "weighted_chisq_sf",
]

_SQRT2 = math.sqrt(2.0)


def _finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def _open_prob(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return p


def bisect(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
           max_iter: int = 200) -> float:
    """Find a root of ``fn`` in ``[lo, hi]`` by bisection.

    ``fn(lo)`` and ``fn(hi)`` must have opposite signs (or one of them be
    zero). Iteration stops once the bracket is narrower than ``tol``, when the
    midpoint can no longer be split in floating point, or after ``max_iter``
    halvings.
    """
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise BracketError(f"need lo < hi, got [{lo}, {hi}]")
    flo, fhi = fn(lo), fn(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo < 0) == (fhi < 0):
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: f(lo)={flo!r}, f(hi)={fhi!r}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid <= lo or mid >= hi:
            return mid
        fmid = fn(mid)
        if fmid == 0:
            return mid
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- normal -------------------------------------------------------------------

def std_normal_cdf(x: float) -> float:
    x = _finite(x)
    return 0.5 * math.erfc(-x / _SQRT2)


def std_normal_sf(x: float) -> float:
    x = _finite(x)
    return 0.5 * math.erfc(x / _SQRT2)


def _lower_normal_quantile(p: float) -> float:
    # p <= 0.5, so the root is <= 0; erfc keeps full relative accuracy there.
    if p == 0.5:
        return 0.0
    return bisect(lambda x: std_normal_cdf(x) - p, -40.0, 0.0, tol=0.0)


def std_normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF, accurate to a few ulps."""
    p = _open_prob(p)
    if p <= 0.5:
        return _lower_normal_quantile(p)
    return -_lower_normal_quantile(1.0 - p)


# -- chi-square ---------------------------------------------------------------

def _check_dof(k: int) -> int:
    if int(k) != k or k < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {k!r}")
    return int(k)


def _check_nonneg(x: float) -> float:
    x = _finite(x)
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x!r}")
    return x


def chisq_cdf(k: int, x: float) -> float:
    k, x = _check_dof(k), _check_nonneg(x)
    return float(special.gammainc(0.5 * k, 0.5 * x))


def chisq_sf(k: int, x: float) -> float:
    k, x = _check_dof(k), _check_nonneg(x)
    return float(special.gammaincc(0.5 * k, 0.5 * x))


def _invert(cdf: Callable[[float], float], sf: Callable[[float], float], p: float,
            lo: float, hi: float, rtol: float | None) -> float:
    # Bisect on whichever tail is small, so 1 - p keeps its precision.
    if p <= 0.5:
        fn = lambda x: cdf(x) - p  # noqa: E731
    else:
        q = 1.0 - p
        fn = lambda x: q - sf(x)  # noqa: E731
    while fn(hi) < 0:
        lo, hi = hi, 2.0 * hi
    # rtol=None bisects down to adjacent floats, which keeps small quantiles
    # relatively accurate.
    return bisect(fn, lo, hi, tol=0.0 if rtol is None else rtol * hi, max_iter=1100)


def chisq_quantile(k: int, p: float) -> float:
    k, p = _check_dof(k), _open_prob(p)
    return _invert(lambda x: chisq_cdf(k, x), lambda x: chisq_sf(k, x), p,
                   0.0, 2.0 * k + 10.0, rtol=None)


# -- weighted sums of chi-square(1) -------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _check_weights(weights: Sequence[float]) -> np.ndarray:
    lam = np.asarray(weights, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise DomainError("weights must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise DomainError(f"weights must be finite and > 0, got {lam.tolist()}")
    return lam


def _imhof_parts(u: np.ndarray, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ul = np.multiply.outer(u, lam)
    phase = 0.5 * np.arctan(ul).sum(axis=-1)
    denom = u * np.exp(0.25 * np.log1p(ul * ul).sum(axis=-1))
    return phase, denom


def _imhof_integral(lam: np.ndarray, x: float, tol: float) -> float:
    """Integral of sin(theta(u)) / (u rho(u)) over (0, inf).

    The head [0, U] uses composite Gauss-Legendre, doubling the panel count
    until two successive sums agree to ``tol``. Past U the integrand is a
    smooth amplitude times sin/cos(x u / 2), which QUADPACK's QAWF handles.
    """
    omega = 0.5 * x
    upper = max(8.0 * math.pi / omega, 20.0 / lam.max())

    def integrand(u):
        phase, denom = _imhof_parts(u, lam)
        return np.sin(phase - omega * u) / denom

    panels, previous = 64, None
    while True:
        edges = np.linspace(0.0, upper, panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        u = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
        head = float(((integrand(u).reshape(panels, -1) @ _GL_WEIGHTS)) @ half)
        if previous is not None and abs(head - previous) < tol:
            break
        if panels >= 1 << 20:
            raise ArithmeticError("Imhof head quadrature did not converge")
        previous, panels = head, 2 * panels

    # QUADPACK calls back one point at a time; plain floats beat numpy here.
    weights = lam.tolist()

    def scalar_parts(u):
        phase, log_rho = 0.0, 0.0
        for w in weights:
            phase += math.atan(w * u)
            log_rho += math.log1p((w * u) ** 2)
        return 0.5 * phase, u * math.exp(0.25 * log_rho)

    def sin_amp(u):
        phase, denom = scalar_parts(u)
        return math.sin(phase) / denom

    def cos_amp(u):
        phase, denom = scalar_parts(u)
        return math.cos(phase) / denom

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            t_cos, e_cos = integrate.quad(sin_amp, upper, np.inf, weight="cos",
                                          wvar=omega, epsabs=1e-12, limlst=200)
            t_sin, e_sin = integrate.quad(cos_amp, upper, np.inf, weight="sin",
                                          wvar=omega, epsabs=1e-12, limlst=200)
        except integrate.IntegrationWarning as exc:
            raise ArithmeticError(f"Imhof tail quadrature failed: {exc}") from exc
    if e_cos + e_sin > 1e-9:
        raise ArithmeticError("Imhof tail quadrature error estimate too large")
    return head + t_cos - t_sin


@functools.lru_cache(maxsize=4096)
def _weighted_tails(lam_key: tuple[float, ...], x: float, tol: float) -> tuple[float, float]:
    lam = np.array(lam_key)
    if x == 0.0:
        return 0.0, 1.0
    if lam.size == 1 or np.all(lam == lam[0]):
        return chisq_cdf(lam.size, x / lam[0]), chisq_sf(lam.size, x / lam[0])
    integral = _imhof_integral(lam, x, tol) / math.pi
    cdf, sf = 0.5 - integral, 0.5 + integral
    return min(max(cdf, 0.0), 1.0), min(max(sf, 0.0), 1.0)


def weighted_chisq_cdf(weights: Sequence[float], x: float, tol: float = 1e-10) -> float:
    """P(sum_i w_i X_i <= x) with X_i iid chi-square(1), by Imhof's inversion.

    Equal weights reduce to a scaled chi-square and bypass the quadrature.
    """
    lam = _check_weights(weights)
    x = _check_nonneg(x)
    return _weighted_tails(tuple(lam.tolist()), x, tol)[0]


def weighted_chisq_sf(weights: Sequence[float], x: float, tol: float = 1e-10) -> float:
    lam = _check_weights(weights)
    x = _check_nonneg(x)
    return _weighted_tails(tuple(lam.tolist()), x, tol)[1]


def weighted_chisq_quantile(weights: Sequence[float], p: float) -> float:
    lam = _check_weights(weights)
    p = _open_prob(p)
    k, lmax, lmin = lam.size, float(lam.max()), float(lam.min())
    if k == 1 or lmax == lmin:
        return lmax * chisq_quantile(k, p)
    # lmax*X_1 <= Q <= lmax*chi2_k and Q >= lmin*chi2_k, hence the bracket.
    qk = chisq_quantile(k, p)
    lo = 0.999 * max(lmax * chisq_quantile(1, p), lmin * qk)
    hi = 1.001 * lmax * qk
    return _invert(lambda x: weighted_chisq_cdf(lam, x), lambda x: weighted_chisq_sf(lam, x),
                   p, lo, hi, rtol=1e-11)
