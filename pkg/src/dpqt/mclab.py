"""Seeded Monte Carlo checks of the analytic coverage, level and power claims.

Replications are processed in fixed-size blocks. Block ``j`` draws from a
Philox generator whose key is a 64-bit mix of the master seed and whose
counter starts at ``j`` in its top word, so every block has its own stream
regardless of how blocks are spread over workers. Per-block results are
integer counts, summed in block order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dpqt import fixed, rdp
from dpqt.calibrate import PrivacyLevel, min_sigma
from dpqt.errors import DomainError
from dpqt.lincore import check_positive_definite, sym_eigen
from dpqt.numcore import chisq_cdf, chisq_quantile

BLOCK_SIZE = 2048
_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """SplitMix64 finaliser."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator number ``index`` derived from ``seed``."""
    seed = int(seed) & _MASK64
    key = [mix64(seed), mix64(seed ^ 0xD1B54A32D192ED03)]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(index)]))


def default_workers() -> int:
    env = os.environ.get("DPQT_THREADS")
    if env:
        workers = int(env)
        if workers < 1:
            raise DomainError("DPQT_THREADS must be a positive integer")
        return workers
    return os.cpu_count() or 1


# -- data generation ----------------------------------------------------------

def _sqrt_psd(sigma) -> np.ndarray:
    eig = sym_eigen(sigma)
    check_positive_definite(eig)
    return eig.apply(np.sqrt)


def draw_normal_rows(seed: int, n: int, mu, sigma) -> np.ndarray:
    """``n`` iid rows from N(mu, sigma), via the symmetric square root of sigma."""
    mu = np.asarray(mu, dtype=float)
    root = _sqrt_psd(sigma)
    z = stream(seed).standard_normal((n, mu.size))
    return mu + z @ root


def neighbor_pair(rows) -> tuple[np.ndarray, np.ndarray]:
    """Split ``n + 1`` rows into S (first n) and S' (last row swapped in)."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DomainError("need at least two rows to form a neighbouring pair")
    s = rows[:-1]
    s_prime = np.concatenate([rows[:-2], rows[-1:]], axis=0)
    return s, s_prime


def mean_query(rows) -> np.ndarray:
    return np.asarray(rows, dtype=float).mean(axis=-2)


# -- plans and reports --------------------------------------------------------

@dataclass(frozen=True)
class FixedScenario:
    psi: tuple[float, ...]
    mu: tuple[float, ...]
    eta: tuple[float, ...]
    epsilon: float
    delta: float
    alpha: float = 0.05
    coverage: float = 0.95


@dataclass(frozen=True)
class RandomScenario:
    sigma: tuple[tuple[float, ...], ...]
    n: int
    mu: tuple[float, ...]
    eta: tuple[float, ...]
    epsilon: float
    delta: float
    gamma: float
    alpha: float = 0.05
    coverage: float = 0.95


@dataclass(frozen=True)
class SimPlan:
    seed: int
    replications: int
    fixed: FixedScenario | None = None
    random: RandomScenario | None = None
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if self.block_size < 1:
            raise DomainError("block_size must be >= 1")
        if self.fixed is None and self.random is None:
            raise DomainError("a plan needs at least one scenario")


@dataclass(frozen=True)
class Estimate:
    """One empirical proportion next to its analytic counterpart.

    ``check`` is ``"equal"`` (|empirical - analytic| <= 3 SE) or ``"exceeds"``
    (empirical - analytic > 3 SE).
    """

    scenario: str
    name: str
    check: str
    hits: int
    replications: int
    analytic: float

    @property
    def empirical(self) -> float:
        return self.hits / self.replications

    @property
    def se(self) -> float:
        p = self.empirical
        return math.sqrt(p * (1.0 - p) / self.replications)

    @property
    def discrepancy(self) -> float:
        return self.empirical - self.analytic

    @property
    def z(self) -> float:
        se = self.se
        if se == 0:
            return 0.0 if self.discrepancy == 0 else math.copysign(math.inf, self.discrepancy)
        return self.discrepancy / se

    @property
    def passed(self) -> bool:
        if self.check == "exceeds":
            return self.z > 3.0
        return abs(self.z) <= 3.0


@dataclass(frozen=True)
class SimReport:
    seed: int
    estimates: tuple[Estimate, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.estimates)

    def get(self, scenario: str, name: str) -> Estimate:
        for e in self.estimates:
            if e.scenario == scenario and e.name == name:
                return e
        raise KeyError((scenario, name))


# -- fixed-data scenario ------------------------------------------------------

class _FixedSetup:
    def __init__(self, sc: FixedScenario):
        self.psi = np.asarray(sc.psi, dtype=float)
        self.mu = np.asarray(sc.mu, dtype=float)
        self.eta = np.asarray(sc.eta, dtype=float)
        k = self.psi.size
        if self.mu.size != k or self.eta.size != k:
            raise DomainError("psi, mu and eta must have the same length")
        self.k = k
        self.alpha = sc.alpha
        self.sigma = min_sigma(PrivacyLevel(sc.epsilon, sc.delta), float(np.linalg.norm(self.psi)))
        self.t = chisq_quantile(k, sc.coverage)
        self.cr_scalings = {"xi1": np.ones(k), "xistar": fixed.xi_star_cr(self.psi)}
        self.test_scalings = {"xi1": np.ones(k), "xistar": fixed.xi_star_test(self.psi, self.eta)}
        self.thresholds = {
            name: fixed.rejection_stat_fixed(np.zeros(k), xi, self.eta, self.sigma, self.alpha)[1]
            for name, xi in self.test_scalings.items()
        }

    def names(self):
        for name in self.cr_scalings:
            yield f"coverage_{name}", "equal", chisq_cdf(self.k, self.t)
        for name, xi in self.test_scalings.items():
            yield f"level_{name}", "equal", self.alpha
            yield f"power_{name}", "equal", fixed.test_power_fixed(xi, self.eta, self.sigma, self.alpha)

    def block(self, gen: np.random.Generator, size: int) -> dict[str, int]:
        u = self.sigma * gen.standard_normal((size, self.k))
        out = {}
        for name, xi in self.cr_scalings.items():
            root = np.sqrt(xi)
            resid = (root * self.mu + u) / root - self.mu
            stat = np.sum(xi * resid * resid, axis=1) / self.sigma ** 2
            out[f"coverage_{name}"] = int(np.count_nonzero(stat <= self.t))
        for name, xi in self.test_scalings.items():
            direction = np.sqrt(xi) * self.eta / self.sigma ** 2
            null = u @ direction
            alt = (np.sqrt(xi) * self.eta + u) @ direction
            out[f"level_{name}"] = int(np.count_nonzero(null > self.thresholds[name]))
            out[f"power_{name}"] = int(np.count_nonzero(alt > self.thresholds[name]))
        return out


# -- random-data scenario -----------------------------------------------------

class _RandomSetup:
    def __init__(self, sc: RandomScenario):
        self.model = rdp.CovarianceModel(np.asarray(sc.sigma, dtype=float), sc.n)
        k = self.model.k
        self.k, self.n = k, sc.n
        self.mu = np.asarray(sc.mu, dtype=float)
        self.eta = np.asarray(sc.eta, dtype=float)
        if self.mu.size != k or self.eta.size != k:
            raise DomainError("mu and eta must match the covariance dimension")
        self.alpha = sc.alpha
        self.gamma = sc.gamma
        self.radii = rdp.privacy_radii(self.model, sc.gamma)
        self.suite = rdp.mechanism_suite(
            self.model, rdp.RdpLevel(sc.epsilon, sc.delta, sc.gamma), self.radii)
        self.t = chisq_quantile(k, sc.coverage)
        self.powers = rdp.power_suite(self.model, self.suite, self.eta, self.alpha)
        self.mechs = {"g": self.suite.g, "fg": self.suite.fg, "f": self.suite.f}
        self.tests = {}
        for name, mech in self.mechs.items():
            stat_dir, thr = self._direction(mech)
            self.tests[name] = (mech, stat_dir, thr)
        sigma_f = self.suite.f.sigma
        _, self.naive_thr = rdp.naive_stat(np.zeros(k), self.model, self.eta, self.alpha, sigma_f)
        _, self.super_thr = rdp.naive_stat(np.zeros(k), self.model, self.eta, self.alpha, sigma_f,
                                           super_naive=True)
        v = self.model.eigen.eigenvectors
        self.naive_dir = v @ ((v.T @ self.eta) / self.model.eigenvalues)
        self.cov_eigs = {name: sym_eigen(rdp.release_covariance(self.model, mech))
                         for name, mech in self.mechs.items()}

    def _direction(self, mech):
        # The statistic is linear in the output; recover its direction from the basis.
        basis = np.eye(self.k)
        stats, thr = rdp.rejection_region_stat(basis, mech, self.model, self.eta, self.alpha)
        return stats, thr

    def names(self):
        cover = chisq_cdf(self.k, self.t)
        for name in self.mechs:
            yield f"coverage_{name}", "equal", cover
        p = self.powers
        analytic_power = {"g": p.g, "fg": p.fg, "f": p.f}
        for name in self.mechs:
            yield f"level_{name}", "equal", self.alpha
            yield f"power_{name}", "equal", analytic_power[name]
        yield "level_naive", "equal", self.alpha
        yield "power_naive", "equal", p.naive
        yield "level_super_naive", "equal", p.level_super_naive
        yield "level_super_naive_gt_alpha", "exceeds", self.alpha
        yield "power_super_naive", "equal", p.super_naive
        yield "privacy_set_Hg", "equal", 1.0 - self.gamma
        yield "privacy_set_Hf", "equal", 1.0 - self.gamma

    def block(self, gen: np.random.Generator, size: int) -> dict[str, int]:
        model, k, n = self.model, self.k, self.n
        # Centred rows; the mean is added per hypothesis below.
        z = gen.standard_normal((size, n + 1, k)) @ model.sqrt_sigma
        f0 = z[:, :n, :].mean(axis=1)
        f_diff = (z[:, n - 1, :] - z[:, n, :]) / n
        g_diff = f_diff @ model.inv_sqrt_sigma_n
        noise = {name: mech.sigma * gen.standard_normal((size, k))
                 for name, mech in self.mechs.items()}

        out = {}
        for name, mech in self.mechs.items():
            if mech.query == "g":
                base = lambda f: f @ model.inv_sqrt_sigma_n  # noqa: E731
            else:
                base = lambda f: f  # noqa: E731
            released = base(self.mu + f0) + noise[name]
            resid = rdp.to_mean_scale(model, mech, released) - self.mu
            eig = self.cov_eigs[name]
            coords = resid @ eig.eigenvectors
            stat = np.sum(coords * coords / eig.eigenvalues, axis=1)
            out[f"coverage_{name}"] = int(np.count_nonzero(stat <= self.t))

            _, direction, thr = self.tests[name]
            null = base(f0) + noise[name]
            alt = base(self.eta + f0) + noise[name]
            out[f"level_{name}"] = int(np.count_nonzero(null @ direction > thr))
            out[f"power_{name}"] = int(np.count_nonzero(alt @ direction > thr))

        null_f = f0 + noise["f"]
        alt_f = self.eta + f0 + noise["f"]
        null_stat, alt_stat = null_f @ self.naive_dir, alt_f @ self.naive_dir
        out["level_naive"] = int(np.count_nonzero(null_stat > self.naive_thr))
        out["power_naive"] = int(np.count_nonzero(alt_stat > self.naive_thr))
        out["level_super_naive"] = int(np.count_nonzero(null_stat > self.super_thr))
        out["level_super_naive_gt_alpha"] = out["level_super_naive"]
        out["power_super_naive"] = int(np.count_nonzero(alt_stat > self.super_thr))
        out["privacy_set_Hg"] = int(np.count_nonzero(
            np.sum(g_diff * g_diff, axis=1) <= self.radii.h_g.radius_sq))
        out["privacy_set_Hf"] = int(np.count_nonzero(
            np.sum(f_diff * f_diff, axis=1) <= self.radii.h_f.radius_sq))
        return out


def _block_sizes(replications: int, block_size: int) -> list[int]:
    full, rest = divmod(replications, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _run_scenario(setup, seed: int, stream_offset: int, replications: int,
                  block_size: int, workers: int) -> dict[str, int]:
    sizes = _block_sizes(replications, block_size)

    def job(j):
        return setup.block(stream(seed, stream_offset + j), sizes[j])

    if workers <= 1 or len(sizes) == 1:
        results = [job(j) for j in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(len(sizes))))
    totals: dict[str, int] = {}
    for res in results:
        for key, value in res.items():
            totals[key] = totals.get(key, 0) + value
    return totals


# Keeps the two scenarios on disjoint Philox streams.
_RANDOM_STREAM_OFFSET = 1 << 40


def run_plan(plan: SimPlan, workers: int | None = None) -> SimReport:
    workers = default_workers() if workers is None else int(workers)
    estimates = []
    scenarios = []
    if plan.fixed is not None:
        scenarios.append(("fixed", _FixedSetup(plan.fixed), 0))
    if plan.random is not None:
        scenarios.append(("random", _RandomSetup(plan.random), _RANDOM_STREAM_OFFSET))
    for label, setup, offset in scenarios:
        totals = _run_scenario(setup, plan.seed, offset, plan.replications,
                               plan.block_size, workers)
        for name, check, analytic in setup.names():
            estimates.append(Estimate(label, name, check, totals[name],
                                      plan.replications, float(analytic)))
    return SimReport(plan.seed, tuple(estimates))


def empirical_cdf_distance(samples: Sequence[float], cdf) -> float:
    """Kolmogorov distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    m = x.size
    f = np.array([cdf(v) for v in x])
    upper = np.arange(1, m + 1) / m - f
    lower = f - np.arange(0, m) / m
    return float(max(upper.max(), lower.max()))
