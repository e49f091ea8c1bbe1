"""Small dense symmetric-matrix utilities built on a cyclic Jacobi solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from dpqt.errors import NotPositiveDefiniteError, NotSymmetricError

PD_RTOL = 1e-12


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order with orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    def apply(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Return V diag(fn(eigenvalues)) V^T."""
        v = self.eigenvectors
        return (v * fn(self.eigenvalues)) @ v.T

    def reconstruct(self) -> np.ndarray:
        return self.apply(lambda lam: lam)


def as_symmetric(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise NotSymmetricError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotSymmetricError("matrix has non-finite entries")
    if not np.array_equal(a, a.T):
        raise NotSymmetricError("matrix is not symmetric")
    return a


def sym_eigen(m, max_sweeps: int = 100) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Pairs (p, q) are visited row by row in a fixed order, so the result is a
    deterministic function of the input. Sweeps stop once the off-diagonal
    Frobenius norm falls below 1e-12 times the matrix norm.
    """
    a = as_symmetric(m)
    k = a.shape[0]
    v = np.eye(k)
    scale = np.linalg.norm(a)
    threshold = 1e-12 * scale
    upper = np.triu_indices(k, 1)
    for _ in range(max_sweeps):
        # Summing the off-diagonal squares directly; subtracting the diagonal
        # from the full norm would cancel catastrophically near convergence.
        off = math.sqrt(2.0) * float(np.linalg.norm(a[upper]))
        if off <= threshold:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    lam, v = lam[order], v[:, order]
    # Fix each eigenvector's sign: largest-magnitude entry positive.
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(k)])
    return EigenDecomposition(lam, v * signs)


def check_positive_definite(eig: EigenDecomposition) -> None:
    lmax = eig.lambda_max
    if not lmax > 0 or eig.eigenvalues[-1] <= PD_RTOL * lmax:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (eigenvalues {eig.eigenvalues.tolist()})")


def sym_power(m, exponent: float) -> np.ndarray:
    eig = sym_eigen(m)
    check_positive_definite(eig)
    return eig.apply(lambda lam: lam ** exponent)


def log_det(m) -> float:
    eig = sym_eigen(m)
    check_positive_definite(eig)
    return float(np.sum(np.log(eig.eigenvalues)))


def quad_form(m, v) -> float:
    a = as_symmetric(m)
    v = np.asarray(v, dtype=float)
    if v.shape != (a.shape[0],):
        raise ValueError(f"vector of length {a.shape[0]} expected, got shape {v.shape}")
    return float(v @ a @ v)
