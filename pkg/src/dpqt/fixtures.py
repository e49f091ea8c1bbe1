"""Bundled blood-test covariance and the four worked examples that use it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dpqt.lincore import check_positive_definite, sym_eigen

BLOOD6_VARIABLES = ("Cholesterol", "HDL", "ApoA1", "LDL", "Total Lipid", "Glucose")

# Upper triangle as published (MG/DL units); mirrored below.
_BLOOD6_UPPER = (
    (1600, -160, -400, 840, 800, -40),
    (400, 160, -175, -200, 0),
    (1600, 280, 600, 0),
    (1225, 700, -35),
    (2500, -50),
    (100,),
)


def _mirror(upper) -> np.ndarray:
    k = len(upper)
    m = np.zeros((k, k))
    for i, row in enumerate(upper):
        if len(row) != k - i:
            raise ValueError("upper-triangle rows have the wrong lengths")
        m[i, i:] = row
        m[i:, i] = row
    return m


def blood6() -> np.ndarray:
    """The 6x6 row covariance, checked symmetric and positive definite."""
    m = _mirror(_BLOOD6_UPPER)
    check_positive_definite(sym_eigen(m))
    return m


@dataclass(frozen=True)
class Example:
    number: int
    eta: tuple[float, ...]
    n: int
    delta: float
    gamma: float


EXAMPLES = {
    1: Example(1, (10, 5, 10, 8.75, 12.5, 2.5), 50, 0.02, 1e-4),
    2: Example(2, (10, 5, 10, 8.75, 12.5, 2.5), 50, 0.0004, 1e-6),
    3: Example(3, (0, 0, 20, 0, 25, 5), 50, 0.0004, 1e-6),
    4: Example(4, (0, 0, 20, 0, 25, 5), 100, 0.0001, 1e-6),
}

DEFAULT_ALPHA = 0.05
