import math

import numpy as np
import pytest

import oracles
from dpqt.calibrate import (PrivacyLevel, classical_sigma, delta_of, dp_slack, min_sigma)
from dpqt.errors import DomainError, ZeroSensitivityError


def test_reference_calibration():
    level = PrivacyLevel(1.0, 1e-5)
    sigma = min_sigma(level, 1.0)
    # The classical bound sqrt(2 ln(1.25/delta)) is valid at eps = 1 and the
    # analytic calibration can only improve on it.
    assert sigma <= classical_sigma(level, 1.0) == pytest.approx(4.8448, abs=1e-4)
    assert dp_slack(1.0, 1.0, sigma) == pytest.approx(1e-5, abs=1e-10)


def test_slack_against_mpmath():
    for eps, d, s in [(0.5, 1.0, 10.0), (1.0, 1.0, 3.0), (3.0, 2.0, 0.7), (0.05, 0.01, 0.1)]:
        assert dp_slack(eps, d, s) == pytest.approx(oracles.dp_slack(eps, d, s), rel=1e-9,
                                                    abs=1e-15)


def test_min_sigma_is_tight():
    for eps, delta in [(0.1, 1e-6), (1.0, 1e-5), (4.0, 0.05), (0.5, 1e-8)]:
        level = PrivacyLevel(eps, delta)
        sigma = min_sigma(level, 1.0)
        assert dp_slack(eps, 1.0, sigma) <= delta
        assert dp_slack(eps, 1.0, sigma * (1 - 1e-6)) > delta


def test_homogeneous_in_sensitivity():
    level = PrivacyLevel(1.0, 1e-5)
    base = min_sigma(level, 1.0)
    assert min_sigma(level, 2.0) == 2.0 * base
    for c in (0.01, 3.7, 100.0):
        assert min_sigma(level, c) == pytest.approx(c * base, rel=1e-12)


def test_monotone_in_epsilon_and_delta():
    eps_grid = np.linspace(0.1, 3.0, 30)
    sig = [min_sigma(PrivacyLevel(e, 1e-4), 1.0) for e in eps_grid]
    assert all(b < a for a, b in zip(sig, sig[1:]))
    sig = [min_sigma(PrivacyLevel(1.0, d), 1.0) for d in (1e-9, 1e-6, 1e-3, 0.1)]
    assert all(b < a for a, b in zip(sig, sig[1:]))


def test_slack_decreasing_in_sigma():
    vals = [dp_slack(1.0, 1.0, s) for s in np.linspace(0.2, 8.0, 50)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_delta_of_clamps():
    assert 0.0 <= delta_of(1.0, 1.0, 1e-3) <= 1.0
    assert delta_of(1.0, 1.0, 1e3) >= 0.0


@pytest.mark.parametrize("eps,delta", [(0.0, 1e-5), (-1.0, 1e-5), (math.inf, 1e-5),
                                       (1.0, 0.0), (1.0, 1.0), (1.0, -0.1)])
def test_level_validation(eps, delta):
    with pytest.raises(DomainError):
        PrivacyLevel(eps, delta)


def test_zero_sensitivity():
    with pytest.raises(ZeroSensitivityError):
        min_sigma(PrivacyLevel(1.0, 1e-5), 0.0)
    with pytest.raises(ZeroSensitivityError):
        dp_slack(1.0, 0.0, 1.0)


def test_bad_sigma():
    with pytest.raises(DomainError):
        dp_slack(1.0, 1.0, 0.0)
