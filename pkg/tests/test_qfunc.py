import numpy as np
import pytest
from scipy.special import ndtr

from imbalance_lab import q_function, q_inverse


def test_q_at_zero():
    assert q_function(0.0) == 0.5


def test_symmetry():
    t = np.linspace(-8, 8, 201)
    np.testing.assert_allclose(q_function(-t), 1.0 - q_function(t), atol=1e-15)


def test_matches_normal_tail_reference():
    # ndtr(-t) is the accurately computed upper-tail oracle
    t = np.linspace(-10, 10, 101)
    np.testing.assert_allclose(q_function(t), ndtr(-t), rtol=1e-13)


def test_q_inverse_anchor_value():
    assert q_inverse(0.1) == pytest.approx(1.2815515655446004, abs=1e-9)


def test_round_trip_within_1e9():
    # Left of about t = -5.2 the round trip is impossible in float64: p sits
    # so close to 1 that one ulp of p moves t by far more than 1e-9. The
    # upper tail carries full relative precision out to t = 8 and beyond.
    for t in np.linspace(-5, 8, 97):
        assert abs(q_inverse(float(q_function(t))) - t) <= 1e-9 * max(1.0, abs(t))


def test_left_tail_via_complement_symmetry():
    # the exact route to deep left-tail quantiles: Q^{-1}(1-p) = -Q^{-1}(p)
    for t in (6.0, 7.0, 8.0):
        p = float(q_function(t))
        assert -q_inverse(p) == pytest.approx(-t, abs=1e-9)


def test_monotone_decreasing():
    # strictly inside the representable band; Q rounds to exactly 1 below -9
    t = np.linspace(-8, 8, 400)
    q = q_function(t)
    assert np.all(np.diff(q) < 0)


def test_rejects_out_of_domain():
    for p in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(ValueError):
            q_inverse(p)


def test_deep_tail_round_trip():
    p = float(q_function(8.0))
    assert q_inverse(p) == pytest.approx(8.0, abs=1e-9)
