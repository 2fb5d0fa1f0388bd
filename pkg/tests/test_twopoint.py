import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import airy

from kpzkit.distributions import tw_gue_cdf, tw_moments
from kpzkit.twopoint import airy_heat_kernel, two_point_covariance, two_point_joint_cdf

G_SMALL = 0.09503  # g(0.05), n = 100; close to 2w - 2w^2


def test_heat_kernel_is_spectral_integral():
    w, x, y = 1.0, 0.0, 0.5
    f = lambda u: math.exp(w * u) * airy(x + u)[0] * airy(y + u)[0]
    ref = quad(f, -40, 12, limit=400)[0]
    assert abs(airy_heat_kernel(w, x, y) - ref) < 1e-9


class TestJoint:
    @settings(max_examples=10, deadline=None)
    @given(st.floats(-4, 1), st.floats(-4, 1), st.floats(0.1, 3))
    def test_frechet_bounds_and_reversibility(self, a, b, w):
        J = two_point_joint_cdf(a, b, w, n=40)
        Fa, Fb = tw_gue_cdf(a), tw_gue_cdf(b)
        assert J <= min(Fa, Fb) + 1e-8
        assert J >= Fa + Fb - 1 - 1e-8
        assert abs(J - two_point_joint_cdf(b, a, w, n=40)) < 1e-8

    def test_decoupled_is_product(self):
        J = two_point_joint_cdf(-1.0, 0.5, 1.0, n=40, decoupled=True)
        assert abs(J - tw_gue_cdf(-1.0) * tw_gue_cdf(0.5)) < 1e-9

    def test_small_w_diagonal(self):
        # A(0) and A(w) merge as w -> 0: F(s) - J(s, s) = P(A(0) <= s < A(w)) ~ sqrt(w)
        F = tw_gue_cdf(-1.5)
        d = [F - two_point_joint_cdf(-1.5, -1.5, w, n=60) for w in (0.04, 0.01)]
        assert 0 < d[1] < d[0] < 0.05
        assert abs(d[0] / d[1] - 2) < 0.1

    def test_positive_correlation(self):
        a = -1.8
        J = two_point_joint_cdf(a, a, 1.0, n=40)
        assert J > tw_gue_cdf(a) ** 2

    def test_rejects(self):
        with pytest.raises(ValueError):
            two_point_joint_cdf(0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            two_point_covariance(6.0)


class TestCovariance:
    def test_decoupled_twice_variance(self):
        r = two_point_covariance(1.0, n=40, m_a=32, m_d=24, decoupled=True)
        _, var = tw_moments("gue")
        assert abs(r.g - 2 * var) < 1e-3
        assert abs(r.covariance) < 1e-3

    @pytest.mark.slow
    def test_small_w(self):
        r = two_point_covariance(0.05)
        assert abs(r.g - G_SMALL) < 1e-4
        assert r.symmetry_defect < 1e-8
        # Brownian locally with diffusivity 2 and a negative quadratic correction
        assert abs(r.g / (2 * 0.05 - 2 * 0.05 ** 2) - 1) < 0.01
