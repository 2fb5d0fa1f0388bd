import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from kpzkit.specfun import (
    airy_ai,
    airy_ai_prime,
    airy_cubic_identity_residual,
    airy_exp_integral,
    airy_product_integral,
    airy_product_identity_residual,
    composite_gauss_legendre,
    gauss_legendre,
    q_exponential,
)


def _envelope(x, ref, power):
    env = np.where(x < 0, np.abs(np.minimum(x, -1.0)) ** power / math.sqrt(math.pi), 0.0)
    return np.maximum(env, np.abs(ref))


class TestAiry:
    def test_known_values(self):
        assert_allclose(airy_ai(0.0), 0.35502805388781723926, rtol=1e-15)
        assert_allclose(airy_ai(1.0), 0.13529241631288141552, rtol=1e-14)
        assert abs(airy_ai(-2.33810741045976703849)) < 1e-10

    def test_against_mpmath(self):
        mp.mp.dps = 30
        x = np.linspace(-20, 20, 2001)
        ref = np.array([float(mp.airyai(v)) for v in x])
        refp = np.array([float(mp.airyai(v, 1)) for v in x])
        # relative to the oscillation envelope on the negative axis
        err = np.abs(airy_ai(x) - ref) / _envelope(x, ref, -0.25)
        errp = np.abs(airy_ai_prime(x) - refp) / _envelope(x, refp, 0.25)
        assert err.max() < 1e-12
        assert errp.max() < 1e-12
        pos = x >= 0
        assert np.max(np.abs(airy_ai(x[pos]) / ref[pos] - 1)) < 1e-12

    @pytest.mark.parametrize("x0", [-9.0, 9.0])
    def test_seam_continuity(self, x0):
        for eps in (1e-7, -1e-7):
            lin = airy_ai(x0) + eps * airy_ai_prime(x0) + 0.5 * eps**2 * x0 * airy_ai(x0)
            assert_allclose(airy_ai(x0 + eps), lin, rtol=1e-12, atol=1e-16)

    def test_far_field(self):
        assert airy_ai(120.0) == 0.0 or airy_ai(120.0) < 1e-300
        mp.mp.dps = 30
        for v in (-70.0, -45.5, 40.0):
            assert_allclose(airy_ai(v), float(mp.airyai(v)), rtol=1e-12, atol=1e-14)

    def test_ode_residual(self):
        # fourth-order centered stencil
        h = 1e-2
        x = np.linspace(-5, 5, 1001)
        f = [airy_ai(x + k * h) for k in (-2, -1, 0, 1, 2)]
        d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h**2)
        assert np.max(np.abs(d2 - x * airy_ai(x))) < 1e-8

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            airy_ai(np.nan)
        with pytest.raises(ValueError):
            airy_ai(np.array([0.0, np.inf]))

    def test_shape(self):
        x = np.zeros((3, 4))
        assert airy_ai(x).shape == (3, 4)
        assert isinstance(airy_ai(0.5), float)


class TestGaussLegendre:
    def test_midpoint(self):
        r = gauss_legendre(1, 0.0, 1.0)
        assert_allclose(r.nodes, [0.5])
        assert_allclose(r.weights, [1.0])

    def test_two_point_quadratic(self):
        r = gauss_legendre(2, 0.0, 1.0)
        assert_allclose(np.dot(r.weights, r.nodes**2), 1 / 3, rtol=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 7, 40, 101, 400])
    def test_structure(self, n):
        r = gauss_legendre(n, -1.0, 1.0)
        assert np.all(np.diff(r.nodes) > 0)
        assert np.all((r.nodes > -1) & (r.nodes < 1))
        assert np.all(r.weights > 0)
        assert abs(r.weights.sum() - 2.0) < 1e-12
        assert_allclose(r.nodes, -r.nodes[::-1], atol=1e-15)

    def test_matches_numpy_reference(self):
        x, w = np.polynomial.legendre.leggauss(30)
        r = gauss_legendre(30, -1, 1)
        assert_allclose(r.nodes, x, atol=1e-14)
        assert_allclose(r.weights, w, atol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(1, 30),
        a=st.floats(-5, 5),
        width=st.floats(0.1, 10),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_polynomial_exactness(self, n, a, width, seed):
        b = a + width
        deg = 2 * n - 1
        rng = np.random.default_rng(seed)
        # random polynomial in the shifted variable keeps conditioning sane
        c = rng.normal(size=deg + 1)
        P = np.polynomial.Polynomial(c, domain=[a, b])
        exact = P.integ()(b) - P.integ()(a)
        r = gauss_legendre(n, a, b)
        got = np.dot(r.weights, P(r.nodes))
        scale = np.dot(r.weights, np.abs(P(r.nodes))) + abs(exact)
        assert abs(got - exact) <= 1e-12 * max(scale, 1e-300)

    @pytest.mark.parametrize("args", [(0, 0, 1), (3, 1.0, 1.0), (3, 2.0, 1.0), (-1, 0, 1)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            gauss_legendre(*args)

    def test_composite(self):
        r = composite_gauss_legendre(-3.0, 4.2, panel=0.5, n=10)
        assert_allclose(r.weights.sum(), 7.2, rtol=1e-14)
        assert_allclose(np.dot(r.weights, np.cos(r.nodes)), np.sin(4.2) - np.sin(-3.0), rtol=1e-13)


class TestQExponential:
    @pytest.mark.parametrize("tau", [0.0, 0.1, 0.5, 0.9])
    def test_at_zero(self, tau):
        assert q_exponential(0.0, tau) == 1.0

    def test_tau_zero(self):
        for z in (0.3, -2.0, 0.5 + 0.5j):
            assert_allclose(q_exponential(z, 0.0), 1 / (1 - z), rtol=1e-15)

    def test_functional_equation(self):
        z, tau = 0.3, 0.5
        assert abs((1 - z) * q_exponential(z, tau) - q_exponential(tau * z, tau)) < 1e-12

    def test_against_mpmath(self):
        for z, tau in [(0.3, 0.5), (-1.7, 0.25), (0.9, 0.9), (2 + 1j, 0.3)]:
            ref = 1 / complex(mp.qp(z, tau))
            assert_allclose(q_exponential(z, tau), ref, rtol=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(z=st.floats(-5, 0.95), tau=st.floats(0.0, 0.95))
    def test_cutoff_refinement(self, z, tau):
        a = q_exponential(z, tau, cutoff=1e-16)
        b = q_exponential(z, tau, cutoff=0.5e-16)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))

    def test_errors(self):
        with pytest.raises(ValueError):
            q_exponential(0.1, 1.0)
        with pytest.raises(ValueError):
            q_exponential(0.1, -0.2)
        with pytest.raises(ZeroDivisionError):
            q_exponential(4.0, 0.5)  # pole at tau^-2


class TestIdentities:
    def test_small_lambda(self):
        for n in (1, 3, 7):
            assert airy_cubic_identity_residual(0.0, n) < 1e-10
            assert airy_cubic_identity_residual(1e-9, n) < 1e-10

    @pytest.mark.parametrize("lam,n", [(0.5, 1), (0.3, 2)])
    def test_examples(self, lam, n):
        assert airy_cubic_identity_residual(lam, n) < 1e-8

    def test_integral_against_mpmath(self):
        mp.mp.dps = 25
        c = 1.3
        ref = mp.quad(lambda y: mp.airyai(y) * mp.exp(c * y), [-mp.inf, -20, 0, 20])
        assert_allclose(airy_exp_integral(c), float(ref), rtol=1e-12)

    def test_divergent_regime_reported(self):
        with pytest.raises(ValueError):
            airy_cubic_identity_residual(1.0, 4)

    def test_product_examples(self):
        assert abs(airy_product_integral(0.5, 0.0) - airy_ai(0.5) ** 2) < 1e-8
        assert airy_product_identity_residual(0.5, 0.7) < 1e-8
        assert airy_product_integral(0.5, -0.7) == pytest.approx(airy_product_integral(0.5, 0.7), abs=1e-15)

    @pytest.mark.parametrize("x", np.linspace(-5, 5, 5))
    def test_product_grid(self, x):
        for u in np.linspace(-5, 5, 5):
            assert airy_product_identity_residual(x, u) < 1e-8

    @pytest.mark.parametrize("lam", [0.1, 0.2, 0.3, 0.45, 0.6])
    def test_cubic_grid(self, lam):
        for n in range(1, 6):
            assert airy_cubic_identity_residual(lam, n) < 1e-8
