import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from kpzkit.distributions import airy_kernel_spec
from kpzkit.fredholm import (
    KernelSpec,
    TruncationError,
    block_fredholm_det,
    det_i_minus,
    discretize,
    fredholm_det,
)


def zero_kernel(**kw):
    return KernelSpec(lambda x, y: np.zeros((len(x), len(y))), **kw)


def rank_kernel(coeffs, rates, s=0.0, L=40.0):
    """sum_k c_k exp(-a_k x) exp(-a_k y)."""
    def f(x, y):
        return sum(c * np.exp(-a * x)[:, None] * np.exp(-a * y)[None, :] for c, a in zip(coeffs, rates))
    return KernelSpec(f, s, L, True, "rank")


def gram_det(coeffs, rates, s=0.0):
    # exact: det(I - C G) with G_kl = int_s^inf e^{-(a_k + a_l) x} dx
    a = np.asarray(rates)
    G = np.exp(-(a[:, None] + a[None, :]) * s) / (a[:, None] + a[None, :])
    return np.linalg.det(np.eye(len(a)) - np.diag(coeffs) @ G)


class TestDiscretize:
    def test_zero_kernel(self):
        assert np.all(discretize(zero_kernel(), 12).matrix == 0)

    def test_single_node(self):
        k = KernelSpec.pointwise(lambda x, y: np.exp(-x - y), s=0.0, L=2.0)
        op = discretize(k, 1)
        # one Gauss node at the midpoint with weight L
        assert_allclose(op.matrix, [[2.0 * math.exp(-2.0)]], rtol=1e-14)

    def test_symmetric(self):
        op = discretize(airy_kernel_spec(-1.0), 30)
        assert np.max(np.abs(op.matrix - op.matrix.T)) < 1e-12

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_raises(self):
        k = KernelSpec.pointwise(lambda x, y: 1.0 / (x - y), s=0.0, L=1.0)
        with pytest.raises(ValueError):
            discretize(k, 5)


class TestFredholmDet:
    def test_zero_kernel(self):
        assert fredholm_det(zero_kernel(), 10).value == 1.0

    def test_rank_one(self):
        r = fredholm_det(rank_kernel([1.0], [1.0]), 60)
        assert_allclose(r.value, 0.5, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 10_000))
    def test_rank_k_matches_gram(self, k, seed):
        rng = np.random.default_rng(seed)
        rates = np.sort(rng.uniform(0.5, 2.0, k))
        coeffs = rng.uniform(-0.8, 0.8, k)
        r = fredholm_det(rank_kernel(coeffs, rates), 80)
        assert abs(r.value - gram_det(coeffs, rates)) < 1e-10

    def test_airy_refinement_reference(self):
        lo = fredholm_det(airy_kernel_spec(0.0, 10.0), 40).value
        hi = fredholm_det(airy_kernel_spec(0.0, 20.0), 100).value
        assert abs(lo - hi) < 1e-8
        assert_allclose(hi, 0.96937282835526, atol=1e-10)

    @pytest.mark.parametrize("s", [-5.0, -3.0, -1.0, 0.0, 1.0, 2.0])
    def test_airy_n40_vs_n80(self, s):
        a = fredholm_det(airy_kernel_spec(s), 40).value
        b = fredholm_det(airy_kernel_spec(s), 80).value
        assert abs(a - b) < 1e-8

    def test_convergence_reported(self):
        r = fredholm_det(airy_kernel_spec(-2.0), 40)
        assert 0 <= r.convergence < 1e-6
        assert r.n == 40 and r.L == 10.0

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-6.0, 3.0))
    def test_contraction_in_unit_interval(self, s):
        v = fredholm_det(airy_kernel_spec(s), 40).value
        assert -1e-12 <= v <= 1 + 1e-12

    def test_auto_extend(self):
        k = KernelSpec.pointwise(lambda x, y: np.exp(-(x + y) / 2), s=0.0, L=10.0, symmetric=True)
        r = fredholm_det(k, 60)
        assert r.L > 10.0
        assert_allclose(r.value, 0.0, atol=1e-9)  # 1 - int e^{-x} = 0

    def test_truncation_error(self):
        k = KernelSpec.pointwise(lambda x, y: np.exp(-(x + y) / 200), s=0.0, L=1.0)
        with pytest.raises(TruncationError):
            fredholm_det(k, 10, max_doublings=2)
        with pytest.raises(TruncationError):
            fredholm_det(k, 10, auto_extend=False)

    def test_overflow(self):
        with pytest.raises(OverflowError):
            det_i_minus(-np.eye(400) * 1e3)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            fredholm_det(zero_kernel(), 0)


class TestBlock:
    def test_all_zero(self):
        assert block_fredholm_det([[None, None], [None, None]], (0.0, 0.0), 10, 10.0).value == 1.0

    def test_block_diagonal_product(self):
        a, b = airy_kernel_spec(-1.0), airy_kernel_spec(0.5)
        r = block_fredholm_det([[a, None], [None, b]], (-1.0, 0.5), 40, 10.0)
        ref = fredholm_det(a, 40).value * fredholm_det(b, 40).value
        assert abs(r.value - ref) < 1e-10

    def test_rank_one_coupling(self):
        # K = c v v^T with v = (phi, phi): det = 1 - c |v|^2 = 1 - c (1/2 + 1/2)
        f = lambda x, y: 0.2 * np.exp(-x)[:, None] * np.exp(-y)[None, :]
        k = KernelSpec(f, 0.0, 40.0, True)
        r = block_fredholm_det([[k, k], [k, k]], (0.0, 0.0), 60, 40.0)
        assert_allclose(r.value, 1 - 0.2, atol=1e-12)
