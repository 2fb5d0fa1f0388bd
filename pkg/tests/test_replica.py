import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from kpzkit.replica import (
    StringConfiguration,
    moment_via_strings,
    norm_weight,
    normalized_moment,
    second_moment_exact,
    string_energy,
    string_partitions,
)

# N = 3 string sums (nq = 200, stable to 1e-8 on the finer rule)
Z3 = {0.25: 2.1284030440, 0.5: 1.4567265412, 1.0: 1.4155958216}


class TestStrings:
    def test_energy_examples(self):
        assert string_energy(StringConfiguration((1,), (0.0,))) == 0.0
        assert string_energy(StringConfiguration((2,), (0.0,))) == -0.25

    @given(st.lists(st.tuples(st.integers(1, 4), st.floats(-5, 5)), min_size=1, max_size=3))
    def test_energy_additive(self, parts):
        whole = StringConfiguration(tuple(n for n, _ in parts), tuple(q for _, q in parts))
        total = sum(string_energy(StringConfiguration((n,), (q,))) for n, q in parts)
        assert abs(string_energy(whole) - total) < 1e-12 * max(1, abs(total))

    def test_rapidities(self):
        r = StringConfiguration((3,), (0.5,)).rapidities()
        assert_allclose(r, [0.5 + 1j, 0.5, 0.5 - 1j])

    def test_invalid(self):
        with pytest.raises(ValueError):
            StringConfiguration((0,), (0.0,))
        with pytest.raises(ValueError):
            StringConfiguration((1, 2), (0.0,))

    def test_partitions(self):
        assert string_partitions(3) == [(3,), (1, 2), (2, 1), (1, 1, 1)]
        assert all(sum(p) == 4 for p in string_partitions(4))


class TestNormWeight:
    @given(st.integers(1, 6), st.floats(-10, 10))
    def test_single_string(self, n, q):
        assert_allclose(norm_weight(StringConfiguration((n,), (q,))), math.factorial(n) / n, rtol=1e-14)

    def test_degenerate_zero(self):
        assert abs(norm_weight(StringConfiguration((1, 1), (0.3, 0.3)))) < 1e-14

    def test_two_by_two(self):
        # 2! det[[1, 1/(1 - i)], [1/(1 + i), 1]] = 2 (1 - 1/2) = 1
        assert_allclose(norm_weight(StringConfiguration((1, 1), (0.0, 1.0))), 1.0, rtol=1e-14)

    @settings(max_examples=50)
    @given(st.lists(st.integers(1, 3), min_size=2, max_size=3), st.integers(0, 10_000))
    def test_real(self, sizes, seed):
        q = np.random.default_rng(seed).normal(0, 2, len(sizes))
        w = norm_weight(StringConfiguration(tuple(sizes), tuple(q)))
        assert math.isfinite(w)

    def test_too_many_strings(self):
        with pytest.raises(ValueError):
            norm_weight(StringConfiguration((1, 1, 1, 1), (0, 1, 2, 3)))


class TestMoments:
    @pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
    def test_first_moment(self, t):
        assert abs(moment_via_strings(1, t) - (2 * math.pi * t) ** -0.5) < 1e-10

    @pytest.mark.parametrize("t", [0.25, 0.5, 1.0, 1.5])
    def test_second_moment_closed_form(self, t):
        assert_allclose(moment_via_strings(2, t), second_moment_exact(t), rtol=1e-9)

    @pytest.mark.slow
    @pytest.mark.parametrize("t", sorted(Z3))
    def test_third_moment_frozen(self, t):
        assert_allclose(moment_via_strings(3, t), Z3[t], rtol=1e-9)

    def test_normalized_increasing(self):
        t = np.linspace(0.25, 1.5, 6)
        r = [normalized_moment(2, v) for v in t]
        assert np.all(np.diff(r) > 0)

    def test_window(self):
        with pytest.raises(ValueError):
            moment_via_strings(2, 2.0)
        with pytest.raises(ValueError):
            moment_via_strings(4, 0.5)
