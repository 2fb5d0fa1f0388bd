import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from kpzkit.asep import (
    AsepRates,
    AsepState,
    ConeViolation,
    contour_radius_bound,
    gartner_drift_check,
    gartner_transform,
    init_flat,
    init_stationary,
    init_step,
    kmc_evolve,
    required_window,
    simulate_ensemble,
    tau_moment_contour,
    tau_moment_mc,
    weak_asymmetry_config,
)
from kpzkit.io import read_csv
from kpzkit.rng import stream


class TestInit:
    def test_step(self):
        s = init_step(2)
        assert list(s.h) == [-2, -1, 0, -1, -2]
        assert s.at(0) == 0 and s.time == 0

    def test_flat(self):
        assert list(init_flat(2).h) == [0, 1, 0, 1, 0]

    def test_stationary_full(self):
        s = init_stationary(5, 1.0 - 1e-15, stream(0, "x"))
        assert np.all(np.diff(s.growth_heights) == 1)
        assert np.all(s.occupations() == 1)

    def test_stationary_mean_slope(self):
        s = init_stationary(5000, 0.5, stream(1, "x"))
        sl = np.diff(s.h)
        assert abs(sl.mean()) < 3 * sl.std() / math.sqrt(sl.size)

    def test_slope_violation(self):
        with pytest.raises(ValueError):
            AsepState(np.array([0, 1, 1]))

    def test_occupations_step(self):
        # growth frame |j|: sites 1..W occupied
        occ = init_step(3).occupations()
        assert list(occ) == [0, 0, 0, 1, 1, 1]

    def test_csv(self, tmp_path):
        init_step(2).to_csv(tmp_path / "s.csv")
        cols, com = read_csv(tmp_path / "s.csv")
        assert list(cols["h[lattice]"]) == [-2, -1, 0, -1, -2]
        assert com["frame"] == "canonical"


class TestDynamics:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 0.5), st.integers(0, 2 ** 32), st.sampled_from(["step", "flat"]))
    def test_slope_invariant(self, p, seed, init):
        W = 60
        s = init_step(W) if init == "step" else init_flat(W)
        T = 5.0
        out = kmc_evolve(s, AsepRates(p), T, stream(seed, "t"))
        out.check()
        assert out.time == T

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32))
    def test_tasep_monotone(self, seed):
        s = init_flat(80)
        a = kmc_evolve(s, AsepRates(0.0), 4.0, stream(seed, "m"))
        b = kmc_evolve(a, AsepRates(0.0), 4.0, stream(seed, "m2"))
        # canonical heights only decrease under TASEP growth
        assert np.all(a.h <= s.h) and np.all(b.h <= a.h)

    def test_reproducible(self):
        s = init_step(100)
        a = kmc_evolve(s, AsepRates(0.3), 10.0, stream(5, "r"))
        b = kmc_evolve(s, AsepRates(0.3), 10.0, stream(5, "r"))
        assert np.array_equal(a.h, b.h) and a.events == b.events

    def test_cone_guard(self):
        with pytest.raises(ConeViolation):
            kmc_evolve(init_step(10), AsepRates(0.0), 5.0, stream(0, "c"))
        assert required_window(AsepRates(0.2), 5.0) == 21

    def test_zero_duration(self):
        s = init_step(10)
        assert np.array_equal(kmc_evolve(s, AsepRates(0.1), 0.0, stream(0, "z")).h, s.h)

    def test_ensemble_subset(self):
        H, _ = simulate_ensemble("step", AsepRates(0.0), [5.0, 10.0], [0, 3], 6, 11)
        H2, _ = simulate_ensemble("step", AsepRates(0.0), [5.0, 10.0], [0, 3], 3, 11, start=3)
        assert np.array_equal(H[3:], H2)
        assert np.all(H[:, 1] <= H[:, 0])

    def test_flip_count_linear(self):
        # stationary rho = 1/2: valleys and peaks each have density 1/4 of the bonds
        W, rates = 400, AsepRates(0.3)
        rate = []
        for T in (20.0, 40.0):
            _, ev = simulate_ensemble("stationary", rates, [T], [0], 5, 4, W=W)
            rate.append(np.mean(ev) / T / (2 * W))
        assert_allclose(rate, 0.25, rtol=0.03)

    def test_tasep_speed(self):
        H, _ = simulate_ensemble("step", AsepRates(0.0), [200.0], [0], 200, 2)
        # canonical frame: h(0, t)/t -> -1/2 with the jump rate normalized to 1
        v = H[:, 0, 0] / 200.0
        # -1/2 plus the t^{-2/3} Tracy-Widom mean correction with Gamma = 1/2
        expected = -0.5 + 0.5 ** (1 / 3) * -1.7710868074116 * 200.0 ** (-2 / 3)
        assert abs(v.mean() - expected) < 0.01


class TestGartner:
    def test_initial_value(self):
        z = gartner_transform(init_step(5), AsepRates(0.2))
        assert z[5] == 1.0 and np.all(z > 0)

    def test_tau_bounds(self):
        for p in (0.5, 0.0):
            with pytest.raises(ValueError):
                gartner_transform(init_step(5), AsepRates(p))

    def test_drift(self):
        mean, se = gartner_drift_check(AsepRates(0.25), 1.0, 0.05, [-1, 0, 1, 2], 4000, 3)
        assert np.all(np.abs(mean) < 3 * se + 1e-3)


class TestWeakAsymmetry:
    def test_values(self):
        c = weak_asymmetry_config(1.0)
        assert (c.rates.q, c.rates.p) == (1.0, 0.0)
        c = weak_asymmetry_config(0.01)
        assert_allclose((c.rates.q, c.rates.p), (0.55, 0.45), rtol=1e-14)
        assert c.time_factor == 1e4 and c.space_factor == 100
        assert abs(c.half_log_tau / -0.1 - 1) < 0.1

    def test_range(self):
        for e in (0.0, 1.5):
            with pytest.raises(ValueError):
                weak_asymmetry_config(e)


class TestTauMoments:
    @pytest.mark.parametrize("sites", [[1], [2], [1, 2], [1, 3], [2, 3, 5]])
    def test_t0(self, sites):
        tau = 0.25
        rates = AsepRates(tau / (1 + tau))
        exact = tau ** sum(j - 1 for j in sites)
        v, _ = tau_moment_contour(len(sites), sites, 0.0, rates)
        assert_allclose(v, exact, rtol=1e-10)
        mc, se = tau_moment_mc(len(sites), sites, 0.0, rates, 3, 0)
        assert_allclose(mc, exact, rtol=1e-14) and se == 0.0

    def test_node_doubling(self):
        rates = AsepRates(0.2)
        a, _ = tau_moment_contour(1, [1], 2.0, rates, nodes=1024, tol=1.0)
        b, _ = tau_moment_contour(1, [1], 2.0, rates, nodes=2048, tol=1.0)
        assert abs(a - b) < 1e-10

    def test_radius_constraint(self):
        with pytest.raises(ValueError):
            tau_moment_contour(1, [1], 1.0, AsepRates(0.2), radius=contour_radius_bound(0.25) * 1.01)

    def test_unsorted_sites(self):
        with pytest.raises(ValueError):
            tau_moment_mc(2, [2, 1], 1.0, AsepRates(0.2), 10, 0)

    @pytest.mark.parametrize("N,sites", [(1, [1]), (2, [1, 2])])
    def test_contour_vs_mc(self, N, sites):
        rates = AsepRates(0.2)
        exact, _ = tau_moment_contour(N, sites, 2.0, rates)
        est, se = tau_moment_mc(N, sites, 2.0, rates, 20000, 17)
        assert abs(est - exact) < 3 * se

    def test_observable_bounded(self):
        rates = AsepRates(0.2)
        H, _ = simulate_ensemble("step", rates, [3.0], [-3, 0, 2], 50, 1, frame="growth")
        zb = rates.tau ** ((H + np.array([-3, 0, 2])) / 2)
        assert np.all(zb <= 1 + 1e-15)
