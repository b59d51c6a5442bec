import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iqcgd import rates
from iqcgd.rates import FunctionClass, ProblemSpec, RegimeKind


def branches(m, L, a, d):
    return 1 - (1 - d) * a * m, (1 + d) * a * L - 1


class TestProblemSpec:
    @pytest.mark.parametrize("args", [(0, 1, 0.1, 0), (1, 1, 0.1, 0), (2, 1, 0.1, 0), (1, 10, 0, 0),
                                      (1, 10, -0.1, 0), (1, 10, 0.1, 1.0), (1, 10, 0.1, -0.1),
                                      (1, 10, float("nan"), 0)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            ProblemSpec(*args)

    def test_kappa(self):
        assert ProblemSpec(2, 10, 0.1).kappa == 5


class TestRhoGd:
    def test_examples(self):
        assert rates.rho_gd(1, 10, 2 / 11) == pytest.approx(9 / 11, abs=1e-15)
        assert rates.rho_gd(1, 10, 0.1) == pytest.approx(0.9, abs=1e-15)
        assert rates.rho_gd(1, 10, 0) == 1

    @pytest.mark.parametrize("m,L", [(0, 1), (-1, 2), (2, 2)])
    def test_domain(self, m, L):
        with pytest.raises(ValueError):
            rates.rho_gd(m, L, 0.1)

    def test_noisy_examples(self):
        spec = ProblemSpec(1, 10, 0.15, 0.1)
        assert rates.rho_gd_noisy(spec) == pytest.approx(0.865, abs=1e-15)
        ap = rates.alpha_plus(1, 10, 0.1)
        assert rates.rho_gd_noisy(ProblemSpec(1, 10, ap, 0.1)) == pytest.approx(9 / 11 + 0.1, abs=1e-14)

    @given(st.floats(0.01, 100), st.floats(1.01, 1000), st.floats(0.0, 1.0))
    def test_noiseless_reduction(self, m, kappa, frac):
        L = m * kappa
        a = max(frac * 2.5 / L, 1e-9)
        assert rates.rho_gd_noisy(ProblemSpec(m, L, a, 0.0)) == rates.rho_gd(m, L, a)

    @given(st.floats(0.01, 100), st.floats(1.01, 1000), st.floats(1e-3, 1.0), st.floats(0.0, 0.99))
    def test_noise_never_helps(self, m, kappa, frac, d):
        L = m * kappa
        spec = ProblemSpec(m, L, frac * 2.5 / L, d)
        assert rates.rho_gd_noisy(spec) - rates.rho_gd(m, L, spec.alpha) >= 0
        assert rates.rho_gd_noisy(spec) == pytest.approx(max(branches(m, L, spec.alpha, d)), rel=1e-14)


class TestThresholds:
    def test_examples(self):
        assert rates.alpha_minus(1, 10, 0.1) == pytest.approx(1 / 11, rel=1e-12)
        assert rates.alpha_minus(1, 10, 2 / 11) == pytest.approx(0, abs=1e-15)
        assert rates.alpha_minus(1, 10, 0) == pytest.approx(2 / 11, rel=1e-15)
        assert rates.alpha_plus(1, 10, 0.1) == pytest.approx(0.17438016528925620, rel=1e-12)
        assert rates.alpha_plus(1, 10, 0) == pytest.approx(2 / 11, rel=1e-15)
        assert rates.alpha_plus(1, 10, 0.5) == pytest.approx((2 / 11 + 0.05) / 1.5, rel=1e-15)

    @given(st.floats(0.01, 10), st.floats(1.01, 1000), st.floats(0.0, 0.99))
    def test_ordering(self, m, kappa, d):
        L = m * kappa
        am, ap, mid = rates.alpha_minus(m, L, d), rates.alpha_plus(m, L, d), 2 / (L + m)
        assert am <= ap * (1 + 1e-12)
        assert ap <= mid * (1 + 1e-12)
        assert (am > 0) == (d < 2 / (kappa + 1)) or abs(d - 2 / (kappa + 1)) < 1e-12
        assert ap > 0

    @given(st.floats(1.01, 100), st.floats(0.0, 0.99))
    def test_boundary_rates(self, kappa, d):
        m, L = 1.0, kappa
        target = (kappa - 1) / (kappa + 1) + d
        ap = rates.alpha_plus(m, L, d)
        assert rates.rho_gd_noisy(ProblemSpec(m, L, ap, d)) == pytest.approx(target, abs=1e-12)
        am = rates.alpha_minus(m, L, d)
        if am > 0:
            assert rates.rho_gd_noisy(ProblemSpec(m, L, am, d)) == pytest.approx(target, abs=1e-12)


class TestInteriorRate:
    def test_examples(self):
        assert rates.prop2_rate(ProblemSpec(1, 10, 0.1, 0.1)) == pytest.approx(math.sqrt(0.82818181818181818), rel=1e-12)
        assert rates.prop2_rate(ProblemSpec(1, 10, 0.15, 0.1)) == pytest.approx(0.8726731584954596, rel=1e-12)
        r = rates.prop2_rate(ProblemSpec(1, 10, 0.1, 0.0))
        assert r == pytest.approx(math.sqrt(1 - 2 / 11), rel=1e-12)
        assert r > 0.9

    def test_domain(self):
        with pytest.raises(ValueError):
            rates.prop2_rate(ProblemSpec(1, 10, 2 / 11, 0.1))

    @given(st.floats(1.5, 100), st.floats(0.01, 0.9), st.floats(0.02, 0.98))
    def test_strictly_conservative_inside(self, kappa, d, frac):
        m, L = 1.0, kappa
        lo = max(0.0, rates.alpha_minus(m, L, d))
        hi = min(rates.alpha_plus(m, L, d), 2 / (L + m))
        spec = ProblemSpec(m, L, lo + frac * (hi - lo), d)
        assert rates.prop2_rate(spec) > rates.rho_gd_noisy(spec)


class TestSharp:
    def test_examples(self):
        assert rates.prop3_sharp_rate(1, 10, 0.1) == pytest.approx(10.1 / 11.9, rel=1e-15)
        assert rates.prop3_sharp_rate(1, 10, 0) == pytest.approx(9 / 11, rel=1e-15)
        assert rates.prop3_sharp_rate(1, 2, 0.5) == pytest.approx(2.5 / 3.5, rel=1e-15)

    @given(st.floats(1.01, 1000), st.floats(0, 0.99))
    def test_attained_at_sharp_step(self, kappa, d):
        spec = ProblemSpec(1, kappa, rates.alpha_sharp(1, kappa, d), d)
        assert rates.rho_gd_noisy(spec) == pytest.approx(rates.prop3_sharp_rate(1, kappa, d), rel=1e-12)


class TestClassify:
    def test_examples(self):
        r = rates.classify_regime(ProblemSpec(1, 10, 0.05, 0.1), FunctionClass.SECTOR)
        assert r.kind is RegimeKind.PROP1_SMALL_STEP and r.certified_rho == pytest.approx(0.955, abs=1e-15)
        r = rates.classify_regime(ProblemSpec(1, 10, 0.15, 0.1), "strongly-convex")
        assert r.kind is RegimeKind.PROP3_STRONGLY_CONVEX and r.certified_rho == pytest.approx(0.865, abs=1e-15)
        r = rates.classify_regime(ProblemSpec(1, 10, 0.15, 0.1), "sector")
        assert r.kind is RegimeKind.PROP2_INTERIOR and r.certified_rho == pytest.approx(0.872673158, abs=1e-9)

    def test_noiseless(self):
        r = rates.classify_regime(ProblemSpec(1, 10, 0.15, 0.0), "strongly-convex")
        assert r.kind is RegimeKind.NOISELESS_SECTOR and r.certified_rho == pytest.approx(0.85)

    def test_large_step_divergent_reported(self):
        r = rates.classify_regime(ProblemSpec(1, 10, 0.3, 0.5), "sector")
        assert r.kind is RegimeKind.PROP1_LARGE_STEP and r.certified_rho == pytest.approx(3.5)
        assert not r.converges

    def test_strongly_convex_outside_window_falls_back(self):
        spec = ProblemSpec(1, 10, 0.05, 0.1)
        assert rates.classify_regime(spec, "strongly-convex") == rates.classify_regime(spec, "sector")

    def test_small_step_branch_iff(self):
        for d in np.linspace(0, 0.5, 11):
            for a in np.linspace(0.01, 0.3, 30):
                spec = ProblemSpec(1, 10, a, d)
                kind = rates.classify_regime(spec, "sector").kind
                am = rates.alpha_minus(1, 10, d)
                small = d > 0 and d < 2 / 11 and a <= am + rates.BRANCH_TOL
                assert (kind is RegimeKind.PROP1_SMALL_STEP) == small
                if d > 0 and a >= rates.alpha_plus(1, 10, d) + rates.BRANCH_TOL:
                    assert kind is RegimeKind.PROP1_LARGE_STEP

    @pytest.mark.parametrize("cls", list(FunctionClass))
    def test_never_below_quadratic_bound_and_monotone_in_delta(self, cls):
        for kappa in (2, 10, 100):
            for a in np.linspace(0.05, 2.2, 25) / kappa:
                prev = -np.inf
                for d in np.linspace(0, 0.95, 40):
                    spec = ProblemSpec(1, kappa, a, d)
                    r = rates.classify_regime(spec, cls).certified_rho
                    assert r >= rates.rho_gd_noisy(spec) - 1e-15
                    assert r >= prev - 1e-12
                    prev = r

    def test_tie_goes_to_exact_branch(self):
        am = rates.alpha_minus(1, 10, 0.1)
        spec = ProblemSpec(1, 10, am * (1 + 1e-14), 0.1)
        assert rates.classify_regime(spec, "sector").kind is RegimeKind.PROP1_SMALL_STEP
