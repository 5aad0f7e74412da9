import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdefit.model import (CONVERGES, DIVERGES, UNDETERMINED, ConstantSequence,
                           PowerInitial, SingularNoiseError,
                           SpdeModel, ZeroInitial, check_assumptions,
                           check_divergence, fractional_heat_model, lam,
                           lower_order_model, model_from_config,
                           model_to_config, mu, noise_factor)


class TestMu:
    def test_affine_evaluation(self):
        m = SpdeModel(nu=ConstantSequence(2.0), rho=ConstantSequence(3.0),
                      gamma=0.0, m=1.0, sigma=1.0, theta_true=1.0)
        assert mu(m, 1, 1.5) == 6.0

    def test_degenerate_theta(self):
        m = lower_order_model(d=3, c1=2.5)
        for k in (1, 5, 40):
            assert mu(m, k, 0.0) == m.rho(k)

    def test_example_lower_order_exact(self):
        # mu_1(0.5) = 0.5 + pi^2 for the exact one-dimensional spectrum
        m = lower_order_model(d=1, exact_1d=True)
        assert mu(m, 1, 0.5) == pytest.approx(10.369604401089358, rel=1e-15)

    @given(theta1=st.floats(0.01, 50), theta2=st.floats(0.01, 50),
           a=st.floats(0, 1), k=st.integers(1, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_affinity_property(self, theta1, theta2, a, k):
        m = fractional_heat_model(d=2, beta=1.3, c1=0.7)
        blend = mu(m, k, a * theta1 + (1 - a) * theta2)
        combo = a * mu(m, k, theta1) + (1 - a) * mu(m, k, theta2)
        assert blend == pytest.approx(combo, rel=1e-13, abs=1e-300)


class TestLambda:
    def test_fourth_root(self):
        m = SpdeModel(nu=ConstantSequence(16.0), rho=ConstantSequence(0.0),
                      gamma=0.5, m=2.0, sigma=1.0, theta_true=1.0)
        assert lam(m, 1) == 2.0

    def test_gamma_zero_noise_factor_is_one(self):
        m = SpdeModel(nu=ConstantSequence(7.3), rho=ConstantSequence(0.0),
                      gamma=0.0, m=1.0, sigma=1.0, theta_true=1.0)
        assert noise_factor(m, 3) == 1.0

    def test_exact_1d_lambda_is_sqrt_spectrum(self):
        # nu_k = (pi k)^(2 beta) with m = beta gives lambda_k = pi k
        m = fractional_heat_model(d=1, beta=0.25, exact_1d=True)
        for k in (1, 2, 9):
            assert lam(m, k) == pytest.approx(math.pi * k, rel=1e-14)

    def test_singular_noise(self):
        m = SpdeModel(nu=ConstantSequence(0.0), rho=ConstantSequence(1.0),
                      gamma=0.5, m=1.0, sigma=1.0, theta_true=1.0)
        with pytest.raises(SingularNoiseError):
            noise_factor(m, 1)


class TestFamilies:
    def test_fractional_heat_exact_linear(self):
        m = fractional_heat_model(d=1, beta=0.5, exact_1d=True)
        assert m.nu(1) == pytest.approx(math.pi, rel=1e-15)
        assert m.nu(4) == pytest.approx(4 * math.pi, rel=1e-15)

    def test_fractional_heat_weyl(self):
        m = fractional_heat_model(d=2, beta=1.0, c1=1.0)
        for k in (1, 2, 100):
            assert m.nu(k) == pytest.approx(float(k), rel=1e-15)

    def test_fractional_heat_quarter_power(self):
        m = fractional_heat_model(d=1, beta=0.25, exact_1d=True)
        assert m.nu(4) == pytest.approx(3.5449077018110318, rel=1e-15)

    def test_fractional_heat_nu_ratio(self):
        m = fractional_heat_model(d=1, beta=0.7, exact_1d=True)
        ks = np.arange(1, 200)
        nu = m.nu(ks)
        assert np.all(np.diff(nu) > 0)
        assert m.nu(7) / m.nu(14) == pytest.approx(2 ** (-2 * 0.7), rel=1e-13)

    def test_lower_order(self):
        m = lower_order_model(d=6, c1=1.0)
        assert m.rho(64) == pytest.approx(4.0, rel=1e-15)
        assert m.nu(1) == 1.0 and m.nu(12345) == 1.0
        assert m.gamma == 0.0

    def test_lower_order_exact_1d(self):
        m = lower_order_model(d=1, exact_1d=True)
        assert m.rho(2) == pytest.approx(4 * math.pi**2, rel=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            fractional_heat_model(d=0, beta=1.0)
        with pytest.raises(ValueError):
            fractional_heat_model(d=2, beta=1.0, exact_1d=True)
        with pytest.raises(ValueError):
            lower_order_model(d=2, theta=-1.0)


class TestCheckAssumptions:
    def test_fractional_heat_sup_ratio(self):
        # rho = 0 so nu/mu = 1/theta; sup over [0.5, 2] hit at theta = 0.5
        m = fractional_heat_model(d=1, beta=0.25, exact_1d=True,
                                  theta_domain=(0.5, 2.0))
        rep = check_assumptions(m, K=10_000)
        assert rep.ok
        assert rep.sup_nu_over_mu == pytest.approx(2.0, rel=1e-12)

    def test_lower_order_ratio_bounded(self):
        m = lower_order_model(d=6, theta_domain=(0.5, 2.0))
        rep = check_assumptions(m, K=10_000)
        assert rep.ok
        assert rep.sup_nu_over_mu <= 1 / 0.5
        assert rep.nu_constant            # soft warning, not a violation
        assert any("constant" in w for w in rep.warnings)

    def test_negative_nu_flagged(self):
        m = SpdeModel(nu=ConstantSequence(-1.0), rho=ConstantSequence(5.0),
                      gamma=0.0, m=1.0, sigma=1.0, theta_true=1.0)
        rep = check_assumptions(m, K=10)
        assert not rep.ok
        assert any("nu_k < 0" in v for v in rep.violations)

    def test_u0_partial_sum(self):
        m = fractional_heat_model(d=1, beta=0.5, exact_1d=True,
                                  u0=PowerInitial(amplitude=2.0, decay=1.0))
        rep = check_assumptions(m, K=1000)
        # sum (2/k)^2 -> 4 * pi^2/6
        assert rep.u0_squared_partial_sum == pytest.approx(
            4 * math.pi**2 / 6, rel=1e-2)

    def test_prefix_too_short(self):
        with pytest.raises(ValueError):
            check_assumptions(lower_order_model(d=2), K=1)


class TestCheckDivergence:
    def test_example_both_diverge(self):
        m = fractional_heat_model(d=1, beta=0.25, gamma=0.0, exact_1d=True)
        rep = check_divergence(m, 1.0, K=100)
        assert rep.consistency_diverges == DIVERGES
        assert rep.normality_diverges == DIVERGES

    def test_example_normality_converges(self):
        # 2*beta + 8*gamma = 1.2 > d = 1
        m = fractional_heat_model(d=1, beta=0.6, gamma=0.0, exact_1d=True)
        rep = check_divergence(m, 1.0, K=100)
        assert rep.consistency_diverges == DIVERGES
        assert rep.normality_diverges == CONVERGES

    def test_lower_order_boundary(self):
        rep = check_divergence(lower_order_model(d=6), 1.0, K=100)
        assert rep.normality_diverges == DIVERGES
        rep = check_divergence(lower_order_model(d=5), 1.0, K=100)
        assert rep.normality_diverges == CONVERGES

    def test_partial_sums_nondecreasing(self):
        m = fractional_heat_model(d=1, beta=0.25, gamma=0.1, exact_1d=True)
        rep = check_divergence(m, 0.7, K=512)
        s1 = [row[1] for row in rep.partial_sums]
        s2 = [row[2] for row in rep.partial_sums]
        assert s1 == sorted(s1) and s2 == sorted(s2)
        assert all(v > 0 for v in s1 + s2)

    def test_generic_model_undetermined(self):
        m = SpdeModel(nu=ConstantSequence(2.0), rho=ConstantSequence(1.0),
                      gamma=0.0, m=1.0, sigma=1.0, theta_true=1.0)
        rep = check_divergence(m, 1.0, K=64)
        assert rep.consistency_diverges == UNDETERMINED
        assert rep.exponent_verdict is None

    def test_exponent_grid_matches_predicate(self):
        # exact boolean agreement with 2*beta + 8*gamma <= d over the grid
        for d in range(1, 9):
            for beta in np.arange(0.1, 2.05, 0.1):
                for gamma in np.arange(0.0, 1.05, 0.125):
                    m = fractional_heat_model(d=d, beta=float(beta),
                                              gamma=float(gamma))
                    rep = check_divergence(m, 1.0, K=10)
                    want = DIVERGES if 2 * beta + 8 * gamma <= d else CONVERGES
                    assert rep.normality_diverges == want

    def test_lower_order_grid(self):
        for d in range(1, 11):
            rep = check_divergence(lower_order_model(d=d), 1.0, K=10)
            assert rep.normality_diverges == (DIVERGES if d >= 6 else CONVERGES)
            assert rep.consistency_diverges == (DIVERGES if d >= 4 else CONVERGES)


class TestConfigRoundTrip:
    def test_fractional_heat(self):
        m = fractional_heat_model(d=1, beta=0.25, gamma=0.5, sigma=2.0,
                                  theta=0.8, exact_1d=True,
                                  theta_domain=(0.2, 5.0),
                                  u0=PowerInitial(amplitude=1.5, decay=0.75))
        cfg = model_to_config(m)
        m2 = model_from_config(cfg)
        ks = np.arange(1, 50)
        assert np.array_equal(m.nu(ks), m2.nu(ks))
        assert np.array_equal(np.atleast_1d(m.u0(ks)), np.atleast_1d(m2.u0(ks)))
        assert m2.theta_domain == (0.2, 5.0)
        assert m2.sigma == 2.0 and m2.gamma == 0.5

    def test_schema_example(self):
        cfg = {"family": "fractional_heat", "d": 1, "beta": 0.25,
               "gamma": 0.0, "sigma": 1.0, "theta": 1.0, "c1": 1.0,
               "exact_1d": True, "theta_domain": [0.1, 10.0],
               "u0": {"kind": "zero"}}
        m = model_from_config(cfg)
        assert isinstance(m.u0, ZeroInitial)
        assert m.nu(1) == pytest.approx(math.pi**0.5, rel=1e-15)

    def test_explicit_u0(self):
        m = model_from_config({"family": "lower_order", "d": 4,
                               "u0": {"kind": "explicit", "values": [1.0, -0.5]}})
        assert m.u0(1) == 1.0 and m.u0(2) == -0.5 and m.u0(3) == 0.0

    def test_memoization_contract(self):
        m = fractional_heat_model(d=3, beta=1.1, c1=0.9)
        assert m.nu(17) == m.nu(17)
        assert m.nu(np.arange(1, 5)).tolist() == [m.nu(k) for k in range(1, 5)]
