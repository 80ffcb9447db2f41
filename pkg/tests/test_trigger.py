import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from resilient_optsim.timefns import Const, ExpDecay
from resilient_optsim.trigger import (
    ChannelState, GainSchedule, MEIOverrun, T0, T_mei_for, activation_decay, activation_step,
    etc_fire, kappa, zero_crossing,
)


def robot_gains(**kw):
    base = dict(alpha=0.5, beta=0.5, rho=0.1, gamma_delta=ExpDecay(1.0, 0.2), gamma_w=ExpDecay(1.0, 0.2),
                gamma_c=0.1, eta_bar=0.02, m0=1.0, d_max=5, sigma1_per_kappa=3.0, sigma2_per_kappa=0.625)
    base.update(kw)
    return GainSchedule(**base)


class TestBounds:
    def test_T0_value(self):
        assert T0(3.6, 0.75, 1.0) == pytest.approx(0.280719, abs=1e-6)

    def test_zero_crossing_matches_bisection(self):
        root = brentq(lambda t: activation_decay(1.0, t, 3.6, 0.75), 0.0, 5.0, xtol=1e-14)
        assert zero_crossing(3.6, 0.75, 1.0) == pytest.approx(root, abs=1e-12)
        assert root == pytest.approx(0.48829, abs=1e-5)

    def test_m_at_T0_still_positive(self):
        # exact solution at the conservative bound; well above zero
        m = activation_decay(1.0, T0(3.6, 0.75, 1.0), 3.6, 0.75)
        assert m == pytest.approx(0.231505, abs=1e-6)

    def test_limits_and_errors(self):
        assert T0(3.0, 1.0, 1e-12) < 1e-11
        for bad in [(0, 1, 1), (1, 0, 1), (1, 1, 0)]:
            with pytest.raises(ValueError):
                T0(*bad)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 50), st.floats(0.01, 50), st.floats(0.01, 50))
    def test_T0_below_crossing(self, s1, s2, m):
        assert T0(s1, s2, m) < zero_crossing(s1, s2, m)


class TestKappa:
    @pytest.mark.parametrize("c, c0, v, expected", [(1.15, 1, 0.2, 1.2), (1.0, 1, 0.2, 1.2), (1.5, 1, 0.5, 2.0), (1.2, 1, 0.2, 1.4)])
    def test_bands(self, c, c0, v, expected):
        assert kappa(c, c0, v) == pytest.approx(expected)

    def test_errors(self):
        with pytest.raises(ValueError):
            kappa(0.9, 1.0, 0.2)
        with pytest.raises(ValueError):
            kappa(1.0, 1.0, 0.0)

    @given(st.floats(1.0, 10.0))
    def test_strict_upper_edge(self, c):
        k = kappa(c, 1.0, 0.2)
        assert k - 0.2 - 1e-12 <= c < k


class TestGainSchedule:
    def test_derived_constants(self):
        g = robot_gains(sigma1_per_kappa=None, sigma2_per_kappa=None)
        assert g.b1 == pytest.approx(3 * 0.5 + 2.5 * 0.5 + 2 * 0.02 * 0.1 / 5 + 0.1 / 10)
        assert g.b2 == 1.0 and g.b_max == g.b1
        assert g.b3 == pytest.approx((1.0 + 0.0008) * 1.0)
        assert g.phi_lower_bound == pytest.approx(4.0032)
        assert g.phi_value > g.phi_lower_bound
        s1, s2 = g.sigmas(1.0)
        assert s1 == pytest.approx(g.b1) and s2 == pytest.approx(0.25 * g.phi_value)

    def test_override_implies_phi(self):
        g = robot_gains()
        s1, s2 = g.sigmas(1.2)
        assert (s1, s2) == pytest.approx((3.6, 0.75))
        # sigma2 / sigma1 = alpha phi / (2 b_M) with b_M = 3 per unit kappa
        assert 2 * 3.0 * 0.625 / (3.0 * 0.5) == pytest.approx(2.5)

    def test_T_hat0_is_T0_at_band_edge(self):
        g = robot_gains()
        for kap in (1.2, 1.4, 2.0):
            s1, s2 = g.sigmas(kap)
            assert g.T_hat0(kap) == pytest.approx(T0(s1, s2, g.m0 / kap))
        assert g.T_hat0(1.2) == pytest.approx(0.261282, abs=1e-6)
        assert g.T_hat0(2.2) > 0.1 > g.T_hat0(2.4)

    def test_T_hat0_textbook_form(self):
        g = robot_gains(sigma1_per_kappa=None, sigma2_per_kappa=None, c_norm=1.3)
        lam2, kap = 1.3**2, 1.4
        ref = 1 / (lam2 * g.b_max * kap) * math.log(0.5 + 0.5 * math.sqrt(1 + 8 * g.b_max * g.m0 / (g.alpha * g.phi_value * kap)))
        assert g.T_hat0(kap) == pytest.approx(ref)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1.0, 2.0))
    def test_T_hat0_below_channel_T0(self, c_hat):
        g = robot_gains()
        s1, s2 = g.sigmas(kappa(c_hat, 1.0, 0.2))
        assert g.T_hat0(kappa(c_hat, 1.0, 0.2)) <= T0(s1, s2, g.m0 / c_hat) + 1e-15


class TestChannel:
    def test_mei_accepted(self):
        ch = ChannelState(0, 1, c_hat=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert T_mei_for(ch, robot_gains()) == 0.1
        assert ch.m == 1.0 and ch.s_hat == 1

    def test_mei_clamped(self):
        ch = ChannelState(0, 1, c_hat=1.0)
        g = robot_gains(m0=1e-6)
        with pytest.warns(RuntimeWarning, match="clamped"):
            t = T_mei_for(ch, g)
        assert 0 < t < 1e-5

    def test_activation_dormant(self):
        ch = ChannelState(0, 1, m=0.7, s_hat=0)
        assert activation_step(ch, 1.0, 3.6, 0.75) == 0.7

    def test_activation_exponential(self):
        ch = ChannelState(0, 1, m=1.0)
        assert activation_step(ch, math.log(2), 1.0, 1e-300) == pytest.approx(0.5)

    def test_overrun(self):
        ch = ChannelState(0, 1, m=1.0)
        with pytest.raises(MEIOverrun):
            activation_step(ch, 1.0, 3.6, 0.75)


class TestEtc:
    C = np.hstack([np.eye(2), np.zeros((2, 2))])

    def fire(self, sent_d, now_d, c_now=1.0, c_hat=1.0, g=None):
        ch = ChannelState(0, 1, delta_hat=np.asarray(sent_d, float), w_hat=np.zeros(4), c_hat=c_hat)
        g = g or robot_gains(gamma_delta=Const(0.1), gamma_w=Const(0.1))
        return etc_fire(ch, self.C, np.asarray(now_d, float), np.zeros(4), c_now, 0.0, g)

    def test_quiet(self):
        assert self.fire([1, 1, 0, 0], [1, 1, 0, 0]) is None

    def test_f1(self):
        assert self.fire([0.5, 0.5, 0, 0], [0, 0, 0, 0]) == "f1"

    def test_velocity_error_invisible(self):
        assert self.fire([0, 0, 5, 5], [0, 0, 0, 0]) is None

    def test_f3(self):
        assert self.fire([0, 0, 0, 0], [0, 0, 0, 0], c_now=1.15) == "f3"
