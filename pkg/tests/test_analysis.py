"""Tests for the closed-form interference powers, SINRs, and the
amplifying-factor objective."""

import math

import numpy as np
import pytest

from fdrelay import analysis as an
from fdrelay.coding import scheme2_power_beta
from fdrelay.core import ChannelRealization


def make_channel(h_sr=1.0, h_rd=1.0, h_li=0.8, h_sd=1.0, sigma2_r=1e-3,
                 sigma2_d=1e-3, sigma2_h=1e-2, delta_h=0j):
    return ChannelRealization(h_sr=h_sr, h_rd=h_rd, h_li=h_li, h_sd=h_sd,
                              sigma2_r=sigma2_r, sigma2_d=sigma2_d,
                              sigma2_h=sigma2_h, delta_h=delta_h)


def random_channel(rng, **kw):
    z = rng.standard_normal(8) * math.sqrt(0.5)
    return make_channel(h_sr=z[0] + 1j * z[1], h_rd=z[2] + 1j * z[3],
                        h_li=z[4] + 1j * z[5], h_sd=z[6] + 1j * z[7], **kw)


def interference_sum_brute(m):
    """Independent oracle for the re-encoding interference double sum."""
    b = len(m)
    total = 0.0
    for j in range(2, 2 * b + 1):
        inner = sum(m[u - 1] * m[v - 1]
                    for u in range(1, b + 1) for v in range(1, b + 1)
                    if u + v == j)
        total += abs(inner) ** 2
    return total


class TestPIs1:
    def test_zero_estimation_error(self):
        ch = make_channel(sigma2_h=0.0)
        assert an.p_is1(ch, [0.6, 0.8]) == 0.0

    def test_single_tap_reduces_to_delay_diversity(self):
        ch = make_channel(h_sr=0.7 - 0.4j, sigma2_r=0.05)
        assert an.p_is1(ch, [1.0]) == pytest.approx(an.p_idd(ch), rel=1e-12)

    def test_hand_value_two_equal_taps(self):
        # sum over j of |sum_{u+v=j} m_u m_v|^2 = 1/4 + 1 + 1/4 = 3/2.
        ch = make_channel(h_sr=1.0, sigma2_r=0.0, sigma2_h=0.01)
        m = [1 / math.sqrt(2)] * 2
        assert an.p_is1(ch, m) == pytest.approx(0.015, abs=1e-15)

    def test_matches_brute_force_double_sum(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            b = int(rng.integers(1, 7))
            m = rng.standard_normal(b)
            m /= np.linalg.norm(m)
            ch = random_channel(rng)
            h2 = abs(ch.h_sr) ** 2
            expected = (ch.sigma2_h / h2 ** 2 * interference_sum_brute(m)
                        * (h2 + ch.sigma2_r))
            assert an.p_is1(ch, m) == pytest.approx(expected, rel=1e-12)

    def test_never_below_single_tap_interference(self):
        rng = np.random.default_rng(5)
        for _ in range(5000):
            b = int(rng.integers(2, 5))
            m = rng.standard_normal(b)
            m /= np.linalg.norm(m)
            ch = random_channel(rng)
            assert an.p_is1(ch, m) >= an.p_idd(ch) - 1e-15

    def test_two_tap_excess_is_cross_term(self):
        # b = 2 algebra: excess over the single-tap case is 2 m1^2 m2^2.
        rng = np.random.default_rng(7)
        ch = make_channel(h_sr=0.9 + 0.2j, sigma2_r=0.02, sigma2_h=0.03)
        for _ in range(50):
            m = rng.standard_normal(2)
            m /= np.linalg.norm(m)
            h2 = abs(ch.h_sr) ** 2
            excess = (an.p_is1(ch, m) - an.p_idd(ch))
            expected = (ch.sigma2_h / h2 ** 2 * (h2 + ch.sigma2_r)
                        * 2 * m[0] ** 2 * m[1] ** 2)
            assert excess == pytest.approx(expected, rel=1e-9)


class TestSinrs:
    def test_noiseless_limit_is_infinite(self):
        ch = make_channel(sigma2_r=0.0, sigma2_d=0.0, sigma2_h=0.0)
        assert an.gamma_s1(ch, [0.6, 0.8]) == math.inf
        assert an.gamma_dd(ch) == math.inf

    def test_no_direct_link_numerator(self):
        ch = make_channel(h_sd=0.0, sigma2_h=0.0)
        den = ch.sigma2_r / 1.0 + ch.sigma2_d / 1.0
        assert an.gamma_s1(ch, [1.0, 0.0]) == pytest.approx(1.0 / den)

    def test_ordering_gamma_s1_below_gamma_dd(self):
        rng = np.random.default_rng(9)
        for _ in range(5000):
            b = int(rng.integers(2, 5))
            m = rng.standard_normal(b)
            m /= np.linalg.norm(m)
            ch = random_channel(rng)
            assert an.gamma_s1(ch, m) <= an.gamma_dd(ch) + 1e-12

    def test_monotone_in_noise_and_error_variances(self):
        base = dict(h_sr=0.9, h_rd=1.1, h_li=0.7, h_sd=0.8)
        m = [1 / math.sqrt(3)] * 3
        for key in ("sigma2_r", "sigma2_d", "sigma2_h"):
            values = []
            for v in (1e-4, 1e-3, 1e-2, 1e-1):
                kw = dict(base, sigma2_r=1e-3, sigma2_d=1e-3, sigma2_h=1e-3)
                kw[key] = v
                ch = make_channel(**kw)
                values.append((an.gamma_s1(ch, m), an.gamma_dd(ch),
                               an.gamma_s2(ch, 0.6, 3)))
            arr = np.array(values)
            assert np.all(np.diff(arr, axis=0) < 0)


class TestPIs2:
    def test_zero_estimation_error(self):
        ch = make_channel(sigma2_h=0.0)
        assert an.p_is2(ch, 0.5, 3) == 0.0

    def test_zero_beta_limit(self):
        ch = make_channel()
        assert an.p_is2(ch, 0.0, 3) == 0.0
        assert an.p_is2_from_taps(ch, 0.0, 3) == 0.0

    def test_closed_form_matches_tap_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(2000):
            ch = random_channel(rng, sigma2_h=10 ** rng.uniform(-4, -1))
            b = int(rng.integers(2, 7))
            mag = abs(ch.h_li_est)
            beta = rng.uniform(0.05, 0.95) / mag if mag > 0 else 0.5
            closed = an.p_is2(ch, beta, b)
            taps = an.p_is2_from_taps(ch, beta, b)
            assert closed == pytest.approx(taps, rel=1e-12)

    def test_hand_enumeration_b2(self):
        # b = 2 taps: j=2,3 with weights (j-1) beta^j h^(j-2), plus the two
        # late cancellation leftovers h^(j+1) beta^(j+3), j = 1, 2.
        ch = make_channel(h_sr=1.0, h_li=0.5, sigma2_r=0.0, sigma2_h=0.04)
        beta = 0.6
        h = 0.5
        total = (abs(beta ** 2) ** 2 + abs(2 * h * beta ** 3) ** 2
                 + abs(h ** 2 * beta ** 4) ** 2 + abs(h ** 3 * beta ** 5) ** 2)
        assert an.p_is2_from_taps(ch, beta, 2) == pytest.approx(0.04 * total, rel=1e-12)
        assert an.p_is2(ch, beta, 2) == pytest.approx(0.04 * total, rel=1e-12)

    def test_unstable_loop_rejected(self):
        ch = make_channel(h_li=2.0)
        with pytest.raises(ValueError):
            an.p_is2(ch, 0.6, 3)


class TestGammaS2AndPhi:
    def test_assembly_oracle(self):
        # Rebuild the SINR from its pieces via the independent tap route.
        rng = np.random.default_rng(13)
        for _ in range(500):
            ch = random_channel(rng)
            b = int(rng.integers(2, 6))
            mag = abs(ch.h_li_est)
            beta = rng.uniform(0.1, 0.9) / mag if mag > 0 else 0.5
            a2 = (mag * beta) ** 2
            s = sum(a2 ** j for j in range(b))
            hrd2 = abs(ch.h_rd) ** 2
            num = hrd2 * beta ** 2 * s + abs(ch.h_sd) ** 2
            den = (hrd2 * (ch.sigma2_r / abs(ch.h_sr) ** 2 * beta ** 2 * s
                           + an.p_is2_from_taps(ch, beta, b)) + ch.sigma2_d)
            assert an.gamma_s2(ch, beta, b) == pytest.approx(num / den, rel=1e-12)

    def test_phi_exact_reduces_to_noise_term_without_error(self):
        ch = make_channel(sigma2_h=0.0)
        beta, b = 0.5, 3
        a2 = (abs(ch.h_li_est) * beta) ** 2
        s = sum(a2 ** j for j in range(b))
        expected = ch.sigma2_d / abs(ch.h_rd) ** 2 / (beta ** 2 * s)
        assert an.phi_exact(ch, beta, b) == pytest.approx(expected, rel=1e-12)

    def test_truncated_bound_tracks_exact_for_small_loop_gain(self):
        # The truncated objective drops a^n (n > 2) terms; over a <= 0.5 it
        # stays within ~12% of the exact objective and mostly above it.
        ratios = []
        for a in np.linspace(0.05, 0.5, 10):
            for b in (2, 3, 4, 6):
                for sh2 in (1e-4, 1e-2, 1e-1):
                    for sd2 in (1e-4, 1e-2):
                        ch = make_channel(h_li=0.8, sigma2_h=sh2, sigma2_d=sd2)
                        beta = a / abs(ch.h_li_est)
                        ratios.append(an.phi_approx(ch, beta)
                                      / an.phi_exact(ch, beta, b))
        assert min(ratios) > 0.88

    def test_truncated_bound_invalid_region_is_inf(self):
        ch = make_channel(h_li=1.0)
        assert an.phi_approx(ch, 0.8) == math.inf


class TestBetaStar:
    def test_worked_value(self):
        ch = make_channel(h_sr=1.0, h_rd=1.0, h_li=1.0, h_sd=1.0,
                          sigma2_r=0.1, sigma2_d=0.01, sigma2_h=0.01)
        assert an.beta_star(ch) == pytest.approx(0.5727, abs=1e-4)

    def test_vanishing_error_limit(self):
        ch = make_channel(h_li=1.5, sigma2_h=0.0)
        assert an.beta_star(ch) == pytest.approx(1 / (math.sqrt(2) * 1.5))

    def test_minimum_value_identity(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            ch = random_channel(rng, sigma2_h=10 ** rng.uniform(-4, -1),
                                sigma2_d=10 ** rng.uniform(-5, -2))
            bs = an.beta_star(ch)
            assert an.phi_approx(ch, bs) == pytest.approx(an.phi_min(ch), rel=1e-9)

    def test_grid_search_locates_minimizer(self):
        rng = np.random.default_rng(19)
        for _ in range(200):
            ch = random_channel(rng, sigma2_h=10 ** rng.uniform(-4, -1),
                                sigma2_d=10 ** rng.uniform(-5, -2))
            c = abs(ch.h_li_est)
            upper = (1 / math.sqrt(2)) / c if c > 0 else 5.0
            grid = np.linspace(upper * 1e-4, upper * (1 - 1e-9), 20001)
            vals = [an.phi_approx(ch, b) for b in grid]
            best = grid[int(np.argmin(vals))]
            assert best == pytest.approx(an.beta_star(ch), rel=0.01)

    def test_loop_gain_always_inside_validity_region(self):
        rng = np.random.default_rng(23)
        for _ in range(1000):
            ch = random_channel(rng, sigma2_h=10 ** rng.uniform(-5, 0))
            a = an.beta_star(ch) * abs(ch.h_li_est)
            assert a <= 1 / math.sqrt(2) + 1e-12


class TestSinrChain:
    def test_error_dominant_regime_medians(self):
        # sigma_h^2 >> sigma_d^2: amplifier control puts the self-coding
        # scheme ahead and re-encoding last, in the median.
        rng = np.random.default_rng(29)
        taps = np.full(3, 1 / math.sqrt(3))
        d_s2_dd, d_dd_s1 = [], []
        for _ in range(2000):
            ch = random_channel(rng, sigma2_r=1e-3, sigma2_d=1e-4, sigma2_h=1e-1)
            beta = min(an.beta_star(ch), scheme2_power_beta(ch.h_li_est, 3))
            d_s2_dd.append(an.gamma_s2(ch, beta, 3) - an.gamma_dd(ch))
            d_dd_s1.append(an.gamma_dd(ch) - an.gamma_s1(ch, taps))
        assert np.median(d_s2_dd) >= 0
        assert np.median(d_dd_s1) >= 0

    def test_report_fields_consistent(self):
        ch = make_channel(sigma2_h=1e-2, delta_h=0.05 + 0.02j)
        rep = an.sinr_report(ch, np.full(3, 1 / math.sqrt(3)), 3)
        assert rep.beta_used <= rep.beta_star + 1e-12
        assert rep.a == pytest.approx(abs(ch.h_li_est) * rep.beta_used)
        assert rep.phi_of_beta(rep.beta_used) >= rep.phi_min - 1e-12
        assert rep.p_is1 >= rep.p_idd
