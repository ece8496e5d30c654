import math

import numpy as np
import pytest

from imbalance_lab import (
    cdt_failure_instance,
    cdt_limit_statistics,
    cdt_limit_worst_error,
    exp_longtail_profile,
    geometric_profile,
    la_iota_star,
    ma_delta_star,
    make_instance,
    pairwise_matrix,
    q_function,
    score_statistics,
    wcelb_la,
    wcelb_la_opt,
    wcelb_ma,
    wcelb_ma_opt,
    wcelb_mm,
    LONGTAIL_10_LISTED,
)
from imbalance_lab.analytic import la_coefficients, ma_coefficients
from conftest import random_instances


class TestDeltaStar:
    def test_equal_signal_balanced_gives_constant_vector(self):
        inst = make_instance(4, 10_000, (80, 80, 80, 80), (0.6,) * 4, seed=0)
        for rho in (0.0, 1.0, math.inf):
            d = ma_delta_star(inst, rho)
            np.testing.assert_allclose(d, d[0], rtol=1e-14)

    def test_limit_proportionality(self):
        inst = make_instance(3, 10**10, (7, 50, 140), (0.9, 0.4, 1.3), seed=0)
        no_bias = ma_delta_star(inst, math.inf) * (inst.signals * inst.sizes)
        assert no_bias.max() / no_bias.min() - 1 < 0.01
        with_bias = ma_delta_star(inst, 3.0) * inst.sizes
        assert with_bias.max() / with_bias.min() - 1 < 0.01

    def test_not_beaten_by_random_search(self):
        rng = np.random.default_rng(11)
        for inst in random_instances(4, rng):
            for rho in (math.inf, float(rng.uniform(0.5, 100))):
                best = wcelb_ma_opt(inst, rho)
                for _ in range(100):
                    delta = rng.uniform(0.05, 5.0, size=inst.c)
                    assert best <= wcelb_ma(inst, delta, rho) + 1e-3


class TestIotaStar:
    def test_constant_shift_on_balanced_equal_signals(self):
        inst = make_instance(3, 10_000, (60, 60, 60), (0.7,) * 3, seed=0)
        iota = la_iota_star(inst, 2.0)
        np.testing.assert_allclose(iota, iota[0], rtol=1e-14)
        mm = pairwise_matrix(score_statistics(inst, ma_coefficients(inst, np.ones(3), 2.0)))
        la = pairwise_matrix(score_statistics(inst, la_coefficients(inst, 2.0, iota)))
        np.testing.assert_allclose(la, mm, atol=1e-12)

    def test_limit_proportional_to_sizes(self):
        inst = make_instance(3, 10**10, (7, 50, 140), (0.5, 0.5, 0.5), seed=0)
        ratio = la_iota_star(inst, 3.0) / inst.sizes
        assert ratio.max() / ratio.min() - 1 < 0.01

    def test_not_beaten_by_random_search_equal_signals(self):
        rng = np.random.default_rng(13)
        for _ in range(4):
            c = int(rng.integers(3, 7))
            N = tuple(int(v) for v in rng.integers(5, 200, size=c))
            s = float(rng.uniform(0.3, 1.2))
            inst = make_instance(c, 10**5, N, (s,) * c, seed=0)
            for rho in (math.inf, float(rng.uniform(1, 500))):
                best = wcelb_la(inst, "star", rho)
                for _ in range(100):
                    iota = rng.uniform(-2.0, 2.0, size=c)
                    assert best <= wcelb_la(inst, iota, rho) + 1e-3


class TestWcelbMm:
    def test_inverse_sqrt_profile_anchor(self):
        N = geometric_profile(4, 200, 100)
        assert N == (2, 9, 43, 200)
        s = tuple(1.2 / math.sqrt(n) for n in N)
        inst = make_instance(4, 10**5, N, s, seed=0)
        value = wcelb_mm(inst, math.inf)
        assert value == pytest.approx(float(q_function(1.2 / math.sqrt(101))), rel=1e-12)
        assert value == pytest.approx(0.4525, abs=1e-4)

    def test_learned_bias_saturates_at_one(self):
        rng = np.random.default_rng(3)
        for inst in random_instances(5, rng):
            if len(set(inst.N)) == 1:
                continue
            assert wcelb_mm(inst, float(rng.uniform(0, 1000))) == 1.0

    def test_balanced_symmetric_value(self):
        inst = make_instance(3, 10**6, (50, 50, 50), (0.4, 0.9, 0.6), seed=0)
        expect = max(float(q_function(s * math.sqrt(50 / 2))) for s in inst.s)
        assert wcelb_mm(inst, math.inf) == pytest.approx(expect, rel=1e-12)


class TestWcelbMa:
    def test_unit_margins_equal_mm(self):
        rng = np.random.default_rng(23)
        for inst in random_instances(5, rng):
            for rho in (math.inf, 4.0):
                assert wcelb_ma(inst, np.ones(inst.c), rho) == wcelb_mm(inst, rho)

    def test_equal_signals_collapse_both_branches(self):
        inst = make_instance(4, 10**5, (5, 50, 100, 200), (0.5,) * 4, seed=0)
        assert wcelb_ma_opt(inst, math.inf) == pytest.approx(wcelb_ma_opt(inst, 7.0), rel=1e-12)

    def test_aligned_signals_prefer_bias(self):
        # sizes and signals sorted the same way: learning a bias helps
        inst = make_instance(4, 10**5, (5, 50, 100, 200), (0.5, 0.7, 0.9, 1.1), seed=0)
        assert wcelb_ma_opt(inst, 2.0) <= wcelb_ma_opt(inst, math.inf) + 1e-15

    def test_reversed_signals_both_orders_possible(self):
        # frozen counterexamples: with reversed signals neither branch wins always
        a = make_instance(2, 10**6, (191, 255), (0.8458708056034175, 0.17087189561177435), seed=0)
        assert wcelb_ma_opt(a, 5.0) < wcelb_ma_opt(a, math.inf)
        b = make_instance(2, 10**6, (3, 39), (2.0283420233462097, 1.9592090591440379), seed=0)
        assert wcelb_ma_opt(b, 5.0) > wcelb_ma_opt(b, math.inf)

    def test_matches_numeric_limit_of_star_family(self):
        # closed form vs finite-d evaluation at the star margins and d = 1e12
        inst12 = make_instance(4, 10**12, (5, 50, 100, 200), (0.5, 0.3, 0.2, 0.1), seed=0)
        for rho in (math.inf, 7.3):
            co = ma_coefficients(inst12, ma_delta_star(inst12, rho), rho)
            numeric = pairwise_matrix(score_statistics(inst12, co)).max()
            assert wcelb_ma_opt(inst12, rho) == pytest.approx(numeric, abs=5e-6)


class TestWcelbLa:
    def test_zero_iota_equals_mm(self):
        rng = np.random.default_rng(31)
        for inst in random_instances(5, rng):
            for rho in (math.inf, 9.0):
                assert wcelb_la(inst, np.zeros(inst.c), rho) == wcelb_mm(inst, rho)

    def test_constant_iota_equals_mm(self):
        inst = make_instance(3, 10**5, (10, 40, 90), (0.5, 0.5, 0.5), seed=0)
        assert wcelb_la(inst, np.full(3, 3.0), math.inf) == wcelb_mm(inst, math.inf)

    def test_star_dominates_ma_for_equal_signals(self):
        rng = np.random.default_rng(37)
        for _ in range(25):
            c = int(rng.integers(3, 11))
            N = tuple(int(v) for v in rng.integers(1, 201, size=c))
            s = float(rng.uniform(0.01, 1.0))
            rho = float(rng.uniform(1.0, 1000.0))
            inst = make_instance(c, int(10 ** rng.uniform(5, 7)), N, (s,) * c, seed=0)
            assert wcelb_la(inst, "star", rho) <= wcelb_ma_opt(inst, rho) + 1e-12

    def test_star_monotone_nonincreasing_in_rho(self):
        inst = make_instance(4, 10**6, (5, 50, 100, 200), (0.5,) * 4, seed=0)
        values = [wcelb_la(inst, "star", rho) for rho in np.geomspace(0.1, 1e4, 12)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_matches_numeric_limit_of_star_family(self):
        inst12 = make_instance(3, 10**12, (7, 20, 120), (0.9, 0.4, 1.3), seed=0)
        for rho in (math.inf, 25.0):
            co = la_coefficients(inst12, rho, la_iota_star(inst12, rho))
            numeric = pairwise_matrix(score_statistics(inst12, co)).max()
            assert wcelb_la(inst12, "star", rho) == pytest.approx(numeric, abs=5e-6)

    def test_rejects_unknown_spec(self, skewed_instance):
        with pytest.raises(ValueError):
            wcelb_la(skewed_instance, "optimal", 1.0)


class TestCdtLimit:
    def test_unit_delta_matches_mm(self, skewed_instance):
        assert cdt_limit_worst_error(skewed_instance, np.ones(4)) == pytest.approx(
            wcelb_mm(skewed_instance, math.inf), rel=1e-12
        )

    def test_matches_explicit_closed_form(self):
        # independent transcription of the limiting pairwise expression
        rng = np.random.default_rng(41)
        inst = make_instance(4, 10**6, (5, 50, 100, 200), (0.5, 0.7, 0.9, 1.1), seed=0)
        for _ in range(10):
            delta = np.exp(rng.uniform(np.log(0.02), np.log(8.0), size=4))
            stats = cdt_limit_statistics(inst, delta)
            total = float(np.sum(delta**2))
            N, s = inst.sizes, inst.signals
            for y in range(4):
                for k in range(4):
                    if k == y:
                        continue
                    theta_yk = delta[y] * (delta[k] - delta[y])
                    theta_ky = delta[k] * (delta[y] - delta[k])
                    zeta = sum(
                        delta[z] ** 4 * (delta[k] - delta[y]) ** 2 * N[z]
                        for z in range(4)
                        if z not in (y, k)
                    )
                    den = (
                        1.0
                        + (delta[k] / delta[y]) ** 2
                        * ((total + theta_ky) / (total + theta_yk)) ** 2
                        * (N[k] / N[y])
                        + zeta / ((total + theta_yk) ** 2 * delta[y] ** 2 * N[y])
                    )
                    expect = float(q_function(s[y] * math.sqrt(N[y]) / math.sqrt(den)))
                    got = float(q_function(stats.nu[y, k] / math.sqrt(stats.sigma[y][k, k])))
                    assert got == pytest.approx(expect, rel=1e-10)


class TestCdtFailureInstance:
    def test_reference_construction(self):
        N, s = cdt_failure_instance(0.1, 3)
        assert N[0] == 1
        assert 100 <= N[1] <= 999  # "in the hundreds"
        # recurrence recomputed from scratch with the tail quantile oracle
        from scipy.special import ndtri

        q_tail = -ndtri(0.1 / 3)
        q_half = -ndtri(0.4)
        growth = 2.25 * (2 * q_tail / q_half) ** 2
        assert N[1] == math.ceil(growth * 1 + 1)
        assert N[2] == math.ceil(growth * N[1] + 1)
        np.testing.assert_allclose(s, 2 * q_tail / np.sqrt(N), rtol=1e-9)

    def test_ma_succeeds_on_it(self):
        N, s = cdt_failure_instance(0.1, 3)
        inst = make_instance(3, 1000, N, s, seed=0)
        assert wcelb_ma_opt(inst, math.inf) <= 0.1

    def test_cdt_fails_across_gamma_grid(self):
        N, s = cdt_failure_instance(0.1, 3)
        inst = make_instance(3, 1000, N, s, seed=0)
        bounds = [
            cdt_limit_worst_error(inst, inst.sizes ** (-g))
            for g in np.linspace(0.0, 3.0, 61)
        ]
        assert min(bounds) >= 0.4

    def test_size_cap(self):
        with pytest.raises(ValueError):
            cdt_failure_instance(0.001, 6)

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            cdt_failure_instance(0.6, 3)
        with pytest.raises(ValueError):
            cdt_failure_instance(0.1, 2)


class TestProfiles:
    def test_exp_formula_values(self):
        assert exp_longtail_profile(2, 100, 4) == (25, 50)
        assert exp_longtail_profile(3, 100, 1) == (100, 100, 100)
        prof = exp_longtail_profile(10, 500, 100)
        assert prof[0] == 5  # minority is n_max / ratio
        assert prof[-1] == round(500 * 100 ** (-1 / 10))  # formula stops short of n_max

    def test_listed_preset_matches_reference_sequence(self):
        assert LONGTAIL_10_LISTED == (5, 8, 13, 23, 38, 64, 107, 179, 299, 500)

    def test_geometric_profile_hits_both_endpoints(self):
        prof = geometric_profile(4, 200, 100)
        assert prof[0] == 2 and prof[-1] == 200
        ratios = [b / a for a, b in zip(prof, prof[1:])]
        assert max(ratios) / min(ratios) < 1.35

    def test_monotone_nondecreasing(self):
        for prof in (exp_longtail_profile(7, 300, 50), geometric_profile(7, 300, 50)):
            assert all(a <= b for a, b in zip(prof, prof[1:]))

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            exp_longtail_profile(0, 10, 2)
        with pytest.raises(ValueError):
            geometric_profile(4, 10, 0.5)
