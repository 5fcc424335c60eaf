"""Tests for coupling disorder, power-law tables and the analytic error bounds"""

import math

import numpy as np
import pytest

from core.dynamics import StepHamiltonian
from core.errors import BoundDomainError, CapacityError, ConfigError, GeometryMismatchError
from core.geometry import ProtocolConfig, RedrawPolicy, SiteLayout
from core.noise import (LRMode, NoiseField, NoiseKind, NoiseSpec, SumMode, bai_yin_check,
                        bai_yin_probability, bai_yin_tail, bai_yin_threshold, bound_report,
                        delta_lr_bound, delta_lr_step, delta_rand_bound, delta_rand_step,
                        fidelity_lower_bound, gaussian_perturb, h_q_max, herr_norm_bound,
                        ideal_error_split, p_fail_bound, physical_couplings, realized_herr_norm,
                        step_stream)


def uniform_step(rows, cols, value=0.5):
    return StepHamiltonian(src=np.arange(cols), dst=np.arange(cols, cols + rows),
                           couplings=np.full((rows, cols), value))


class TestGaussianPerturb:

    def test_zero_noise_returns_input(self):
        ideal = uniform_step(2, 1)
        assert gaussian_perturb(ideal, 0.0, step_stream(1, 0, 0)) is ideal

    def test_same_stream_same_draws(self):
        ideal = uniform_step(4, 2)
        a = gaussian_perturb(ideal, 0.3, step_stream(7, 3, 1))
        b = gaussian_perturb(ideal, 0.3, step_stream(7, 3, 1))
        np.testing.assert_array_equal(a.couplings, b.couplings)

    def test_streams_differ_by_step(self):
        ideal = uniform_step(4, 2)
        a = gaussian_perturb(ideal, 0.3, step_stream(7, 3, 1))
        b = gaussian_perturb(ideal, 0.3, step_stream(7, 3, 2))
        assert not np.array_equal(a.couplings, b.couplings)

    def test_multiplicative_moments(self):
        ideal = uniform_step(200, 200, value=0.25)
        noisy = gaussian_perturb(ideal, 0.2, step_stream(11, 0, 0))
        draws = (noisy.couplings / 0.25 - 1.0) / 0.2
        assert abs(draws.mean()) < 0.02
        assert draws.var() == pytest.approx(1.0, abs=0.05)

    def test_precomputed_draws(self):
        ideal = uniform_step(1, 2, value=2.0)
        noisy = gaussian_perturb(ideal, 0.5, np.array([[1.0, -2.0]]))
        np.testing.assert_allclose(noisy.couplings, [[3.0, 0.0]])
        np.testing.assert_array_equal(noisy.src, ideal.src)

    def test_draw_shape_must_match(self):
        with pytest.raises(GeometryMismatchError):
            gaussian_perturb(uniform_step(2, 2), 0.1, np.zeros((3, 2)))

    def test_negative_noise(self):
        with pytest.raises(ConfigError):
            gaussian_perturb(uniform_step(1, 1), -0.1, step_stream(0, 0, 0))


class TestNoiseField:

    def test_per_step_draws_change(self):
        field = NoiseField(5, 0, 8)
        src, dst = np.array([0, 1]), np.array([2, 3])
        assert not np.array_equal(field.draws(0, dst, src), field.draws(1, dst, src))
        np.testing.assert_array_equal(field.draws(0, dst, src), field.draws(0, dst, src))

    def test_static_draws_persist(self):
        field = NoiseField(5, 0, 8, RedrawPolicy.STATIC)
        src, dst = np.array([0, 1]), np.array([2, 3])
        np.testing.assert_array_equal(field.draws(0, dst, src), field.draws(3, dst, src))
        np.testing.assert_array_equal(field.draws(0, dst, src), field.draws(1, src, dst).T)

    def test_trials_are_independent(self):
        src, dst = np.array([0]), np.array([1, 2, 3])
        a = NoiseField(5, 0, 4).draws(0, dst, src)
        b = NoiseField(5, 1, 4).draws(0, dst, src)
        assert not np.array_equal(a, b)

    def test_static_capacity(self):
        with pytest.raises(CapacityError):
            NoiseField(1, 0, 5000, RedrawPolicy.STATIC)

    def test_spec_from_config(self):
        spec = NoiseSpec.from_config(ProtocolConfig(variant="physical", epsilon=0.1))
        assert spec.kind is NoiseKind.PHYSICAL_LR
        assert spec.active
        assert not NoiseSpec.from_config(ProtocolConfig()).active

    def test_field_from_spec(self):
        spec = NoiseSpec.from_config(ProtocolConfig(epsilon=0.2, redraw="static"))
        field = NoiseField.from_spec(spec, 5, 3, 8)
        assert field.redraw is RedrawPolicy.STATIC
        assert (field.seed, field.trial, field.n_sites) == (5, 3, 8)
        assert NoiseField.from_spec(NoiseSpec.from_config(ProtocolConfig()), 5, 3, 8) is None


class TestPhysicalCouplings:

    def test_power_law_values(self):
        layout = SiteLayout(coords=np.array([[0], [1], [4]]), total_extent=4)
        table = physical_couplings(layout, 1.0)
        assert table[0, 2] == pytest.approx(0.25)
        assert table[1, 2] == pytest.approx(1 / 3)
        np.testing.assert_allclose(table, table.T)
        np.testing.assert_array_equal(np.diag(table), 0.0)

    def test_steep_exponent(self):
        layout = SiteLayout(coords=np.array([[0], [1], [4]]), total_extent=4)
        assert physical_couplings(layout, 3.0)[0, 1] == pytest.approx(1.0)

    def test_distance_three(self):
        layout = SiteLayout(coords=np.array([[0], [3]]), total_extent=3)
        table = physical_couplings(layout, 2.0, rows=[1], cols=[0], h0=2.0)
        assert table.shape == (1, 1)
        assert table[0, 0] == pytest.approx(2 / 9)

    def test_coincident_sites(self):
        layout = SiteLayout(coords=np.array([[0], [2], [2]]), total_extent=2)
        with pytest.raises(GeometryMismatchError):
            physical_couplings(layout, 1.0)

    def test_two_dimensional_manhattan(self):
        layout = SiteLayout(coords=np.array([[0, 0], [1, 1]]), total_extent=2)
        assert physical_couplings(layout, 1.0)[0, 1] == pytest.approx(0.5)


class TestLongRangeErrors:

    def test_h_q_max_example(self):
        assert h_q_max(1, 1.0, 1.0) == pytest.approx(3 / 14)

    def test_h_q_max_vanishes_without_decay(self):
        assert h_q_max(3, 0.0, 2.0) == 0.0

    def test_h_q_max_decreases_with_gap(self):
        values = [h_q_max(2, 1.0, beta) for beta in (0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_requires_gap(self):
        with pytest.raises(BoundDomainError):
            h_q_max(1, 1.0, 0.0)
        with pytest.raises(BoundDomainError):
            delta_lr_step(1.0, 0.0)

    def test_error_split(self):
        ideal, error = ideal_error_split(np.array([[0.25, 0.5]]), 1, 1.0, 1.0)
        assert ideal == pytest.approx(2 / 7)
        np.testing.assert_allclose(error, [[0.25 - 2 / 7, 0.5 - 2 / 7]])

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
    def test_norm_bound_dominates_realized(self, alpha, beta):
        for q in range(1, 7):
            assert realized_herr_norm(q, alpha, beta) <= herr_norm_bound(q, alpha, beta) + 1e-12

    def test_per_step_error(self):
        assert delta_lr_step(1.0, 1.0) == pytest.approx(math.pi / 4 * 0.75)

    def test_bound_clamps_at_zero(self):
        assert delta_lr_bound(5.0, 1.0, 1.0, LRMode.LARGE_BETA) == 0.0

    @pytest.mark.parametrize("distance", [50.0, 1e3, 1e5])
    def test_exact_dominates_large_gap_form(self, distance):
        for beta in (4.0, 8.0, 16.0):
            exact = delta_lr_bound(distance, beta, 1.0, LRMode.EXACT)
            approx = delta_lr_bound(distance, beta, 1.0, LRMode.LARGE_BETA)
            assert exact >= approx

    def test_bound_monotone_in_parameters(self):
        by_beta = [delta_lr_bound(1e4, beta, 1.0) for beta in (0.5, 1.0, 2.0, 4.0)]
        assert all(a >= b for a, b in zip(by_beta, by_beta[1:]))
        by_alpha = [delta_lr_bound(1e4, 2.0, alpha) for alpha in (0.5, 1.0, 2.0, 3.0)]
        assert all(a <= b for a, b in zip(by_alpha, by_alpha[1:]))


class TestRandomNoiseBounds:

    def test_large_distance_limit(self):
        value = delta_rand_bound(0.1, 1.0, 1, 1e12)
        assert value == pytest.approx(0.01 * math.pi ** 2, rel=1e-9)

    def test_finite_distance_correction(self):
        limit = delta_rand_bound(0.1, 1.0, 1, 1e300)
        for distance in (8.0, 64.0, 1024.0):
            value = delta_rand_bound(0.1, 1.0, 1, distance)
            assert (limit - value) * distance == pytest.approx(limit)

    def test_zero_noise(self):
        assert delta_rand_bound(0.0, 2.0, 2, 64.0) == 0.0
        assert delta_rand_step(0.0, 2.0, 2, 3) == 0.0

    def test_linear_dominates_quadrature(self):
        for eps in (0.01, 0.1, 0.3):
            quad = delta_rand_bound(eps, 1.5, 2, 256.0, SumMode.QUADRATURE)
            linear = delta_rand_bound(eps, 1.5, 2, 256.0, SumMode.LINEAR)
            assert quad <= linear ** 2

    def test_per_step_shrinks_with_level(self):
        steps = [delta_rand_step(0.1, 1.0, 2, q) for q in range(1, 6)]
        assert all(a > b for a, b in zip(steps, steps[1:]))

    def test_gamma_domain(self):
        with pytest.raises(BoundDomainError):
            delta_rand_bound(0.1, 0.5, 1, 16.0)

    def test_failure_probability_example(self):
        assert p_fail_bound(2.0, 1, 1024.0) == pytest.approx(2 * (1 - 1 / 1024))

    def test_failure_probability_decreases(self):
        values = [p_fail_bound(gamma, 1, 1024.0) for gamma in (2.0, 3.0, 5.0)]
        assert values[0] > values[1] > values[2]
        assert p_fail_bound(10.0, 1, 1024.0) < 1e-10

    def test_failure_probability_domain(self):
        with pytest.raises(BoundDomainError):
            p_fail_bound(1.0, 1, 16.0)


class TestBaiYin:

    def test_threshold_and_tail(self):
        assert bai_yin_threshold(0.1, 0.5, 4, 9, 2.0) == pytest.approx(0.5)
        assert bai_yin_tail(1.0, 4, 9) == pytest.approx(2.0)

    def test_probability_scale_invariance(self):
        assert bai_yin_probability(2.0, 3.0) == pytest.approx(bai_yin_probability(1.0, 1.5))

    def test_far_tail_is_never_hit(self):
        assert bai_yin_check(16, 8, 1.0, 100.0, 20) == 0.0

    def test_empirical_rate_within_bound(self):
        trials = 200
        rate = bai_yin_check(64, 64, 1.0, 2.0, trials, seed=3)
        bound = bai_yin_probability(1.0, 2.0)
        assert rate <= bound + 3 * math.sqrt(bound * (1 - bound) / trials)

    def test_shape_order(self):
        with pytest.raises(ConfigError):
            bai_yin_check(4, 8, 1.0, 1.0, 10)


class TestBoundReport:

    def test_noise_free_nested(self):
        report = bound_report(ProtocolConfig(n=4), gamma=1.5)
        assert report.total_quadrature == 0.0
        assert report.fidelity_floor == 1.0
        assert fidelity_lower_bound(ProtocolConfig(n=4)) == 1.0

    def test_noisy_nested(self):
        report = bound_report(ProtocolConfig(n=4, epsilon=0.1), gamma=1.5)
        assert len(report.per_step) == 4
        assert report.total_quadrature <= report.total_linear ** 2
        assert report.p_fail is not None

    def test_physical(self):
        cfg = ProtocolConfig(variant="physical", n=3, beta=2.0)
        report = bound_report(cfg, realized=True)
        assert report.kind is NoiseKind.PHYSICAL_LR
        assert len(report.herr_bounds) == len(report.herr_realized) == 3
        assert all(r <= b for r, b in zip(report.herr_realized, report.herr_bounds))
        assert fidelity_lower_bound(cfg) == pytest.approx(1 - report.total_quadrature)

    def test_gapless_physical_has_no_bound(self):
        assert fidelity_lower_bound(ProtocolConfig(variant="physical", beta=0.0)) is None

    def test_vacuous_flags(self):
        report = bound_report(ProtocolConfig(n=6, epsilon=2.0), gamma=1.5)
        data = report.to_dict()
        assert data["vacuous"]["total_quadrature"]
