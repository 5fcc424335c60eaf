"""Tests for step Hamiltonians, propagation and full protocol runs"""

import math

import numpy as np
import pytest

from core.dynamics import (Amplitudes, ModeMatrix, StepHamiltonian, assemble_hamiltonian,
                           disorder_norm, operator_norm, propagate, reference_hamiltonian,
                           run_multi, run_single, step_error, uniformity_deviation)
from core.errors import CapacityError, ConfigError, GeometryMismatchError
from core.geometry import ProtocolConfig, build_geometry
from core.noise import NoiseField, delta_lr_step
from core.schedule import build_schedule, center_coupling


def two_site(coupling=1.0, sign=1):
    return StepHamiltonian(src=np.array([0]), dst=np.array([1]),
                           couplings=np.array([[coupling]]), sign=sign)


class TestStepHamiltonian:

    def test_generator_is_antisymmetric(self):
        h = StepHamiltonian(src=np.array([0, 1]), dst=np.array([2, 3, 4]),
                            couplings=np.arange(1.0, 7.0).reshape(3, 2))
        a = h.dense_generator()
        np.testing.assert_array_equal(a, -a.T)
        np.testing.assert_allclose(h.hermitian(), h.hermitian().conj().T)
        assert h.max_coupling == 6.0

    def test_sign_flips_generator(self):
        np.testing.assert_array_equal(two_site(sign=-1).dense_generator(),
                                      -two_site().dense_generator())


class TestOperatorNorm:

    def test_identity(self):
        assert operator_norm(np.eye(4)) == pytest.approx(1.0)

    def test_uniform_block(self):
        assert operator_norm(np.full((8, 2), 0.5)) == pytest.approx(0.5 * 4)

    def test_diagonal(self):
        assert operator_norm(np.diag([3.0, -5.0])) == pytest.approx(5.0)

    def test_empty(self):
        assert operator_norm(np.zeros((0, 3))) == 0.0


class TestPropagate:

    def test_pi_pulse_moves_excitation(self):
        state = propagate(Amplitudes.at_site(2, 0), two_site(0.25), math.pi / (2 * 0.25))
        assert state.probability(1) == pytest.approx(1.0, abs=1e-12)
        assert state.values[1] > 0

    def test_collapse_sign_returns_excitation(self):
        out = propagate(Amplitudes.at_site(2, 0), two_site(), math.pi / 4)
        back = propagate(out, two_site(sign=-1), math.pi / 4)
        np.testing.assert_allclose(back.values, [1.0, 0.0], atol=1e-12)

    def test_zero_time_is_identity(self):
        state = Amplitudes(np.array([0.6, 0.8, 0.0]))
        out = propagate(state, two_site(), 0.0)
        np.testing.assert_array_equal(out.values, state.values)
        assert out.values is not state.values

    def test_negative_time(self):
        with pytest.raises(ConfigError):
            propagate(Amplitudes.at_site(2, 0), two_site(), -1.0)

    def test_sites_off_support_untouched(self):
        state = Amplitudes(np.array([0.6, 0.0, 0.8]))
        out = propagate(state, two_site(), 1.0)
        assert out.values[2] == 0.8
        assert out.norm == pytest.approx(1.0)

    def test_mode_matrix_is_linear(self):
        h = StepHamiltonian(src=np.array([0, 1]), dst=np.array([2, 3]),
                            couplings=np.array([[0.3, 0.7], [0.5, -0.2]]))
        modes = ModeMatrix.from_sites(5, np.array([0, 1]), np.array([2, 3]))
        joint = propagate(modes, h, 1.3)
        for column, site in enumerate((0, 1)):
            single = propagate(Amplitudes.at_site(5, site), h, 1.3)
            np.testing.assert_allclose(joint.columns[:, column], single.values, atol=1e-12)
        assert joint.gram_drift() < 1e-12


class TestStepError:

    def test_identical_steps(self):
        assert step_error(two_site(0.5), two_site(0.5), 2.0) == pytest.approx(0.0, abs=1e-14)

    def test_bounded_by_disorder(self):
        cfg = ProtocolConfig(n=4, epsilon=0.3)
        layout, geom = build_geometry(cfg)
        schedule = build_schedule(cfg, geom)
        field = NoiseField(cfg.seed, 0, layout.n_sites)
        for index, step in enumerate(schedule):
            noisy = assemble_hamiltonian(step, geom, layout, field, cfg.epsilon, index)
            ideal = reference_hamiltonian(step, geom, layout)
            delta = step_error(noisy, ideal, step.duration)
            assert delta <= disorder_norm(noisy, ideal) * step.duration + 1e-10
            assert delta <= 2.0 + 1e-12

    def test_blocks_must_match(self):
        other = StepHamiltonian(src=np.array([1]), dst=np.array([0]), couplings=np.array([[1.0]]))
        with pytest.raises(GeometryMismatchError):
            step_error(two_site(), other, 1.0)


class TestAssemble:

    def test_first_nested_coupling(self):
        cfg = ProtocolConfig(n=2)
        layout, geom = build_geometry(cfg)
        step = build_schedule(cfg, geom).steps[0]
        h = assemble_hamiltonian(step, geom, layout)
        np.testing.assert_allclose(h.couplings, [[0.5]])

    def test_physical_block_follows_power_law(self):
        cfg = ProtocolConfig(variant="physical", n=2, alpha=2.0, beta=1.0)
        layout, geom = build_geometry(cfg)
        step = build_schedule(cfg, geom).steps[0]
        h = assemble_hamiltonian(step, geom, layout)
        np.testing.assert_allclose(h.couplings, [[1 / 9], [1 / 16]])

    def test_physical_entries_match_distances(self):
        cfg = ProtocolConfig(variant="physical", n=3, alpha=1.5, beta=0.5)
        layout, geom = build_geometry(cfg)
        for step in build_schedule(cfg, geom):
            h = assemble_hamiltonian(step, geom, layout)
            rows = layout.coords[h.dst, 0][:, None]
            cols = layout.coords[h.src, 0][None, :]
            np.testing.assert_allclose(h.couplings, np.abs(rows - cols) ** -1.5)

    def test_noise_free_is_deterministic(self):
        cfg = ProtocolConfig(n=3)
        layout, geom = build_geometry(cfg)
        step = build_schedule(cfg, geom).steps[2]
        a = assemble_hamiltonian(step, geom, layout)
        b = assemble_hamiltonian(step, geom, layout)
        np.testing.assert_array_equal(a.couplings, b.couplings)

    def test_multi_particle_entries(self):
        cfg = ProtocolConfig(variant="disjoint", m=2, n=4, center_rule="geometric")
        layout, geom = build_geometry(cfg)
        for step in build_schedule(cfg, geom):
            h = assemble_hamiltonian(step, geom, layout)
            np.testing.assert_allclose(np.abs(h.couplings), center_coupling(step.q, cfg))

    def test_uniformity_deviation(self):
        values = np.array([0.5, 0.5, 0.5, 0.5, 0.0])
        assert uniformity_deviation(values, np.arange(4)) == pytest.approx(0.0)
        assert uniformity_deviation(values, np.arange(2)) == pytest.approx(0.5)


class TestRunSingle:

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_nested_line_is_perfect(self, n):
        result = run_single(ProtocolConfig(d=1, n=n))
        assert result.p_final == pytest.approx(1.0, abs=1e-9)
        assert result.runtime == pytest.approx(math.pi * n)
        assert max(result.per_step_uniformity) < 1e-8

    @pytest.mark.parametrize("alpha", [0.5, 2.0])
    def test_nested_square_is_perfect(self, alpha):
        result = run_single(ProtocolConfig(d=2, n=2, alpha=alpha))
        assert result.p_final == pytest.approx(1.0, abs=1e-9)
        assert len(result.per_step_uniformity) == 2
        assert max(result.per_step_uniformity) < 1e-8

    def test_uncorrected_angle_leaks(self):
        result = run_single(ProtocolConfig(d=2, n=2, convention="uncorrected"))
        assert result.p_final < 1 - 1e-6
        assert max(result.per_step_uniformity) > 1e-3

    def test_disjoint_ideal_is_perfect(self):
        result = run_single(ProtocolConfig(variant="disjoint", n=4))
        assert result.p_final == pytest.approx(1.0, abs=1e-9)
        assert max(result.per_step_uniformity) < 1e-8

    def test_physical_loses_fidelity(self):
        result = run_single(ProtocolConfig(variant="physical", n=3, beta=1.0))
        assert 0.0 < result.p_final < 1.0

    def test_physical_step_errors_within_bound(self):
        cfg = ProtocolConfig(variant="physical", n=3, beta=1.0, alpha=1.0, center_rule="geometric")
        result = run_single(cfg, compute_delta=True)
        bound = delta_lr_step(cfg.alpha, cfg.beta)
        schedule = build_schedule(cfg)
        for delta, disorder, step in zip(result.per_step_delta, result.per_step_disorder, schedule):
            assert delta <= disorder * step.duration + 1e-10
            assert delta <= bound + 1e-10

    def test_noise_is_reproducible(self):
        cfg = ProtocolConfig(n=4, epsilon=0.3, seed=99)
        assert run_single(cfg, trial=2).p_final == run_single(cfg, trial=2).p_final
        assert run_single(cfg, trial=2).p_final != run_single(cfg, trial=3).p_final

    def test_static_noise(self):
        cfg = ProtocolConfig(n=3, epsilon=0.2, redraw="static")
        result = run_single(cfg)
        assert 0.0 <= result.p_final <= 1.0

    def test_records_snapshots(self):
        result = run_single(ProtocolConfig(n=3), record_states=True)
        assert len(result.snapshots) == 6
        for probabilities in result.snapshots:
            assert probabilities.sum() == pytest.approx(1.0)

    def test_delta_is_zero_without_noise(self):
        result = run_single(ProtocolConfig(n=3), compute_delta=True)
        assert len(result.per_step_delta) == 6
        assert max(result.per_step_delta) < 1e-12

    def test_needs_single_qubit(self):
        with pytest.raises(ConfigError):
            run_single(ProtocolConfig(variant="disjoint", m=2, n=3))


class TestRunMulti:

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_every_qubit_arrives(self, m):
        result = run_multi(ProtocolConfig(variant="disjoint", m=m, n=4))
        assert len(result.per_qubit) == m
        assert min(result.per_qubit) == pytest.approx(1.0, abs=1e-9)
        assert result.aggregate == pytest.approx(1.0, abs=1e-9)
        assert result.gram_drift < 1e-9

    def test_single_qubit_matches_run_single(self):
        cfg = ProtocolConfig(variant="disjoint", n=3, epsilon=0.2)
        multi = run_multi(cfg, trial=1)
        single = run_single(cfg, trial=1)
        assert multi.per_qubit[0] == pytest.approx(single.p_final, abs=1e-12)

    def test_needs_disjoint_ideal(self):
        with pytest.raises(GeometryMismatchError):
            run_multi(ProtocolConfig(m=2, n=3))

    def test_family_depth_limit(self):
        cfg = ProtocolConfig(variant="disjoint", m=4, n=4)
        with pytest.raises(CapacityError):
            run_multi(cfg, max_family_depth=1)
        assert min(run_multi(cfg, max_family_depth=2).per_qubit) == pytest.approx(1.0, abs=1e-9)
