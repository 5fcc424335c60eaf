"""End-to-end checks over realistic sizes; run with -m slow"""

import math

import numpy as np
import pytest

from core.dynamics import (assemble_hamiltonian, disorder_norm, reference_hamiltonian, run_multi,
                           run_single, step_error)
from core.experiments import ExperimentPlan, fit_power_law, monte_carlo, tradeoff
from core.geometry import ProtocolConfig, build_geometry
from core.noise import (NoiseField, SumMode, bai_yin_tail, bai_yin_threshold, delta_rand_bound,
                        herr_norm_bound, realized_herr_norm)
from core.schedule import build_schedule, center_coupling, runtime_closed_form

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("d,levels", [(1, range(1, 11)), (2, range(1, 5))])
def test_noise_free_nested_transfer_is_perfect(d, levels):
    for n in levels:
        result = run_single(ProtocolConfig(d=d, n=n))
        assert result.p_final == pytest.approx(1.0, abs=1e-9)
        assert max(result.per_step_uniformity) < 1e-8


def test_uncorrected_angle_fails_in_two_dimensions():
    for n in range(1, 5):
        assert run_single(ProtocolConfig(d=2, n=n, convention="uncorrected")).p_final < 1 - 1e-6


@pytest.mark.parametrize("variant", ["nested", "physical"])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0, 3.0])
def test_closed_form_runtimes(variant, alpha):
    for n in range(1, 9):
        cfg = ProtocolConfig(n=n, alpha=alpha, variant=variant, center_rule="geometric")
        assert runtime_closed_form(cfg).relative_gap < 1e-12


@pytest.mark.parametrize("m", [1, 2, 4, 8])
def test_multi_qubit_transfer(m):
    base = ProtocolConfig(variant="disjoint", n=5, center_rule="geometric")
    single = build_schedule(base).total_runtime
    result = run_multi(base.replace(m=m))
    assert min(result.per_qubit) >= 1 - 1e-9
    assert result.gram_drift <= 1e-9
    assert result.runtime <= math.sqrt(2 * m) * single * 1.05


def test_fidelity_plateaus_under_noise():
    levels = list(range(4, 11))
    means = {}
    for eps in (0.1, 0.3, 0.6, 0.9):
        plan = ExperimentPlan(base=ProtocolConfig(epsilon=eps), axis="n", values=levels, trials=100)
        means[eps] = monte_carlo(plan, threads=4)
    for records in zip(*(means[eps] for eps in (0.3, 0.6, 0.9))):
        assert records[0].mean_p_final > records[1].mean_p_final > records[2].mean_p_final
    for record, n in zip(means[0.1], levels):
        floor = 1 - delta_rand_bound(0.1, 1.0, 1, 2.0 ** n, SumMode.QUADRATURE)
        assert record.mean_p_final >= floor

    noisy = means[0.3]
    first = abs(noisy[1].mean_p_final - noisy[0].mean_p_final)
    last = abs(noisy[-1].mean_p_final - noisy[-2].mean_p_final)
    spread = 4 * math.hypot(noisy[-1].stderr, noisy[-2].stderr)
    assert last <= first + spread


def test_random_steps_respect_bai_yin():
    rng = np.random.default_rng(12)
    cfg = ProtocolConfig(n=8, epsilon=0.3)
    layout, geom = build_geometry(cfg)
    schedule = build_schedule(cfg, geom)
    expand = [step for step in schedule if not step.collapse]
    hits, predicted = 0, 0.0
    samples = 50
    for trial in range(samples):
        index = int(rng.integers(len(expand)))
        step = expand[index]
        field = NoiseField(cfg.seed, trial, layout.n_sites)
        noisy = assemble_hamiltonian(step, geom, layout, field, cfg.epsilon, index)
        ideal = reference_hamiltonian(step, geom, layout)
        norm = disorder_norm(noisy, ideal)
        assert step_error(noisy, ideal, step.duration) <= norm * step.duration + 1e-10

        a, b = len(ideal.src), len(ideal.dst)
        coupling = ideal.couplings[0, 0]
        if norm <= bai_yin_threshold(cfg.epsilon, coupling, a, b, 1.5):
            hits += 1
        predicted += 1 - bai_yin_tail(1.5, a, b)
    p = predicted / samples
    assert hits / samples >= p - 3 * math.sqrt(max(p * (1 - p), 0.0) / samples)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
def test_error_norm_bound(alpha, beta):
    for q in range(1, 9):
        assert realized_herr_norm(q, alpha, beta) <= herr_norm_bound(q, alpha, beta)


def test_physical_decay_is_a_power_law():
    exponents = []
    for beta in (1.0, 2.0, 4.0):
        plan = ExperimentPlan(base=ProtocolConfig(variant="physical", alpha=1.0, beta=beta),
                              axis="n", values=list(range(4, 12)), trials=1)
        result = fit_power_law(monte_carlo(plan))
        assert result.r_squared >= 0.98
        exponents.append(result.a)
    assert exponents[0] > exponents[1] > exponents[2]


def test_tradeoff_from_simulation():
    cfg = ProtocolConfig(variant="physical", alpha=1.0, n=6)
    betas = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
    curves = [tradeoff(f, betas, cfg, threads=4) for f in (0.5, 0.9, 0.99)]
    minima = [curve.min_tau_star for curve in curves]
    assert minima[0] <= minima[1] <= minima[2]
    assert curves[-1].argmin_beta > betas[0]
    assert curves[-1].has_interior_minimum()


def test_multi_particle_couplings_are_uniform():
    cfg = ProtocolConfig(variant="disjoint", m=4, n=6, center_rule="geometric")
    layout, geom = build_geometry(cfg)
    for step in build_schedule(cfg, geom):
        couplings = assemble_hamiltonian(step, geom, layout).couplings
        np.testing.assert_allclose(np.abs(couplings), center_coupling(step.q, cfg))


def test_sweeps_are_reproducible():
    plan = ExperimentPlan(base=ProtocolConfig(epsilon=0.4, seed=2024), axis="n", values=[4, 6], trials=20)
    runs = [[r.to_dict() for r in monte_carlo(plan, threads=t)] for t in (1, 3, 8)]
    assert runs[0] == runs[1] == runs[2]


def test_independent_seeds_agree_within_errors():
    levels = [4, 6, 8]
    runs = [
        monte_carlo(ExperimentPlan(base=ProtocolConfig(epsilon=0.3, seed=seed), axis="n",
                                   values=levels, trials=100), threads=4)
        for seed in (11, 2 ** 40 + 3)
    ]
    for first, second in zip(*runs):
        assert first.to_dict() != second.to_dict()
        spread = 3 * math.hypot(first.stderr, second.stderr)
        assert abs(first.mean_p_final - second.mean_p_final) <= spread
