"""
Coupling noise and analytic error bounds
Draws reproducible multiplicative Gaussian disorder, builds power-law coupling
tables, and evaluates the per-step and whole-protocol error bounds
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numba
import numpy as np
from scipy.linalg import svdvals

from core.errors import BoundDomainError, CapacityError, ConfigError, GeometryMismatchError
from core.geometry import ProtocolConfig, RedrawPolicy, SiteLayout, Variant, disjoint_layout

logger = logging.getLogger(__name__)

# Dense symmetric draw tables beyond this many sites are refused
MAX_STATIC_SITES = 4096
STATIC_STREAM = 2 ** 32 - 1


class NoiseKind(Enum):
    UNCORRELATED_GAUSSIAN = "gaussian"
    PHYSICAL_LR = "physical_lr"


class SumMode(Enum):
    """How per-step errors are combined"""
    QUADRATURE = "quadrature"
    LINEAR = "linear"


class LRMode(Enum):
    EXACT = "exact"
    LARGE_BETA = "large_beta"


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model of a run"""
    kind: NoiseKind = NoiseKind.UNCORRELATED_GAUSSIAN
    epsilon: float = 0.0
    redraw: RedrawPolicy = RedrawPolicy.PER_STEP
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")

    @classmethod
    def from_config(cls, cfg: ProtocolConfig) -> "NoiseSpec":
        kind = (NoiseKind.PHYSICAL_LR if cfg.variant is Variant.DISJOINT_PHYSICAL
                else NoiseKind.UNCORRELATED_GAUSSIAN)
        return cls(kind=kind, epsilon=cfg.epsilon, redraw=cfg.redraw,
                   alpha=cfg.alpha, beta=cfg.beta)

    @property
    def active(self) -> bool:
        return self.epsilon > 0


def step_stream(seed: int, trial: int, step: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, trial, step)"""
    sequence = np.random.SeedSequence(seed, spawn_key=(trial, step))
    return np.random.Generator(np.random.Philox(sequence))


class NoiseField:
    """
    Standard normal draws X_jk for one trial

    PerStep redraws every step from its own stream. Static draws one
    symmetric table per trial so a pair keeps its value across steps.
    """

    def __init__(self, seed: int, trial: int, n_sites: int,
                 redraw: RedrawPolicy = RedrawPolicy.PER_STEP):
        self.seed = seed
        self.trial = trial
        self.n_sites = n_sites
        self.redraw = redraw
        self._table = None

        if redraw is RedrawPolicy.STATIC and n_sites > MAX_STATIC_SITES:
            raise CapacityError(f"Static noise table for {n_sites} sites exceeds {MAX_STATIC_SITES}")

    @classmethod
    def from_spec(cls, spec: NoiseSpec, seed: int, trial: int,
                  n_sites: int) -> Optional["NoiseField"]:
        """Draw source for a noise model; None when the model is inactive"""
        if not spec.active:
            return None
        return cls(seed, trial, n_sites, spec.redraw)

    def _static_table(self) -> np.ndarray:
        if self._table is None:
            rng = step_stream(self.seed, self.trial, STATIC_STREAM)
            upper = np.triu(rng.standard_normal((self.n_sites, self.n_sites)))
            self._table = upper + np.triu(upper, 1).T
        return self._table

    def draws(self, step_index: int, dst: np.ndarray, src: np.ndarray) -> np.ndarray:
        """
        Draws for the coupling block of one step

        Args:
            step_index: Position of the step in the schedule
            dst: Destination site indices (rows)
            src: Source site indices (columns)

        Returns:
            Array of shape (len(dst), len(src))
        """
        if self.redraw is RedrawPolicy.STATIC:
            return self._static_table()[np.ix_(dst, src)]
        rng = step_stream(self.seed, self.trial, step_index)
        return rng.standard_normal((len(dst), len(src)))


def gaussian_perturb(ideal, epsilon: float,
                     stream: Union[np.random.Generator, np.ndarray]):
    """
    Apply h -> h (1 + epsilon X) to a step Hamiltonian

    Args:
        ideal: StepHamiltonian with the ideal couplings
        epsilon: Noise strength
        stream: Generator to draw X from, or precomputed draws

    Returns:
        New StepHamiltonian; the input itself when epsilon is 0
    """
    if epsilon < 0:
        raise ConfigError(f"epsilon must be nonnegative, got {epsilon}")
    if epsilon == 0:
        return ideal

    shape = ideal.couplings.shape
    if isinstance(stream, np.ndarray):
        draws = stream
        if draws.shape != shape:
            raise GeometryMismatchError(f"Draws of shape {draws.shape} do not fit block {shape}")
    else:
        draws = stream.standard_normal(shape)
    return replace(ideal, couplings=ideal.couplings * (1.0 + epsilon * draws))


@numba.njit
def _power_law_kernel(a_coords, b_coords, a_ids, b_ids, alpha, h0):
    out = np.empty((a_coords.shape[0], b_coords.shape[0]))
    for i in range(a_coords.shape[0]):
        for j in range(b_coords.shape[0]):
            if a_ids[i] == b_ids[j]:
                out[i, j] = 0.0
                continue
            dist = 0
            for k in range(a_coords.shape[1]):
                dist += abs(a_coords[i, k] - b_coords[j, k])
            if dist == 0:
                out[i, j] = np.nan
            else:
                out[i, j] = h0 * float(dist) ** (-alpha)
    return out


def physical_couplings(layout: SiteLayout, alpha: float,
                       rows: Optional[np.ndarray] = None,
                       cols: Optional[np.ndarray] = None,
                       h0: float = 1.0) -> np.ndarray:
    """
    Power-law coupling table h_jk = h0 |x_j - x_k|^(-alpha)

    Args:
        layout: Site layout
        alpha: Power-law exponent
        rows: Row site indices (all sites when omitted)
        cols: Column site indices (all sites when omitted)
        h0: Base coupling

    Returns:
        Table of shape (len(rows), len(cols)); self-pairs are 0
    """
    all_sites = np.arange(layout.n_sites, dtype=np.int64)
    rows = all_sites if rows is None else np.asarray(rows, dtype=np.int64)
    cols = all_sites if cols is None else np.asarray(cols, dtype=np.int64)
    coords = np.ascontiguousarray(layout.coords, dtype=np.int64)

    table = _power_law_kernel(coords[rows], coords[cols], rows, cols, float(alpha), float(h0))
    if np.isnan(table).any():
        i, j = np.argwhere(np.isnan(table))[0]
        raise GeometryMismatchError(f"Sites {rows[i]} and {cols[j]} share a position")
    return table


def ideal_error_split(h: np.ndarray, q: int, alpha: float, beta: float, h0: float = 1.0):
    """
    Split a gapped coupling block into its center value and the remainder

    Returns:
        Tuple of (ideal constant, error array)
    """
    ideal = h0 * ((0.75 + beta) * 2.0 ** q) ** (-alpha)
    return ideal, h - ideal


def _require_gap(beta: float):
    if beta <= 0:
        raise BoundDomainError(f"Error bounds need beta > 0, got {beta}")


def h_q_max(q: int, alpha: float, beta: float, h0: float = 1.0) -> float:
    """Largest error entry of step q, 2^(-q alpha)(beta^-alpha - (3/4+beta)^-alpha)"""
    _require_gap(beta)
    return h0 * 2.0 ** (-q * alpha) * (beta ** (-alpha) - (0.75 + beta) ** (-alpha))


def herr_norm_bound(q: int, alpha: float, beta: float, h0: float = 1.0) -> float:
    """Operator-norm bound sqrt(2) 2^(q-2) h_q^max on the error block of step q"""
    return math.sqrt(2.0) * 2.0 ** (q - 2) * h_q_max(q, alpha, beta, h0)


def realized_herr_norm(q: int, alpha: float, beta: float, h0: float = 1.0) -> float:
    """
    Exact largest singular value of the error block of gapped step q

    Builds the gapped layout up to level q and splits its power-law block.
    """
    _require_gap(beta)
    layout, hierarchy = disjoint_layout(1, q, beta)
    src, dst = hierarchy.step_blocks(q)
    block = physical_couplings(layout, alpha, rows=dst, cols=src, h0=h0)
    _, error = ideal_error_split(block, q, alpha, beta, h0)
    return float(svdvals(error)[0])


def _angle_factor(d: int) -> float:
    return 1.0 + (2 ** d - 1) ** -0.5


def delta_rand_step(epsilon: float, gamma: float, d: int, q: int) -> float:
    """Per-step bound gamma eps phi 2^(d/2)[1 + (2^d-1)^(-1/2)] 2^(-qd/2)"""
    phi = math.atan(2 ** d - 1)
    return gamma * epsilon * phi * 2 ** (d / 2) * _angle_factor(d) * 2.0 ** (-q * d / 2)


def delta_rand_bound(epsilon: float, gamma: float, d: int, distance: float,
                     mode: SumMode = SumMode.QUADRATURE) -> float:
    """
    Whole-protocol error from uncorrelated coupling noise

    Args:
        epsilon: Noise strength
        gamma: Confidence parameter (>= 1)
        d: Dimension
        distance: Linear size R = 2^n of the protocol
        mode: QUADRATURE returns delta^2, LINEAR returns delta

    Returns:
        Bound value, possibly vacuous (> 1)
    """
    if gamma < 1:
        raise BoundDomainError(f"gamma must be >= 1, got {gamma}")
    if distance < 1:
        raise ConfigError(f"Distance must be >= 1, got {distance}")
    phi = math.atan(2 ** d - 1)
    if mode is SumMode.QUADRATURE:
        value = (2.0 * epsilon ** 2 * gamma ** 2 * phi ** 2 * _angle_factor(d) ** 2
                 * (1.0 - distance ** (-d)) / (1.0 - 2.0 ** (-d)))
    else:
        value = (2.0 * epsilon * gamma * phi * _angle_factor(d)
                 * (1.0 - distance ** (-d / 2)) / (1.0 - 2.0 ** (-d / 2)))
    if value > 1:
        logger.warning(f"Vacuous {mode.value} noise bound {value:.4g} (epsilon={epsilon})")
    return value


def p_fail_bound(gamma: float, d: int, distance: float) -> float:
    """
    Probability that some step exceeds its Bai-Yin threshold

    Args:
        gamma: Confidence parameter (> 1)
        d: Dimension
        distance: Linear size R of the protocol

    Returns:
        2^(-A(d+1)+2)(1 - R^(-Ad))/(1 - 2^(-Ad)), possibly vacuous (> 1)
    """
    if gamma <= 1:
        raise BoundDomainError(f"gamma must exceed 1, got {gamma}")
    a = 0.5 * (gamma - 1) ** 2 * (1.0 + 2.0 ** (1 - d) * math.sqrt(2 ** d - 1))
    value = 2.0 ** (-a * (d + 1) + 2) * (1.0 - distance ** (-a * d)) / (1.0 - 2.0 ** (-a * d))
    if value > 1:
        logger.warning(f"Vacuous failure-probability bound {value:.4g} (gamma={gamma})")
    return value


def bai_yin_threshold(epsilon: float, coupling: float, size_a: int, size_b: int,
                      gamma: float) -> float:
    """Norm threshold gamma eps C (sqrt(a) + sqrt(b)) of a step's disorder"""
    return gamma * epsilon * coupling * (math.sqrt(size_a) + math.sqrt(size_b))


def bai_yin_tail(gamma: float, size_a: int, size_b: int) -> float:
    """Probability bound 2 exp(-(gamma-1)^2 (sqrt(a) + sqrt(b))^2 / 2) for exceeding the threshold"""
    return 2.0 * math.exp(-0.5 * (gamma - 1) ** 2 * (math.sqrt(size_a) + math.sqrt(size_b)) ** 2)


def bai_yin_probability(sigma: float, t: float) -> float:
    """Tail bound 2 exp(-t^2 / (2 sigma^2))"""
    return 2.0 * math.exp(-0.5 * t ** 2 / sigma ** 2)


def bai_yin_check(n1: int, n2: int, sigma: float, t: float, trials: int,
                  seed: int = 0) -> float:
    """
    Empirical rate of ||M|| > sigma (sqrt(N1) + sqrt(N2)) + t for Gaussian M

    Args:
        n1: Rows (>= n2)
        n2: Columns
        sigma: Entry standard deviation
        t: Excess over the mean-norm scale
        trials: Number of sampled matrices
        seed: Stream seed

    Returns:
        Fraction of samples violating the threshold
    """
    if not n1 >= n2 >= 1:
        raise ConfigError(f"Need N1 >= N2 >= 1, got {n1}, {n2}")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    threshold = sigma * (math.sqrt(n1) + math.sqrt(n2)) + t
    violations = 0
    for trial in range(trials):
        sample = sigma * step_stream(seed, trial, 0).standard_normal((n1, n2))
        if svdvals(sample)[0] > threshold:
            violations += 1
    return violations / trials


def delta_lr_step(alpha: float, beta: float) -> float:
    """Per-step long-range error (pi/4)[(1 + 3/(4 beta))^alpha - 1], independent of the level"""
    _require_gap(beta)
    return 0.25 * math.pi * ((1.0 + 0.75 / beta) ** alpha - 1.0)


def delta_lr_bound(distance: float, beta: float, alpha: float,
                   mode: LRMode = LRMode.EXACT) -> float:
    """
    Squared whole-protocol error from long-range coupling corrections

    Args:
        distance: Transfer distance R
        beta: Gap prefactor
        alpha: Power-law exponent
        mode: EXACT bracket form or LARGE_BETA leading order

    Returns:
        delta^2; a nonpositive logarithm gives 0
    """
    _require_gap(beta)
    if distance < 1:
        raise ConfigError(f"Distance must be >= 1, got {distance}")
    if mode is LRMode.EXACT:
        value = (math.pi ** 2 / 8.0 * ((1.0 + 0.75 / beta) ** alpha - 1.0) ** 2
                 * math.log2(distance / (4.0 * beta + 3.0) + 1.0))
    else:
        value = (9.0 * math.pi ** 2 / 128.0 * (alpha / beta) ** 2
                 * math.log2(distance / (4.0 * beta + 3.0)))
    return max(value, 0.0)


@dataclass
class BoundReport:
    """All analytic error bounds of one config"""
    per_step: List[float]
    total_quadrature: float
    total_linear: float
    p_fail: Optional[float]
    gamma: float
    kind: NoiseKind = NoiseKind.UNCORRELATED_GAUSSIAN
    herr_bounds: List[float] = field(default_factory=list)
    herr_realized: List[float] = field(default_factory=list)

    @property
    def vacuous(self) -> Dict[str, bool]:
        return {
            "total_quadrature": self.total_quadrature > 1,
            "total_linear": self.total_linear > 1,
            "p_fail": self.p_fail is not None and self.p_fail > 1,
        }

    @property
    def fidelity_floor(self) -> float:
        return 1.0 - self.total_quadrature

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "gamma": self.gamma,
            "per_step": list(self.per_step),
            "total_quadrature": self.total_quadrature,
            "total_linear": self.total_linear,
            "p_fail": self.p_fail,
            "fidelity_floor": self.fidelity_floor,
            "herr_bounds": list(self.herr_bounds),
            "herr_realized": list(self.herr_realized),
            "vacuous": self.vacuous,
        }


def bound_report(cfg: ProtocolConfig, gamma: float = 1.5,
                 realized: bool = False) -> BoundReport:
    """
    Evaluate every bound that applies to a config

    Args:
        cfg: Protocol config
        gamma: Confidence parameter for the random-noise bounds
        realized: Also compute exact error-block norms (physical variant)

    Returns:
        BoundReport
    """
    if cfg.variant is Variant.DISJOINT_PHYSICAL:
        distance = (4.0 * cfg.beta + 3.0) * (2 ** cfg.n - 1)
        step = delta_lr_step(cfg.alpha, cfg.beta)
        levels = range(1, cfg.n + 1)
        report = BoundReport(
            per_step=[step] * cfg.n,
            total_quadrature=delta_lr_bound(distance, cfg.beta, cfg.alpha, LRMode.EXACT),
            total_linear=2.0 * cfg.n * step,
            p_fail=None,
            gamma=gamma,
            kind=NoiseKind.PHYSICAL_LR,
            herr_bounds=[herr_norm_bound(q, cfg.alpha, cfg.beta, cfg.h0) for q in levels],
        )
        if realized:
            report.herr_realized = [realized_herr_norm(q, cfg.alpha, cfg.beta, cfg.h0) for q in levels]
        return report

    distance = 2.0 ** cfg.n
    return BoundReport(
        per_step=[delta_rand_step(cfg.epsilon, gamma, cfg.d, q) for q in range(1, cfg.n + 1)],
        total_quadrature=delta_rand_bound(cfg.epsilon, gamma, cfg.d, distance, SumMode.QUADRATURE),
        total_linear=delta_rand_bound(cfg.epsilon, gamma, cfg.d, distance, SumMode.LINEAR),
        p_fail=p_fail_bound(gamma, cfg.d, distance) if gamma > 1 else None,
        gamma=gamma,
    )


def fidelity_lower_bound(cfg: ProtocolConfig, gamma: float = 1.0) -> Optional[float]:
    """
    Fidelity floor used for the sweep bound column

    Returns:
        1 - delta^2 for noisy ideal or gapped physical runs, 1 for noise-free
        ideal runs, None where no bound is defined (gapless physical runs)
    """
    if cfg.variant is Variant.DISJOINT_PHYSICAL:
        if cfg.beta <= 0:
            return None
        distance = (4.0 * cfg.beta + 3.0) * (2 ** cfg.n - 1)
        return 1.0 - delta_lr_bound(distance, cfg.beta, cfg.alpha, LRMode.EXACT)
    if cfg.epsilon == 0:
        return 1.0
    return 1.0 - delta_rand_bound(cfg.epsilon, gamma, cfg.d, 2.0 ** cfg.n, SumMode.QUADRATURE)


