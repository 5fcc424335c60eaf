"""
Protocol schedules and closed-form runtimes
Produces the expand/collapse step list of every variant with analytic durations
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.errors import CapacityError, ConfigError, GeometryMismatchError
from core.geometry import BlockHierarchy, CenterRule, Convention, ProtocolConfig, Variant
from core.ortho import block_size

logger = logging.getLogger(__name__)


class Phase(Enum):
    """Protocol half"""
    EXPAND = "expand"
    COLLAPSE = "collapse"


class CouplingKind(Enum):
    """How a step's bipartite coupling block is filled"""
    IDEAL_UNIFORM = "ideal_uniform"
    PHYSICAL_POWER_LAW = "physical_power_law"
    MULTI_PARTICLE = "multi_particle"


@dataclass(frozen=True)
class CouplingRule:
    """
    Coupling recipe for one step

    strength is C_q for uniform blocks, the center coupling for power-law
    blocks (used only for the duration) and K for multi-particle blocks.
    """
    kind: CouplingKind
    strength: float
    alpha: float = 0.0
    h0: float = 1.0
    block_size: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "strength": self.strength,
            "alpha": self.alpha,
            "h0": self.h0,
            "block_size": self.block_size,
        }


@dataclass(frozen=True)
class StepSpec:
    """One piecewise-constant protocol step"""
    q: int
    phase: Phase
    coupling: CouplingRule
    sign: int
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"Step q={self.q} has nonpositive duration {self.duration}")
        expected = 1 if self.phase is Phase.EXPAND else -1
        if self.sign != expected:
            raise ConfigError(f"{self.phase.value} step q={self.q} must carry sign {expected}")

    @property
    def collapse(self) -> bool:
        return self.phase is Phase.COLLAPSE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "phase": self.phase.value,
            "sign": self.sign,
            "duration": self.duration,
            "coupling": self.coupling.to_dict(),
        }


@dataclass(frozen=True)
class Schedule:
    """Ordered expand then collapse steps"""
    steps: Tuple[StepSpec, ...]
    variant: Variant
    m: int = 1
    first_level: int = 1

    @property
    def total_runtime(self) -> float:
        return sum(step.duration for step in self.steps)

    @property
    def durations(self) -> List[float]:
        return [step.duration for step in self.steps]

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variant": self.variant.value,
            "m": self.m,
            "total_runtime": self.total_runtime,
            "steps": [step.to_dict() for step in self.steps],
        }


@dataclass
class RuntimeSummary:
    """Simulated schedule total next to its analytic counterpart"""
    total: float
    per_step: List[float]
    closed_form: float
    constant_convention: Convention
    center_rule: CenterRule
    exact: bool = True
    mp_bound: Optional[float] = None

    @property
    def relative_gap(self) -> float:
        if self.closed_form == 0:
            return abs(self.total)
        return abs(self.total - self.closed_form) / abs(self.closed_form)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total": self.total,
            "per_step": list(self.per_step),
            "closed_form": self.closed_form,
            "constant_convention": self.constant_convention.value,
            "center_rule": self.center_rule.value,
            "exact": self.exact,
            "mp_bound": self.mp_bound,
        }


def ideal_coupling(q: int, alpha: float, h0: float = 1.0) -> float:
    """Uniform coupling C_q = 2^(-q alpha) h0 between nested cubes"""
    if q < 1:
        raise ConfigError(f"Level must be >= 1, got {q}")
    return h0 * 2.0 ** (-q * alpha)


def lr_center_coupling(q: int, alpha: float, beta: float) -> float:
    """
    Center-to-center coupling of a gapped step using the bracket distance

    Args:
        q: Level index (>= 1)
        alpha: Power-law exponent
        beta: Gap prefactor

    Returns:
        [ceil(2^(q-2)) + beta 2^q + 2^(q-1)]^(-alpha)
    """
    if q < 1:
        raise ConfigError(f"Level must be >= 1, got {q}")
    distance = math.ceil(2.0 ** (q - 2)) + beta * 2 ** q + 2 ** (q - 1)
    return distance ** (-alpha)


def geometric_center_coupling(q: int, alpha: float, beta: float) -> float:
    """Center coupling from the asymptotic distance (3/4 + beta) 2^q"""
    if q < 1:
        raise ConfigError(f"Level must be >= 1, got {q}")
    return (2.0 ** q * (0.75 + beta)) ** (-alpha)


def center_coupling(q: int, cfg: ProtocolConfig) -> float:
    """Center coupling of step q under the config's center rule, scaled by h0"""
    if cfg.center_rule is CenterRule.GEOMETRIC:
        return cfg.h0 * geometric_center_coupling(q, cfg.alpha, cfg.beta)
    return cfg.h0 * lr_center_coupling(q, cfg.alpha, cfg.beta)


def rotation_angle(d: int, convention: Convention = Convention.CORRECTED) -> float:
    """Mixing angle of a nested step"""
    if convention is Convention.UNCORRECTED:
        return math.atan(2 ** d - 1)
    return math.atan(math.sqrt(2 ** d - 1))


def step_duration_ideal(q: int, cfg: ProtocolConfig,
                        convention: Optional[Convention] = None) -> float:
    """
    Duration of nested step q

    Args:
        q: Level index
        cfg: Nested config
        convention: Angle convention, defaults to cfg.convention

    Returns:
        phi / (C_q sqrt(|B_(q-1)| |B~_q|))
    """
    if cfg.variant is not Variant.NESTED_IDEAL:
        raise GeometryMismatchError("Nested step durations need the nested variant")
    convention = convention or cfg.convention
    inner = 2 ** ((q - 1) * cfg.d)
    shell = 2 ** (q * cfg.d) - inner
    c_q = ideal_coupling(q, cfg.alpha, cfg.h0)
    return rotation_angle(cfg.d, convention) / (c_q * math.sqrt(inner * shell))


def step_duration_pi_half(coupling: float, size_a: int, size_b: int) -> float:
    """Duration of a full pi/2 rotation between two uniformly coupled blocks"""
    if not coupling > 0:
        raise ConfigError(f"Coupling must be positive, got {coupling}")
    return math.pi / (2.0 * coupling * math.sqrt(size_a * size_b))


def _is_power_of(value: int, base: int) -> bool:
    if value < 1:
        return False
    while value % base == 0:
        value //= base
    return value == 1


def mp_coupling(coupling: float, width: int, d: int = 1) -> float:
    """Reduced multi-particle coupling K = C / sqrt(W)"""
    if not _is_power_of(width, 2 ** d):
        raise ConfigError(f"Block size {width} is not a power of {2 ** d}")
    return coupling / math.sqrt(width)


def emission_fidelity(tau: float, gamma: float) -> float:
    """Survival factor exp(-gamma tau) under spontaneous emission"""
    if tau < 0 or gamma < 0:
        raise ConfigError("Runtime and decay rate must be nonnegative")
    return math.exp(-gamma * tau)


def tau_sp(d: int, alpha: float, n: int, convention: Convention = Convention.CORRECTED,
           h0: float = 1.0) -> float:
    """
    Closed-form nested runtime as a geometric series

    Args:
        d: Dimension
        alpha: Power-law exponent
        n: Number of levels
        convention: Angle convention
        h0: Base coupling

    Returns:
        Total runtime of both phases
    """
    phi = rotation_angle(d, convention)
    prefactor = 2.0 * phi * 2 ** d / (math.sqrt(2 ** d - 1) * h0)
    if alpha == d:
        return prefactor * n
    ratio = 2.0 ** (alpha - d)
    return prefactor * ratio * (ratio ** n - 1.0) / (ratio - 1.0)


def tau_lr(alpha: float, beta: float, distance: float, h0: float = 1.0) -> float:
    """
    Closed-form runtime of the gapped protocol at transfer distance R

    Args:
        alpha: Power-law exponent
        beta: Gap prefactor (0 gives the gapless runtime)
        distance: Transfer distance R
        h0: Base coupling

    Returns:
        Total runtime of both phases
    """
    if distance < 0:
        raise ConfigError(f"Distance must be nonnegative, got {distance}")
    growth = distance / (4.0 * beta + 3.0) + 1.0
    prefactor = math.pi * math.sqrt(2.0) * (0.75 + beta) ** alpha / h0
    if alpha == 1:
        return prefactor * math.log2(growth)
    ratio = 2.0 ** (alpha - 1.0)
    return prefactor * ratio * (growth ** (alpha - 1.0) - 1.0) / (ratio - 1.0)


def gapped_distance(n: int, beta: float) -> float:
    """Transfer distance (4 beta + 3)(2^n - 1) of the gapped layout"""
    return (4.0 * beta + 3.0) * (2 ** n - 1)


def tau_mp_exact(cfg: ProtocolConfig) -> float:
    """Runtime of the implemented multi-qubit construction, sqrt(W) (tau_LR(n) - tau_LR(w))"""
    width = block_size(cfg.m, cfg.d)
    depth = width.bit_length() - 1
    full = tau_lr(cfg.alpha, cfg.beta, gapped_distance(cfg.n, cfg.beta), cfg.h0)
    skipped = tau_lr(cfg.alpha, cfg.beta, gapped_distance(depth, cfg.beta), cfg.h0)
    return math.sqrt(width) * (full - skipped)


def tau_mp_bound(d: int, alpha: float, m: int, distance: float, h0: float = 1.0) -> float:
    """
    Published upper bound on the multi-qubit runtime

    The (3/2)^alpha factor assumes a disjoint-ball spacing that is not fixed
    by the construction, so the value is indicative only.
    """
    prefactor = (2 ** (1.5 * d) * math.pi / math.sqrt(2 ** d - 1)
                 * 1.5 ** alpha * math.sqrt(m) / h0)
    reach = 2.0 * distance / 3.0 + 2.0
    if alpha == d:
        return prefactor * math.log2(reach / m ** (1.0 / d))
    return prefactor * (reach ** (alpha - d) - m ** (alpha / d - 1.0)) / (2.0 ** (alpha - d) - 1.0)


def _validate_geometry(cfg: ProtocolConfig, geom: BlockHierarchy):
    if geom.nested != (cfg.variant is Variant.NESTED_IDEAL):
        raise GeometryMismatchError(f"Geometry does not match variant {cfg.variant.value}")
    if geom.n != cfg.n:
        raise GeometryMismatchError(f"Geometry has {geom.n} levels, config asks for {cfg.n}")
    if geom.nested:
        expected = [2 ** (q * cfg.d) for q in range(cfg.n + 1)]
    else:
        expected = [2 ** q for q in range(cfg.n + 1)]
    if geom.sizes() != expected:
        raise GeometryMismatchError(f"Block sizes {geom.sizes()} differ from {expected}")


def _expand_steps(cfg: ProtocolConfig) -> Tuple[List[Tuple[int, CouplingRule, float]], int]:
    """Coupling rules and durations of the expand phase, plus the first level"""
    rows = []
    first = 1
    if cfg.m > 1 and cfg.variant is not Variant.DISJOINT_IDEAL:
        raise GeometryMismatchError("Multi-qubit transfer needs the disjoint ideal variant")
    if cfg.variant is Variant.NESTED_IDEAL:
        for q in range(1, cfg.n + 1):
            rule = CouplingRule(CouplingKind.IDEAL_UNIFORM, ideal_coupling(q, cfg.alpha, cfg.h0),
                                alpha=cfg.alpha, h0=cfg.h0)
            rows.append((q, rule, step_duration_ideal(q, cfg)))
        return rows, first

    if cfg.m > 1:
        width = block_size(cfg.m, cfg.d)
        first = width.bit_length()
        if first > cfg.n:
            raise CapacityError(f"{cfg.m} qubits need n > {first - 1}, got n={cfg.n}")
        for q in range(first, cfg.n + 1):
            c_q = center_coupling(q, cfg)
            k = mp_coupling(c_q * math.sqrt(2 ** (q - 1) * 2 ** q), width, cfg.d)
            rule = CouplingRule(CouplingKind.MULTI_PARTICLE, k, alpha=cfg.alpha,
                                h0=cfg.h0, block_size=width)
            rows.append((q, rule, math.pi / (2.0 * k)))
        return rows, first

    kind = (CouplingKind.PHYSICAL_POWER_LAW if cfg.variant is Variant.DISJOINT_PHYSICAL
            else CouplingKind.IDEAL_UNIFORM)
    for q in range(1, cfg.n + 1):
        c_q = center_coupling(q, cfg)
        rule = CouplingRule(kind, c_q, alpha=cfg.alpha, h0=cfg.h0)
        rows.append((q, rule, step_duration_pi_half(c_q, 2 ** (q - 1), 2 ** q)))
    return rows, first


def build_schedule(cfg: ProtocolConfig, geom: Optional[BlockHierarchy] = None) -> Schedule:
    """
    Build the full expand/collapse schedule of a config

    Args:
        cfg: Protocol config
        geom: Optional hierarchy to validate against

    Returns:
        Schedule with expand steps q = 1..n followed by collapse steps q = n..1
    """
    if geom is not None:
        _validate_geometry(cfg, geom)

    rows, first = _expand_steps(cfg)
    steps = [StepSpec(q, Phase.EXPAND, rule, 1, duration) for q, rule, duration in rows]
    steps += [StepSpec(q, Phase.COLLAPSE, rule, -1, duration) for q, rule, duration in reversed(rows)]

    schedule = Schedule(steps=tuple(steps), variant=cfg.variant, m=cfg.m, first_level=first)
    logger.debug(f"Schedule built: {cfg.variant.value}, {len(steps)} steps, "
                 f"total runtime {schedule.total_runtime:.6g}")
    return schedule


def runtime_closed_form(cfg: ProtocolConfig, schedule: Optional[Schedule] = None) -> RuntimeSummary:
    """
    Compare a schedule's summed durations with the matching closed form

    Args:
        cfg: Protocol config
        schedule: Prebuilt schedule, built from cfg when omitted

    Returns:
        RuntimeSummary; exact is False where the closed form only
        approximates the schedule (bracket center rule)
    """
    schedule = schedule or build_schedule(cfg)
    mp_bound = None
    exact = True

    if cfg.variant is Variant.NESTED_IDEAL:
        closed = tau_sp(cfg.d, cfg.alpha, cfg.n, cfg.convention, cfg.h0)
    elif cfg.m > 1:
        closed = tau_mp_exact(cfg)
        mp_bound = tau_mp_bound(cfg.d, cfg.alpha, cfg.m, gapped_distance(cfg.n, cfg.beta), cfg.h0)
        exact = cfg.center_rule is CenterRule.GEOMETRIC
    else:
        closed = tau_lr(cfg.alpha, cfg.beta, gapped_distance(cfg.n, cfg.beta), cfg.h0)
        exact = cfg.center_rule is CenterRule.GEOMETRIC

    summary = RuntimeSummary(
        total=schedule.total_runtime,
        per_step=schedule.durations,
        closed_form=closed,
        constant_convention=cfg.convention,
        center_rule=cfg.center_rule,
        exact=exact,
        mp_bound=mp_bound,
    )
    if exact and summary.relative_gap > 1e-9:
        logger.warning(f"Schedule total {summary.total} deviates from closed form {closed}")
    return summary


def level_ratio(schedule: Schedule) -> np.ndarray:
    """Successive expand-duration ratios t_(q+1)/t_q"""
    expand = np.array([s.duration for s in schedule.steps if s.phase is Phase.EXPAND])
    return expand[1:] / expand[:-1]
