"""
Monte Carlo sweeps, power-law fits and the fidelity-speed tradeoff
Runs reproducible batches of protocol trials and turns them into records
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from core.dynamics import run_multi, run_single
from core.errors import (ConfigError, FitError, GeometryMismatchError, PropagationError,
                         TransferError, UnreachableTargetError)
from core.geometry import DEFAULT_MAX_SITES, ProtocolConfig, Variant, achieved_distance
from core.noise import fidelity_lower_bound
from core.ortho import DEFAULT_MAX_FAMILY_DEPTH
from core.schedule import build_schedule, gapped_distance, tau_lr
from utils.serialization import read_csv_records, read_json, write_csv, write_json
from utils.statistics import summarize_trials

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("axis", "value", "mean_p_final", "stderr", "trials", "runtime_total", "bound")


class SweepAxis(Enum):
    N = "n"
    EPSILON = "epsilon"
    BETA = "beta"
    M = "m"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


@dataclass
class ExperimentPlan:
    """One sweep: a base config, the axis to vary and how many trials per point"""
    base: ProtocolConfig
    axis: SweepAxis
    values: List[float]
    trials: int = 100
    gamma: float = 1.0
    out: Optional[str] = None
    fmt: OutputFormat = OutputFormat.CSV

    def __post_init__(self):
        self.axis = SweepAxis(self.axis)
        self.fmt = OutputFormat(self.fmt)
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.values:
            raise ConfigError("A sweep needs at least one axis value")

    def config_for(self, value: float) -> ProtocolConfig:
        if self.axis in (SweepAxis.N, SweepAxis.M):
            if value != int(value):
                raise ConfigError(f"Axis {self.axis.value} needs integer values, got {value}")
            value = int(value)
        return self.base.replace(**{self.axis.value: value})


@dataclass
class SweepRecord:
    """Statistics of one sweep point; mean and runtime are None when the point could not run"""
    axis: str
    value: float
    mean_p_final: Optional[float]
    stderr: float
    trials: int
    runtime_total: Optional[float]
    bound: Optional[float] = None
    bound_vacuous: bool = False
    distance: Optional[int] = None
    failures: List[str] = field(default_factory=list)

    def to_row(self) -> tuple:
        return (self.axis, self.value, self.mean_p_final, self.stderr, self.trials,
                self.runtime_total, self.bound)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "axis": self.axis,
            "value": self.value,
            "mean_p_final": self.mean_p_final,
            "stderr": self.stderr,
            "trials": self.trials,
            "runtime_total": self.runtime_total,
            "bound": self.bound,
            "bound_vacuous": self.bound_vacuous,
            "distance": self.distance,
            "failures": list(self.failures),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepRecord":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        kwargs.setdefault("failures", [])
        return cls(**kwargs)


@dataclass
class FitResult:
    """Power-law fit log P = -a log R + b"""
    a: float
    b: float
    stderr_a: float
    points_used: int
    r_squared: float

    def to_dict(self) -> Dict[str, Any]:
        return {"a": self.a, "b": self.b, "stderr_a": self.stderr_a,
                "points_used": self.points_used, "r_squared": self.r_squared}


@dataclass
class TradeoffRow:
    beta: float
    p_x: float
    repeats: Optional[int]
    tau_lr: float
    tau_eff: float
    tau_star: float


@dataclass
class TradeoffCurve:
    """Effective runtime relative to the gapless protocol over a beta grid"""
    fidelity: float
    rows: List[TradeoffRow]
    argmin_beta: float

    @property
    def min_tau_star(self) -> float:
        return min(row.tau_star for row in self.rows)

    def has_interior_minimum(self) -> bool:
        stars = [row.tau_star for row in self.rows]
        index = int(np.argmin(stars))
        return 0 < index < len(stars) - 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "F": self.fidelity,
            "argmin_beta": self.argmin_beta,
            "rows": [vars(row).copy() for row in self.rows],
        }


def _trial_fidelity(cfg: ProtocolConfig, trial: int, max_sites: int, max_family_depth: int) -> float:
    if cfg.m > 1:
        return float(np.mean(run_multi(cfg, trial, max_sites, max_family_depth).per_qubit))
    return run_single(cfg, trial, max_sites=max_sites).p_final


def _safe_trial(cfg: ProtocolConfig, trial: int, max_sites: int, max_family_depth: int):
    try:
        return _trial_fidelity(cfg, trial, max_sites, max_family_depth), None
    except (TransferError, np.linalg.LinAlgError) as e:
        logger.error(f"Trial {trial} failed: {e}")
        return None, f"trial {trial}: {e}"


def _point_distance(cfg: ProtocolConfig, max_sites: int) -> Optional[int]:
    try:
        return achieved_distance(cfg, max_sites)
    except TransferError:
        return None


def _point_runtime(cfg: ProtocolConfig, failures: List[str]) -> Optional[float]:
    try:
        return build_schedule(cfg).total_runtime
    except TransferError as e:
        logger.error(f"No schedule for {cfg.variant.value} n={cfg.n} m={cfg.m}: {e}")
        failures.append(f"schedule: {e}")
        return None


def _point_bound(cfg: ProtocolConfig, gamma: float):
    floor = fidelity_lower_bound(cfg, gamma)
    if floor is not None and floor < 0:
        logger.warning(f"Vacuous fidelity floor {floor:.4g} for epsilon={cfg.epsilon}, n={cfg.n}")
        return None, True
    return floor, False


def monte_carlo(plan: ExperimentPlan, threads: int = 1,
                max_sites: int = DEFAULT_MAX_SITES,
                max_family_depth: int = DEFAULT_MAX_FAMILY_DEPTH) -> List[SweepRecord]:
    """
    Run every sweep point of a plan

    Noise-free points are deterministic and run once. Trials run on a
    thread pool; results are summarized in trial order so the output does
    not depend on the worker count. A point that cannot run is recorded
    with its failures and the sweep moves on.

    Args:
        plan: Experiment plan
        threads: Worker count
        max_sites: Capacity limit
        max_family_depth: Depth limit of the multi-qubit sign family

    Returns:
        One SweepRecord per axis value
    """
    records = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for value in plan.values:
            cfg = plan.config_for(value)
            trials = plan.trials if cfg.epsilon > 0 else 1
            outcomes = list(pool.map(
                lambda t: _safe_trial(cfg, t, max_sites, max_family_depth), range(trials)))

            failures = [failure for _, failure in outcomes if failure is not None]
            summary = summarize_trials(p for p, failure in outcomes if failure is None)
            if summary.empty:
                logger.error(f"Every trial failed at {plan.axis.value}={value}")
            bound, vacuous = _point_bound(cfg, plan.gamma)

            record = SweepRecord(
                axis=plan.axis.value,
                value=value,
                mean_p_final=summary.mean,
                stderr=summary.stderr,
                trials=summary.count,
                runtime_total=_point_runtime(cfg, failures),
                bound=bound,
                bound_vacuous=vacuous,
                distance=_point_distance(cfg, max_sites),
                failures=failures,
            )
            records.append(record)
            if not summary.empty:
                logger.info(f"Sweep point {plan.axis.value}={value}: mean p_final "
                            f"{record.mean_p_final:.6f} +- {record.stderr:.2e} over {record.trials} trials")
    return records


def record_distances(records: Sequence[SweepRecord], base: ProtocolConfig,
                     max_sites: int = DEFAULT_MAX_SITES) -> List[float]:
    """Transfer distance of each record, recomputed from the axis when missing"""
    distances = []
    for record in records:
        if record.distance is not None:
            distances.append(float(record.distance))
            continue
        if record.axis != SweepAxis.N.value:
            raise FitError(f"Cannot infer distances from a sweep over {record.axis}")
        cfg = base.replace(n=int(record.value))
        distances.append(float(achieved_distance(cfg, max_sites)))
    return distances


def fit_power_law(records: Sequence[SweepRecord],
                  distances: Optional[Sequence[float]] = None) -> FitResult:
    """
    Least-squares fit of log P against log R

    Args:
        records: Sweep records with positive mean_p_final
        distances: Transfer distance per record, defaults to record.distance

    Returns:
        FitResult with the decay exponent a > 0 for decaying data
    """
    if len(records) < 3:
        raise FitError(f"Need at least 3 points, got {len(records)}")
    if distances is None:
        distances = [r.distance for r in records]
    if len(distances) != len(records) or any(d is None for d in distances):
        raise FitError("Every record needs a transfer distance")

    if any(r.mean_p_final is None for r in records):
        raise FitError("Every record needs a mean probability; a point had no successful trials")
    p = np.array([r.mean_p_final for r in records], dtype=float)
    x = np.array(distances, dtype=float)
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise FitError("Power-law fit needs strictly positive probabilities")
    if np.any(x <= 0):
        raise FitError("Power-law fit needs positive distances")

    result = linregress(np.log(x), np.log(p))
    return FitResult(
        a=float(-result.slope),
        b=float(result.intercept),
        stderr_a=float(result.stderr),
        points_used=len(records),
        r_squared=float(result.rvalue ** 2),
    )


def repeat_count(p: float, fidelity: float) -> int:
    """
    Smallest number of repetitions s with 1 - (1 - p)^s > F

    Args:
        p: Single-run success probability (0 < p <= 1)
        fidelity: Target F (0 <= F < 1)

    Returns:
        Repeat count, at least 1
    """
    if not 0 <= fidelity < 1:
        raise ConfigError(f"Target fidelity must lie in [0, 1), got {fidelity}")
    if not 0 <= p <= 1:
        raise ConfigError(f"Probability must lie in [0, 1], got {p}")
    if p == 0:
        raise UnreachableTargetError("Zero success probability never reaches the target")
    if p == 1:
        return 1

    count = max(1, math.ceil(math.log1p(-fidelity) / math.log1p(-p)))
    while 1 - (1 - p) ** count <= fidelity:
        count += 1
    while count > 1 and 1 - (1 - p) ** (count - 1) > fidelity:
        count -= 1
    return count


def estimate_probability(cfg: ProtocolConfig, trials: int = 1, threads: int = 1,
                         max_sites: int = DEFAULT_MAX_SITES) -> float:
    """Mean target probability of a config"""
    plan = ExperimentPlan(base=cfg, axis=SweepAxis.BETA, values=[cfg.beta], trials=trials)
    record = monte_carlo(plan, threads, max_sites)[0]
    if record.mean_p_final is None:
        raise PropagationError(f"No successful trial at beta={cfg.beta}: {record.failures[0]}")
    return record.mean_p_final


def tradeoff(fidelity: float, betas: Sequence[float], cfg: ProtocolConfig, trials: int = 1,
             p_estimator: Optional[Callable[[ProtocolConfig], float]] = None,
             threads: int = 1, max_sites: int = DEFAULT_MAX_SITES) -> TradeoffCurve:
    """
    Effective runtime tau* = l tau_LR(beta) / tau_LR(0) over a beta grid

    Args:
        fidelity: Target F
        betas: Gap prefactors (> 0)
        cfg: DisjointPhysical config; its beta is replaced per grid point
        trials: Trials per point when estimating P_x
        p_estimator: Replaces the simulation when given
        threads: Worker count
        max_sites: Capacity limit

    Returns:
        TradeoffCurve; unreachable points carry an infinite tau*
    """
    if cfg.variant is not Variant.DISJOINT_PHYSICAL:
        raise GeometryMismatchError("The tradeoff needs the physical variant")
    if not betas or any(b <= 0 for b in betas):
        raise ConfigError("Tradeoff betas must be positive and nonempty")
    estimator = p_estimator or (lambda c: estimate_probability(c, trials, threads, max_sites))

    rows = []
    for beta in betas:
        point = cfg.replace(beta=beta)
        p_x = estimator(point)
        distance = gapped_distance(cfg.n, beta)
        runtime = tau_lr(cfg.alpha, beta, distance, cfg.h0)
        gapless = tau_lr(cfg.alpha, 0.0, distance, cfg.h0)
        try:
            repeats = repeat_count(p_x, fidelity)
        except UnreachableTargetError:
            logger.warning(f"Target {fidelity} unreachable at beta={beta}")
            rows.append(TradeoffRow(beta, p_x, None, runtime, math.inf, math.inf))
            continue
        rows.append(TradeoffRow(beta, p_x, repeats, runtime, repeats * runtime,
                                repeats * runtime / gapless))

    finite = [row for row in rows if math.isfinite(row.tau_star)]
    if not finite:
        raise UnreachableTargetError(f"Target {fidelity} unreachable at every beta")
    best = min(finite, key=lambda row: row.tau_star)
    logger.info(f"Tradeoff F={fidelity}: minimum tau* {best.tau_star:.4f} at beta={best.beta}")
    return TradeoffCurve(fidelity=fidelity, rows=rows, argmin_beta=best.beta)


def emit(records: Sequence[SweepRecord], fmt: OutputFormat = OutputFormat.CSV,
         path: Optional[str] = None):
    """
    Write sweep records

    Args:
        records: Records to write
        fmt: CSV (fixed columns) or JSON (all fields)
        path: Output file, stdout when None
    """
    fmt = OutputFormat(fmt)
    if fmt is OutputFormat.CSV:
        write_csv(path, CSV_COLUMNS, (record.to_row() for record in records))
    else:
        write_json(path, [record.to_dict() for record in records])


def load_records(path: str) -> List[SweepRecord]:
    """Read records written by emit, CSV or JSON by extension"""
    if path.endswith(".json"):
        return [SweepRecord.from_dict(item) for item in read_json(path)]
    return [SweepRecord.from_dict(row) for row in read_csv_records(path)]
