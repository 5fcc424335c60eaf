"""
Single-excitation dynamics
Assembles per-step hopping Hamiltonians, evolves amplitude vectors and mode
matrices exactly, and measures fidelities and propagator errors
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import sparse
from scipy.linalg import expm, svdvals
from scipy.sparse.linalg import expm_multiply

from core.errors import ConfigError, GeometryMismatchError, PropagationError
from core.geometry import (DEFAULT_MAX_SITES, BlockHierarchy, ProtocolConfig, SiteLayout, Variant,
                           build_geometry)
from core.noise import NoiseField, NoiseSpec, gaussian_perturb, physical_couplings
from core.ortho import (DEFAULT_MAX_FAMILY_DEPTH, block_size, extend_times, identity_basis,
                        m1_matrix)
from core.schedule import CouplingKind, StepSpec, build_schedule, geometric_center_coupling

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class StepHamiltonian:
    """
    Bipartite hopping between a source and a destination block

    couplings[k, j] is h_jk for destination site dst[k] and source site src[j].
    The Hermitian generator is H = i sign sum h_jk (|k><j| - |j><k|).
    """
    src: np.ndarray
    dst: np.ndarray
    couplings: np.ndarray
    sign: int = 1

    @property
    def support(self) -> np.ndarray:
        return np.concatenate([self.src, self.dst])

    def generator(self) -> sparse.csc_matrix:
        """Real antisymmetric sign * A on the support, exp(-iHt) = exp(t sign A)"""
        h = sparse.csr_matrix(self.couplings)
        block = sparse.bmat([[None, -h.T], [h, None]], format="csc")
        return self.sign * block

    def dense_generator(self) -> np.ndarray:
        return self.generator().toarray()

    def hermitian(self) -> np.ndarray:
        return 1j * self.dense_generator()

    @property
    def max_coupling(self) -> float:
        return float(np.abs(self.couplings).max()) if self.couplings.size else 0.0


@dataclass
class Amplitudes:
    """Single-excitation state over all sites"""
    values: np.ndarray

    @classmethod
    def at_site(cls, n_sites: int, site: int) -> "Amplitudes":
        values = np.zeros(n_sites)
        values[site] = 1.0
        return cls(values)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def probability(self, site: int) -> float:
        return float(abs(self.values[site]) ** 2)


@dataclass
class ModeMatrix:
    """N x m matrix of evolved single-particle modes"""
    columns: np.ndarray
    source_sites: np.ndarray
    target_sites: np.ndarray

    @classmethod
    def from_sites(cls, n_sites: int, sources: np.ndarray, targets: np.ndarray) -> "ModeMatrix":
        columns = np.eye(n_sites)[:, sources]
        return cls(columns, np.asarray(sources), np.asarray(targets))

    @property
    def values(self) -> np.ndarray:
        return self.columns

    def gram_drift(self) -> float:
        gram = self.columns.conj().T @ self.columns
        return float(np.abs(gram - np.eye(gram.shape[0])).max())


@dataclass
class TrialResult:
    """Outcome of one single-qubit protocol run"""
    p_final: float
    per_step_uniformity: List[float]
    runtime: float
    trial: int = 0
    per_step_delta: List[float] = field(default_factory=list)
    per_step_disorder: List[float] = field(default_factory=list)
    snapshots: List[np.ndarray] = field(default_factory=list)


@dataclass
class MultiResult:
    """Outcome of one multi-qubit protocol run"""
    per_qubit: List[float]
    aggregate: float
    runtime: float
    gram_drift: float


def operator_norm(matrix) -> float:
    """Largest singular value"""
    matrix = np.atleast_2d(np.asarray(matrix))
    if matrix.size == 0:
        return 0.0
    try:
        return float(svdvals(matrix)[0])
    except np.linalg.LinAlgError as e:
        raise PropagationError(f"Singular value decomposition failed: {e}") from e


def _multi_particle_block(step: StepSpec, n_src: int, n_dst: int,
                          max_family_depth: int = DEFAULT_MAX_FAMILY_DEPTH) -> np.ndarray:
    width = step.coupling.block_size
    if n_src % width or n_dst % width:
        raise GeometryMismatchError(f"Blocks of {n_src} and {n_dst} sites do not tile width {width}")
    src_tiles, dst_tiles = n_src // width, n_dst // width
    if src_tiles & (src_tiles - 1) or dst_tiles & (dst_tiles - 1):
        raise GeometryMismatchError("Multi-particle tiles must be powers of 2")
    outgoing = extend_times(identity_basis(width), dst_tiles.bit_length() - 1)
    incoming = extend_times(m1_matrix(width, max_family_depth), src_tiles.bit_length() - 1)
    return step.coupling.strength * outgoing.matrix.T @ incoming.matrix


def assemble_hamiltonian(step: StepSpec, geom: BlockHierarchy, layout: SiteLayout,
                         noise: Optional[NoiseField] = None, epsilon: float = 0.0,
                         step_index: int = 0,
                         max_family_depth: int = DEFAULT_MAX_FAMILY_DEPTH) -> StepHamiltonian:
    """
    Build the coupling block of one step

    Args:
        step: Step specification
        geom: Block hierarchy of the same config
        layout: Site layout of the same config
        noise: Draw source for coupling disorder
        epsilon: Noise strength
        step_index: Position of the step in the schedule (selects the draws)
        max_family_depth: Depth limit of the multi-qubit sign family

    Returns:
        StepHamiltonian between the step's two blocks
    """
    src, dst = geom.step_blocks(step.q, step.collapse)
    if max(src.max(), dst.max()) >= layout.n_sites:
        raise GeometryMismatchError("Hierarchy refers to sites outside the layout")

    rule = step.coupling
    if rule.kind is CouplingKind.IDEAL_UNIFORM:
        couplings = np.full((len(dst), len(src)), rule.strength)
    elif rule.kind is CouplingKind.PHYSICAL_POWER_LAW:
        couplings = physical_couplings(layout, rule.alpha, rows=dst, cols=src, h0=rule.h0)
    else:
        couplings = _multi_particle_block(step, len(src), len(dst), max_family_depth)

    hamiltonian = StepHamiltonian(src=src, dst=dst, couplings=couplings, sign=step.sign)
    if noise is not None and epsilon > 0:
        hamiltonian = gaussian_perturb(hamiltonian, epsilon, noise.draws(step_index, dst, src))
    return hamiltonian


def reference_hamiltonian(step: StepSpec, geom: BlockHierarchy,
                          layout: SiteLayout) -> StepHamiltonian:
    """Noise-free counterpart of a step; physical steps use their uniform center value"""
    if step.coupling.kind is CouplingKind.PHYSICAL_POWER_LAW:
        src, dst = geom.step_blocks(step.q, step.collapse)
        ideal = step.coupling.h0 * geometric_center_coupling(step.q, step.coupling.alpha, geom.beta)
        couplings = np.full((len(dst), len(src)), ideal)
        return StepHamiltonian(src=src, dst=dst, couplings=couplings, sign=step.sign)
    return assemble_hamiltonian(step, geom, layout)


def propagate(state, hamiltonian: StepHamiltonian, t: float):
    """
    Evolve a state by exp(-iHt)

    Only the rows on the Hamiltonian's support change.

    Args:
        state: Amplitudes or ModeMatrix
        hamiltonian: Step Hamiltonian
        t: Evolution time (>= 0)

    Returns:
        New state of the same type
    """
    if t < 0:
        raise ConfigError(f"Evolution time must be nonnegative, got {t}")
    values = state.values
    if t == 0:
        return _with_values(state, values.copy())

    support = hamiltonian.support
    try:
        evolved = expm_multiply(hamiltonian.generator() * t, values[support])
    except (ValueError, np.linalg.LinAlgError) as e:
        raise PropagationError(f"Matrix exponential failed: {e}") from e
    if not np.all(np.isfinite(evolved)):
        raise PropagationError("Matrix exponential produced non-finite amplitudes")

    before = np.linalg.norm(values[support], axis=0)
    after = np.linalg.norm(evolved, axis=0)
    drift = float(np.max(np.abs(after - before)))
    if drift > NORM_TOLERANCE:
        logger.warning(f"Norm drift {drift:.3e} over a step of length {t:.6g}")

    new_values = values.copy()
    new_values[support] = evolved
    return _with_values(state, new_values)


def _with_values(state, values):
    if isinstance(state, ModeMatrix):
        return ModeMatrix(values, state.source_sites, state.target_sites)
    return Amplitudes(values)


def step_error(hamiltonian: StepHamiltonian, reference: StepHamiltonian, t: float) -> float:
    """
    Operator-norm distance between two step propagators

    Args:
        hamiltonian: Realized step
        reference: Ideal step on the same blocks
        t: Step duration

    Returns:
        ||exp(-iHt) - exp(-iH0t)||
    """
    if not (np.array_equal(hamiltonian.src, reference.src)
            and np.array_equal(hamiltonian.dst, reference.dst)):
        raise GeometryMismatchError("Propagators act on different blocks")
    realized = expm(t * hamiltonian.dense_generator())
    ideal = expm(t * reference.dense_generator())
    return operator_norm(realized - ideal)


def disorder_norm(hamiltonian: StepHamiltonian, reference: StepHamiltonian) -> float:
    """||H - H0||, equal to the largest singular value of the coupling difference"""
    return operator_norm(hamiltonian.couplings - reference.couplings)


def uniformity_deviation(values: np.ndarray, block: np.ndarray) -> float:
    """Max distance of |psi| from the uniform W state on a block"""
    target = np.zeros(len(values))
    target[block] = 1.0 / np.sqrt(len(block))
    return float(np.abs(np.abs(values) - target).max())


def run_single(cfg: ProtocolConfig, trial: int = 0, compute_delta: bool = False,
               record_states: bool = False,
               max_sites: int = DEFAULT_MAX_SITES) -> TrialResult:
    """
    Run the full single-qubit protocol from the source site

    Args:
        cfg: Protocol config with m = 1
        trial: Trial index, selects the noise streams
        compute_delta: Record per-step propagator errors against the ideal step
        record_states: Keep site probabilities after every step
        max_sites: Capacity limit

    Returns:
        TrialResult with the target-site probability
    """
    if cfg.m != 1:
        raise ConfigError(f"Single-qubit runs need m = 1, got m={cfg.m}")
    layout, geom = build_geometry(cfg, max_sites)
    schedule = build_schedule(cfg, geom)
    spec = NoiseSpec.from_config(cfg)
    noise = NoiseField.from_spec(spec, cfg.seed, trial, layout.n_sites)

    state = Amplitudes.at_site(layout.n_sites, geom.source_site)
    uniformity, deltas, disorder, snapshots = [], [], [], []

    for index, step in enumerate(schedule):
        hamiltonian = assemble_hamiltonian(step, geom, layout, noise, spec.epsilon, index)
        if compute_delta:
            reference = reference_hamiltonian(step, geom, layout)
            deltas.append(step_error(hamiltonian, reference, step.duration))
            disorder.append(disorder_norm(hamiltonian, reference))

        state = propagate(state, hamiltonian, step.duration)
        logger.debug(f"Trial {trial} step {index} ({step.phase.value} q={step.q}) done")

        if not step.collapse:
            uniformity.append(uniformity_deviation(state.values, geom.levels[step.q]))
        if record_states:
            snapshots.append(state.probabilities)

    p_final = min(max(state.probability(geom.target_site), 0.0), 1.0)
    return TrialResult(
        p_final=p_final,
        per_step_uniformity=uniformity,
        runtime=schedule.total_runtime,
        trial=trial,
        per_step_delta=deltas,
        per_step_disorder=disorder,
        snapshots=snapshots,
    )


def run_multi(cfg: ProtocolConfig, trial: int = 0, max_sites: int = DEFAULT_MAX_SITES,
              max_family_depth: int = DEFAULT_MAX_FAMILY_DEPTH) -> MultiResult:
    """
    Transfer m qubits at once through the gapped blocks

    Qubit a starts on site a of block w = log2(W) and should arrive on
    site a of the mirrored block.

    Args:
        cfg: DisjointIdeal config
        trial: Trial index, selects the noise streams
        max_sites: Capacity limit
        max_family_depth: Depth limit of the multi-qubit sign family

    Returns:
        MultiResult with per-qubit and joint fidelities
    """
    if cfg.variant is not Variant.DISJOINT_IDEAL:
        raise GeometryMismatchError("Multi-qubit transfer needs the disjoint ideal variant")
    layout, geom = build_geometry(cfg, max_sites)
    schedule = build_schedule(cfg, geom)
    spec = NoiseSpec.from_config(cfg)
    noise = NoiseField.from_spec(spec, cfg.seed, trial, layout.n_sites)

    depth = block_size(cfg.m, cfg.d).bit_length() - 1
    sources = geom.levels[depth][:cfg.m]
    targets = geom.mirror_levels[depth][:cfg.m]
    modes = ModeMatrix.from_sites(layout.n_sites, sources, targets)

    for index, step in enumerate(schedule):
        hamiltonian = assemble_hamiltonian(step, geom, layout, noise, spec.epsilon, index,
                                           max_family_depth)
        modes = propagate(modes, hamiltonian, step.duration)

    overlap = modes.columns[targets, :]
    per_qubit = [float(abs(overlap[a, a]) ** 2) for a in range(cfg.m)]
    aggregate = float(abs(np.linalg.det(overlap)) ** 2)
    drift = modes.gram_drift()
    logger.debug(f"Multi-qubit run m={cfg.m}: min fidelity {min(per_qubit):.12f}, drift {drift:.2e}")
    return MultiResult(per_qubit=per_qubit, aggregate=aggregate,
                       runtime=schedule.total_runtime, gram_drift=drift)
