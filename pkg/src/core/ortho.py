"""
Recursive orthogonal sign vectors and block transfer matrices
Used by the multi-qubit protocol to move m modes between blocks at once
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.errors import CapacityError, ConfigError

logger = logging.getLogger(__name__)

DEFAULT_MAX_FAMILY_DEPTH = 12


@dataclass(frozen=True, eq=False)
class OrthoFamily:
    """2^w mutually orthogonal +-1 vectors of length 2^w, one per row"""
    w: int
    vectors: np.ndarray

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


@dataclass(frozen=True, eq=False)
class TransferBasis:
    """Block transfer matrix with orthonormal rows"""
    level: int
    matrix: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def to_dict(self):
        return {"level": self.level, "matrix": self.matrix.tolist()}


def recursive_family(w: int, max_depth: int = DEFAULT_MAX_FAMILY_DEPTH) -> OrthoFamily:
    """
    Build the depth-w family by concatenation

    Each vector u is extended to (u, u) and (u, -u).

    Args:
        w: Recursion depth
        max_depth: Capacity limit on w

    Returns:
        OrthoFamily with vectors[i] = u_i
    """
    if w < 0:
        raise ConfigError(f"Depth must be nonnegative, got {w}")
    if w > max_depth:
        raise CapacityError(f"Depth {w} exceeds the configured limit of {max_depth}")

    vectors = np.ones((1, 1), dtype=np.int64)
    for _ in range(w):
        vectors = np.block([[vectors, vectors], [vectors, -vectors]])
    return OrthoFamily(w=w, vectors=vectors)


def block_size(m: int, d: int = 1) -> int:
    """Smallest power of 2^d that holds m qubits"""
    if m < 1:
        raise ConfigError(f"Qubit count must be >= 1, got {m}")
    base = 2 ** d
    width = 1
    while width < m:
        width *= base
    return width


def m1_matrix(width: int, max_depth: int = DEFAULT_MAX_FAMILY_DEPTH) -> TransferBasis:
    """
    First-level transfer matrix with the normalized family as columns

    Args:
        width: Block size W, a power of 2

    Returns:
        Orthogonal W x W TransferBasis
    """
    if width < 1 or width & (width - 1):
        raise ConfigError(f"Block size {width} is not a power of 2")
    depth = width.bit_length() - 1
    family = recursive_family(depth, max_depth)
    matrix = family.vectors.T.astype(float) / np.sqrt(width)
    return TransferBasis(level=1, matrix=matrix)


def identity_basis(width: int) -> TransferBasis:
    """Identity transfer between two blocks of equal size"""
    return TransferBasis(level=1, matrix=np.eye(width))


def extend(basis: TransferBasis, d: int = 1) -> TransferBasis:
    """
    Tile a transfer matrix over 2^d copies of its column block

    Args:
        basis: Row-orthonormal basis
        d: Dimension

    Returns:
        Basis one level up, rows still orthonormal
    """
    copies = 2 ** d
    matrix = np.hstack([basis.matrix] * copies) / np.sqrt(copies)
    return TransferBasis(level=basis.level + 1, matrix=matrix)


def extend_times(basis: TransferBasis, times: int, d: int = 1) -> TransferBasis:
    """Apply extend repeatedly"""
    for _ in range(times):
        basis = extend(basis, d)
    return basis


def row_orthonormality_error(basis: TransferBasis) -> float:
    """Max deviation of M M^T from the identity"""
    matrix = basis.matrix
    return float(np.abs(matrix @ matrix.T - np.eye(matrix.shape[0])).max())
