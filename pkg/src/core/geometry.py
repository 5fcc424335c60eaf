"""
Lattice geometry for the hierarchical transfer protocols
Builds the nested cube hierarchy of the ideal protocol and the gapped 1D
layout of the disjoint variants, and measures Manhattan distances
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from core.errors import CapacityError, ConfigError, SiteIndexError

logger = logging.getLogger(__name__)

DEFAULT_MAX_SITES = 1 << 14


class Variant(Enum):
    """Protocol variants"""
    NESTED_IDEAL = "nested"
    DISJOINT_IDEAL = "disjoint"
    DISJOINT_PHYSICAL = "physical"

    @classmethod
    def parse(cls, value: Any) -> "Variant":
        """Accept enum members, short names ('nested') or long names ('NestedIdeal')"""
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "nested": cls.NESTED_IDEAL,
            "nestedideal": cls.NESTED_IDEAL,
            "disjoint": cls.DISJOINT_IDEAL,
            "disjointideal": cls.DISJOINT_IDEAL,
            "physical": cls.DISJOINT_PHYSICAL,
            "disjointphysical": cls.DISJOINT_PHYSICAL,
        }
        if text not in aliases:
            raise ConfigError(f"Unknown variant: {value!r}")
        return aliases[text]

    @property
    def disjoint(self) -> bool:
        return self is not Variant.NESTED_IDEAL


class Convention(Enum):
    """Angle convention for the nested step duration"""
    UNCORRECTED = "uncorrected"
    CORRECTED = "corrected"


class CenterRule(Enum):
    """How the uniform coupling of a gapped step is chosen"""
    BRACKET = "bracket"
    GEOMETRIC = "geometric"


class RedrawPolicy(Enum):
    """When coupling noise is redrawn"""
    PER_STEP = "per_step"
    STATIC = "static"


def _parse_enum(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    text = str(value).strip().lower().replace("-", "_")
    try:
        return enum_cls(text)
    except ValueError:
        choices = ", ".join(member.value for member in enum_cls)
        raise ConfigError(f"Invalid {enum_cls.__name__} {value!r}; choose from {choices}") from None


@dataclass(frozen=True)
class ProtocolConfig:
    """All parameters of a single protocol run"""
    d: int = 1
    alpha: float = 1.0
    h0: float = 1.0
    n: int = 4
    variant: Variant = Variant.NESTED_IDEAL
    beta: float = 1.0
    epsilon: float = 0.0
    m: int = 1
    seed: int = 20200101
    convention: Convention = Convention.CORRECTED
    center_rule: CenterRule = CenterRule.BRACKET
    redraw: RedrawPolicy = RedrawPolicy.PER_STEP

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "convention", _parse_enum(Convention, self.convention))
        object.__setattr__(self, "center_rule", _parse_enum(CenterRule, self.center_rule))
        object.__setattr__(self, "redraw", _parse_enum(RedrawPolicy, self.redraw))

        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"d must be a positive integer, got {self.d}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if self.h0 <= 0:
            raise ConfigError(f"h0 must be positive, got {self.h0}")
        if self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.variant.disjoint and self.d != 1:
            raise ConfigError("Disjoint variants are only defined in one dimension")

        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ProtocolConfig":
        """
        Build a config from a dict, ignoring unknown keys and None values

        Args:
            values: Mapping such as the 'protocol' config section

        Returns:
            Validated ProtocolConfig
        """
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in values.items() if k in known and v is not None}
        return cls(**kwargs)

    def replace(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, Enum):
                data[key] = value.value
        return data


@dataclass(frozen=True, eq=False)
class SiteLayout:
    """Integer lattice coordinates, one row per site index"""
    coords: np.ndarray
    total_extent: int

    @property
    def n_sites(self) -> int:
        return int(self.coords.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.coords.shape[1])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total_extent": int(self.total_extent),
            "coords": self.coords.tolist(),
        }


@dataclass(frozen=True, eq=False)
class BlockHierarchy:
    """
    Per-level site membership

    levels[q] is B_q for q = 0..n. shells[q] is the new shell B̃_q (nested) or
    the whole block (disjoint); shells[0] equals levels[0]. mirror_levels and
    mirror_shells are the collapse-side counterparts around the target, with
    mirror_levels[n] identical to levels[n].
    """
    nested: bool
    levels: Tuple[np.ndarray, ...]
    shells: Tuple[np.ndarray, ...]
    mirror_levels: Tuple[np.ndarray, ...]
    mirror_shells: Tuple[np.ndarray, ...]
    source_site: int
    target_site: int
    beta: float = 0.0
    gaps: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return len(self.levels) - 1

    def sizes(self) -> list:
        return [len(level) for level in self.levels]

    def step_blocks(self, q: int, collapse: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """
        Site sets coupled by step q

        Args:
            q: Level index (1..n)
            collapse: Use the mirrored blocks around the target

        Returns:
            Tuple of (source block, destination block) site-index arrays
        """
        if not 1 <= q <= self.n:
            raise SiteIndexError(f"Level {q} outside 1..{self.n}")
        levels = self.mirror_levels if collapse else self.levels
        shells = self.mirror_shells if collapse else self.shells
        if self.nested:
            return levels[q - 1], shells[q]
        return levels[q - 1], levels[q]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nested": self.nested,
            "source_site": int(self.source_site),
            "target_site": int(self.target_site),
            "beta": self.beta,
            "gaps": list(self.gaps),
            "levels": [level.tolist() for level in self.levels],
            "shells": [shell.tolist() for shell in self.shells],
            "mirror_levels": [level.tolist() for level in self.mirror_levels],
        }


def _check_capacity(n_sites: int, max_sites: int):
    if n_sites > max_sites:
        raise CapacityError(f"{n_sites} sites exceed the configured limit of {max_sites}")


def nested_hierarchy(d: int, n: int,
                     max_sites: int = DEFAULT_MAX_SITES) -> Tuple[SiteLayout, BlockHierarchy]:
    """
    Build the half-open nested cubes B_q = {0, ..., 2^q - 1}^d

    Sites are ordered by the smallest cube containing them, so every B_q is
    the index prefix 0..2^(qd)-1.

    Args:
        d: Spatial dimension
        n: Number of levels
        max_sites: Capacity limit

    Returns:
        Tuple of (layout, hierarchy)
    """
    if d < 1 or n < 1:
        raise ConfigError(f"Need d >= 1 and n >= 1, got d={d}, n={n}")
    side = 1 << n
    n_sites = side ** d
    _check_capacity(n_sites, max_sites)

    coords = np.array(list(itertools.product(range(side), repeat=d)), dtype=np.int64)
    # Level of a coordinate value is its bit length
    thresholds = 1 << np.arange(n, dtype=np.int64)
    site_level = (coords[:, :, None] >= thresholds).sum(axis=2).max(axis=1)

    keys = [coords[:, axis] for axis in range(d - 1, -1, -1)] + [site_level]
    order = np.lexsort(keys)
    coords = coords[order]

    levels = tuple(np.arange(1 << (q * d), dtype=np.int64) for q in range(n + 1))
    shells = (levels[0],) + tuple(
        np.arange(1 << ((q - 1) * d), 1 << (q * d), dtype=np.int64) for q in range(1, n + 1)
    )

    # Reflect axis 0 to get the cubes around the target corner
    radix = side ** np.arange(d, dtype=np.int64)
    lookup = np.empty(n_sites, dtype=np.int64)
    lookup[coords @ radix] = np.arange(n_sites)
    reflected = coords.copy()
    reflected[:, 0] = side - 1 - reflected[:, 0]
    mirror_of = lookup[reflected @ radix]

    mirror_levels = tuple(mirror_of[level] for level in levels[:-1]) + (levels[-1],)
    mirror_shells = tuple(mirror_of[shell] for shell in shells)

    layout = SiteLayout(coords=coords, total_extent=d * (side - 1))
    hierarchy = BlockHierarchy(
        nested=True,
        levels=levels,
        shells=shells,
        mirror_levels=mirror_levels,
        mirror_shells=mirror_shells,
        source_site=0,
        target_site=int(mirror_of[0]),
    )
    logger.debug(f"Nested hierarchy built: d={d}, n={n}, {n_sites} sites")
    return layout, hierarchy


def disjoint_layout(d: int, n: int, beta: float,
                    max_sites: int = DEFAULT_MAX_SITES) -> Tuple[SiteLayout, BlockHierarchy]:
    """
    Build the gapped 1D layout of the disjoint variants

    Block q holds 2^q sites. An empty gap of ceil(beta * 2^q) cells separates
    block q-1 from block q; the collapse blocks n-1, ..., 0 follow block n
    with the same gaps in reverse. Gap cells host no sites.

    Args:
        d: Spatial dimension (must be 1)
        n: Number of levels
        beta: Gap prefactor
        max_sites: Capacity limit

    Returns:
        Tuple of (layout, hierarchy)
    """
    if d != 1:
        raise ConfigError("Gapped layouts are only defined for d = 1")
    if n < 1:
        raise ConfigError(f"Need n >= 1, got {n}")
    if beta < 0:
        raise ConfigError(f"beta must be nonnegative, got {beta}")
    n_sites = 3 * (1 << n) - 2
    _check_capacity(n_sites, max_sites)

    gaps = tuple(math.ceil(beta * (1 << q)) for q in range(1, n + 1))
    positions = []
    blocks = []
    cursor = 0
    index = 0

    def place(size):
        nonlocal cursor, index
        block = np.arange(index, index + size, dtype=np.int64)
        positions.extend(range(cursor, cursor + size))
        cursor += size
        index += size
        return block

    for q in range(n + 1):
        if q > 0:
            cursor += gaps[q - 1]
        blocks.append(place(1 << q))

    mirror_blocks = [None] * n
    for q in range(n - 1, -1, -1):
        cursor += gaps[q]
        # Mirror block sites run right-to-left so site i reflects levels[q][i]
        mirror_blocks[q] = place(1 << q)[::-1].copy()

    coords = np.array(positions, dtype=np.int64).reshape(-1, 1)
    levels = tuple(blocks)
    mirror_levels = tuple(mirror_blocks) + (levels[-1],)

    layout = SiteLayout(coords=coords, total_extent=int(coords[-1, 0] - coords[0, 0]))
    hierarchy = BlockHierarchy(
        nested=False,
        levels=levels,
        shells=levels,
        mirror_levels=mirror_levels,
        mirror_shells=mirror_levels,
        source_site=int(levels[0][0]),
        target_site=int(mirror_levels[0][0]),
        beta=float(beta),
        gaps=gaps,
    )
    logger.debug(f"Disjoint layout built: n={n}, beta={beta}, extent={layout.total_extent}")
    return layout, hierarchy


def build_geometry(cfg: ProtocolConfig,
                   max_sites: int = DEFAULT_MAX_SITES) -> Tuple[SiteLayout, BlockHierarchy]:
    """Build the layout matching the config's variant"""
    if cfg.variant is Variant.NESTED_IDEAL:
        return nested_hierarchy(cfg.d, cfg.n, max_sites)
    return disjoint_layout(cfg.d, cfg.n, cfg.beta, max_sites)


def _check_site(layout: SiteLayout, i: int):
    if not 0 <= i < layout.n_sites:
        raise SiteIndexError(f"Site {i} outside 0..{layout.n_sites - 1}")


def pair_distance(layout: SiteLayout, i: int, j: int) -> int:
    """
    Manhattan distance between two sites

    Args:
        layout: Site layout
        i: First site index
        j: Second site index

    Returns:
        Sum of absolute coordinate differences
    """
    _check_site(layout, i)
    _check_site(layout, j)
    return int(np.abs(layout.coords[i] - layout.coords[j]).sum())


def block_distances(layout: SiteLayout, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Manhattan distance table between two site sets (len(rows) x len(cols))"""
    a = layout.coords[np.asarray(rows)]
    b = layout.coords[np.asarray(cols)]
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)


def achieved_distance(cfg: ProtocolConfig, max_sites: int = DEFAULT_MAX_SITES) -> int:
    """Source-to-target distance R of the layout the config builds"""
    layout, hierarchy = build_geometry(cfg, max_sites)
    return pair_distance(layout, hierarchy.source_site, hierarchy.target_site)


def geometry_to_dict(layout: SiteLayout, hierarchy: BlockHierarchy,
                     cfg: Optional[ProtocolConfig] = None) -> Dict[str, Any]:
    """JSON-ready view of a layout and its hierarchy"""
    data = {"layout": layout.to_dict(), "hierarchy": hierarchy.to_dict()}
    data["distance"] = pair_distance(layout, hierarchy.source_site, hierarchy.target_site)
    if cfg is not None:
        data["config"] = cfg.to_dict()
    return data
