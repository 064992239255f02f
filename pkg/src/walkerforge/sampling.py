"""Quasi-random design generation: Sobol sampling, range scaling,
material assignment and feasibility filtering."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .core import (
    CONTINUOUS_FIELDS,
    DesignVector,
    FeasibilityLimits,
    MATERIAL_NAMES,
    check_feasibility,
)
from .errors import DimensionMismatch, EmptyBatch, InvalidSampleRequest

N_CONTINUOUS = len(CONTINUOUS_FIELDS)
MAX_SOBOL_DIM = 21201  # extent of the Joe-Kuo direction-number table


#: Default sampling ranges (inches / degrees). Chosen to bracket the
#: original fixture and the case-study variants; overridable via config.
DEFAULT_RANGES = {
    "overall_height": (28.0, 42.0),
    "base_length": (16.0, 26.0),
    "base_width": (18.0, 26.0),
    "handle_distance": (15.0, 23.0),
    "handle_length": (6.0, 12.0),
    "side_crossbeam_height": (6.0, 34.0),
    "front_upper_crossbeam_height": (6.0, 34.0),
    "front_lower_crossbeam_height": (6.0, 34.0),
    "front_crossbeam_bend_angle": (140.0, 180.0),
    "frame_tube_inner_diameter": (0.15, 1.0),
    "front_crossbeam_inner_diameter": (0.15, 1.0),
    "side_crossbeam_inner_diameter": (0.15, 1.0),
    "frame_tube_thickness": (0.03, 0.125),
    "crossbeam_tube_thickness": (0.03, 0.125),
}


@dataclass(frozen=True)
class ParameterRanges:
    """Per-parameter lower bound and range width, plus the category sets."""

    lower: np.ndarray  # (14,)
    width: np.ndarray  # (14,)
    categories: tuple[tuple[str, ...], ...] = (MATERIAL_NAMES, MATERIAL_NAMES)

    def __post_init__(self):
        if len(self.lower) != N_CONTINUOUS or len(self.width) != N_CONTINUOUS:
            raise DimensionMismatch(
                f"expected {N_CONTINUOUS} continuous bounds, got "
                f"{len(self.lower)}/{len(self.width)}"
            )
        if np.any(np.asarray(self.width) <= 0):
            raise InvalidSampleRequest("all range widths must be positive")

    @classmethod
    def from_bounds(cls, bounds: dict[str, tuple[float, float]]) -> "ParameterRanges":
        """Build from a {parameter: (low, high)} mapping in roster order."""
        lo = np.array([bounds[f][0] for f in CONTINUOUS_FIELDS], dtype=float)
        hi = np.array([bounds[f][1] for f in CONTINUOUS_FIELDS], dtype=float)
        return cls(lower=lo, width=hi - lo)

    @classmethod
    def default(cls) -> "ParameterRanges":
        return cls.from_bounds(DEFAULT_RANGES)

    def upper(self) -> np.ndarray:
        return self.lower + self.width


@dataclass
class SampleBatch:
    designs: list[DesignVector]
    requested: int
    dropped_infeasible: int
    seed: int
    sobol_skip: int
    sobol_indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        assert self.requested == len(self.designs) + self.dropped_infeasible


def sobol_points(dim: int, n: int, skip: int = 0) -> np.ndarray:
    """First n points of the (unscrambled) Sobol sequence in dim dimensions,
    after skipping `skip` points. Deterministic."""
    if not (1 <= dim <= MAX_SOBOL_DIM):
        raise InvalidSampleRequest(f"dim must be in [1, {MAX_SOBOL_DIM}], got {dim}")
    if n < 1:
        raise InvalidSampleRequest(f"n must be >= 1, got {n}")
    if skip < 0:
        raise InvalidSampleRequest(f"skip must be >= 0, got {skip}")
    sampler = qmc.Sobol(d=dim, scramble=False)
    if skip:
        sampler.fast_forward(skip)
    with warnings.catch_warnings():
        # non power-of-two draws are fine here; we want the raw sequence
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(n)


def scale_samples(u: np.ndarray, ranges: ParameterRanges) -> np.ndarray:
    """Affine map of unit-cube samples onto the parameter ranges:
    s = u * width + lower, element-wise per column."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != N_CONTINUOUS:
        raise DimensionMismatch(
            f"expected an n x {N_CONTINUOUS} matrix, got shape {u.shape}"
        )
    return u * ranges.width + ranges.lower


def _bin_materials(u: np.ndarray) -> list[str]:
    idx = np.minimum((u * 3).astype(int), 2)
    return [MATERIAL_NAMES[i] for i in idx]


def assign_materials(n: int, seed: int = 0) -> list[tuple[str, str]]:
    """Material pairs (front crossbeam, frame) from two quasi-random
    dimensions discretized into equal thirds."""
    if n < 1:
        raise InvalidSampleRequest(f"n must be >= 1, got {n}")
    u = sobol_points(2, n, skip=seed)
    return list(zip(_bin_materials(u[:, 0]), _bin_materials(u[:, 1])))


def generate_batch(
    n_requested: int,
    ranges: ParameterRanges,
    limits: FeasibilityLimits = FeasibilityLimits(),
    seed: int = 0,
    sobol_skip: int = 0,
) -> SampleBatch:
    """Sample n_requested designs (14 continuous + 2 material dimensions from
    one 16-dim Sobol sequence) and keep only the geometrically feasible ones."""
    u = sobol_points(N_CONTINUOUS + 2, n_requested, skip=sobol_skip)
    scaled = scale_samples(u[:, :N_CONTINUOUS], ranges)
    mats_front = _bin_materials(u[:, N_CONTINUOUS])
    mats_frame = _bin_materials(u[:, N_CONTINUOUS + 1])

    survivors: list[DesignVector] = []
    indices: list[int] = []
    for i in range(n_requested):
        d = DesignVector.from_arrays(scaled[i], (mats_front[i], mats_frame[i]))
        if check_feasibility(d, limits).valid:
            survivors.append(d)
            indices.append(sobol_skip + i)
    if not survivors:
        raise EmptyBatch(
            "no feasible designs generated; check parameter ranges and "
            "feasibility limits in the config"
        )
    return SampleBatch(
        designs=survivors,
        requested=n_requested,
        dropped_infeasible=n_requested - len(survivors),
        seed=seed,
        sobol_skip=sobol_skip,
        sobol_indices=indices,
    )
