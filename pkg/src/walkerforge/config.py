"""Pipeline configuration: documented defaults plus YAML overrides.

One config file drives the whole pipeline. Values use the I/O units
(inches, lbf, lbs, degrees). Example:

    output_dir: out
    ranges:
      overall_height: [28, 42]
    load:
      handle_down_force_lbf: 350
      handle_lateral_force_lbf: 17.5
    stability:
      tip_force_lbf: 400
    optimize:
      exploration:
        overall_height: [32, 38]
        handle_distance: [18.5, 19.5]
      targets:
        mass_lbs: {max: 6.0}
        min_safety_factor: {min: baseline}
        theta_deg: {min: baseline}

A target bound of ``baseline`` resolves to the query design's predicted
value for that target.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import yaml

from .core import (
    ALL_FIELDS,
    CONTINUOUS_FIELDS,
    DesignVector,
    FeasibilityLimits,
    original_design,
)
from .errors import InvalidConfig
from .fea import DEFAULT_ELEMENT_CAP_IN, LoadCase
from .optimizer import GAConfig, TargetBound
from .sampling import DEFAULT_RANGES, ParameterRanges
from .stability import DEFAULT_TIP_FORCE_LBF
from .surrogate import SurrogateConfig

#: Default optimization scenario: the generic optimization of a standard
#: walker (32-38 in tall, 19 +/- 0.5 in handle spacing, under 6 lbs, and
#: structural/stability values at least as good as the baseline).
DEFAULT_OPTIMIZE = {
    "query": "original",
    "frozen": [],
    "exploration": {
        "overall_height": [32.0, 38.0],
        "handle_distance": [18.5, 19.5],
    },
    "targets": {
        "mass_lbs": {"max": 6.0},
        "min_safety_factor": {"min": "baseline"},
        "handle_dy_in": {"abs_max": "baseline"},
        "leg_displ_in": {"abs_max": "baseline"},
        "theta_deg": {"min": "baseline"},
    },
    "allow_unreliable": False,
}


@dataclass
class PipelineConfig:
    ranges: ParameterRanges
    limits: FeasibilityLimits
    loads: LoadCase
    tip_force_lbf: float
    mesh_cap_in: float
    surrogate: SurrogateConfig
    ga: GAConfig
    optimize: dict
    output_dir: str = "out"


def default_config() -> PipelineConfig:
    return PipelineConfig(
        ranges=ParameterRanges.default(),
        limits=FeasibilityLimits(),
        loads=LoadCase(),
        tip_force_lbf=DEFAULT_TIP_FORCE_LBF,
        mesh_cap_in=DEFAULT_ELEMENT_CAP_IN,
        surrogate=SurrogateConfig(),
        ga=GAConfig(),
        optimize=copy.deepcopy(DEFAULT_OPTIMIZE),
    )


def _range_bounds(overrides: dict) -> ParameterRanges:
    bounds = dict(DEFAULT_RANGES)
    for name, pair in (overrides or {}).items():
        if name not in CONTINUOUS_FIELDS:
            raise InvalidConfig(f"ranges: unknown parameter {name!r}")
        if len(pair) != 2 or pair[1] <= pair[0]:
            raise InvalidConfig(f"ranges.{name}: expected [low, high] with low < high")
        bounds[name] = (float(pair[0]), float(pair[1]))
    return ParameterRanges.from_bounds(bounds)


def load_config(path=None) -> PipelineConfig:
    """Load a YAML config file over the defaults; path=None gives defaults."""
    cfg = default_config()
    if path is None:
        return cfg
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise InvalidConfig("config root must be a mapping")

    known = {"output_dir", "ranges", "limits", "load", "stability", "mesh", "surrogate", "ga", "optimize"}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"unknown config sections: {sorted(unknown)}")

    cfg.output_dir = raw.get("output_dir", cfg.output_dir)
    cfg.ranges = _range_bounds(raw.get("ranges"))
    if "limits" in raw:
        lim = raw["limits"]
        cfg.limits = FeasibilityLimits(
            max_outer_diameter=float(lim.get("max_outer_diameter", cfg.limits.max_outer_diameter)),
            min_outer_diameter=float(lim.get("min_outer_diameter", cfg.limits.min_outer_diameter)),
            handle_clearance=tuple(lim.get("handle_clearance", cfg.limits.handle_clearance)),
        )
    if "load" in raw:
        ld = raw["load"]
        cfg.loads = LoadCase(
            handle_down_force=float(ld.get("handle_down_force_lbf", cfg.loads.handle_down_force)),
            handle_lateral_force=float(ld.get("handle_lateral_force_lbf", cfg.loads.handle_lateral_force)),
        )
    if "stability" in raw:
        cfg.tip_force_lbf = float(raw["stability"].get("tip_force_lbf", cfg.tip_force_lbf))
    if "mesh" in raw:
        cfg.mesh_cap_in = float(raw["mesh"].get("max_element_length_in", cfg.mesh_cap_in))
    if "surrogate" in raw:
        sg = raw["surrogate"]
        base = cfg.surrogate
        cfg.surrogate = SurrogateConfig(
            seed=int(sg.get("seed", base.seed)),
            n_folds=int(sg.get("folds", base.n_folds)),
            knn_neighbors=int(sg.get("knn_neighbors", base.knn_neighbors)),
            rf_trees=int(sg.get("rf_trees", base.rf_trees)),
            gbt_rounds=int(sg.get("gbt_rounds", base.gbt_rounds)),
            gbt_depth=int(sg.get("gbt_depth", base.gbt_depth)),
            gbt_learning_rate=float(sg.get("gbt_learning_rate", base.gbt_learning_rate)),
            ridge_alpha=float(sg.get("ridge_alpha", base.ridge_alpha)),
            test_fraction=float(sg.get("test_fraction", base.test_fraction)),
            reliability_threshold=float(sg.get("reliability_threshold", base.reliability_threshold)),
        )
    if "ga" in raw:
        ga = raw["ga"]
        base = cfg.ga
        cfg.ga = GAConfig(
            population_size=int(ga.get("population_size", base.population_size)),
            generations=int(ga.get("generations", base.generations)),
            crossover_rate=float(ga.get("crossover_rate", base.crossover_rate)),
            mutation_rate=float(ga.get("mutation_rate", base.mutation_rate)),
            eta_crossover=float(ga.get("eta_crossover", base.eta_crossover)),
            eta_mutation=float(ga.get("eta_mutation", base.eta_mutation)),
            seed=int(ga.get("seed", base.seed)),
            sample_count=int(ga.get("sample_count", base.sample_count)),
            diversity_weight=float(ga.get("diversity_weight", base.diversity_weight)),
            dataset_neighbors=int(ga.get("dataset_neighbors", base.dataset_neighbors)),
        )
    if "optimize" in raw:
        merged = copy.deepcopy(DEFAULT_OPTIMIZE)
        section = raw["optimize"]
        for key in section:
            if key not in merged:
                raise InvalidConfig(f"optimize: unknown key {key!r}")
        merged.update(section)
        # a user-supplied targets/exploration block replaces the default one
        cfg.optimize = merged
    return cfg


def query_design_from(optimize: dict) -> DesignVector:
    q = optimize.get("query", "original")
    if q == "original":
        return original_design()
    if isinstance(q, dict):
        missing = set(ALL_FIELDS) - set(q)
        if missing:
            raise InvalidConfig(f"optimize.query missing fields: {sorted(missing)}")
        return DesignVector(**{f: q[f] for f in ALL_FIELDS})
    raise InvalidConfig("optimize.query must be 'original' or a full design mapping")


def exploration_ranges_from(optimize: dict, ranges: ParameterRanges) -> ParameterRanges:
    """Dataset ranges tightened by the optimize.exploration overrides."""
    bounds = {
        f: (float(ranges.lower[i]), float(ranges.lower[i] + ranges.width[i]))
        for i, f in enumerate(CONTINUOUS_FIELDS)
    }
    for name, pair in (optimize.get("exploration") or {}).items():
        if name not in CONTINUOUS_FIELDS:
            raise InvalidConfig(f"optimize.exploration: unknown parameter {name!r}")
        bounds[name] = (float(pair[0]), float(pair[1]))
    return ParameterRanges.from_bounds(bounds)


def resolve_targets(optimize: dict, baseline_values: dict[str, float]) -> dict[str, TargetBound]:
    """Turn the optimize.targets block into TargetBound objects, resolving
    ``baseline`` placeholders against the query's predicted values."""
    out: dict[str, TargetBound] = {}
    for name, spec in (optimize.get("targets") or {}).items():
        if not isinstance(spec, dict):
            raise InvalidConfig(f"optimize.targets.{name}: expected a mapping")
        lower = upper = None
        absolute = False

        def resolve(v, absolute_bound):
            if v == "baseline":
                b = baseline_values[name]
                return abs(b) if absolute_bound else b
            return float(v)

        for key, value in spec.items():
            if key == "min":
                lower = resolve(value, False)
            elif key == "max":
                upper = resolve(value, False)
            elif key == "abs_max":
                upper = resolve(value, True)
                absolute = True
            elif key == "abs_min":
                lower = resolve(value, True)
                absolute = True
            else:
                raise InvalidConfig(f"optimize.targets.{name}: unknown bound {key!r}")
        out[name] = TargetBound(lower=lower, upper=upper, absolute=absolute)
    return out
