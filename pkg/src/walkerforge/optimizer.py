"""Constrained multi-objective genetic counterfactual search.

An NSGA-II loop over the mixed design space, driven by surrogate
predictions. Candidates must pass the geometric feasibility checks and the
user's performance targets; among satisfying candidates the three
counterfactual objectives are minimized:

  1. Gower distance to the query design (proximity),
  2. fraction of the 16 features changed (sparsity),
  3. mean Gower distance to the k nearest dataset designs
     (manifold proximity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    ALL_FIELDS,
    CATEGORICAL_FIELDS,
    CONTINUOUS_FIELDS,
    DesignVector,
    FeasibilityLimits,
    MATERIAL_NAMES,
    check_feasibility,
)
from .errors import NoCounterfactualsFound, SimulationFailure, UnreliableTarget
from .fea import BoundarySpec, LoadCase, PerformanceRecord, TARGET_NAMES, simulate
from .sampling import ParameterRanges
from .stability import DEFAULT_TIP_FORCE_LBF, TIP_STATUS_NO_TIP, tipping_angle_imperial
from .surrogate import SurrogateEnsemble

N_CONT = len(CONTINUOUS_FIELDS)
N_FEATURES = len(ALL_FIELDS)

#: Relative per-feature tolerance under which a continuous feature counts
#: as unchanged in the sparsity objective.
CHANGE_TOLERANCE = 1e-4


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetBound:
    """One-sided or interval bound on a predicted performance value; with
    ``absolute`` the bound applies to the magnitude."""

    lower: float | None = None
    upper: float | None = None
    absolute: bool = False

    def violation(self, value: float) -> float:
        v = abs(value) if self.absolute else value
        total = 0.0
        if self.lower is not None and v < self.lower:
            total += (self.lower - v) / max(abs(self.lower), 1e-9)
        if self.upper is not None and v > self.upper:
            total += (v - self.upper) / max(abs(self.upper), 1e-9)
        return total

    def satisfied(self, value: float) -> bool:
        return self.violation(value) == 0.0


def check_targets(
    values: dict[str, float], targets: dict[str, TargetBound], tip_status: str | None = None
) -> tuple[dict[str, bool], float]:
    """Per-target satisfaction and the aggregate normalized violation.

    A no-tip stability status counts as the best possible theta: it
    satisfies any lower bound.
    """
    sat: dict[str, bool] = {}
    total = 0.0
    for name, bound in targets.items():
        value = values[name]
        if name == "theta_deg" and tip_status == TIP_STATUS_NO_TIP:
            value = math.inf
        v = bound.violation(value)
        sat[name] = v == 0.0
        total += v
    return sat, total


def validate_targets(
    targets: dict[str, TargetBound],
    reliable_targets: set[str] | None,
    allow_unreliable: bool = False,
) -> None:
    """Reject constraints on surrogate targets flagged unreliable, unless
    explicitly overridden."""
    if reliable_targets is None or allow_unreliable:
        return
    bad = [t for t in targets if t not in reliable_targets]
    if bad:
        raise UnreliableTarget(
            f"targets {bad} are below the surrogate reliability threshold; "
            "pass allow_unreliable to constrain them anyway"
        )


# ---------------------------------------------------------------------------
# Gower distance and counterfactual objectives
# ---------------------------------------------------------------------------


def gower_distance(a: DesignVector, b: DesignVector, ranges: ParameterRanges) -> float:
    """Mixed-type dissimilarity in [0, 1]: range-normalized absolute
    difference for continuous features, 0/1 mismatch for materials."""
    da = np.abs(a.continuous() - b.continuous()) / ranges.width
    mismatch = sum(x != y for x, y in zip(a.materials(), b.materials()))
    return float((np.clip(da, 0.0, 1.0).sum() + mismatch) / N_FEATURES)


def _gower_matrix(cont: np.ndarray, cat: np.ndarray, ref_cont: np.ndarray, ref_cat: np.ndarray, ranges) -> np.ndarray:
    """(n, m) Gower distances between candidate rows and reference rows."""
    diff = np.abs(cont[:, None, :] - ref_cont[None, :, :]) / ranges.width
    cont_part = np.clip(diff, 0.0, 1.0).sum(axis=2)
    cat_part = (cat[:, None, :] != ref_cat[None, :, :]).sum(axis=2)
    return (cont_part + cat_part) / N_FEATURES


@dataclass
class DatasetIndex:
    """Precomputed design matrix of the generated dataset for the
    manifold-proximity objective."""

    cont: np.ndarray  # (m, 14)
    cat: np.ndarray  # (m, 2) material indices
    ranges: ParameterRanges

    @classmethod
    def from_designs(cls, designs: list[DesignVector], ranges: ParameterRanges):
        cont = np.array([d.continuous() for d in designs])
        cat = np.array(
            [[MATERIAL_NAMES.index(m) for m in d.materials()] for d in designs]
        )
        return cls(cont, cat, ranges)

    def mean_knn_distance(self, cont: np.ndarray, cat: np.ndarray, k: int) -> np.ndarray:
        k = min(k, len(self.cont))
        D = _gower_matrix(cont, cat, self.cont, self.cat, self.ranges)
        part = np.partition(D, k - 1, axis=1)[:, :k]
        return part.mean(axis=1)


def counterfactual_objectives(
    d: DesignVector,
    query: DesignVector,
    dataset: DatasetIndex,
    k: int = 5,
) -> tuple[float, float, float]:
    """(gower_to_query, changed_feature_ratio, mean knn dataset distance)."""
    cont = d.continuous()[None, :]
    cat = np.array([[MATERIAL_NAMES.index(m) for m in d.materials()]])
    prox = gower_distance(d, query, dataset.ranges)
    changed = _changed_ratio(cont, cat, query, dataset.ranges)[0]
    manifold = float(dataset.mean_knn_distance(cont, cat, k)[0])
    return (prox, changed, manifold)


def _changed_ratio(cont, cat, query: DesignVector, ranges) -> np.ndarray:
    qc = query.continuous()
    qcat = np.array([MATERIAL_NAMES.index(m) for m in query.materials()])
    changed = (np.abs(cont - qc) > CHANGE_TOLERANCE * ranges.width).sum(axis=1)
    changed = changed + (cat != qcat).sum(axis=1)
    return changed / N_FEATURES


# ---------------------------------------------------------------------------
# Query / GA configuration
# ---------------------------------------------------------------------------


@dataclass
class CounterfactualQuery:
    query_design: DesignVector
    targets: dict[str, TargetBound]
    frozen_parameters: frozenset[str] = frozenset()
    exploration_ranges: ParameterRanges | None = None  # defaults to dataset ranges

    def __post_init__(self):
        unknown = set(self.frozen_parameters) - set(ALL_FIELDS)
        if unknown:
            raise ValueError(f"unknown frozen parameters: {sorted(unknown)}")
        unknown = set(self.targets) - set(TARGET_NAMES)
        if unknown:
            raise ValueError(f"unknown performance targets: {sorted(unknown)}")


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 100
    generations: int = 1000
    crossover_rate: float = 0.9
    mutation_rate: float = 1.0 / N_FEATURES
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0
    seed: int = 0
    sample_count: int = 10
    diversity_weight: float = 0.3
    dataset_neighbors: int = 5

    def __post_init__(self):
        if self.population_size < 10:
            raise ValueError("population_size must be >= 10")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")


@dataclass
class CounterfactualResult:
    design: DesignVector
    predicted: PerformanceRecord
    objectives: tuple[float, float, float]
    constraint_satisfied: dict[str, bool]
    simulated: PerformanceRecord | None = None
    simulation_error: str | None = None
    simulated_violates_targets: bool = False
    mass_prediction_rel_error: float | None = None


@dataclass
class EvolutionResult:
    results: list  # candidate tuples (cont, cat, objectives, predictions)
    initial_mean_predictions: dict[str, float]
    n_evaluations: int


# ---------------------------------------------------------------------------
# NSGA-II machinery
# ---------------------------------------------------------------------------


def _dominates(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


def _non_dominated_sort(objs: np.ndarray) -> list[np.ndarray]:
    n = len(objs)
    # all-pairs domination matrix, vectorized: dom[i, j] <=> i dominates j
    le = np.all(objs[:, None, :] <= objs[None, :, :], axis=2)
    lt = np.any(objs[:, None, :] < objs[None, :, :], axis=2)
    dom = le & lt
    dominated_by = [np.nonzero(dom[i])[0] for i in range(n)]
    dom_count = dom.sum(axis=0)
    fronts = []
    current = np.where(dom_count == 0)[0]
    while len(current):
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                dom_count[j] -= 1
                if dom_count[j] == 0:
                    nxt.append(j)
        current = np.array(nxt, dtype=int)
    return fronts


def _crowding_distance(objs: np.ndarray) -> np.ndarray:
    n, m = objs.shape
    dist = np.zeros(n)
    for k in range(m):
        order = np.argsort(objs[:, k], kind="stable")
        dist[order[0]] = dist[order[-1]] = np.inf
        span = objs[order[-1], k] - objs[order[0], k]
        if span > 0 and n > 2:
            dist[order[1:-1]] += (objs[order[2:], k] - objs[order[:-2], k]) / span
    return dist


def _rank_population(objs: np.ndarray, cv: np.ndarray):
    """Feasibility-first ranking: (rank, crowding) per individual. Lower rank
    is better; within a rank higher crowding is better."""
    n = len(cv)
    rank = np.empty(n, dtype=int)
    crowd = np.zeros(n)
    feas = np.where(cv == 0)[0]
    infeas = np.where(cv > 0)[0]
    n_fronts = 0
    if len(feas):
        fronts = _non_dominated_sort(objs[feas])
        for r, front in enumerate(fronts):
            idx = feas[front]
            rank[idx] = r
            crowd[idx] = _crowding_distance(objs[idx])
        n_fronts = len(fronts)
    if len(infeas):
        # violators ranked after all satisfiers, ordered by violation
        order = infeas[np.argsort(cv[infeas], kind="stable")]
        rank[order] = n_fronts + np.arange(len(order))
    return rank, crowd


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------


class _Evaluator:
    def __init__(self, query: CounterfactualQuery, ensemble, dataset: DatasetIndex,
                 limits: FeasibilityLimits, cfg: GAConfig):
        self.query = query
        self.ensemble = ensemble
        self.dataset = dataset
        self.limits = limits
        self.cfg = cfg
        self.n_evaluations = 0

    def __call__(self, cont: np.ndarray, cat: np.ndarray):
        """Returns (objectives, cv, predictions dict, feasible mask)."""
        n = len(cont)
        designs = [
            DesignVector.from_arrays(cont[i], tuple(MATERIAL_NAMES[c] for c in cat[i]))
            for i in range(n)
        ]
        geo_ok = np.array(
            [check_feasibility(d, self.limits).valid for d in designs], dtype=bool
        )
        preds = {name: np.full(n, np.nan) for name in TARGET_NAMES}
        cv = np.zeros(n)
        if geo_ok.any():
            ok_idx = np.where(geo_ok)[0]
            batch = self.ensemble.predict_designs([designs[i] for i in ok_idx])
            for name in TARGET_NAMES:
                preds[name][ok_idx] = batch[name]
            self.n_evaluations += len(ok_idx)
            for i in ok_idx:
                values = {name: preds[name][i] for name in self.query.targets}
                _, cv[i] = check_targets(values, self.query.targets)
        # geometric infeasibility dominates any target violation
        cv[~geo_ok] = 1e6

        objs = np.column_stack(
            [
                _gower_matrix(
                    cont,
                    cat,
                    self.query.query_design.continuous()[None, :],
                    np.array([[MATERIAL_NAMES.index(m) for m in self.query.query_design.materials()]]),
                    self.dataset.ranges,
                )[:, 0],
                _changed_ratio(cont, cat, self.query.query_design, self.dataset.ranges),
                self.dataset.mean_knn_distance(cont, cat, self.cfg.dataset_neighbors),
            ]
        )
        return objs, cv, preds, geo_ok


def _sbx_crossover(p1, p2, lo, hi, rng, eta, rate):
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() > rate:
        return c1, c2
    for k in range(len(p1)):
        if rng.random() > 0.5 or abs(p1[k] - p2[k]) < 1e-14:
            continue
        x1, x2 = sorted((p1[k], p2[k]))
        u = rng.random()
        beta = (2 * u) ** (1 / (eta + 1)) if u <= 0.5 else (1 / (2 * (1 - u))) ** (1 / (eta + 1))
        c1[k] = np.clip(0.5 * ((x1 + x2) - beta * (x2 - x1)), lo[k], hi[k])
        c2[k] = np.clip(0.5 * ((x1 + x2) + beta * (x2 - x1)), lo[k], hi[k])
    return c1, c2


def _polynomial_mutation(x, lo, hi, rng, eta, rate):
    y = x.copy()
    for k in range(len(x)):
        if rng.random() > rate or hi[k] <= lo[k]:
            continue
        u = rng.random()
        delta = (2 * u) ** (1 / (eta + 1)) - 1 if u < 0.5 else 1 - (2 * (1 - u)) ** (1 / (eta + 1))
        y[k] = np.clip(x[k] + delta * (hi[k] - lo[k]), lo[k], hi[k])
    return y


def evolve(
    query: CounterfactualQuery,
    ensemble: SurrogateEnsemble,
    dataset: DatasetIndex,
    cfg: GAConfig = GAConfig(),
    limits: FeasibilityLimits = FeasibilityLimits(),
) -> EvolutionResult:
    """Run the NSGA-II counterfactual search; returns the non-dominated
    archive of constraint-satisfying candidates."""
    rng = np.random.default_rng(cfg.seed)
    ranges = query.exploration_ranges or dataset.ranges
    lo, hi = ranges.lower.copy(), ranges.upper().copy()

    frozen_cont = np.array([f in query.frozen_parameters for f in CONTINUOUS_FIELDS])
    frozen_cat = np.array([f in query.frozen_parameters for f in CATEGORICAL_FIELDS])
    q_cont = np.clip(query.query_design.continuous(), lo, hi)
    q_cat = np.array([MATERIAL_NAMES.index(m) for m in query.query_design.materials()])

    def enforce_frozen(cont, cat):
        cont[:, frozen_cont] = query.query_design.continuous()[frozen_cont]
        cat[:, frozen_cat] = q_cat[frozen_cat]
        return cont, cat

    # Initial population: query, its dataset neighbors, then uniform samples.
    n = cfg.population_size
    cont = rng.uniform(lo, hi, size=(n, N_CONT))
    cat = rng.integers(0, 3, size=(n, 2))
    cont[0], cat[0] = q_cont, q_cat
    n_seed = min(max(n // 5, 1), len(dataset.cont))
    d_to_q = _gower_matrix(
        dataset.cont, dataset.cat, q_cont[None, :], q_cat[None, :], dataset.ranges
    )[:, 0]
    nearest = np.argsort(d_to_q, kind="stable")[:n_seed]
    for slot, ds_idx in enumerate(nearest, start=1):
        if slot >= n:
            break
        cont[slot] = np.clip(dataset.cont[ds_idx], lo, hi)
        cat[slot] = dataset.cat[ds_idx]
    cont, cat = enforce_frozen(cont, cat)

    evaluator = _Evaluator(query, ensemble, dataset, limits, cfg)
    objs, cv, preds, geo_ok = evaluator(cont, cat)
    initial_mean = {
        name: float(np.nanmean(preds[name])) if np.isfinite(preds[name]).any() else math.nan
        for name in TARGET_NAMES
    }

    archive: dict[tuple, tuple] = {}

    def archive_add(cont, cat, objs, cv, preds):
        for i in np.where(cv == 0)[0]:
            key = (tuple(np.round(cont[i], 9)), tuple(cat[i]))
            if key not in archive:
                archive[key] = (
                    cont[i].copy(),
                    cat[i].copy(),
                    tuple(objs[i]),
                    {name: float(preds[name][i]) for name in TARGET_NAMES},
                )

    archive_add(cont, cat, objs, cv, preds)
    rank, crowd = _rank_population(objs, cv)

    for _gen in range(cfg.generations):
        # binary tournament on (rank, crowding)
        def pick():
            i, j = rng.integers(0, n, size=2)
            if rank[i] != rank[j]:
                return i if rank[i] < rank[j] else j
            return i if crowd[i] >= crowd[j] else j

        child_cont = np.empty_like(cont)
        child_cat = np.empty_like(cat)
        for slot in range(0, n, 2):
            a, b = pick(), pick()
            c1, c2 = _sbx_crossover(
                cont[a], cont[b], lo, hi, rng, cfg.eta_crossover, cfg.crossover_rate
            )
            g1, g2 = cat[a].copy(), cat[b].copy()
            if rng.random() < 0.5:
                g1, g2 = g2.copy(), g1.copy()
            child_cont[slot] = _polynomial_mutation(
                c1, lo, hi, rng, cfg.eta_mutation, cfg.mutation_rate
            )
            for gene in range(2):
                if rng.random() < cfg.mutation_rate:
                    g1[gene] = rng.integers(0, 3)
            child_cat[slot] = g1
            if slot + 1 < n:
                child_cont[slot + 1] = _polynomial_mutation(
                    c2, lo, hi, rng, cfg.eta_mutation, cfg.mutation_rate
                )
                for gene in range(2):
                    if rng.random() < cfg.mutation_rate:
                        g2[gene] = rng.integers(0, 3)
                child_cat[slot + 1] = g2
        child_cont, child_cat = enforce_frozen(child_cont, child_cat)

        c_objs, c_cv, c_preds, _ = evaluator(child_cont, child_cat)
        archive_add(child_cont, child_cat, c_objs, c_cv, c_preds)

        all_cont = np.vstack([cont, child_cont])
        all_cat = np.vstack([cat, child_cat])
        all_objs = np.vstack([objs, c_objs])
        all_cv = np.concatenate([cv, c_cv])
        all_rank, all_crowd = _rank_population(all_objs, all_cv)
        order = np.lexsort((-all_crowd, all_rank))[:n]
        cont, cat = all_cont[order], all_cat[order]
        objs, cv = all_objs[order], all_cv[order]
        rank, crowd = _rank_population(objs, cv)

    if not archive:
        unmet = sorted(query.targets)
        raise NoCounterfactualsFound(
            "no candidate satisfied all performance targets; relax the "
            f"constraints on: {unmet}",
            unmet=unmet,
        )

    # keep only the mutually non-dominated archive members
    items = list(archive.values())
    arc_objs = np.array([it[2] for it in items])
    front = _non_dominated_sort(arc_objs)[0]
    results = [items[i] for i in front]
    return EvolutionResult(results, initial_mean, evaluator.n_evaluations)


# ---------------------------------------------------------------------------
# Final sampling and validation
# ---------------------------------------------------------------------------


def _candidate_to_result(item, query: CounterfactualQuery) -> CounterfactualResult:
    cont, cat, objs, preds = item
    design = DesignVector.from_arrays(cont, tuple(MATERIAL_NAMES[c] for c in cat))
    predicted = PerformanceRecord(
        mass_lbs=preds["mass_lbs"],
        handle_dx_in=preds["handle_dx_in"],
        handle_dy_in=preds["handle_dy_in"],
        handle_dz_in=preds["handle_dz_in"],
        leg_displ_in=preds["leg_displ_in"],
        min_safety_factor=preds["min_safety_factor"],
        com_longitudinal_in=preds["com_longitudinal_in"],
        com_vertical_in=preds["com_vertical_in"],
        theta_deg=preds["theta_deg"],
    )
    sat, _ = check_targets(
        {name: preds[name] for name in query.targets}, query.targets
    )
    return CounterfactualResult(design, predicted, tuple(objs), sat)


def final_sample(
    evolution: EvolutionResult,
    query: CounterfactualQuery,
    ranges: ParameterRanges,
    cfg: GAConfig = GAConfig(),
) -> list[CounterfactualResult]:
    """Greedy weighted selection of up to sample_count archive members,
    trading objective quality against subset diversity."""
    items = evolution.results
    if not items:
        return []
    base_score = -np.array([sum(it[2]) for it in items])
    cont = np.array([it[0] for it in items])
    cat = np.array([it[1] for it in items])
    pairwise = _gower_matrix(cont, cat, cont, cat, ranges)

    selected: list[int] = []
    remaining = list(range(len(items)))
    while remaining and len(selected) < cfg.sample_count:
        if not selected or cfg.diversity_weight == 0.0:
            scores = [base_score[i] for i in remaining]
        else:
            scores = [
                base_score[i]
                + cfg.diversity_weight * pairwise[i, selected].mean()
                for i in remaining
            ]
        best = remaining[int(np.argmax(scores))]
        selected.append(best)
        remaining.remove(best)
        if cfg.diversity_weight == 0.0 and len(selected) >= cfg.sample_count:
            break
    return [_candidate_to_result(items[i], query) for i in selected]


def validate_results(
    results: list[CounterfactualResult],
    query: CounterfactualQuery,
    loads: LoadCase = LoadCase(),
    bc: BoundarySpec = BoundarySpec(),
    cap_in: float = 1.0,
    limits: FeasibilityLimits = FeasibilityLimits(),
    tip_force_lbf: float = DEFAULT_TIP_FORCE_LBF,
) -> list[CounterfactualResult]:
    """Re-simulate every returned design; designs whose simulated values
    violate the targets are flagged, never dropped."""
    out = []
    for r in results:
        try:
            rec = simulate(r.design, loads, bc, max_element_length_in=cap_in, limits=limits)
        except SimulationFailure as exc:
            out.append(replace(r, simulation_error=str(exc)))
            continue
        stab = tipping_angle_imperial(
            rec.mass_lbs,
            r.design.base_width,
            r.design.handle_distance,
            r.design.overall_height,
            tip_force_lbf,
        )
        rec = rec.with_stability(stab.theta_deg, stab.status)
        values = {name: getattr(rec, name) for name in TARGET_NAMES}
        values = {
            k: (math.nan if v is None else v) for k, v in values.items()
        }
        sim_sat, _ = check_targets(
            {name: values[name] for name in query.targets},
            query.targets,
            tip_status=rec.tip_status,
        )
        rel_err = abs(r.predicted.mass_lbs - rec.mass_lbs) / rec.mass_lbs
        out.append(
            replace(
                r,
                simulated=rec,
                simulated_violates_targets=not all(sim_sat.values()),
                mass_prediction_rel_error=float(rel_err),
            )
        )
    return out
