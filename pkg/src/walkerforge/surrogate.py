"""Stacked-ensemble surrogate: per-target base regressors (k-NN, random
forest, gradient-boosted trees, ridge) combined by a ridge meta-learner
trained on out-of-fold base predictions."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import joblib
import numpy as np
import pandas as pd
from sklearn.ensemble import HistGradientBoostingRegressor, RandomForestRegressor
from sklearn.linear_model import Ridge
from sklearn.model_selection import KFold
from sklearn.neighbors import KNeighborsRegressor

from .core import CATEGORICAL_FIELDS, CONTINUOUS_FIELDS, DesignVector, MATERIAL_NAMES
from .errors import DimensionMismatch, EncodingError, InsufficientData
from .fea import PerformanceRecord, TARGET_NAMES
from .sampling import ParameterRanges

MODEL_FORMAT_VERSION = 1
MIN_USABLE_ROWS = 50
RELIABILITY_THRESHOLD = 0.5

BASE_LEARNERS = ("knn", "random_forest", "gbt", "ridge")

#: Strictly positive, multiplicative targets modelled in log space (the
#: ensemble architecture is unchanged; only the fitted quantity differs).
LOG_SPACE_TARGETS = frozenset({"mass_lbs"})


@dataclass(frozen=True)
class SurrogateConfig:
    seed: int = 0
    n_folds: int = 5
    knn_neighbors: int = 5
    rf_trees: int = 200
    gbt_rounds: int = 300
    gbt_depth: int = 6
    gbt_learning_rate: float = 0.05
    ridge_alpha: float = 1.0
    test_fraction: float = 0.2
    reliability_threshold: float = RELIABILITY_THRESHOLD


def _make_base_learners(cfg: SurrogateConfig) -> dict:
    return {
        "knn": KNeighborsRegressor(n_neighbors=cfg.knn_neighbors),
        "random_forest": RandomForestRegressor(
            n_estimators=cfg.rf_trees, random_state=cfg.seed, n_jobs=-1
        ),
        "gbt": HistGradientBoostingRegressor(
            max_iter=cfg.gbt_rounds,
            max_depth=cfg.gbt_depth,
            learning_rate=cfg.gbt_learning_rate,
            random_state=cfg.seed,
        ),
        "ridge": Ridge(alpha=cfg.ridge_alpha),
    }


# ---------------------------------------------------------------------------
# Feature encoding
# ---------------------------------------------------------------------------


def encoding_schema_hash(ranges: ParameterRanges) -> str:
    payload = ",".join(CONTINUOUS_FIELDS + CATEGORICAL_FIELDS)
    payload += "|" + ",".join(f"{v:.12g}" for v in ranges.lower)
    payload += "|" + ",".join(f"{v:.12g}" for v in ranges.width)
    payload += "|" + ",".join(MATERIAL_NAMES)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def encode_designs(designs: list[DesignVector], ranges: ParameterRanges) -> np.ndarray:
    """14 min-max-normalized continuous features + two 3-way one-hot blocks."""
    n = len(designs)
    X = np.zeros((n, len(CONTINUOUS_FIELDS) + 6))
    for i, d in enumerate(designs):
        X[i, : len(CONTINUOUS_FIELDS)] = (d.continuous() - ranges.lower) / ranges.width
        for j, mat in enumerate(d.materials()):
            try:
                idx = MATERIAL_NAMES.index(mat)
            except ValueError:
                raise EncodingError(f"unknown material category: {mat!r}") from None
            X[i, len(CONTINUOUS_FIELDS) + 3 * j + idx] = 1.0
    return X


def encode_matrix(cont: np.ndarray, cat_idx: np.ndarray, ranges: ParameterRanges) -> np.ndarray:
    """Vectorized encoder for (n,14) continuous values + (n,2) material indices."""
    n = cont.shape[0]
    X = np.zeros((n, cont.shape[1] + 6))
    X[:, : cont.shape[1]] = (cont - ranges.lower) / ranges.width
    for j in range(2):
        X[np.arange(n), cont.shape[1] + 3 * j + cat_idx[:, j]] = 1.0
    return X


# ---------------------------------------------------------------------------
# Metrics and splitting
# ---------------------------------------------------------------------------


def r_squared(predictions, actuals) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot; 0 by convention
    for a constant target."""
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape:
        raise DimensionMismatch(f"length mismatch: {p.shape} vs {a.shape}")
    ss_tot = np.sum((a - a.mean()) ** 2)
    if ss_tot == 0.0:
        return 0.0
    return float(1.0 - np.sum((a - p) ** 2) / ss_tot)


def split_dataset(df: pd.DataFrame, test_fraction: float = 0.2, seed: int = 0):
    """Deterministic disjoint train/test partition over simulation-ok rows."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    ok = df[df["sim_status"] == "ok"].reset_index(drop=True)
    if len(ok) < MIN_USABLE_ROWS:
        raise InsufficientData(
            f"need at least {MIN_USABLE_ROWS} usable rows, got {len(ok)}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ok))
    n_test = int(round(len(ok) * test_fraction))
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return ok.iloc[train_idx].reset_index(drop=True), ok.iloc[test_idx].reset_index(drop=True)


# ---------------------------------------------------------------------------
# Ensemble
# ---------------------------------------------------------------------------


@dataclass
class TargetEnsemble:
    base_models: dict
    meta: Ridge
    train_residual_std: float
    constant_value: float | None = None  # set for zero-variance targets
    log_space: bool = False  # models log(y); predictions are exponentiated

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.constant_value is not None:
            return np.full(X.shape[0], self.constant_value)
        Z = np.column_stack([self.base_models[k].predict(X) for k in BASE_LEARNERS])
        out = self.meta.predict(Z)
        return np.exp(out) if self.log_space else out


@dataclass
class SurrogateEnsemble:
    targets: dict[str, TargetEnsemble]
    ranges: ParameterRanges
    config: SurrogateConfig
    schema_hash: str
    warnings: list[str] = field(default_factory=list)

    def predict_designs(self, designs: list[DesignVector]) -> dict[str, np.ndarray]:
        X = encode_designs(designs, self.ranges)
        return {name: te.predict(X) for name, te in self.targets.items()}

    def predict(self, d: DesignVector) -> PerformanceRecord:
        preds = self.predict_designs([d])
        values = {name: float(v[0]) for name, v in preds.items()}
        return PerformanceRecord(
            mass_lbs=values["mass_lbs"],
            handle_dx_in=values["handle_dx_in"],
            handle_dy_in=values["handle_dy_in"],
            handle_dz_in=values["handle_dz_in"],
            leg_displ_in=values["leg_displ_in"],
            min_safety_factor=values["min_safety_factor"],
            com_longitudinal_in=values["com_longitudinal_in"],
            com_vertical_in=values["com_vertical_in"],
            theta_deg=values["theta_deg"],
            tip_status=None,
        )


def _designs_from_frame(df: pd.DataFrame) -> list[DesignVector]:
    cont = df[list(CONTINUOUS_FIELDS)].to_numpy(dtype=float)
    return [
        DesignVector.from_arrays(
            cont[i], (df["front_crossbeam_material"].iat[i], df["frame_material"].iat[i])
        )
        for i in range(len(df))
    ]


def _fit_target(X: np.ndarray, y: np.ndarray, cfg: SurrogateConfig, log_space: bool = False):
    if np.std(y) == 0.0:
        te = TargetEnsemble({}, Ridge(), 0.0, constant_value=float(y[0]))
        return te, "zero-variance target; trained a constant model"
    if log_space and np.any(y <= 0.0):
        log_space = False  # fall back for targets that turn non-positive
    y_fit = np.log(y) if log_space else y

    kf = KFold(n_splits=cfg.n_folds, shuffle=True, random_state=cfg.seed)
    oof = np.zeros((len(y), len(BASE_LEARNERS)))
    for train_idx, val_idx in kf.split(X):
        models = _make_base_learners(cfg)
        for j, name in enumerate(BASE_LEARNERS):
            models[name].fit(X[train_idx], y_fit[train_idx])
            oof[val_idx, j] = models[name].predict(X[val_idx])
    meta = Ridge(alpha=cfg.ridge_alpha)
    meta.fit(oof, y_fit)

    full = _make_base_learners(cfg)
    for name in BASE_LEARNERS:
        full[name].fit(X, y_fit)
    oof_pred = np.exp(meta.predict(oof)) if log_space else meta.predict(oof)
    te = TargetEnsemble(
        full, meta, train_residual_std=float(np.std(oof_pred - y)), log_space=log_space
    )
    return te, None


def train(train_df: pd.DataFrame, ranges: ParameterRanges, cfg: SurrogateConfig = SurrogateConfig()) -> SurrogateEnsemble:
    """Fit one stacked ensemble per performance target.

    Rows whose theta is undefined (no-tip) are excluded from the theta
    model only.
    """
    designs = _designs_from_frame(train_df)
    X = encode_designs(designs, ranges)
    targets: dict[str, TargetEnsemble] = {}
    warns: list[str] = []
    for name in TARGET_NAMES:
        y = train_df[name].to_numpy(dtype=float)
        mask = np.isfinite(y)
        if name == "theta_deg" and "tip_status" in train_df:
            mask &= (train_df["tip_status"] == "tips").to_numpy()
        if mask.sum() < MIN_USABLE_ROWS:
            raise InsufficientData(f"target {name}: only {mask.sum()} usable rows")
        te, warning = _fit_target(X[mask], y[mask], cfg, log_space=name in LOG_SPACE_TARGETS)
        if warning:
            warns.append(f"{name}: {warning}")
        targets[name] = te
    return SurrogateEnsemble(targets, ranges, cfg, encoding_schema_hash(ranges), warns)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvaluationReport:
    rows: pd.DataFrame  # target, r2, per-base r2, reliable flag
    train_size: int
    test_size: int

    def reliable_targets(self) -> set[str]:
        return set(self.rows.loc[self.rows["reliable"], "target"])

    def to_csv(self, path):
        self.rows.to_csv(path, index=False)


def evaluate(
    ensemble: SurrogateEnsemble,
    test_df: pd.DataFrame,
    train_size: int = 0,
) -> EvaluationReport:
    """Held-out R-squared per target, with per-base-model diagnostics and a
    reliability flag (targets below the threshold are not safe to constrain)."""
    designs = _designs_from_frame(test_df)
    X = encode_designs(designs, ensemble.ranges)
    threshold = ensemble.config.reliability_threshold
    records = []
    for name in TARGET_NAMES:
        y = test_df[name].to_numpy(dtype=float)
        mask = np.isfinite(y)
        if name == "theta_deg" and "tip_status" in test_df:
            mask &= (test_df["tip_status"] == "tips").to_numpy()
        te = ensemble.targets[name]
        r2 = r_squared(te.predict(X[mask]), y[mask]) if mask.sum() >= 2 else float("nan")
        row = {"target": name, "r2": r2}
        for base in BASE_LEARNERS:
            if te.constant_value is None and mask.sum() >= 2:
                base_pred = te.base_models[base].predict(X[mask])
                if te.log_space:
                    base_pred = np.exp(base_pred)
                row[f"r2_{base}"] = r_squared(base_pred, y[mask])
            else:
                row[f"r2_{base}"] = float("nan")
        row["reliable"] = bool(r2 >= threshold)
        records.append(row)
    return EvaluationReport(pd.DataFrame(records), train_size, len(test_df))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_ensemble(ensemble: SurrogateEnsemble, path) -> None:
    joblib.dump({"format_version": MODEL_FORMAT_VERSION, "ensemble": ensemble}, path)


def load_ensemble(path) -> SurrogateEnsemble:
    payload = joblib.load(path)
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise EncodingError(
            f"unsupported model format version: {payload.get('format_version')}"
        )
    return payload["ensemble"]
