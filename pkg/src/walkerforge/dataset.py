"""CSV dataset schema and deterministic batch simulation.

designs.csv: design_id, sobol_index, the 14 continuous parameters
(inches/degrees), then the two material columns.

dataset.csv: designs.csv columns plus the 8 performance values, theta_deg,
tip_status and sim_status.
"""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .core import ALL_FIELDS, CONTINUOUS_FIELDS, DesignVector, FeasibilityLimits
from .errors import SimulationFailure
from .fea import BoundarySpec, LoadCase, PerformanceRecord, simulate
from .sampling import SampleBatch
from .stability import DEFAULT_TIP_FORCE_LBF, tipping_angle_imperial

DESIGN_COLUMNS = ("design_id", "sobol_index") + ALL_FIELDS
PERFORMANCE_COLUMNS = (
    "mass_lbs",
    "handle_dx_in",
    "handle_dy_in",
    "handle_dz_in",
    "leg_displ_in",
    "min_safety_factor",
    "com_longitudinal_in",
    "com_vertical_in",
)
DATASET_COLUMNS = DESIGN_COLUMNS + PERFORMANCE_COLUMNS + ("theta_deg", "tip_status", "sim_status")

SIM_OK = "ok"
SIM_FAILED = "failed"

CSV_FLOAT_FORMAT = "%.12g"


def batch_to_frame(batch: SampleBatch) -> pd.DataFrame:
    rows = []
    for design_id, (idx, d) in enumerate(zip(batch.sobol_indices, batch.designs)):
        row = {"design_id": design_id, "sobol_index": idx}
        row.update({f: getattr(d, f) for f in ALL_FIELDS})
        rows.append(row)
    return pd.DataFrame(rows, columns=list(DESIGN_COLUMNS))


def designs_from_frame(df: pd.DataFrame) -> list[DesignVector]:
    cont = df[list(CONTINUOUS_FIELDS)].to_numpy(dtype=float)
    return [
        DesignVector.from_arrays(
            cont[i],
            (df["front_crossbeam_material"].iat[i], df["frame_material"].iat[i]),
        )
        for i in range(len(df))
    ]


def write_csv(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path)


def _simulate_row(design, design_id, loads, bc, cap, limits, tip_force):
    try:
        rec = simulate(
            design, loads, bc, max_element_length_in=cap, limits=limits, design_id=design_id
        )
    except SimulationFailure as exc:
        return {"sim_status": SIM_FAILED, "sim_error": str(exc)}
    stab = tipping_angle_imperial(
        rec.mass_lbs,
        design.base_width,
        design.handle_distance,
        design.overall_height,
        tip_force,
    )
    rec = rec.with_stability(stab.theta_deg, stab.status)
    out = {c: getattr(rec, c) for c in PERFORMANCE_COLUMNS}
    out["theta_deg"] = rec.theta_deg if rec.theta_deg is not None else math.nan
    out["tip_status"] = rec.tip_status
    out["sim_status"] = SIM_OK
    return out


def simulate_frame(
    designs_df: pd.DataFrame,
    loads: LoadCase = LoadCase(),
    bc: BoundarySpec = BoundarySpec(),
    cap_in: float = 1.0,
    limits: FeasibilityLimits = FeasibilityLimits(),
    tip_force_lbf: float = DEFAULT_TIP_FORCE_LBF,
    workers: int = 1,
    skip_ids: set[int] | None = None,
) -> pd.DataFrame:
    """Simulate every design row; per-row failures are recorded in
    sim_status, never aborting the batch. Output ordering is by design_id
    regardless of worker count."""
    designs = designs_from_frame(designs_df)
    ids = designs_df["design_id"].to_numpy()
    todo = [
        (d, int(i)) for d, i in zip(designs, ids) if not (skip_ids and int(i) in skip_ids)
    ]
    results = Parallel(n_jobs=workers)(
        delayed(_simulate_row)(d, i, loads, bc, cap_in, limits, tip_force_lbf)
        for d, i in todo
    )
    by_id = {i: r for (_, i), r in zip(todo, results)}

    out = designs_df.copy()
    for col in PERFORMANCE_COLUMNS + ("theta_deg",):
        if col not in out:
            out[col] = np.nan
    for col in ("tip_status", "sim_status"):
        if col not in out:
            out[col] = ""
    for row_idx, design_id in enumerate(ids):
        res = by_id.get(int(design_id))
        if res is None:
            continue  # already simulated, kept as-is
        for col, val in res.items():
            if col == "sim_error":
                continue
            out.loc[out.index[row_idx], col] = val
    return out[list(DATASET_COLUMNS)]


def record_from_row(row) -> PerformanceRecord:
    theta = row["theta_deg"]
    return PerformanceRecord(
        mass_lbs=float(row["mass_lbs"]),
        handle_dx_in=float(row["handle_dx_in"]),
        handle_dy_in=float(row["handle_dy_in"]),
        handle_dz_in=float(row["handle_dz_in"]),
        leg_displ_in=float(row["leg_displ_in"]),
        min_safety_factor=float(row["min_safety_factor"]),
        com_longitudinal_in=float(row["com_longitudinal_in"]),
        com_vertical_in=float(row["com_vertical_in"]),
        theta_deg=None if pd.isna(theta) else float(theta),
        tip_status=row.get("tip_status"),
    )
