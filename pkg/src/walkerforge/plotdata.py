"""Performance-space export: scatter-matrix columns and KDE curves.

Rendering is out of scope; these functions emit plot-ready CSV data.
Deflection values are exported as magnitudes.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde

from .fea import TARGET_NAMES

#: Default 5-value selection for the scatter matrix.
DEFAULT_PLOT_TARGETS = (
    "mass_lbs",
    "handle_dy_in",
    "handle_dz_in",
    "min_safety_factor",
    "leg_displ_in",
)

#: Columns whose sign is a load-direction artifact; exported as |value|.
DEFLECTION_COLUMNS = ("handle_dx_in", "handle_dy_in", "handle_dz_in", "leg_displ_in")

KDE_POINTS = 256


def _prepare(df: pd.DataFrame, targets) -> pd.DataFrame:
    unknown = set(targets) - set(TARGET_NAMES)
    if unknown:
        raise KeyError(f"unknown performance values: {sorted(unknown)}")
    ok = df[df["sim_status"] == "ok"]
    out = ok[["design_id", *targets]].copy()
    for col in targets:
        if col in DEFLECTION_COLUMNS:
            out[col] = out[col].abs()
    return out.reset_index(drop=True)


def scatter_frame(df: pd.DataFrame, targets=DEFAULT_PLOT_TARGETS) -> pd.DataFrame:
    """One row per simulated design with the selected performance columns
    (deflections as magnitudes); plotting tools pair the columns."""
    return _prepare(df, targets)


def kde_frame(df: pd.DataFrame, targets=DEFAULT_PLOT_TARGETS) -> pd.DataFrame:
    """Gaussian-kernel density curves (Silverman bandwidth) per target,
    evaluated on 256 points spanning the data plus a 3-bandwidth margin."""
    data = _prepare(df, targets)
    rows = []
    for col in targets:
        values = data[col].to_numpy(dtype=float)
        values = values[np.isfinite(values)]
        kde = gaussian_kde(values, bw_method="silverman")
        bw = float(np.sqrt(kde.covariance[0, 0]))
        xs = np.linspace(values.min() - 3 * bw, values.max() + 3 * bw, KDE_POINTS)
        dens = kde(xs)
        rows.append(pd.DataFrame({"target": col, "x": xs, "density": dens}))
    return pd.concat(rows, ignore_index=True)


def baseline_overlay(record_values: dict[str, float], targets=DEFAULT_PLOT_TARGETS) -> pd.DataFrame:
    """The query/original design's values, for marking on the plots."""
    row = {}
    for col in targets:
        v = record_values[col]
        row[col] = abs(v) if col in DEFLECTION_COLUMNS else v
    return pd.DataFrame([{"design_id": "baseline", **row}])
