"""Command-line pipeline: generate -> simulate -> train -> evaluate ->
optimize -> validate, plus performance-space export and a one-shot
tipping-angle calculator. Every command is deterministic under fixed seeds
and re-runnable."""

from __future__ import annotations

import math
import os
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
from filelock import FileLock

from . import config as cfgmod
from . import dataset as ds
from . import plotdata
from .core import ALL_FIELDS
from .errors import (
    EmptyBatch,
    InsufficientData,
    NoCounterfactualsFound,
    UnreliableTarget,
    WalkerForgeError,
)
from .fea import TARGET_NAMES
from .optimizer import (
    CounterfactualQuery,
    DatasetIndex,
    evolve,
    final_sample,
    validate_results,
    validate_targets,
)
from .sampling import generate_batch
from .stability import tipping_angle_imperial
from .surrogate import (
    evaluate as evaluate_ensemble,
    load_ensemble,
    save_ensemble,
    split_dataset,
    train as train_ensemble,
)

DESIGNS_FILE = "designs.csv"
DATASET_FILE = "dataset.csv"
MODEL_FILE = "model.joblib"
R2_REPORT_FILE = "r2_report.csv"
COUNTERFACTUALS_FILE = "counterfactuals.csv"
BASELINE_REPORT_FILE = "baseline_report.csv"
SCATTER_FILE = "scatter.csv"
KDE_FILE = "kde_curves.csv"
OVERLAY_FILE = "baseline_overlay.csv"


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _out_dir(cfg) -> Path:
    path = Path(os.environ.get("WALKER_FORGE_DIR", cfg.output_dir))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _lock(out: Path) -> FileLock:
    return FileLock(out / ".walkerforge.lock")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config file; defaults are used when omitted.")
@click.option("--seed", type=int, default=None, help="Override all seeds.")
@click.option("--workers", type=int, default=1, help="Parallel simulation workers.")
@click.option("--force", is_flag=True, help="Recompute rows/files that already exist.")
@click.pass_context
def main(ctx, config_path, seed, workers, force):
    """walker-forge: data-driven walker design pipeline."""
    try:
        cfg = cfgmod.load_config(config_path)
    except WalkerForgeError as exc:
        _fail(str(exc))
    if seed is not None:
        from dataclasses import replace

        cfg.surrogate = replace(cfg.surrogate, seed=seed)
        cfg.ga = replace(cfg.ga, seed=seed)
    ctx.obj = {"cfg": cfg, "seed": seed, "workers": workers, "force": force}


@main.command()
@click.option("-n", "n_requested", type=int, required=True, help="Designs to sample.")
@click.option("--skip", type=int, default=0, help="Sobol sequence skip offset.")
@click.pass_obj
def generate(obj, n_requested, skip):
    """Sample feasible designs into designs.csv."""
    cfg = obj["cfg"]
    out = _out_dir(cfg)
    seed = obj["seed"] or 0
    try:
        batch = generate_batch(n_requested, cfg.ranges, cfg.limits, seed=seed, sobol_skip=skip)
    except EmptyBatch as exc:
        _fail(str(exc))
    with _lock(out):
        ds.write_csv(ds.batch_to_frame(batch), out / DESIGNS_FILE)
    click.echo(
        f"requested={batch.requested} dropped={batch.dropped_infeasible} "
        f"valid={len(batch.designs)}"
    )
    click.echo(f"wrote {out / DESIGNS_FILE}")


@main.command()
@click.pass_obj
def simulate(obj):
    """Simulate every design in designs.csv into dataset.csv."""
    cfg = obj["cfg"]
    out = _out_dir(cfg)
    designs_path = out / DESIGNS_FILE
    if not designs_path.exists():
        _fail(f"{designs_path} not found; run 'generate' first")
    df = ds.read_csv(designs_path)

    skip_ids: set[int] = set()
    dataset_path = out / DATASET_FILE
    if dataset_path.exists() and not obj["force"]:
        prev = ds.read_csv(dataset_path)
        done = prev[prev["sim_status"].isin([ds.SIM_OK, ds.SIM_FAILED])]
        skip_ids = set(done["design_id"].astype(int))
        df = df.merge(
            done[[c for c in ds.DATASET_COLUMNS if c not in ds.DESIGN_COLUMNS] + ["design_id"]],
            on="design_id",
            how="left",
        )
    result = ds.simulate_frame(
        df,
        loads=cfg.loads,
        cap_in=cfg.mesh_cap_in,
        limits=cfg.limits,
        tip_force_lbf=cfg.tip_force_lbf,
        workers=obj["workers"],
        skip_ids=skip_ids,
    )
    with _lock(out):
        ds.write_csv(result, dataset_path)
    n_ok = int((result["sim_status"] == ds.SIM_OK).sum())
    n_fail = int((result["sim_status"] == ds.SIM_FAILED).sum())
    click.echo(f"simulated={len(result) - len(skip_ids)} ok={n_ok} failed={n_fail}")
    click.echo(f"wrote {dataset_path}")


def _load_dataset(out: Path) -> pd.DataFrame:
    path = out / DATASET_FILE
    if not path.exists():
        _fail(f"{path} not found; run 'simulate' first")
    return ds.read_csv(path)


@main.command()
@click.pass_obj
def train(obj):
    """Train the stacked-ensemble surrogate and write the R^2 report."""
    cfg = obj["cfg"]
    out = _out_dir(cfg)
    df = _load_dataset(out)
    try:
        train_df, test_df = split_dataset(df, cfg.surrogate.test_fraction, cfg.surrogate.seed)
        ensemble = train_ensemble(train_df, cfg.ranges, cfg.surrogate)
    except InsufficientData as exc:
        _fail(str(exc))
    report = evaluate_ensemble(ensemble, test_df, train_size=len(train_df))
    with _lock(out):
        save_ensemble(ensemble, out / MODEL_FILE)
        report.to_csv(out / R2_REPORT_FILE)
    for w in ensemble.warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(report.rows[["target", "r2", "reliable"]].to_string(index=False))
    click.echo(f"wrote {out / MODEL_FILE} and {out / R2_REPORT_FILE}")


@main.command()
@click.pass_obj
def evaluate(obj):
    """Re-evaluate a trained model on the held-out split."""
    cfg = obj["cfg"]
    out = _out_dir(cfg)
    model_path = out / MODEL_FILE
    if not model_path.exists():
        _fail(f"{model_path} not found; run 'train' first")
    df = _load_dataset(out)
    ensemble = load_ensemble(model_path)
    try:
        train_df, test_df = split_dataset(df, cfg.surrogate.test_fraction, cfg.surrogate.seed)
    except InsufficientData as exc:
        _fail(str(exc))
    report = evaluate_ensemble(ensemble, test_df, train_size=len(train_df))
    with _lock(out):
        report.to_csv(out / R2_REPORT_FILE)
    click.echo(report.rows[["target", "r2", "reliable"]].to_string(index=False))
    click.echo(f"wrote {out / R2_REPORT_FILE}")


def _results_frame(results, query, baseline_pred) -> pd.DataFrame:
    rows = []
    for i, r in enumerate(results):
        row = {"result_id": i}
        row.update({f: getattr(r.design, f) for f in ALL_FIELDS})
        for name in TARGET_NAMES:
            row[f"pred_{name}"] = getattr(r.predicted, name)
        if r.simulated is not None:
            for name in TARGET_NAMES:
                v = getattr(r.simulated, name)
                row[f"sim_{name}"] = math.nan if v is None else v
            row["sim_tip_status"] = r.simulated.tip_status
        else:
            for name in TARGET_NAMES:
                row[f"sim_{name}"] = math.nan
            row["sim_tip_status"] = ""
        row["gower_to_query"] = r.objectives[0]
        row["changed_feature_ratio"] = r.objectives[1]
        row["dataset_proximity"] = r.objectives[2]
        row["constraints_satisfied"] = all(r.constraint_satisfied.values())
        row["simulated_violates_targets"] = r.simulated_violates_targets
        row["mass_prediction_rel_error"] = (
            math.nan if r.mass_prediction_rel_error is None else r.mass_prediction_rel_error
        )
        row["simulation_error"] = r.simulation_error or ""
        rows.append(row)
    return pd.DataFrame(rows)


def _baseline_report(results, baseline_pred, baseline_sim) -> pd.DataFrame:
    rows = []
    for name in TARGET_NAMES:
        row = {
            "target": name,
            "baseline_predicted": baseline_pred.get(name, math.nan),
            "baseline_simulated": baseline_sim.get(name, math.nan),
        }
        for i, r in enumerate(results):
            row[f"result_{i}_predicted"] = getattr(r.predicted, name)
        rows.append(row)
    return pd.DataFrame(rows)


@main.command()
@click.option("--allow-unreliable", is_flag=True,
              help="Permit constraints on surrogate targets flagged unreliable.")
@click.pass_obj
def optimize(obj, allow_unreliable):
    """Run the counterfactual search and validate results by simulation."""
    cfg = obj["cfg"]
    out = _out_dir(cfg)
    model_path = out / MODEL_FILE
    if not model_path.exists():
        _fail(f"{model_path} not found; run 'train' first")
    ensemble = load_ensemble(model_path)
    df = _load_dataset(out)
    ok = df[df["sim_status"] == ds.SIM_OK]
    designs = ds.designs_from_frame(ok.reset_index(drop=True))
    index = DatasetIndex.from_designs(designs, cfg.ranges)

    opt = cfg.optimize
    query_design = cfgmod.query_design_from(opt)
    baseline_rec = ensemble.predict(query_design)
    baseline_pred = {name: getattr(baseline_rec, name) for name in TARGET_NAMES}
    targets = cfgmod.resolve_targets(opt, baseline_pred)

    reliable = None
    r2_path = out / R2_REPORT_FILE
    if r2_path.exists():
        rep = pd.read_csv(r2_path)
        reliable = set(rep.loc[rep["reliable"], "target"])
    try:
        validate_targets(targets, reliable, allow_unreliable or opt.get("allow_unreliable", False))
    except UnreliableTarget as exc:
        _fail(str(exc))

    query = CounterfactualQuery(
        query_design=query_design,
        targets=targets,
        frozen_parameters=frozenset(opt.get("frozen") or []),
        exploration_ranges=cfgmod.exploration_ranges_from(opt, cfg.ranges),
    )
    try:
        evolution = evolve(query, ensemble, index, cfg.ga, cfg.limits)
    except NoCounterfactualsFound as exc:
        _fail(f"{exc} (unmet constraints: {exc.unmet})")
    results = final_sample(evolution, query, cfg.ranges, cfg.ga)
    results = validate_results(
        results, query,
        loads=cfg.loads, cap_in=cfg.mesh_cap_in, limits=cfg.limits,
        tip_force_lbf=cfg.tip_force_lbf,
    )

    # baseline comparison row: simulate the query design itself
    from .fea import simulate as fea_simulate

    baseline_sim_rec = fea_simulate(query_design, cfg.loads, max_element_length_in=cfg.mesh_cap_in,
                                    limits=cfg.limits)
    stab = tipping_angle_imperial(
        baseline_sim_rec.mass_lbs, query_design.base_width, query_design.handle_distance,
        query_design.overall_height, cfg.tip_force_lbf,
    )
    baseline_sim_rec = baseline_sim_rec.with_stability(stab.theta_deg, stab.status)
    baseline_sim = {
        name: (math.nan if getattr(baseline_sim_rec, name) is None else getattr(baseline_sim_rec, name))
        for name in TARGET_NAMES
    }

    with _lock(out):
        ds.write_csv(_results_frame(results, query, baseline_pred), out / COUNTERFACTUALS_FILE)
        ds.write_csv(_baseline_report(results, baseline_pred, baseline_sim), out / BASELINE_REPORT_FILE)
    click.echo(
        f"counterfactuals={len(results)} archive={len(evolution.results)} "
        f"predictor_queries={evolution.n_evaluations}"
    )
    click.echo(f"baseline mass {baseline_sim['mass_lbs']:.1f} lbs; wrote {out / COUNTERFACTUALS_FILE}")


@main.command()
@click.pass_obj
def validate(obj):
    """Re-simulate the designs in counterfactuals.csv and refresh sim_ columns."""
    cfg = obj["cfg"]
    out = _out_dir(cfg)
    cf_path = out / COUNTERFACTUALS_FILE
    if not cf_path.exists():
        _fail(f"{cf_path} not found; run 'optimize' first")
    model_path = out / MODEL_FILE
    if not model_path.exists():
        _fail(f"{model_path} not found; run 'train' first")
    ensemble = load_ensemble(model_path)
    cf = ds.read_csv(cf_path)

    from .optimizer import CounterfactualResult

    opt = cfg.optimize
    query_design = cfgmod.query_design_from(opt)
    baseline_rec = ensemble.predict(query_design)
    baseline_pred = {name: getattr(baseline_rec, name) for name in TARGET_NAMES}
    targets = cfgmod.resolve_targets(opt, baseline_pred)
    query = CounterfactualQuery(query_design=query_design, targets=targets)

    designs = ds.designs_from_frame(cf)
    results = []
    for i, d in enumerate(designs):
        predicted = ensemble.predict(d)
        results.append(
            CounterfactualResult(
                design=d,
                predicted=predicted,
                objectives=(
                    float(cf["gower_to_query"].iat[i]),
                    float(cf["changed_feature_ratio"].iat[i]),
                    float(cf["dataset_proximity"].iat[i]),
                ),
                constraint_satisfied={},
            )
        )
    results = validate_results(
        results, query,
        loads=cfg.loads, cap_in=cfg.mesh_cap_in, limits=cfg.limits,
        tip_force_lbf=cfg.tip_force_lbf,
    )
    with _lock(out):
        ds.write_csv(_results_frame(results, query, baseline_pred), cf_path)
    flagged = sum(r.simulated_violates_targets for r in results)
    click.echo(f"validated={len(results)} flagged={flagged}")


@main.command(name="plotdata")
@click.argument("targets", nargs=-1)
@click.pass_obj
def plotdata_cmd(obj, targets):
    """Export scatter-matrix and KDE-curve CSVs for the performance space."""
    cfg = obj["cfg"]
    out = _out_dir(cfg)
    df = _load_dataset(out)
    selected = tuple(targets) if targets else plotdata.DEFAULT_PLOT_TARGETS
    try:
        scatter = plotdata.scatter_frame(df, selected)
        kde = plotdata.kde_frame(df, selected)
    except KeyError as exc:
        _fail(str(exc))

    from .fea import simulate as fea_simulate

    query_design = cfgmod.query_design_from(cfg.optimize)
    rec = fea_simulate(query_design, cfg.loads, max_element_length_in=cfg.mesh_cap_in,
                       limits=cfg.limits)
    stab = tipping_angle_imperial(
        rec.mass_lbs, query_design.base_width, query_design.handle_distance,
        query_design.overall_height, cfg.tip_force_lbf,
    )
    rec = rec.with_stability(stab.theta_deg, stab.status)
    values = {name: getattr(rec, name) for name in TARGET_NAMES}
    overlay = plotdata.baseline_overlay(values, selected)
    with _lock(out):
        ds.write_csv(scatter, out / SCATTER_FILE)
        ds.write_csv(kde, out / KDE_FILE)
        ds.write_csv(overlay, out / OVERLAY_FILE)
    click.echo(f"wrote {out / SCATTER_FILE}, {out / KDE_FILE}, {out / OVERLAY_FILE}")


@main.command()
@click.option("-m", "--mass", type=float, required=True, help="Mass, lbs.")
@click.option("--l1", type=float, required=True, help="Lateral leg spacing, in.")
@click.option("--l2", type=float, required=True, help="Handle spacing, in.")
@click.option("--height", type=float, required=True, help="Handle height, in.")
@click.option("-f", "--force", type=float, default=400.0, help="Tipping force, lbf.")
def stability(mass, l1, l2, height, force):
    """Evaluate the tipping angle for given mass and dimensions."""
    try:
        res = tipping_angle_imperial(mass, l1, l2, height, force)
    except WalkerForgeError as exc:
        _fail(str(exc))
    if res.status == "no_tip":
        click.echo("status=no_tip (no angle tips the walker at this force)")
    else:
        click.echo(
            f"status=tips phi_deg={math.degrees(res.phi):.6f} theta_deg={res.theta_deg:.6f}"
        )


if __name__ == "__main__":
    main()
