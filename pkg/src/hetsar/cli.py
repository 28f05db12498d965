"""Command-line interface: fit, simulate, impacts, moran.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 fit completed
without convergence (the document is still written).
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np
import pandas as pd

from . import __version__
from .design import ModelSpec
from .documents import dump_json, fit_document, load_document, sha256_of
from .effects import impact_summary, morans_i
from .estimator import ConvergenceOptions, fit_model
from .exceptions import NumericalError
from .sim import Scenario, build_layout, hamsar_spec, run_study
from .weights import load_weight_spec

EXIT_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_NOT_CONVERGED = 3


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _read_table(path):
    frame = pd.read_csv(path)
    if frame.empty:
        raise ValueError(f"{path}: no data rows")
    missing = frame.isna().any(axis=1)
    if missing.any():
        rows = np.flatnonzero(missing.to_numpy())[:20].tolist()
        raise ValueError(f"{path}: missing values in rows {rows}")
    return frame


def _read_weights(path):
    doc = _read_json(path)
    return load_weight_spec(doc, base_dir=os.path.dirname(os.path.abspath(path)))


@click.group()
@click.version_option(version=__version__)
def main():
    """Semiparametric SAR models with covariate-dependent variance."""


@main.command("fit")
@click.option("--data", "data_path", required=True, help="CSV with header row.")
@click.option("--spec", "spec_path", required=True, help="Model-spec JSON.")
@click.option("--weights", "weights_path", required=True, help="Weight-spec JSON.")
@click.option("--out", "out_path", required=True, help="Fit document output path.")
@click.option("--rho-tol", default=1e-6, show_default=True, type=float)
@click.option("--max-outer", default=50, show_default=True, type=int)
def cmd_fit(data_path, spec_path, weights_path, out_path, rho_tol, max_outer):
    """Fit the model to a CSV and write the fit document."""
    try:
        frame = _read_table(data_path)
        spec = ModelSpec.from_dict(_read_json(spec_path))
        weights = _read_weights(weights_path)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        _fail(EXIT_INPUT, exc)
    options = ConvergenceOptions(rho_tol=rho_tol, max_outer=max_outer)
    try:
        result = fit_model(spec, frame, weights, options)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_NUMERICAL, exc)
    except (ValueError, KeyError) as exc:
        _fail(EXIT_INPUT, exc)
    provenance = {
        "data_path": os.path.basename(data_path),
        "data_sha256": sha256_of(data_path),
        "weights_sha256": sha256_of(weights_path),
        "spec_sha256": sha256_of(spec_path),
        "options": {"rho_tol": rho_tol, "max_outer": max_outer},
    }
    try:
        dump_json(fit_document(result, provenance), out_path)
    except NumericalError as exc:
        _fail(EXIT_NUMERICAL, exc)
    if not result.converged:
        click.echo("fit did not converge; document written", err=True)
        sys.exit(EXIT_NOT_CONVERGED)
    click.echo(f"converged in {result.iterations} outer iteration(s); "
               f"rho = {result.rho:.4g}")


@main.command("simulate")
@click.option("--scenario", "scenario_path", required=True)
@click.option("--out", "out_path", required=True)
@click.option("--emit-data", "emit_dir", default=None,
              help="Directory for per-replicate CSVs and input documents.")
@click.option("--threads", default=1, show_default=True, type=int)
def cmd_simulate(scenario_path, out_path, emit_dir, threads):
    """Run a Monte-Carlo study and write the simulation report."""
    try:
        scenario = Scenario.from_dict(_read_json(scenario_path))
        report = run_study(scenario, n_jobs=threads)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        _fail(EXIT_INPUT, exc)
    except RuntimeError as exc:
        _fail(EXIT_NUMERICAL, exc)
    with open(out_path, "w", encoding="utf-8") as handle:
        handle.write(report.to_json())
    if emit_dir is not None:
        _emit_data(scenario, emit_dir)
    click.echo(f"{scenario.replicates} replicate(s) written to {out_path}")


def _emit_data(scenario, emit_dir):
    from .sim import simulate_dataset
    os.makedirs(emit_dir, exist_ok=True)
    weights, resolved_layout = build_layout(scenario)
    layout_doc = dict(resolved_layout)
    if layout_doc["kind"] == "points_invdist2":
        layout_doc = {"kind": "inverse_distance_squared",
                      "points": layout_doc["points"]}
    dump_json(layout_doc, os.path.join(emit_dir, "weights.json"))
    dump_json(hamsar_spec(scenario.num_basis).to_dict(),
              os.path.join(emit_dir, "model_h_am_sar.json"))
    for rep in range(scenario.replicates):
        frame, _ = simulate_dataset(scenario, rep, weights=weights)
        frame.to_csv(os.path.join(emit_dir, f"rep_{rep:04d}.csv"), index=False)


@main.command("impacts")
@click.option("--fit", "fit_path", required=True)
@click.option("--weights", "weights_path", required=True)
@click.option("--variable", required=True)
@click.option("--out", "out_path", default=None, help="Optional JSON output.")
def cmd_impacts(fit_path, weights_path, variable, out_path):
    """Direct, indirect and total effects of a linear mean term."""
    try:
        doc = load_document(fit_path)
        weights = _read_weights(weights_path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _fail(EXIT_INPUT, exc)
    mean = doc["mean"]
    if variable in mean["smooth_terms"]:
        _fail(EXIT_NUMERICAL, f"{variable!r} is a smooth term; impacts are "
              "only defined for linear mean terms")
    span = mean["terms"].get(variable)
    if span is None or span[0] >= mean["n_unpenalized"]:
        _fail(EXIT_NUMERICAL, f"{variable!r} is not an unpenalized linear "
              "term of the mean submodel")
    try:
        summary = impact_summary(doc["summary"]["rho"],
                                 mean["coefficients"][span[0]],
                                 weights, variable)
    except (ValueError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_NUMERICAL, exc)
    click.echo(f"{'variable':<14}{'estimate':>12}{'direct':>12}"
               f"{'indirect':>12}{'total':>12}")
    click.echo(f"{summary.variable:<14}{summary.coefficient:>12.4g}"
               f"{summary.direct:>12.4g}{summary.indirect:>12.4g}"
               f"{summary.total:>12.4g}")
    if out_path is not None:
        dump_json({"format_version": "1.0", "variable": summary.variable,
                   "coefficient": summary.coefficient,
                   "direct": summary.direct, "indirect": summary.indirect,
                   "total": summary.total}, out_path)


@main.command("moran")
@click.option("--data", "data_path", required=True)
@click.option("--column", required=True)
@click.option("--weights", "weights_path", required=True)
@click.option("--permutations", default=999, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--scatter", "scatter_path", default=None,
              help="CSV output of (value, lag) pairs for the Moran plot.")
def cmd_moran(data_path, column, weights_path, permutations, seed,
              scatter_path):
    """Moran's I permutation test of one data column."""
    try:
        frame = _read_table(data_path)
        weights = _read_weights(weights_path)
        if column not in frame.columns:
            raise KeyError(f"column {column!r} not found in {data_path}")
        values = pd.to_numeric(frame[column], errors="raise").to_numpy(float)
        result = morans_i(values, weights, permutations=permutations,
                          seed=seed)
    except (OSError, ValueError, KeyError, TypeError,
            json.JSONDecodeError) as exc:
        _fail(EXIT_INPUT, exc)
    click.echo(f"Moran's I = {result.statistic:.4g} "
               f"(expected {result.expected:.4g} under no dependence)")
    click.echo(f"permutation p-value = {result.p_value:.4g} "
               f"({result.permutations} permutations, seed {seed})")
    if scatter_path is not None:
        pd.DataFrame(result.scatter, columns=["value", "lag"]).to_csv(
            scatter_path, index=False)


if __name__ == "__main__":
    main()
