"""Serialization of fit results to the versioned fit-document format.

Machine outputs are JSON with full-precision floats (Python's shortest
round-trip repr); readers reject any major format version they do not know.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from scipy import stats

from . import __version__
from .inference import smooth_ci

FORMAT_VERSION = "1.0"
CURVE_POINTS = 100


def sha256_of(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _coefficient_table(fit):
    rows = []
    fisher = fit.fisher
    for submodel, coefs, group in (("mean", fit.beta, "beta"),
                                   ("scale", fit.alpha, "alpha")):
        sub = fit.design.submodel(submodel)
        se = fisher.se(group)
        for i in range(sub.n_unpenalized):
            z = float(coefs[i] / se[i])
            rows.append({"submodel": submodel, "name": sub.columns[i],
                         "estimate": float(coefs[i]), "se": float(se[i]),
                         "z": z, "p": float(2.0 * stats.norm.sf(abs(z)))})
    return rows


def _curve_tables(fit, level=0.95):
    curves = {}
    for submodel in ("mean", "scale"):
        sub = fit.design.submodel(submodel)
        tables = {}
        for name, term in sub.smooths.items():
            lo, hi = term.span
            grid = np.linspace(lo, hi, CURVE_POINTS)
            band = smooth_ci(fit, name, grid, level=level, submodel=submodel)
            tables[name] = {"grid": band["grid"].tolist(),
                            "estimate": band["estimate"].tolist(),
                            "lower": band["lower"].tolist(),
                            "upper": band["upper"].tolist(),
                            "level": level}
        curves[submodel] = tables
    return curves


def _submodel_section(sub, coefs, psi):
    return {"columns": list(sub.columns),
            "n_unpenalized": sub.n_unpenalized,
            "terms": {name: [s.start, s.stop]
                      for name, s in sub.term_cols.items()},
            "smooth_terms": sorted(sub.smooths),
            "psi": psi,
            "coefficients": [float(v) for v in coefs]}


def fit_document(fit, provenance):
    """Assemble the complete fit document as a plain dict."""
    from .inference import fisher_information
    if fit.fisher is None:
        fit.fisher = fisher_information(fit)
    rho_idx = fit.design.mean.p
    rho_se = float(np.sqrt(fit.fisher.covariance[rho_idx, rho_idx]))
    return {
        "format_version": FORMAT_VERSION,
        "tool": {"name": "hetsar", "version": __version__},
        "provenance": provenance,
        "model_spec": fit.spec.to_dict(),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "clamp_events": int(fit.clamp_events),
        "summary": {
            "n": int(fit.n),
            "rho": float(fit.rho),
            "rho_se": rho_se,
            "rho_fixed": bool(fit.rho_fixed),
            "penalized_loglik": float(fit.penalized_loglik),
            "global_deviance": float(fit.global_deviance),
            "df_mean": float(fit.edf_mean),
            "df_scale": float(fit.edf_scale),
            "df_err": float(fit.edf_err),
            "mse": float(fit.mse),
        },
        "coefficients": _coefficient_table(fit),
        "mean": _submodel_section(fit.design.mean, fit.beta, fit.psi_mean),
        "scale": _submodel_section(fit.design.scale, fit.alpha, fit.psi_scale),
        "smooth_curves": _curve_tables(fit),
        "sigma": [float(v) for v in fit.sigma],
        "fitted_mean": [float(v) for v in fit.fitted_mean],
        "residuals": [float(v) for v in fit.residuals],
    }


def dump_json(doc, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True, indent=1)
        handle.write("\n")


def load_document(path):
    """Read a JSON document, rejecting unknown major format versions."""
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    version = str(doc.get("format_version", ""))
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise ValueError(f"unsupported document format version {version!r}")
    return doc
