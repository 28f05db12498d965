"""Model specification and design-matrix assembly for both submodels.

The mean and scale submodels each get a design with an intercept, the
linear columns, and one mean-centered B-spline block per smooth term.
Each smooth block registers its difference penalty; the centered block has
an exact null direction (the constant coefficient vector maps to zero data
and zero penalty), so solvers complete the normal matrix with a rank-one
term that pins the block's coefficient sum to zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .splines import SmoothTermBasis, build_smooth_term

IDENTIFIABILITY_RIDGE = 1e-8


@dataclass(frozen=True)
class SmoothConfig:
    """Configuration of one smooth term."""

    var: str
    num_basis: int = 20
    degree: int = 3
    penalty_order: int = 2

    @classmethod
    def from_dict(cls, doc):
        allowed = {"var", "num_basis", "degree", "penalty_order"}
        extra = set(doc) - allowed
        if extra:
            raise ValueError(f"unknown smooth config fields: {sorted(extra)}")
        return cls(**doc)

    def to_dict(self):
        return {"var": self.var, "num_basis": self.num_basis,
                "degree": self.degree, "penalty_order": self.penalty_order}


@dataclass(frozen=True)
class ModelSpec:
    """Which columns enter the mean and scale predictors, and how.

    The scale predictor models the log standard deviation:
    sigma_i = exp(alpha' x_i).
    """

    response: str
    mean_linear: tuple = ()
    mean_smooth: tuple = ()
    scale_linear: tuple = ()
    scale_smooth: tuple = ()
    scale_parameterization: str = "log_sigma"

    def __post_init__(self):
        object.__setattr__(self, "mean_linear", tuple(self.mean_linear))
        object.__setattr__(self, "scale_linear", tuple(self.scale_linear))
        object.__setattr__(self, "mean_smooth", tuple(
            s if isinstance(s, SmoothConfig) else SmoothConfig.from_dict(s)
            for s in self.mean_smooth))
        object.__setattr__(self, "scale_smooth", tuple(
            s if isinstance(s, SmoothConfig) else SmoothConfig.from_dict(s)
            for s in self.scale_smooth))
        if self.scale_parameterization != "log_sigma":
            raise ValueError("only the log_sigma scale parameterization is "
                             "supported")
        for side, linear, smooth in (("mean", self.mean_linear, self.mean_smooth),
                                     ("scale", self.scale_linear, self.scale_smooth)):
            names = list(linear) + [s.var for s in smooth]
            if self.response in names:
                raise ValueError(f"response {self.response!r} cannot appear "
                                 f"among the {side} regressors")
            dupes = {v for v in names if names.count(v) > 1}
            if dupes:
                raise ValueError(f"duplicate {side} term(s): {sorted(dupes)}")

    @classmethod
    def from_dict(cls, doc):
        """Parse the model-spec document format.

        ``{"response": ..., "mean": {"linear": [...], "smooth": [...]},
        "scale": {"linear": [...], "smooth": [...]}}``
        """
        mean = doc.get("mean", {})
        scale = doc.get("scale", {})
        return cls(response=doc["response"],
                   mean_linear=mean.get("linear", ()),
                   mean_smooth=mean.get("smooth", ()),
                   scale_linear=scale.get("linear", ()),
                   scale_smooth=scale.get("smooth", ()))

    def to_dict(self):
        return {
            "response": self.response,
            "mean": {"linear": list(self.mean_linear),
                     "smooth": [s.to_dict() for s in self.mean_smooth]},
            "scale": {"linear": list(self.scale_linear),
                      "smooth": [s.to_dict() for s in self.scale_smooth]},
        }


@dataclass
class PenaltyBlock:
    """One smooth block's columns, penalty matrix and smoothing parameter."""

    term: str
    cols: slice
    matrix: np.ndarray
    psi: float = 1.0


@dataclass
class SubmodelDesign:
    """Assembled design of one submodel (mean or scale)."""

    X: np.ndarray
    columns: list
    term_cols: dict                 # term name -> column slice
    blocks: list                    # penalized smooth blocks, in order
    smooths: dict                   # term name -> SmoothTermBasis
    n_unpenalized: int              # intercept + linear columns

    @property
    def p(self):
        return self.X.shape[1]

    def penalty(self):
        """Sum of psi-weighted block penalties, placed at block columns."""
        P = np.zeros((self.p, self.p))
        for blk in self.blocks:
            P[blk.cols, blk.cols] += blk.psi * blk.matrix
        return P

    def completion(self):
        """Rank-one terms pinning each centered block's coefficient sum.

        The centered basis maps the all-ones coefficient vector to zero and
        the difference penalty annihilates it too, so without this term the
        penalized normal matrix is exactly singular.  The ridge is scaled far
        below the data curvature and leaves fitted values, scores and
        penalties untouched.
        """
        C = np.zeros((self.p, self.p))
        scale = max(np.trace(self.X.T @ self.X) / self.p, 1.0)
        for blk in self.blocks:
            k = blk.cols.stop - blk.cols.start
            C[blk.cols, blk.cols] += (IDENTIFIABILITY_RIDGE * scale / k) * np.ones((k, k))
        return C

    def penalty_quad(self, coef):
        """coef' P coef for the current smoothing parameters."""
        total = 0.0
        for blk in self.blocks:
            c = coef[blk.cols]
            total += blk.psi * float(c @ blk.matrix @ c)
        return total

    def penalty_grad(self, coef):
        g = np.zeros_like(coef)
        for blk in self.blocks:
            g[blk.cols] = blk.psi * (blk.matrix @ coef[blk.cols])
        return g

    def psi_values(self):
        return {blk.term: blk.psi for blk in self.blocks}


@dataclass
class DesignMatrices:
    """Mean and scale designs for one dataset under one ModelSpec."""

    mean: SubmodelDesign
    scale: SubmodelDesign

    @property
    def X_mean(self):
        return self.mean.X

    @property
    def X_scale(self):
        return self.scale.X

    def submodel(self, which):
        if which not in ("mean", "scale"):
            raise ValueError("submodel must be 'mean' or 'scale'")
        return self.mean if which == "mean" else self.scale


def _column(data, name):
    if name not in data.columns:
        raise KeyError(f"column {name!r} not found in the data")
    col = data[name]
    if not pd.api.types.is_numeric_dtype(col):
        raise ValueError(f"column {name!r} is not numeric")
    values = col.to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.flatnonzero(~np.isfinite(values))[:10].tolist()
        raise ValueError(f"column {name!r} has non-finite values at rows {bad}")
    return values


def _assemble_submodel(data, linear, smooth_configs, label):
    n = len(data)
    cols = [np.ones(n)]
    names = ["intercept"]
    term_cols = {"intercept": slice(0, 1)}
    for name in linear:
        term_cols[name] = slice(len(names), len(names) + 1)
        cols.append(_column(data, name))
        names.append(name)
    n_unpenalized = len(names)
    blocks, smooths = [], {}
    for cfg in smooth_configs:
        term = build_smooth_term(_column(data, cfg.var), cfg.var,
                                 num_basis=cfg.num_basis, degree=cfg.degree,
                                 penalty_order=cfg.penalty_order)
        start = len(names)
        rng = slice(start, start + cfg.num_basis)
        term_cols[cfg.var] = rng
        blocks.append(PenaltyBlock(term=cfg.var, cols=rng, matrix=term.penalty))
        smooths[cfg.var] = term
        for k in range(cfg.num_basis):
            names.append(f"s({cfg.var}).{k}")
        cols.append(term.basis)
    X = np.column_stack(cols)
    if X.shape[1] > n:
        warnings.warn(f"{label} design has more columns ({X.shape[1]}) than "
                      f"rows ({n}); the penalty must carry identification")
    return SubmodelDesign(X=X, columns=names, term_cols=term_cols,
                          blocks=blocks, smooths=smooths,
                          n_unpenalized=n_unpenalized)


def assemble_design(spec, data):
    """Build mean and scale designs from a columnar table.

    Parameters
    ----------
    spec : ModelSpec
    data : pandas.DataFrame or mapping of column name to array

    Returns
    -------
    DesignMatrices
    """
    if not isinstance(data, pd.DataFrame):
        data = pd.DataFrame(data)
    _column(data, spec.response)
    mean = _assemble_submodel(data, spec.mean_linear, spec.mean_smooth, "mean")
    scale = _assemble_submodel(data, spec.scale_linear, spec.scale_smooth, "scale")
    return DesignMatrices(mean=mean, scale=scale)
