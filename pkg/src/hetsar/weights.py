"""Spatial weight matrices: builders, row standardization, spectral bounds.

All builders produce a row-standardized :class:`WeightMatrix` whose raw
(pre-standardization) matrix is symmetric, so the standardized matrix is
similar to a symmetric one and has a real spectrum.  The reciprocal extreme
eigenvalues bound the admissible autoregressive parameter.
"""

from __future__ import annotations

import io
import os
from functools import cached_property

import numpy as np
from scipy import sparse

EIGEN_MARGIN = 1e-6
_ROW_SUM_TOL = 1e-12


class WeightMatrix:
    """Immutable n-by-n spatial weight matrix.

    Parameters
    ----------
    entries : scipy sparse matrix or ndarray
        Nonnegative weights with a zero diagonal.
    standardized : bool
        Whether rows have been scaled to sum to one.
    symmetric_base : bool
        Whether the pre-standardization matrix was symmetric.
    base_row_sums : ndarray, optional
        Row sums of the raw matrix; retained after standardization so the
        spectrum can be computed from the symmetric similarity transform.

    Notes
    -----
    Instances are immutable by convention and safe to share across threads.
    Use the module-level builders rather than the constructor.
    """

    def __init__(self, entries, standardized=False, symmetric_base=False,
                 base_row_sums=None):
        entries = sparse.csr_matrix(entries, dtype=float)
        if entries.shape[0] != entries.shape[1]:
            raise ValueError(f"weight matrix must be square, got {entries.shape}")
        if entries.diagonal().any():
            raise ValueError("weight matrix must have a zero diagonal")
        if entries.nnz and entries.data.min() < 0:
            raise ValueError("weight matrix entries must be nonnegative")
        if standardized:
            row_sums = np.asarray(entries.sum(axis=1)).ravel()
            nonzero = row_sums > 0
            if np.any(np.abs(row_sums[nonzero] - 1.0) > _ROW_SUM_TOL):
                raise ValueError("standardized rows must sum to 1 within 1e-12")
        self.entries = entries
        self.standardized = bool(standardized)
        self.symmetric_base = bool(symmetric_base)
        self.base_row_sums = None if base_row_sums is None else np.asarray(
            base_row_sums, dtype=float)

    @property
    def n(self):
        return self.entries.shape[0]

    def lag(self, values):
        """Spatial lag W @ values (values may be a vector or a matrix)."""
        return self.entries @ np.asarray(values, dtype=float)

    def to_dense(self):
        return self.entries.toarray()

    @cached_property
    def dense(self):
        """Dense copy, cached (used by log-determinant and impact routines)."""
        return self.to_dense()

    @cached_property
    def eigenvalues(self):
        """Real eigenvalues of the standardized matrix, or None.

        Available only when the matrix is row-standardized from a symmetric
        base: then W = D^-1 S and D^1/2 W D^-1/2 is symmetric with the same
        spectrum.
        """
        if not (self.standardized and self.symmetric_base):
            return None
        if self.base_row_sums is None:
            return None
        d = self.base_row_sums
        scale = np.sqrt(np.outer(d, 1.0 / d))
        sym = self.dense * scale
        return np.linalg.eigvalsh(sym)


def row_standardize(W):
    """Scale each row of ``W`` to sum to one.

    Parameters
    ----------
    W : WeightMatrix or array-like
        Nonnegative matrix with zero diagonal.

    Returns
    -------
    WeightMatrix
        Row-stochastic matrix; ``symmetric_base`` records whether the input
        was symmetric.  Idempotent on already-standardized input.

    Raises
    ------
    ValueError
        If any row sums to zero (an isolated unit), naming its index.
    """
    if isinstance(W, WeightMatrix):
        if W.standardized:
            return W
        raw = W.entries
    elif sparse.issparse(W):
        raw = sparse.csr_matrix(W, dtype=float)
    else:
        raw = sparse.csr_matrix(np.asarray(W, dtype=float))
    if raw.diagonal().any():
        raise ValueError("weight matrix must have a zero diagonal")
    if raw.nnz and raw.data.min() < 0:
        raise ValueError("weight matrix entries must be nonnegative")
    row_sums = np.asarray(raw.sum(axis=1)).ravel()
    isolated = np.flatnonzero(row_sums == 0)
    if isolated.size:
        raise ValueError(
            f"isolated unit(s) with no neighbors at index {isolated.tolist()}")
    symmetric = _is_symmetric(raw)
    scaled = sparse.diags(1.0 / row_sums) @ raw
    return WeightMatrix(scaled, standardized=True, symmetric_base=symmetric,
                        base_row_sums=row_sums)


def _is_symmetric(mat, tol=1e-12):
    diff = mat - mat.T
    return diff.nnz == 0 or np.abs(diff.data).max() <= tol


def build_rook_grid(rows, cols):
    """Row-standardized rook (edge-sharing) contiguity on a regular grid.

    Cells are indexed row-major; cell (r, c) neighbors the cells directly
    north, south, east and west of it.

    Parameters
    ----------
    rows, cols : int
        Grid dimensions; ``rows * cols`` must be at least 2.
    """
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("grid must contain at least 2 cells")
    n = rows * cols
    ii, jj = [], []
    for r in range(rows):
        for c in range(cols):
            idx = r * cols + c
            if r + 1 < rows:
                ii.extend((idx, idx + cols))
                jj.extend((idx + cols, idx))
            if c + 1 < cols:
                ii.extend((idx, idx + 1))
                jj.extend((idx + 1, idx))
    raw = sparse.csr_matrix((np.ones(len(ii)), (ii, jj)), shape=(n, n))
    return row_standardize(raw)


def build_inverse_distance_squared(points):
    """Row-standardized inverse squared Euclidean distance weights.

    Every pair of distinct points is connected with raw weight 1/d^2, so the
    resulting matrix is fully dense.  No cutoff radius is applied.

    Parameters
    ----------
    points : array-like of shape (n, 2)
        Distinct planar coordinates, n >= 2.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if pts.shape[0] < 2:
        raise ValueError("need at least 2 points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    off_diag = ~np.eye(len(pts), dtype=bool)
    if np.any(d2[off_diag] == 0.0):
        dup = np.argwhere((d2 == 0.0) & off_diag)[0]
        raise ValueError(f"duplicate points at indices {dup[0]} and {dup[1]}")
    raw = np.zeros_like(d2)
    raw[off_diag] = 1.0 / d2[off_diag]
    return row_standardize(raw)


def load_adjacency(source):
    """Build weights from an adjacency-list document.

    The format is line oriented: the first non-comment line is ``n=<count>``,
    each following line is ``<i> <j> [weight]`` with 0-based indices.  Blank
    lines and lines starting with ``#`` are ignored.  Edges are undirected;
    the raw matrix is symmetric (default weight 1) and row-standardized.

    Parameters
    ----------
    source : path or text stream
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    elif isinstance(source, io.TextIOBase):
        lines = source.readlines()
    else:
        raise TypeError("source must be a path or a text stream")
    lines = [ln.strip() for ln in lines]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].replace(" ", "").startswith("n="):
        raise ValueError("adjacency document must start with 'n=<count>'")
    n = int(lines[0].split("=", 1)[1])
    if n < 2:
        raise ValueError("adjacency document needs n >= 2")
    raw = sparse.lil_matrix((n, n))
    seen = set()
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"malformed edge on line {line_no}: {line!r}")
        i, j = int(parts[0]), int(parts[1])
        w = float(parts[2]) if len(parts) == 3 else 1.0
        if i == j:
            raise ValueError(f"self-loop edge ({i}, {j}) on line {line_no}")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge index out of range on line {line_no}: {line!r}")
        if w <= 0:
            raise ValueError(f"edge weight must be positive on line {line_no}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"duplicate edge ({i}, {j}) on line {line_no}")
        seen.add(key)
        raw[i, j] = w
        raw[j, i] = w
    return row_standardize(raw.tocsr())


def eigen_bounds(W):
    """Admissible interval for the autoregressive parameter.

    For a standardized matrix with a symmetric base this is the reciprocal
    eigenvalue interval (1/lambda_min, 1/lambda_max) shrunk by a small margin
    so the interval is searchable; otherwise it falls back to the open unit
    interval.

    Parameters
    ----------
    W : WeightMatrix
        Must be row-standardized.

    Returns
    -------
    (float, float)
        Lower and upper bounds, always containing 0.
    """
    if not W.standardized:
        raise ValueError("eigen bounds require a row-standardized matrix")
    lam = W.eigenvalues
    if lam is None:
        return (-1.0 + EIGEN_MARGIN, 1.0 - EIGEN_MARGIN)
    lam_min, lam_max = lam[0], lam[-1]
    if lam_min >= -np.finfo(float).eps or lam_max <= np.finfo(float).eps:
        return (-1.0 + EIGEN_MARGIN, 1.0 - EIGEN_MARGIN)
    return (1.0 / lam_min + EIGEN_MARGIN, 1.0 / lam_max - EIGEN_MARGIN)


def load_weight_spec(doc, base_dir=None):
    """Build a WeightMatrix from a weight-spec document.

    Supported kinds::

        {"kind": "grid_rook", "rows": R, "cols": C}
        {"kind": "inverse_distance_squared", "points": [[x, y], ...]}
        {"kind": "inverse_distance_squared", "coordinates_path": "pts.csv"}
        {"kind": "adjacency", "path": "adj.txt"}

    Relative paths are resolved against ``base_dir``.
    """
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError("weight spec must be a mapping with a 'kind' field")
    kind = doc["kind"]
    if kind == "grid_rook":
        return build_rook_grid(doc["rows"], doc["cols"])
    if kind == "inverse_distance_squared":
        if "points" in doc:
            return build_inverse_distance_squared(doc["points"])
        if "coordinates_path" in doc:
            path = _resolve(doc["coordinates_path"], base_dir)
            pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            return build_inverse_distance_squared(pts[:, :2])
        raise ValueError("inverse_distance_squared needs 'points' or "
                         "'coordinates_path'")
    if kind == "adjacency":
        return load_adjacency(_resolve(doc["path"], base_dir))
    raise ValueError(f"unknown weight spec kind: {kind!r}")


def _resolve(path, base_dir):
    if base_dir is not None and not os.path.isabs(path):
        return os.path.join(base_dir, path)
    return path
