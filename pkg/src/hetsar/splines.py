"""Penalized B-spline building blocks for the smooth model terms.

Bases use equidistant knots over the observed range of the covariate with
the boundary knots repeated so evaluation is exact on the closed interval.
Smoothness is controlled by a discrete difference penalty on adjacent
coefficients; the basis columns are mean-centered so each smooth term
carries no intercept of its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline


def bspline_knots(lo, hi, num_basis, degree):
    """Equidistant knot vector spanning [lo, hi], extended by ``degree``
    knots of the same spacing on each side.

    The uniform extension is what ties the difference penalty to polynomial
    shrinkage: with an order-2 penalty the infinite-smoothing limit is
    exactly affine on [lo, hi].
    """
    if num_basis <= degree:
        raise ValueError("num_basis must exceed the spline degree")
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError("covariate range must be finite with hi > lo")
    inner = np.linspace(lo, hi, num_basis - degree + 1)
    step = (hi - lo) / (num_basis - degree)
    left = lo - step * np.arange(degree, 0, -1)
    right = hi + step * np.arange(1, degree + 1)
    return np.concatenate([left, inner, right])


def bspline_basis(x, num_basis, degree=3, knots=None):
    """Evaluate a B-spline basis at ``x``.

    Parameters
    ----------
    x : array-like
        Finite evaluation points inside the knot span.
    num_basis : int
        Number of basis functions; must exceed ``degree``.
    degree : int
        Polynomial degree of each piece.
    knots : ndarray, optional
        Precomputed knot vector (from :func:`bspline_knots`); by default the
        knots span ``[min(x), max(x)]``.

    Returns
    -------
    ndarray of shape (len(x), num_basis)
        Rows sum to one (partition of unity), entries lie in [0, 1].
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("x must be a nonempty 1-d array")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if knots is None:
        lo, hi = float(x.min()), float(x.max())
        if hi == lo:
            raise ValueError("x is constant; cannot place knots")
        knots = bspline_knots(lo, hi, num_basis, degree)
    else:
        lo, hi = knots[degree], knots[len(knots) - degree - 1]
        if x.min() < lo - 1e-12 or x.max() > hi + 1e-12:
            raise ValueError("evaluation points outside the knot span; "
                             "extrapolation is not supported")
        x = np.clip(x, lo, hi)
    design = BSpline.design_matrix(x, knots, degree, extrapolate=False)
    return design.toarray()


def difference_penalty(num_basis, order=2):
    """Difference penalty matrix D'D of the given order.

    The result is symmetric positive semidefinite with rank
    ``num_basis - order``; its null space holds polynomial coefficient
    sequences of degree below ``order``.
    """
    if order < 1:
        raise ValueError("penalty order must be at least 1")
    if order >= num_basis:
        raise ValueError("penalty order must be below num_basis")
    D = np.diff(np.eye(num_basis), n=order, axis=0)
    return D.T @ D


def center_basis(B):
    """Subtract column means from a basis matrix.

    Returns
    -------
    (centered, offsets)
        ``centered + offsets`` reconstructs the input exactly.
    """
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        raise ValueError("basis matrix is empty")
    offsets = B.mean(axis=0)
    return B - offsets, offsets


@dataclass
class SmoothTermBasis:
    """A fitted-ready smooth term: centered basis plus its penalty.

    Fields mirror what prediction needs: the knot vector and degree rebuild
    the basis on new points, and ``offsets`` reapplies the training centering
    so coefficients keep their meaning outside the training sample.
    """

    variable: str
    knots: np.ndarray
    degree: int
    basis: np.ndarray          # centered, shape (n, k)
    offsets: np.ndarray        # column means removed, shape (k,)
    penalty: np.ndarray        # G = D'D, shape (k, k)
    penalty_order: int
    psi: float = 1.0

    @property
    def num_basis(self):
        return self.basis.shape[1]

    @property
    def span(self):
        d = self.degree
        return float(self.knots[d]), float(self.knots[len(self.knots) - d - 1])

    def basis_at(self, grid, centered=True):
        """Basis evaluated on new points, optionally training-centered."""
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        lo, hi = self.span
        if grid.min() < lo - 1e-12 or grid.max() > hi + 1e-12:
            raise ValueError(
                f"grid outside the knot span [{lo:g}, {hi:g}] of {self.variable!r}")
        B = bspline_basis(np.clip(grid, lo, hi), self.num_basis, self.degree,
                          knots=self.knots)
        return B - self.offsets if centered else B


def build_smooth_term(x, variable, num_basis=20, degree=3, penalty_order=2):
    """Construct a :class:`SmoothTermBasis` from training values of ``x``."""
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise ValueError(f"variable {variable!r} is constant; cannot smooth")
    knots = bspline_knots(lo, hi, num_basis, degree)
    B = bspline_basis(x, num_basis, degree, knots=knots)
    centered, offsets = center_basis(B)
    G = difference_penalty(num_basis, penalty_order)
    return SmoothTermBasis(variable=variable, knots=knots, degree=degree,
                           basis=centered, offsets=offsets, penalty=G,
                           penalty_order=penalty_order)


def evaluate_smooth(term, coef, grid):
    """Evaluate a fitted smooth on ``grid`` with block coefficients ``coef``.

    Linear in ``coef`` and consistent with the training parameterization:
    on the training points it reproduces ``term.basis @ coef`` exactly.
    """
    coef = np.asarray(coef, dtype=float)
    if coef.shape != (term.num_basis,):
        raise ValueError(f"coef must have length {term.num_basis}")
    return term.basis_at(grid, centered=True) @ coef
