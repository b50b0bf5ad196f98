"""Least-squares Monte Carlo conditional expectations on path ensembles.

Conditional expectations given the path history are approximated by ridge
least squares onto total-degree polynomials of the slice features (the
augmented Markov state, optionally extended with the current solver
iterates).  The martingale integrand z is recovered by the ratio estimator
    z_k = E[y_{k+1} dB_k | features] / E[dL_k | features],
set to zero wherever the clock is predicted frozen: z is only defined
dL-almost everywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisSpec",
    "CondExpEstimator",
    "SingularSliceError",
    "polynomial_features",
    "fit_condexp",
    "extract_z",
]


class SingularSliceError(RuntimeError):
    def __init__(self, slice_index):
        self.slice_index = slice_index
        super().__init__(
            f"regression design matrix is rank deficient at slice {slice_index}; "
            "add ridge regularization or drop collinear features"
        )


@dataclass(frozen=True)
class BasisSpec:
    """Total-degree polynomial basis with ridge regularization.

    ridge=None selects the default 1e-10 * n_paths (frozen-clock slices make
    features collinear, so some regularization is always advisable).
    """

    degree: int = 2
    include_r: bool = True
    ridge: float | None = None

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.ridge is not None and self.ridge < 0.0:
            raise ValueError("ridge must be >= 0")

    def effective_ridge(self, n_paths: int) -> float:
        return 1e-10 * n_paths if self.ridge is None else self.ridge


def polynomial_features(features: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of total degree <= degree, intercept first."""
    F = np.atleast_2d(np.asarray(features, dtype=float))
    if F.ndim != 2:
        raise ValueError("features must be a 2-d array (n_paths, n_features)")
    m, d = F.shape
    cols = [np.ones(m)]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            col = np.ones(m)
            for j in combo:
                col = col * F[:, j]
            cols.append(col)
    return np.column_stack(cols)


@dataclass
class CondExpEstimator:
    """Fitted slice regression; prediction is affine in the training targets."""

    basis: BasisSpec
    coefficients: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        A = polynomial_features(features, self.basis.degree)
        return A @ self.coefficients


def fit_condexp(
    features: np.ndarray,
    targets: np.ndarray,
    basis: BasisSpec,
    slice_index=None,
) -> CondExpEstimator:
    """Ridge least squares of targets on the polynomial basis of features."""
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise ValueError(f"non-finite regression targets at slice {slice_index}")
    A = polynomial_features(features, basis.degree)
    m, p = A.shape
    if m < p + 1:
        raise ValueError(
            f"need at least basis dimension + 1 = {p + 1} paths, got {m}"
        )
    ridge = basis.effective_ridge(m)
    gram = A.T @ A
    rhs = A.T @ targets
    if ridge == 0.0:
        if np.linalg.matrix_rank(A) < p:
            raise SingularSliceError(slice_index)
        coef = np.linalg.solve(gram, rhs)
    else:
        coef = np.linalg.solve(gram + ridge * np.eye(p), rhs)
    return CondExpEstimator(basis=basis, coefficients=coef)


def extract_z(
    y_next: np.ndarray,
    dB: np.ndarray,
    dL: np.ndarray,
    features: np.ndarray,
    basis: BasisSpec,
    floor: float,
    slice_index=None,
) -> np.ndarray:
    """Per-path martingale integrand estimate at one slice.

    Fits are cross-fitted over a half split of the paths: each half is
    predicted from the other half's coefficients.  In-sample prediction
    correlates the fitted numerator with dB, which biases every downstream
    integral against dB; cross-fitting removes that bias at the price of a
    factor-2 variance in the fit.
    """
    if np.all(dL == 0.0):
        return np.zeros_like(dL)  # fully frozen slice
    m = dL.shape[0]
    features = np.atleast_2d(np.asarray(features, dtype=float))
    half = m // 2
    num = np.empty(m)
    den = np.empty(m)
    for fit_sl, pred_sl in ((slice(0, half), slice(half, m)), (slice(half, m), slice(0, half))):
        fa, fb = features[fit_sl], features[pred_sl]
        num[pred_sl] = fit_condexp(fa, (y_next * dB)[fit_sl], basis, slice_index).predict(fb)
        den[pred_sl] = fit_condexp(fa, dL[fit_sl], basis, slice_index).predict(fb)
    z = num / np.maximum(den, floor)
    z[den < floor] = 0.0
    return z
