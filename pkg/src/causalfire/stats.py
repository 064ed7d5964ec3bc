"""Correlation statistics for conditional-independence testing.

Implements Pearson and partial correlation (via OLS residuals), two-sided
Student-t tail probabilities through a self-contained regularized incomplete
beta function, and the variable-by-variable correlation matrix used by the
correlation-graph model baseline. No statistics library is assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractError,
    DegenerateSeriesError,
    InsufficientDataError,
    SingularDesignError,
)

__all__ = [
    "CITestResult",
    "regularized_incomplete_beta",
    "pearson",
    "partial_correlation",
    "parcorr_pvalue",
    "parcorr_test",
    "corrcoef_matrix",
]

# Ridge jitter on the Gram matrix; conditioning sets are tiny so this has no
# visible effect on well-posed problems but keeps the solve defined.
_GRAM_JITTER = 1e-10
_CF_TOL = 1e-14
_CF_MAX_ITER = 500
_R_CLAMP = 1.0 - 1e-15


@dataclass(frozen=True)
class CITestResult:
    """Outcome of a (conditional) independence test.

    statistic is the partial correlation in [-1, 1], pvalue the two-sided
    Student-t probability, dof the effective degrees of freedom n - 2 - |Z|.
    """

    statistic: float
    pvalue: float
    dof: int


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz evaluation."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        # even step
        coeff = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        # odd step
        coeff = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ContractError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ContractError("beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ContractError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # The continued fraction converges fast on its own side of the mean.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Plain Pearson correlation of two equal-length series."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ContractError("series lengths differ")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSeriesError("zero-variance series in correlation")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def _ols_residuals(v: np.ndarray, design: np.ndarray) -> np.ndarray:
    gram = design.T @ design
    gram = gram + _GRAM_JITTER * np.eye(gram.shape[0])
    beta = np.linalg.solve(gram, design.T @ v)
    return v - design @ beta


def partial_correlation(
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray | None = None,
    on_singular: str = "raise",
) -> float:
    """Correlation of x and y after regressing both on z (with intercept).

    z is an (n, k) matrix of conditioning columns; k = 0 (or z None) reduces
    to the plain Pearson correlation. A rank-deficient design raises by
    default; with on_singular='ridge' the jittered normal equations are used
    anyway, which leaves the projection (and hence the residuals) well
    defined when columns are merely redundant.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ContractError("series lengths differ")
    if z is None or (hasattr(z, "size") and np.asarray(z).size == 0):
        k = 0
    else:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[0] != n:
            raise ContractError("conditioning matrix row count differs from series length")
        k = z.shape[1]
    if n <= k + 2:
        raise InsufficientDataError(
            f"need n > k + 2 samples, got n={n} with k={k} conditions"
        )
    if k == 0:
        return pearson(x, y)
    design = np.column_stack([np.ones(n), z])
    if on_singular == "raise" and np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesignError("conditioning columns (with intercept) are collinear")
    rx = _ols_residuals(x, design)
    ry = _ols_residuals(y, design)
    scale = max(float(np.abs(x).max()), float(np.abs(y).max()), 1.0)
    if float(rx @ rx) <= (1e-12 * scale) ** 2 * n or float(ry @ ry) <= (1e-12 * scale) ** 2 * n:
        raise DegenerateSeriesError("residuals have (near-)zero variance")
    return pearson(rx, ry)


def parcorr_pvalue(r: float, n: int, k: int) -> float:
    """Two-sided p-value of a partial correlation r at n samples, k conditions.

    Uses t = r * sqrt(dof / (1 - r^2)) with dof = n - 2 - k and the identity
    P(|T| > t) = I_{dof/(dof + t^2)}(dof/2, 1/2).
    """
    dof = n - 2 - k
    if dof < 1:
        raise InsufficientDataError(f"degrees of freedom must be >= 1, got {dof}")
    if abs(r) >= 1.0:
        return 0.0
    r = float(np.clip(r, -_R_CLAMP, _R_CLAMP))
    t2 = r * r * dof / (1.0 - r * r)
    return regularized_incomplete_beta(dof / (dof + t2), dof / 2.0, 0.5)


def parcorr_test(x: np.ndarray, y: np.ndarray, z: np.ndarray | None = None) -> CITestResult:
    """Partial-correlation independence test of x and y given z."""
    n = np.asarray(x).reshape(-1).shape[0]
    k = 0 if z is None else (np.asarray(z).shape[1] if np.asarray(z).ndim == 2 else 1)
    if z is not None and np.asarray(z).size == 0:
        k = 0
    r = partial_correlation(x, y, z)
    return CITestResult(statistic=r, pvalue=parcorr_pvalue(r, n, k), dof=n - 2 - k)


def corrcoef_matrix(features: np.ndarray) -> np.ndarray:
    """Pearson correlation between the rows of a (C, d) feature matrix."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] < 2:
        raise ContractError("features must be (C, d) with d >= 2")
    centered = f - f.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    if np.any(norms == 0.0):
        raise DegenerateSeriesError("constant feature row in correlation matrix")
    c = (centered @ centered.T) / np.outer(norms, norms)
    c = np.clip(c, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return c
