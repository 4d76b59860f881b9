"""Dense OLS kernel with robust covariance, diagnostic tests, and
structured covariance construction.

Everything here is a pure function of its inputs and safe to call from
any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .errors import DegenerateInputError, DimensionError, SingularDesignError

__all__ = [
    "FitSummary",
    "TestResult",
    "ols_fit",
    "toeplitz_cov",
    "normality_test",
    "hetero_test",
    "encompassing_f_test",
]


@dataclass
class FitSummary:
    """Result of a least-squares fit.

    Attributes
    ----------
    coefficients : ndarray, shape (k,)
        Minimizers of the residual sum of squares.
    residuals : ndarray, shape (n,)
        y - X @ coefficients.
    sigma2 : float
        Residual variance estimate, RSS / dof.
    cov : ndarray, shape (k, k)
        Coefficient covariance, plain or heteroscedasticity-robust.
    tstats : ndarray, shape (k,)
        coefficients / sqrt(diag(cov)); NaN where the variance is not
        positive.
    dof : int
        Residual degrees of freedom, n - k.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    sigma2: float
    cov: np.ndarray
    tstats: np.ndarray
    dof: int

    @property
    def rss(self) -> float:
        return float(self.residuals @ self.residuals)

    def stderr(self) -> np.ndarray:
        d = np.diag(self.cov)
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.where(d > 0, d, np.nan))


@dataclass
class TestResult:
    """Outcome of a scalar hypothesis test."""

    statistic: float
    pvalue: float
    dof: int


def _as_design(design, y):
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("design must be a 2-D array")
    if y.ndim != 1:
        raise DimensionError("y must be a 1-D vector")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(
            f"design has {X.shape[0]} rows but y has {y.shape[0]} entries"
        )
    if X.shape[0] <= X.shape[1]:
        raise DimensionError(
            f"need more rows than columns, got {X.shape[0]}x{X.shape[1]}"
        )
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise DimensionError("design and y must be finite")
    return X, y


def ols_fit(design, y, robust="none", names=None) -> FitSummary:
    """Least-squares fit via QR factorization.

    Parameters
    ----------
    design : array_like, shape (n, k)
        Full-column-rank design matrix (include the intercept column
        yourself if you want one).
    y : array_like, shape (n,)
    robust : {"none", "hc1"}
        "none" gives sigma2 * (X'X)^-1; "hc1" gives the sandwich
        (X'X)^-1 X' diag(e_i^2) X (X'X)^-1 scaled by n/(n-k).
    names : sequence of str, optional
        Column names used in error messages.

    Raises
    ------
    SingularDesignError
        If the design is rank deficient; the message names the first
        offending column.
    """
    if robust not in ("none", "hc1"):
        raise ValueError(f"unknown robust option {robust!r}")
    X, y = _as_design(design, y)
    n, k = X.shape

    # Pivoted QR exposes rank deficiency and which column caused it.
    Q, R, piv = sla.qr(X, mode="economic", pivoting=True)
    col_norms = np.linalg.norm(X, axis=0)
    tol = np.finfo(np.float64).eps * max(n, k) * (col_norms.max() if k else 0.0)
    diag = np.abs(np.diag(R))
    bad = np.where(diag <= tol)[0]
    if bad.size:
        col = piv[bad[0]]
        label = names[col] if names is not None else f"column {col}"
        raise SingularDesignError(
            f"design is rank deficient: {label} is collinear with preceding columns",
            column=names[col] if names is not None else int(col),
        )

    coef_piv = sla.solve_triangular(R, Q.T @ y, lower=False)
    coefficients = np.empty(k)
    coefficients[piv] = coef_piv
    residuals = y - X @ coefficients
    dof = n - k
    rss = float(residuals @ residuals)
    sigma2 = rss / dof

    # (X'X)^-1 from the pivoted R factor.
    Rinv = sla.solve_triangular(R, np.eye(k), lower=False)
    xtx_inv_piv = Rinv @ Rinv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_piv

    if robust == "none":
        cov = sigma2 * xtx_inv
    else:
        Xe = X * residuals[:, None]
        meat = Xe.T @ Xe
        cov = xtx_inv @ meat @ xtx_inv * (n / dof)
    cov = 0.5 * (cov + cov.T)

    d = np.diag(cov)
    with np.errstate(invalid="ignore", divide="ignore"):
        tstats = np.where(d > 0, coefficients / np.sqrt(np.where(d > 0, d, 1.0)), np.nan)

    return FitSummary(
        coefficients=coefficients,
        residuals=residuals,
        sigma2=sigma2,
        cov=cov,
        tstats=tstats,
        dof=dof,
    )


def toeplitz_cov(rho: float, p: int) -> np.ndarray:
    """Structured covariance with entry (k, l) equal to rho**|k-l|.

    Positive definite for |rho| < 1.
    """
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    if p < 1:
        raise ValueError("p must be >= 1")
    return sla.toeplitz(rho ** np.arange(p, dtype=np.float64))


def normality_test(residuals) -> TestResult:
    """Jarque-Bera test of residual normality.

    statistic = n * (skew^2 / 6 + (kurtosis - 3)^2 / 24), chi2(2) null.
    """
    e = np.asarray(residuals, dtype=np.float64)
    if e.ndim != 1 or e.size < 8:
        raise DimensionError("need a vector of at least 8 residuals")
    n = e.size
    c = e - e.mean()
    m2 = float(c @ c) / n
    if m2 <= 0.0:
        raise DegenerateInputError("residuals are constant")
    skew = float(np.mean(c**3)) / m2**1.5
    kurt = float(np.mean(c**4)) / m2**2
    stat = n * (skew**2 / 6.0 + (kurt - 3.0) ** 2 / 24.0)
    return TestResult(statistic=stat, pvalue=float(stats.chi2.sf(stat, 2)), dof=2)


def hetero_test(residuals, regressors) -> TestResult:
    """Breusch-Pagan test: n * R^2 from regressing squared residuals on
    the given regressors (a constant is added internally), chi2(k) null
    with k the number of regressor columns.
    """
    e = np.asarray(residuals, dtype=np.float64)
    Z = np.asarray(regressors, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != e.shape[0]:
        raise DimensionError("regressors must be 2-D with one row per residual")
    n, k = Z.shape
    u = e**2
    u_c = u - u.mean()
    tss = float(u_c @ u_c)
    if tss == 0.0:
        # No variation in squared residuals: nothing to explain.
        return TestResult(statistic=0.0, pvalue=1.0, dof=k)
    aux = np.column_stack([np.ones(n), Z])
    fit = ols_fit(aux, u)  # raises SingularDesignError on a collinear aux design
    ess = tss - fit.rss
    r2 = max(ess, 0.0) / tss
    stat = n * r2
    return TestResult(statistic=stat, pvalue=float(stats.chi2.sf(stat, k)), dof=k)


def encompassing_f_test(restricted: FitSummary, unrestricted: FitSummary, dropped: int) -> TestResult:
    """F-test of a restricted model against the model it was reduced from.

    F = ((RSS_r - RSS_u) / dropped) / (RSS_u / dof_u), F(dropped, dof_u) null.
    """
    if dropped < 1:
        raise ValueError("dropped must be >= 1")
    rss_r = restricted.rss
    rss_u = unrestricted.rss
    if rss_u <= 0.0:
        raise DegenerateInputError("unrestricted fit has zero residual sum of squares")
    stat = max(rss_r - rss_u, 0.0) / dropped / (rss_u / unrestricted.dof)
    pvalue = float(stats.f.sf(stat, dropped, unrestricted.dof))
    return TestResult(statistic=stat, pvalue=pvalue, dof=dropped)
