"""Weighted elastic-net solver plus the four penalty-level rules and
adaptive weighting.  The pure Lasso is the mix=1 special case.

The solver objective is

    sum_i (y_i - X_i theta)^2
        + lam * sum_j w_j * (mix * |theta_j| + (1 - mix) * theta_j^2 / 2)

with no 1/n or 1/2 factor on the squared-error term.  Penalty rules that
are conventionally stated for the mean-squared objective (the
sigma-based rule in :func:`lambda_bya`) must be multiplied by n before
being handed to the solver; see the docstring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from ._cd_core import cd_solve, cv_fold_errors, path_supports
from .errors import ConstantColumnError, DegenerateInputError, DimensionError
from .linreg import ols_fit

__all__ = [
    "PenaltySpec",
    "LassoFit",
    "CvCurve",
    "Standardization",
    "standardize",
    "coordinate_descent",
    "lambda_max",
    "lambda_grid",
    "cv_lambda",
    "lambda_bya",
    "lambda_bcch",
    "adaptive_weights",
    "pilot_sigma",
    "CD_TOL",
    "MAX_SWEEPS",
    "SUPPORT_TOL",
]

CD_TOL = 1e-7
MAX_SWEEPS = 10_000
SUPPORT_TOL = 1e-9
WEIGHT_FLOOR_RATIO = 1e-4
ENET_MIX_GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)


def kkt_tol(lam: float) -> float:
    return 1e-6 * (1.0 + lam)


@dataclass
class PenaltySpec:
    """How to resolve the penalty level.

    kind is one of "fixed", "bya", "bcch", "cv_min", "cv_1se"; lambda_
    is required (and only allowed) for "fixed".  scale multiplies the
    resolved level, which is how the tau * lambda_min sweeps are run.
    mix=None requests elastic-net mixing chosen by cross validation
    over ENET_MIX_GRID.
    """

    kind: str = "cv_min"
    lambda_: Optional[float] = None
    tau: float = 1.0
    mix: Optional[float] = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "bya", "bcch", "cv_min", "cv_1se"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "fixed":
            if self.lambda_ is None or self.lambda_ <= 0:
                raise ValueError("fixed penalty requires lambda_ > 0")
        elif self.lambda_ is not None:
            raise ValueError("lambda_ is only allowed with kind='fixed'")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.mix is not None and not 0 < self.mix <= 1:
            raise ValueError("mix must lie in (0, 1]")
        if self.scale <= 0 and not (self.kind == "cv_min" and self.scale == 0.0):
            # scale=0 is allowed for cv_min so tau-sweeps can include the
            # unpenalized endpoint.
            raise ValueError("scale must be > 0")


@dataclass
class LassoFit:
    """Solver output.

    coefficients are on the scale of the data the solver was given (the
    higher-level estimators standardize first and map back themselves);
    support holds the indices with |coef| > SUPPORT_TOL.
    """

    coefficients: np.ndarray
    intercept: float
    lambda_used: float
    support: np.ndarray
    n_iterations: int
    converged: bool


@dataclass
class CvCurve:
    lambda_grid: np.ndarray
    mean_error: np.ndarray
    se_error: np.ndarray
    lambda_min: float
    lambda_1se: float


@dataclass
class Standardization:
    """Column means/scales and the outcome mean removed by standardize."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float

    def destandardize(self, coef_std: np.ndarray) -> tuple[np.ndarray, float]:
        """Map standardized-scale coefficients back to the original scale,
        returning (coefficients, intercept)."""
        coef = coef_std / self.x_scale
        intercept = self.y_mean - float(coef @ self.x_mean)
        return coef, intercept


def standardize(X, y):
    """Center and scale columns to sample sd 1; center y.

    Returns (Xs, ys, Standardization).  A constant column raises
    ConstantColumnError naming the column.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionError("X must be (n, p) and y length n")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    bad = np.where(sd <= 0)[0]
    if bad.size:
        raise ConstantColumnError(
            f"column {bad[0]} is constant and cannot be standardized",
            column=int(bad[0]),
        )
    Xs = (X - mean) / sd
    ys = y - y.mean()
    return Xs, ys, Standardization(x_mean=mean, x_scale=sd, y_mean=float(y.mean()))


def _prep_weights(p, weights, unpenalized):
    w = np.ones(p) if weights is None else np.asarray(weights, dtype=np.float64).copy()
    if w.shape != (p,):
        raise DimensionError(f"weights must have length {p}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    for j in unpenalized:
        w[j] = 0.0
    return w


def coordinate_descent(
    Xs,
    ys,
    lam: float,
    weights=None,
    mix: float = 1.0,
    unpenalized=(),
    theta0=None,
    max_sweeps: int = MAX_SWEEPS,
    tol: float = CD_TOL,
) -> LassoFit:
    """Solve the weighted elastic-net problem by cyclic coordinate descent.

    Xs, ys should be standardized/centered (see :func:`standardize`); the
    fit is returned on that same scale with intercept 0.  Columns listed
    in `unpenalized` get weight 0.  A non-converged fit is returned with
    converged=False rather than raising.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    Xs = np.ascontiguousarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n, p = Xs.shape
    w = _prep_weights(p, weights, unpenalized)
    G = np.ascontiguousarray(Xs.T @ Xs)
    c = Xs.T @ ys
    theta = np.zeros(p) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    sweeps, converged = cd_solve(G, c, lam, w, mix, theta, max_sweeps, tol)
    support = np.where(np.abs(theta) > SUPPORT_TOL)[0]
    return LassoFit(
        coefficients=theta,
        intercept=0.0,
        lambda_used=float(lam),
        support=support,
        n_iterations=int(sweeps),
        converged=bool(converged),
    )


def lambda_max(Xs, ys, weights=None, mix: float = 1.0, unpenalized=()) -> float:
    """Smallest penalty that zeroes every penalized coefficient:
    max_j 2|x_j'ys| / (w_j * mix) over penalized columns."""
    Xs = np.asarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    p = Xs.shape[1]
    w = _prep_weights(p, weights, unpenalized)
    c = np.abs(Xs.T @ ys)
    pen = w > 0
    if not pen.any():
        return 0.0
    return float((2.0 * c[pen] / (w[pen] * mix)).max())


def lambda_grid(lam_max: float, size: int, ratio: float) -> np.ndarray:
    """Descending log-spaced grid from lam_max to lam_max * ratio."""
    lam_max = max(lam_max, 1e-8)
    return np.geomspace(lam_max, lam_max * ratio, size)


def cv_lambda(
    Xs,
    ys,
    folds: int = 10,
    grid_size: int = 100,
    weights=None,
    mix: float = 1.0,
    seed: int = 0,
    grid_ratio: Optional[float] = None,
    unpenalized=(),
) -> CvCurve:
    """K-fold cross validation along a descending penalty path.

    mean_error is the across-fold mean of the per-fold MSEs and se_error
    the standard error of that mean; lambda_1se is the largest grid
    value whose mean error is within one standard error of the minimum.
    Fold assignment comes from the seeded generator, so results are
    reproducible.
    """
    Xs = np.ascontiguousarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n, p = Xs.shape
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n < 2 * folds:
        raise ValueError("need n >= 2 * folds")
    if grid_ratio is None:
        grid_ratio = 1e-4 if p < n else 1e-2
    w = _prep_weights(p, weights, unpenalized)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    Xp = np.ascontiguousarray(Xs[perm])
    yp = ys[perm]
    bounds = np.floor(np.linspace(0, n, folds + 1)).astype(np.int64)
    # each training fold must keep some outcome variation
    for k in range(folds):
        tr = np.concatenate([yp[: bounds[k]], yp[bounds[k + 1] :]])
        if np.ptp(tr) == 0.0:
            raise DegenerateInputError(f"training outcome is constant when fold {k} is held out")

    G = np.ascontiguousarray(Xs.T @ Xs)
    c = Xs.T @ ys
    grid = lambda_grid(lambda_max(Xs, ys, w, mix), grid_size, grid_ratio)

    errs = cv_fold_errors(Xp, yp, bounds, G, c, grid, w, mix, MAX_SWEEPS, CD_TOL)
    mean_error = errs.mean(axis=0)
    se_error = errs.std(axis=0, ddof=1) / np.sqrt(folds)
    i_min = int(np.argmin(mean_error))
    lam_min = float(grid[i_min])
    cutoff = mean_error[i_min] + se_error[i_min]
    i_1se = int(np.nonzero(mean_error <= cutoff)[0][0])  # grid is descending
    return CvCurve(
        lambda_grid=grid,
        mean_error=mean_error,
        se_error=se_error,
        lambda_min=lam_min,
        lambda_1se=float(grid[i_1se]),
    )


def lambda_bya(sigma: float, n: int, p: int, tau: float = 1.0) -> float:
    """Closed-form penalty 2*sigma*sqrt(2*(1+tau)*log(p)/n).

    This is the level for the mean-squared objective
    n^-1 sum (y - X theta)^2 + lam * sum |theta|; multiply by n before
    passing it to :func:`coordinate_descent`, whose squared-error term
    is unnormalized.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if p < 2:
        raise ValueError("p must be >= 2")
    return 2.0 * sigma * np.sqrt(2.0 * (1.0 + tau) * np.log(p) / n)


def _post_ols_residuals(Xs, ys, support):
    n = Xs.shape[0]
    if support.size == 0:
        return ys - ys.mean()
    design = np.column_stack([np.ones(n), Xs[:, support]])
    if design.shape[1] >= n:
        # too many selected columns for a refit: fall back to the lasso
        # residuals themselves
        return None
    return ols_fit(design, ys).residuals


def lambda_bcch(
    X,
    y,
    c: float = 1.1,
    gamma: Optional[float] = None,
    refinement_rounds: int = 2,
) -> float:
    """Moderate-deviation penalty level for heteroscedastic errors,
    2*c*sqrt(n)*PHI^-1(1 - gamma/(2p)) * max_j loading_j with
    loading_j = sqrt(mean(x_ij^2 e_i^2)).

    Residuals start from an OLS fit on the few columns most correlated
    with y and are refined `refinement_rounds` times using post-Lasso
    residuals.  The returned value is on the solver's unnormalized
    objective scale.
    """
    if refinement_rounds < 1:
        raise ValueError("refinement_rounds must be >= 1")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if gamma is None:
        gamma = 0.1 / np.log(max(p, n))
    base = 2.0 * c * np.sqrt(n) * float(stats.norm.ppf(1.0 - gamma / (2.0 * p)))

    k0 = min(5, p, max(n - 2, 1))
    top = np.argsort(-np.abs(X.T @ y))[:k0]
    e = _post_ols_residuals(X, y, top)
    if e is None or float(e @ e) == 0.0:
        raise DegenerateInputError("initial residuals are all zero")

    lam = base * float(np.sqrt((X**2).T @ (e**2) / n).max())
    for _ in range(refinement_rounds):
        fit = coordinate_descent(X, y, lam)
        e_new = _post_ols_residuals(X, y, fit.support)
        if e_new is None:
            e_new = y - X @ fit.coefficients
        if float(e_new @ e_new) == 0.0:
            raise DegenerateInputError("post-Lasso residuals are all zero")
        e = e_new
        lam = base * float(np.sqrt((X**2).T @ (e**2) / n).max())
    return lam


def _ridge_cv(Xs, ys, n_lambdas: int = 20, folds: int = 5, seed: int = 0):
    """Ridge pilot with penalty chosen by K-fold CV on a fixed log grid.

    Returns (coefficients, chosen penalty, eigenvalues of the Gram).
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n, p = Xs.shape
    G = Xs.T @ Xs
    scale = np.trace(G) / p
    grid = np.geomspace(1e-5, 10.0, n_lambdas) * scale

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    bounds = np.floor(np.linspace(0, n, folds + 1)).astype(int)
    errs = np.zeros((folds, n_lambdas))
    for k in range(folds):
        te = perm[bounds[k] : bounds[k + 1]]
        tr_mask = np.ones(n, dtype=bool)
        tr_mask[te] = False
        Xtr, ytr = Xs[tr_mask], ys[tr_mask]
        Xte, yte = Xs[te], ys[te]
        evals, V = np.linalg.eigh(Xtr.T @ Xtr)
        b = V.T @ (Xtr.T @ ytr)
        for l, lam_r in enumerate(grid):
            theta = V @ (b / (evals + lam_r))
            r = yte - Xte @ theta
            errs[k, l] = float(r @ r) / te.size
    best = int(np.argmin(errs.mean(axis=0)))
    lam_r = float(grid[best])
    evals, V = np.linalg.eigh(G)
    theta = V @ ((V.T @ (Xs.T @ ys)) / (evals + lam_r))
    return theta, lam_r, evals


def pilot_sigma(Xs, ys, seed: int = 0) -> float:
    """Residual sd of a CV-tuned ridge pilot fit, used when the error sd
    required by :func:`lambda_bya` is unknown."""
    n = Xs.shape[0]
    theta, lam_r, evals = _ridge_cv(Xs, ys, seed=seed)
    resid = ys - Xs @ theta
    df = float((evals / (evals + lam_r)).sum())
    return float(np.sqrt(resid @ resid / max(n - df, 1.0)))


def adaptive_weights(X, y, eta: float = 1.0, seed: int = 0) -> np.ndarray:
    """Reciprocal-magnitude weights |mu_j|^-eta from a pilot estimate.

    The pilot is OLS when p + 1 < n/2 and a CV-tuned ridge otherwise;
    pilot magnitudes are floored at WEIGHT_FLOOR_RATIO * max|mu| so every
    weight stays finite.
    """
    if eta <= 0:
        raise ValueError("eta must be > 0")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if p + 1 < n / 2:
        design = np.column_stack([np.ones(n), X])
        mu = ols_fit(design, y).coefficients[1:]
    else:
        mu, _, _ = _ridge_cv(X, y, seed=seed)
    amax = float(np.abs(mu).max())
    if amax == 0.0:
        return np.ones(p)
    floored = np.maximum(np.abs(mu), WEIGHT_FLOOR_RATIO * amax)
    return floored**-eta


def cv_over_mix(Xs, ys, folds=10, grid_size=100, seed=0, weights=None, unpenalized=(), mix_grid=ENET_MIX_GRID):
    """Outer CV over the elastic-net mixing grid; returns (mix, CvCurve)
    for the mix whose curve attains the lowest mean error."""
    best = None
    for m in mix_grid:
        curve = cv_lambda(
            Xs, ys, folds=folds, grid_size=grid_size, weights=weights,
            mix=m, seed=seed, unpenalized=unpenalized,
        )
        score = float(curve.mean_error.min())
        if best is None or score < best[0]:
            best = (score, m, curve)
    return best[1], best[2]


def warm_cold_supports_agree(Xs, ys, grid, weights=None, mix=1.0) -> bool:
    """Fit a path warm- and cold-started; True when supports agree at
    every grid point (consistency check used by the test suite)."""
    Xs = np.ascontiguousarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    p = Xs.shape[1]
    w = _prep_weights(p, weights, ())
    G = np.ascontiguousarray(Xs.T @ Xs)
    c = Xs.T @ ys
    warm = path_supports(G, c, grid, w, mix, MAX_SWEEPS, CD_TOL, True)
    cold = path_supports(G, c, grid, w, mix, MAX_SWEEPS, CD_TOL, False)
    return bool(np.array_equal(warm, cold))
