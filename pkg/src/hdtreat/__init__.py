"""Treatment-effect estimation in high-dimensional linear regression.

Single- and double-selection estimators built on a weighted elastic-net
solver and a general-to-specific search engine, plus a Monte Carlo lab
for calibrated simulation studies and a growth-data application path.
"""

from .linreg import (
    FitSummary,
    TestResult,
    encompassing_f_test,
    hetero_test,
    normality_test,
    ols_fit,
    toeplitz_cov,
)

__version__ = "0.1.0"

__all__ = [
    "FitSummary",
    "TestResult",
    "ols_fit",
    "toeplitz_cov",
    "normality_test",
    "hetero_test",
    "encompassing_f_test",
    "__version__",
]
