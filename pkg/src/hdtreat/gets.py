"""General-to-specific variable selection.

Starting from the model containing every candidate variable, the search
opens one deletion path per insignificant variable, prunes each path
greedily (least significant first) under residual-diagnostic and
backtest constraints, iterates on the union of the terminal models, and
returns the terminal with the smallest BIC.  The target size alpha is
the significance level used throughout and calibrates the expected
fraction of irrelevant variables retained.

A multi-block strategy handles designs with more candidate variables
than the sample can estimate at once.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from ._gets_core import ERR_SINGULAR, MAX_MASK_BITS, gets_search
from .errors import ConfigError, DimensionError, SingularDesignError

__all__ = ["GetsConfig", "SelectionResult", "gets_select", "block_select"]

MAX_PATHS_CAP = 512
MAX_ROUNDS = 10


@dataclass(frozen=True)
class GetsConfig:
    """Search configuration.

    alpha : target size, the significance level used for deletion
        decisions and the backtest.
    diag_level : level of the residual diagnostic battery
        (normality + heteroscedasticity).
    max_paths : per-round cap on deletion paths; None means one path per
        initially insignificant variable, hard-capped at 512 with the
        least significant variables given priority.
    tiebreak : criterion choosing among terminal models ("bic").
    block_cap : block size for the p >= n strategy; "auto" means
        floor(n/2) - n_forced - 1.
    """

    alpha: float = 0.05
    diag_level: float = 0.01
    max_paths: Optional[int] = None
    tiebreak: str = "bic"
    block_cap: Union[int, str] = "auto"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 < self.diag_level < 1:
            raise ConfigError("diag_level must lie in (0, 1)")
        if self.max_paths is not None and self.max_paths < 1:
            raise ConfigError("max_paths must be >= 1")
        if self.tiebreak != "bic":
            raise ConfigError(f"unknown tiebreak {self.tiebreak!r}")
        if self.block_cap != "auto" and self.block_cap < 2:
            raise ConfigError("block_cap must be >= 2")


@dataclass
class SelectionResult:
    """Outcome of a selection run.

    selected holds candidate indices into the caller's X (forced indices
    are always included); tuning_used echoes the alpha (or penalty
    level) that produced it.
    """

    selected: np.ndarray
    forced: np.ndarray
    paths_explored: int
    terminal_count: int
    diagnostics_passed: bool
    tuning_used: float


@lru_cache(maxsize=64)
def _t_crit_table(alpha: float, n: int) -> np.ndarray:
    dofs = np.arange(n + 1)
    out = np.full(n + 1, np.inf)
    out[1:] = stats.t.isf(alpha / 2.0, dofs[1:])
    return out


@lru_cache(maxsize=64)
def _f_crit_row(alpha: float, m: int, dof_u: int) -> np.ndarray:
    qs = np.arange(m + 1)
    out = np.full(m + 1, np.inf)
    if dof_u >= 1:
        out[1:] = stats.f.isf(alpha, qs[1:], dof_u)
    return out


@lru_cache(maxsize=64)
def _chi2_crit_table(level: float, m: int) -> np.ndarray:
    dofs = np.arange(m + 2)
    out = np.full(m + 2, np.inf)
    out[1:] = stats.chi2.isf(level, dofs[1:])
    return out


def _normalize_forced(forced, p: int) -> np.ndarray:
    forced = np.asarray(sorted(set(int(i) for i in forced)), dtype=np.int64)
    if forced.size and (forced.min() < 0 or forced.max() >= p):
        raise DimensionError("forced indices out of range")
    return forced


def gets_select(X, y, forced: Sequence[int] = (), config: GetsConfig = GetsConfig()) -> SelectionResult:
    """Select variables by the multi-path backward search.

    X is (n, p) without an intercept column (one is handled internally
    and never removable); `forced` lists columns that must stay in the
    model.  When p is too large for a single estimable model, route
    through :func:`block_select` instead.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionError("X must be (n, p) and y length n")
    n, p = X.shape
    forced = _normalize_forced(forced, p)
    if p >= n - forced.size - 1:
        raise DimensionError(
            f"p={p} is too large for n={n} with {forced.size} forced columns; "
            "use block_select"
        )
    m = p + 1
    if m > MAX_MASK_BITS:
        raise DimensionError(f"engine supports at most {MAX_MASK_BITS - 1} columns")

    unforced = np.array([j for j in range(p) if j not in set(forced.tolist())], dtype=np.int64)
    order = np.concatenate([forced, unforced])
    Xf = np.asfortranarray(np.column_stack([np.ones(n), X[:, order]]))
    G = np.asfortranarray(Xf.T @ Xf)
    n_protected = 1 + forced.size

    max_paths = config.max_paths if config.max_paths is not None else min(p, MAX_PATHS_CAP)
    max_paths = min(max_paths, MAX_PATHS_CAP)

    t_crit = _t_crit_table(config.alpha, n)
    f_row = _f_crit_row(config.alpha, m, n - m)
    chi2_crit = _chi2_crit_table(config.diag_level, m)
    jb_crit = float(chi2_crit[2])

    sel_mask, paths, terms, diag_ok, err, err_col = gets_search(
        Xf, y, G, n_protected, t_crit, f_row, chi2_crit, jb_crit,
        max_paths, MAX_ROUNDS,
    )
    if err == ERR_SINGULAR:
        col = int(err_col)
        label = "intercept" if col == 0 else f"column {int(order[col - 1])}"
        raise SingularDesignError(
            f"starting model is rank deficient at {label}",
            column=None if col == 0 else int(order[col - 1]),
        )

    selected = np.sort(order[np.nonzero(sel_mask[1:])[0]])
    return SelectionResult(
        selected=selected.astype(np.int64),
        forced=forced,
        paths_explored=int(paths),
        terminal_count=int(terms),
        diagnostics_passed=bool(diag_ok),
        tuning_used=float(config.alpha),
    )


def _auto_block_cap(n: int, n_forced: int) -> int:
    return max(n // 2 - n_forced - 1, 2)


def block_select(X, y, forced: Sequence[int] = (), config: GetsConfig = GetsConfig()) -> SelectionResult:
    """Block strategy for designs too wide for a single search.

    Candidates are split into contiguous blocks no larger than the block
    cap; each block is searched together with the survivors accumulated
    so far, and the union of survivors becomes the next round's
    candidate set, iterating until stable (at most 10 rounds) before a
    final search on the stable set.  For inputs that already fit in one
    block the result is identical to :func:`gets_select`.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionError("X must be (n, p) and y length n")
    n, p = X.shape
    forced = _normalize_forced(forced, p)
    cap = _auto_block_cap(n, forced.size) if config.block_cap == "auto" else int(config.block_cap)
    if cap < 2:
        raise ConfigError("block_cap must be >= 2")

    forced_set = set(forced.tolist())
    cands = np.array([j for j in range(p) if j not in forced_set], dtype=np.int64)
    paths_max = 0
    total_terms = 0

    for _ in range(MAX_ROUNDS):
        if cands.size <= cap and cands.size + forced.size < n - forced.size - 1:
            break
        keep: list[int] = []
        pos = 0
        while pos < cands.size:
            width = max(cap - len(keep), 2)
            block = cands[pos : pos + width]
            pos += width
            cols = np.concatenate([forced, np.array(sorted(set(keep)), dtype=np.int64), block])
            cols = np.unique(cols)
            sub = _run_subset(X, y, cols, forced, config)
            paths_max = max(paths_max, sub.paths_explored)
            total_terms += sub.terminal_count
            keep = sorted(set(keep) | (set(sub.selected.tolist()) - forced_set))
        new_cands = np.array(keep, dtype=np.int64)
        if np.array_equal(new_cands, cands):
            cands = new_cands
            break
        cands = new_cands

    final_cols = np.unique(np.concatenate([forced, cands]))
    result = _run_subset(X, y, final_cols, forced, config)
    return SelectionResult(
        selected=result.selected,
        forced=forced,
        paths_explored=max(paths_max, result.paths_explored),
        terminal_count=result.terminal_count,
        diagnostics_passed=result.diagnostics_passed,
        tuning_used=float(config.alpha),
    )


def _run_subset(X, y, cols: np.ndarray, forced: np.ndarray, config: GetsConfig) -> SelectionResult:
    """gets_select on a column subset, mapping indices back."""
    cols = np.asarray(cols, dtype=np.int64)
    sub_forced = [int(np.searchsorted(cols, f)) for f in forced]
    res = gets_select(X[:, cols], y, forced=sub_forced, config=config)
    return SelectionResult(
        selected=cols[res.selected],
        forced=forced,
        paths_explored=res.paths_explored,
        terminal_count=res.terminal_count,
        diagnostics_passed=res.diagnostics_passed,
        tuning_used=res.tuning_used,
    )
