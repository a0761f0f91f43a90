"""Median-based k-fold cross-validation of a loss family's tuning parameter."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .diagnostics import theoretical_tau
from .errors import ConfigError, SelectionError, WelschRegError
from .estimators import FitConfig, fit_two_stage, run_stage1
from .experiments import DEFAULT_SEED, Table
from .losses import DEFAULTS, TUNING_PARAM, LossSpec

STATISTICS = ("median_abs_residual",)


@dataclass(frozen=True)
class CvSpec:
    """Fold count, candidate grid (``None``: :func:`default_grid`), score and shuffle seed."""

    folds: int = 5
    grid: tuple | None = None
    statistic: str = "median_abs_residual"
    shuffle_seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("folds must be >= 2", key="folds")
        if self.statistic not in STATISTICS:
            raise ConfigError(f"statistic must be one of {STATISTICS}", key="statistic")
        if self.grid is not None:
            grid = tuple(float(v) for v in self.grid)
            object.__setattr__(self, "grid", grid)
            if not grid:
                raise ConfigError("grid must be non-empty", key="grid")
            if not all(np.isfinite(v) and v > 0 for v in grid):
                raise ConfigError("grid values must be positive reals", key="grid")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("grid must be strictly increasing", key="grid")
        if not 0 <= self.shuffle_seed < 2**64:
            raise ConfigError("shuffle_seed must be a 64-bit unsigned integer", key="shuffle_seed")


def default_grid(loss_family: str, n: int, p: int) -> tuple:
    """12 log-spaced candidates around a family-specific anchor.

    Welsch spans ``[0.01, 100] x theoretical_tau(n, o=0.05 n, delta=0.05)``;
    Huber, Tukey and Hampel span ``[0.1, 10]`` times their default constants
    (gamma 1, c 4.685, first Hampel corner 2).
    """
    if n < 1 or p < 1:
        raise ConfigError("need n, p >= 1", key="n")
    if loss_family == "welsch":
        anchor = theoretical_tau(n, 0.05 * n, 0.05, 2.0, 1.0, "prop2")
        return tuple(anchor * np.logspace(-2.0, 2.0, 12))
    if loss_family in ("huber", "tukey", "hampel"):
        base = DEFAULTS[loss_family][TUNING_PARAM[loss_family]]
        return tuple(base * np.logspace(-1.0, 1.0, 12))
    raise ConfigError(f"{loss_family} has no tuning parameter to cross-validate", key="loss")


def fold_indices(n: int, folds: int, seed: int) -> list:
    """Seeded shuffle followed by a contiguous split into ``folds`` parts."""
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _candidate_loss(template: FitConfig, family: str, value: float) -> LossSpec:
    base = template.loss if template.loss.family == family else LossSpec(family)
    return base.tuned(value)


def median_cv(data: Dataset, loss_family: str, cv: CvSpec | None = None,
              fit_cfg_template: FitConfig | None = None):
    """Choose the tuning value minimizing the median over folds of the held-out median |residual|.

    Each candidate is fitted with :func:`~welschreg.estimators.fit_two_stage`
    on the other folds. Ties go to the smaller candidate. Returns
    ``(chosen, table)`` where the table has one row per candidate:
    ``candidate, fold_1 .. fold_k, aggregate, failed_folds``.
    """
    cv = cv or CvSpec()
    template = fit_cfg_template or FitConfig()
    if loss_family not in TUNING_PARAM:
        raise ConfigError(f"{loss_family} has no tuning parameter to cross-validate", key="loss")
    if data.n < 2 * cv.folds:
        raise ConfigError(f"need n >= 2 * folds (n = {data.n}, folds = {cv.folds})", key="folds")
    grid = cv.grid or default_grid(loss_family, data.n, data.p)
    folds = fold_indices(data.n, cv.folds, cv.shuffle_seed)
    all_idx = np.arange(data.n)

    splits = []
    for held in folds:
        train = data.subset(np.setdiff1d(all_idx, held, assume_unique=True))
        try:
            s1 = run_stage1(train, template)
        except WelschRegError:
            s1 = None
        splits.append((train, data.subset(np.sort(held)), s1))

    rows = []
    best = None
    for value in grid:
        cfg = template.with_loss(_candidate_loss(template, loss_family, value))
        scores = []
        for train, test, s1 in splits:
            try:
                if s1 is None:
                    raise SelectionError("stage 1 failed on this fold")
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    res = fit_two_stage(train, cfg, s1)
                scores.append(float(np.median(np.abs(test.residuals(res.beta)))))
            except (WelschRegError, np.linalg.LinAlgError):
                scores.append(math.nan)
        ok = [s for s in scores if not math.isnan(s)]
        agg = float(np.median(ok)) if ok else math.nan
        rows.append((value, *scores, agg, len(scores) - len(ok)))
        if not ok:
            warnings.warn(f"every fold failed for candidate {value:g}; excluded", UserWarning,
                          stacklevel=2)
        elif best is None or agg < best[1]:
            best = (value, agg)
    if best is None:
        raise SelectionError(f"no {loss_family} candidate could be fitted on any fold")
    columns = ("candidate",) + tuple(f"fold_{k + 1}" for k in range(cv.folds)) + (
        "aggregate", "failed_folds")
    return best[0], Table(columns, rows)


def train_test_split(data: Dataset, test_fraction: float = 0.2, seed: int = DEFAULT_SEED):
    """Seeded random split; returns ``(train, test, test_indices)``."""
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie in (0, 1)", key="test_fraction")
    perm = np.random.default_rng(seed).permutation(data.n)
    n_test = int(round(test_fraction * data.n))
    if n_test < 1 or n_test >= data.n:
        raise ConfigError("split leaves an empty train or test set", key="test_fraction")
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.subset(train_idx), data.subset(test_idx), test_idx
