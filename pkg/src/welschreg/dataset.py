"""The design matrix / response pair consumed by every estimator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``X`` (n x p, one observation per row) and response ``y``.

    Arrays are copied to float64 and made read-only, so a dataset can be
    shared between concurrent fits.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1:
            raise DomainError("X must be 2-D and y 1-D")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DomainError("need n >= 1 and p >= 1")
        if X.shape[0] != y.shape[0]:
            raise DomainError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("dataset entries must be finite")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def residuals(self, beta) -> np.ndarray:
        return self.y - self.X @ np.asarray(beta, dtype=float)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    def translated(self, v) -> "Dataset":
        """Dataset with response ``y + X v``."""
        return Dataset(self.X, self.y + self.X @ np.asarray(v, dtype=float))
