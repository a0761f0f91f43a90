"""Computable quantities from the Welsch landscape analysis.

All bound-valued outputs (``d_condition``, ``deviation_bound``) hold only up
to unknown absolute constants, which are exposed as arguments defaulting
to 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import DomainError, NumericalError

TAU_MODES = ("prop2", "debias", "asymptotic")


@dataclass(frozen=True)
class TruthMeta:
    """Ground truth behind a simulated dataset."""

    beta_star: np.ndarray
    outlier_indices: np.ndarray
    theta: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        nz = np.flatnonzero(self.theta)
        if not np.array_equal(np.sort(self.outlier_indices), nz):
            raise DomainError("outlier_indices must be exactly the support of theta")

    @property
    def o(self) -> int:
        return int(len(self.outlier_indices))


@dataclass(frozen=True)
class BasinParams:
    tau: float
    D: float

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("tau must be positive")
        if not 0 < self.D < 1:
            raise DomainError("D must lie in (0, 1)")


def _check_tau(tau):
    if not tau > 0:
        raise DomainError("tau must be positive")


def basin_indicator_fraction(data: Dataset, beta, tau: float, scale: float = 1.0) -> float:
    """Fraction of observations with ``tau * r_i**2 <= 1/2``.

    This is the same event as ``exp(-tau r_i^2 / 2) >= exp(-1/4)``; ``beta``
    lies in the basin for level ``D`` when the fraction is at least ``D``.
    Residuals are divided by ``scale`` first.
    """
    _check_tau(tau)
    r = data.residuals(beta) / scale
    if not np.all(np.isfinite(r)):
        raise DomainError("non-finite residuals")
    return float(np.mean(tau * r**2 <= 0.5))


def in_basin(data: Dataset, beta, params: BasinParams) -> bool:
    return basin_indicator_fraction(data, beta, params.tau) >= params.D


def ball_membership(beta, beta_star, c: float) -> bool:
    """True iff ``||beta - beta_star|| <= c`` (closed ball)."""
    if not c > 0:
        raise DomainError("radius must be positive")
    diff = np.asarray(beta, dtype=float) - np.asarray(beta_star, dtype=float)
    return bool(np.linalg.norm(diff) <= c)


def augmented_outlier_set(data: Dataset, truth: TruthMeta, tau: float) -> np.ndarray:
    """Indices whose residual at the truth has ``r^2 >= 1/(2 tau)``, plus the outliers."""
    _check_tau(tau)
    if len(truth.beta_star) != data.p or len(truth.theta) != data.n:
        raise DomainError("truth metadata does not match the dataset dimensions")
    r = data.residuals(truth.beta_star)
    large = np.flatnonzero(r**2 >= 1.0 / (2.0 * tau))
    return np.union1d(large, truth.outlier_indices).astype(int)


def augmented_outlier_count(data: Dataset, truth: TruthMeta, tau: float) -> int:
    return int(augmented_outlier_set(data, truth, tau).size)


def d_condition(n: int, p: int, o_prime: int, C: float = 1.0) -> float:
    """Smallest basin level ``D`` for which the convexity condition holds.

    ``D_min = C^2 (p + 2 o' (1 + log(n / (2 o')))) / n``. A value >= 1 makes
    the convexity guarantee vacuous and triggers a ``RuntimeWarning``.
    """
    if not C > 0:
        raise DomainError("C must be positive")
    if not 1 <= o_prime <= n / 2:
        raise DomainError(f"o' = {o_prime} outside [1, n/2] with n = {n}")
    d_min = C**2 * (p + 2 * o_prime * (1.0 + math.log(n / (2.0 * o_prime)))) / n
    if d_min >= 1:
        warnings.warn(f"D_min = {d_min:.4g} >= 1: convexity condition is vacuous",
                      RuntimeWarning, stacklevel=2)
    return d_min


def _check_theory_args(n, delta, ell, C):
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    if not ell >= 2:
        raise DomainError("moment order ell must be >= 2")
    if not C > 0:
        raise DomainError("constant must be positive")


def theoretical_tau(n: int, o: int = 0, delta: float = 0.01, ell: float = 2.0,
                    C: float = 1.0, mode: str = "prop2") -> float:
    """Theory-driven temperature.

    ``prop2``       C ((o + log(1/delta)) / n) ** (2 / ell); ``ell=inf`` gives C.
    ``debias``      C log(1/delta) / n.
    ``asymptotic``  log(n) / n  (u_n = log n), scaled by C.
    """
    _check_theory_args(n, delta, ell, C)
    if o < 0:
        raise DomainError("o must be >= 0")
    if mode == "prop2":
        base = (o + math.log(1.0 / delta)) / n
        return C * base ** (0.0 if math.isinf(ell) else 2.0 / ell)
    if mode == "debias":
        return C * math.log(1.0 / delta) / n
    if mode == "asymptotic":
        if n < 2:
            raise DomainError("asymptotic mode needs n >= 2")
        return C * math.log(n) / n
    raise DomainError(f"unknown tau mode {mode!r}")


def deviation_bound(n: int, p: int, o: int, delta: float = 0.01, ell: float = 2.0,
                    C1: float = 1.0) -> float:
    """Error bound for the two-stage estimator, up to the constant ``C1``.

    Sum of the contamination term ``(o/n)^(1-1/ell) sqrt(log(e n / 2o))``
    (dropped when ``o = 0``), the parametric term ``sqrt(p/n)`` and the
    confidence term ``sqrt(log(1/delta)/n * log(e n / (2 log(1/delta))))``.
    """
    _check_theory_args(n, delta, ell, C1)
    if o < 0:
        raise DomainError("o must be >= 0")
    contamination = 0.0
    if o > 0:
        expo = 1.0 if math.isinf(ell) else 1.0 - 1.0 / ell
        contamination = (o / n) ** expo * math.sqrt(math.log(math.e * n / (2.0 * o)))
    ld = math.log(1.0 / delta)
    confidence = math.sqrt(ld / n * math.log(math.e * n / (2.0 * ld)))
    return C1 * (contamination + math.sqrt(p / n) + confidence)


def welsch_hessian(data: Dataset, beta, tau: float, scale: float = 1.0) -> np.ndarray:
    """Exact Hessian of the Welsch objective.

    ``(1/n) sum_i w_i (1 - tau r_i^2) X_i X_i^T`` with ``w_i = exp(-tau r_i^2/2)``
    and residuals divided by ``scale``.
    """
    _check_tau(tau)
    r = data.residuals(beta) / scale
    c = np.exp(-0.5 * tau * r**2) * (1.0 - tau * r**2)
    H = (data.X * c[:, None]).T @ data.X / (data.n * scale**2)
    return 0.5 * (H + H.T)


def hessian_min_eigenvalue(data: Dataset, beta, tau: float, scale: float = 1.0) -> float:
    H = welsch_hessian(data, beta, tau, scale)
    try:
        return float(np.linalg.eigvalsh(H)[0])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
