"""Synthetic data from the mean-shift contaminated linear model ``y = X b + theta + xi``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset import Dataset
from .diagnostics import TruthMeta
from .errors import ConfigError

MASK64 = (1 << 64) - 1
DESIGNS = ("gaussian_isotropic", "rademacher")
NOISE_KINDS = ("gaussian", "pareto", "student")
STRATEGIES = ("random_shift", "sign_aligned", "response_flip")


def mix_seed(base_seed: int, replicate: int) -> int:
    """64-bit seed for one replicate: SplitMix64 finalizer of ``base_seed ^ replicate``.

    The same ``(base_seed, replicate)`` pair always yields the same seed, so
    serial and parallel runs draw identical data.
    """
    z = ((int(base_seed) ^ int(replicate)) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class NoiseSpec:
    """Unit-variance, zero-mean noise.

    ``pareto``: (P - E P) / sd(P) with P ~ Pareto(shape, scale 1), shape > 2.
    ``student``: t(df) * sqrt((df - 2) / df), df > 2.
    """

    kind: str = "pareto"
    shape: float = 2.5
    df: float = 5.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"noise kind must be one of {NOISE_KINDS}", key="kind")
        if self.kind == "pareto" and not self.shape > 2:
            raise ConfigError("pareto shape must exceed 2 (finite variance)", key="shape")
        if self.kind == "student" and not self.df > 2:
            raise ConfigError("student df must exceed 2 (finite variance)", key="df")

    def _pareto_moments(self):
        a = self.shape
        mean = a / (a - 1.0)
        sd = math.sqrt(a / ((a - 1.0) ** 2 * (a - 2.0)))
        return mean, sd

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(n)
        if self.kind == "pareto":
            mean, sd = self._pareto_moments()
            # numpy draws Lomax; +1 gives the classical Pareto with scale 1
            return (rng.pareto(self.shape, n) + 1.0 - mean) / sd
        return rng.standard_t(self.df, n) * math.sqrt((self.df - 2.0) / self.df)

    def tail_prob(self, t: float) -> float:
        """``P(|xi| >= t)`` for ``t >= 0``."""
        t = abs(float(t))
        if self.kind == "gaussian":
            return float(2.0 * stats.norm.sf(t))
        if self.kind == "student":
            s = math.sqrt((self.df - 2.0) / self.df)
            return float(2.0 * stats.t.sf(t / s, self.df))
        mean, sd = self._pareto_moments()
        upper = min(1.0, (mean + sd * t) ** -self.shape)
        lo = mean - sd * t  # xi <= -t  <=>  P <= lo
        lower = 0.0 if lo <= 1.0 else 1.0 - lo ** -self.shape
        return float(upper + lower)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "pareto":
            out["shape"] = self.shape
        elif self.kind == "student":
            out["df"] = self.df
        return out


@dataclass(frozen=True)
class ContaminationSpec:
    """How the adversary picks and shifts responses.

    ``count`` overrides ``proportion``; otherwise ``o = floor(proportion * n)``.

    * ``random_shift``: o uniformly chosen rows get ``theta_i = +-magnitude``.
    * ``sign_aligned``: the o rows with largest ``|X_i . u|`` get
      ``theta_i = magnitude * sign(X_i . u)``, dragging a fit along ``u``
      (``u`` defaults to ``beta_star / ||beta_star||``).
    * ``response_flip``: o uniformly chosen rows get ``theta_i = -2 X_i . beta_star``.
    """

    proportion: float = 0.0
    magnitude: float = 100.0
    strategy: str = "sign_aligned"
    direction: tuple | None = None
    count: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.proportion < 0.5:
            raise ConfigError("contamination proportion must lie in [0, 0.5)", key="proportion")
        if not self.magnitude > 0:
            raise ConfigError("contamination magnitude must be positive", key="magnitude")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}", key="strategy")
        if self.count is not None and self.count < 0:
            raise ConfigError("outlier count must be >= 0", key="count")

    def n_outliers(self, n: int) -> int:
        o = self.count if self.count is not None else math.floor(self.proportion * n + 1e-9)
        if 2 * o >= n and o > 0:
            raise ConfigError(f"{o} outliers out of {n} is not a minority", key="proportion")
        return int(o)

    def to_dict(self) -> dict:
        out = {"proportion": self.proportion, "magnitude": self.magnitude, "strategy": self.strategy}
        if self.direction is not None:
            out["direction"] = list(self.direction)
        if self.count is not None:
            out["count"] = self.count
        return out


CLEAN = ContaminationSpec(0.0)


def default_beta_star(p: int) -> np.ndarray:
    """Unit-norm coefficient vector ``(1, ..., 1) / sqrt(p)``."""
    return np.ones(p) / math.sqrt(p)


def sample_design(rng: np.random.Generator, n: int, p: int, design: str) -> np.ndarray:
    if design == "gaussian_isotropic":
        return rng.standard_normal((n, p))
    if design == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(n, p))
    raise ConfigError(f"design must be one of {DESIGNS}", key="design")


def contaminate(rng, X, beta_star, spec: ContaminationSpec) -> np.ndarray:
    """Shift vector ``theta`` (zero off the chosen rows)."""
    n = X.shape[0]
    o = spec.n_outliers(n)
    theta = np.zeros(n)
    if o == 0:
        return theta
    if spec.strategy == "sign_aligned":
        if spec.direction is not None:
            u = np.asarray(spec.direction, dtype=float)
        elif np.linalg.norm(beta_star) > 0:
            u = beta_star
        else:
            u = np.eye(X.shape[1])[0]
        if u.shape != (X.shape[1],):
            raise ConfigError("direction must have length p", key="direction")
        u = u / np.linalg.norm(u)
        score = X @ u
        idx = np.argsort(-np.abs(score), kind="stable")[:o]
        theta[idx] = spec.magnitude * np.where(score[idx] >= 0, 1.0, -1.0)
    elif spec.strategy == "random_shift":
        idx = rng.choice(n, size=o, replace=False)
        theta[idx] = spec.magnitude * rng.choice(np.array([-1.0, 1.0]), size=o)
    else:
        idx = rng.choice(n, size=o, replace=False)
        theta[idx] = -2.0 * (X[idx] @ beta_star)
        # a zero fitted value would leave the row clean; nudge it so |O| = o
        theta[idx] = np.where(theta[idx] == 0.0, -np.finfo(float).tiny, theta[idx])
    return theta


def generate_dataset(n: int, beta_star, design: str = "gaussian_isotropic",
                     noise: NoiseSpec | None = None,
                     contamination: ContaminationSpec | None = None,
                     seed: int = 0):
    """Draw one dataset; returns ``(Dataset, TruthMeta)``.

    Random draws happen in a fixed order (design, then noise, then the
    adversary's choices), so datasets sharing a seed share ``X`` and ``xi``
    whatever the contamination.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    if n < 1 or beta_star.ndim != 1 or beta_star.size < 1:
        raise ConfigError("need n >= 1 and a non-empty beta_star", key="n")
    noise = noise or NoiseSpec()
    contamination = contamination or CLEAN
    rng = np.random.default_rng(seed)
    X = sample_design(rng, n, beta_star.size, design)
    xi = noise.sample(rng, n)
    theta = contaminate(rng, X, beta_star, contamination)
    y = X @ beta_star + theta + xi
    truth = TruthMeta(beta_star=beta_star, outlier_indices=np.flatnonzero(theta),
                      theta=theta, noise=xi)
    return Dataset(X, y), truth


def predicted_augmented_count(n: int, o: int, noise: NoiseSpec, tau: float) -> tuple[float, float]:
    """Expected size of the augmented outlier set and its binomial standard deviation.

    Clean rows join the set when ``|xi| >= 1/sqrt(2 tau)``.
    """
    prob = noise.tail_prob(1.0 / math.sqrt(2.0 * tau))
    clean = n - o
    return o + clean * prob, math.sqrt(clean * prob * (1.0 - prob))
