"""Loss functions, influence functions, IRLS weights and curvatures.

Every function accepts a scalar or an array of residuals and returns an
object of the same shape. Supported families::

    welsch   rho(x) = (1 - exp(-tau x^2 / 2)) / tau
    huber    quadratic on [-gamma, gamma], linear outside
    tukey    biweight, constant c^2/6 beyond |x| = c
    hampel   three-part redescender with corners a <= b <= r
    pinball  check loss u (q - 1{u < 0})
    absolute |x|
    squared  x^2 / 2
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError

FAMILIES = ("welsch", "huber", "tukey", "hampel", "pinball", "absolute", "squared")
SYMMETRIC = ("welsch", "huber", "tukey", "hampel", "absolute", "squared")
REDESCENDING = ("welsch", "tukey", "hampel")
SMOOTH = ("welsch", "huber", "tukey", "hampel", "squared")

DEFAULTS: dict[str, dict[str, float]] = {
    "welsch": {"tau": 1.0},
    "huber": {"gamma": 1.0},
    "tukey": {"c": 4.685},
    "hampel": {"a": 2.0, "b": 4.0, "r": 8.0},
    "pinball": {"q": 0.5},
    "absolute": {},
    "squared": {},
}

# name of the parameter swept by cross-validation
TUNING_PARAM = {"welsch": "tau", "huber": "gamma", "tukey": "c", "hampel": "a"}


@dataclass(frozen=True)
class LossSpec:
    """A loss family together with its tuning constants.

    Missing constants are filled from :data:`DEFAULTS`. Use the
    classmethod constructors for readability::

        LossSpec.welsch(tau=0.1)
        LossSpec.hampel(2, 4, 8)
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown loss family {self.family!r}", key="loss")
        unknown = set(self.params) - set(DEFAULTS[self.family])
        if unknown:
            raise ConfigError(
                f"unknown parameter(s) {sorted(unknown)} for {self.family}", key="loss"
            )
        merged = {**DEFAULTS[self.family], **{k: float(v) for k, v in self.params.items()}}
        object.__setattr__(self, "params", merged)
        for name, value in merged.items():
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{self.family}.{name} must be a positive real", key=name)
        if self.family == "hampel" and not merged["a"] <= merged["b"] <= merged["r"]:
            raise ConfigError("hampel requires a <= b <= r", key="hampel")
        if self.family == "pinball" and not 0.0 < merged["q"] < 1.0:
            raise ConfigError("pinball.q must lie strictly inside (0, 1)", key="q")

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    @classmethod
    def welsch(cls, tau: float = 1.0) -> "LossSpec":
        return cls("welsch", {"tau": tau})

    @classmethod
    def huber(cls, gamma: float = 1.0) -> "LossSpec":
        return cls("huber", {"gamma": gamma})

    @classmethod
    def tukey(cls, c: float = 4.685) -> "LossSpec":
        return cls("tukey", {"c": c})

    @classmethod
    def hampel(cls, a: float = 2.0, b: float = 4.0, r: float = 8.0) -> "LossSpec":
        return cls("hampel", {"a": a, "b": b, "r": r})

    @classmethod
    def pinball(cls, q: float = 0.5) -> "LossSpec":
        return cls("pinball", {"q": q})

    @classmethod
    def absolute(cls) -> "LossSpec":
        return cls("absolute")

    @classmethod
    def squared(cls) -> "LossSpec":
        return cls("squared")

    @property
    def smooth(self) -> bool:
        return self.family in SMOOTH

    @property
    def tuning_value(self) -> float | None:
        name = TUNING_PARAM.get(self.family)
        return None if name is None else self.params[name]

    def tuned(self, value: float) -> "LossSpec":
        """Copy with the family's tuning parameter set to ``value``.

        For Hampel the corners keep their ratios, so ``value`` sets ``a``
        and ``b``, ``r`` scale along with it.
        """
        if self.family not in TUNING_PARAM:
            raise ConfigError(f"{self.family} has no tuning parameter", key="loss")
        if self.family == "hampel":
            k = value / self.params["a"]
            return LossSpec("hampel", {n: v * k for n, v in self.params.items()})
        return LossSpec(self.family, {TUNING_PARAM[self.family]: value})

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}


def _check(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("loss functions require finite arguments")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def rho(spec: LossSpec, x):
    """Loss value; ``rho(spec, 0) == 0`` for every family."""
    arr = _check(x)
    f, p = spec.family, spec.params
    ax = np.abs(arr)
    if f == "welsch":
        tau = p["tau"]
        out = -np.expm1(-0.5 * tau * arr**2) / tau
    elif f == "huber":
        g = p["gamma"]
        out = np.where(ax <= g, 0.5 * arr**2, g * ax - 0.5 * g**2)
    elif f == "tukey":
        c = p["c"]
        u2 = np.minimum(ax / c, 1.0) ** 2
        out = c**2 / 6.0 * (1.0 - (1.0 - u2) ** 3)
    elif f == "hampel":
        a, b, r = p["a"], p["b"], p["r"]
        flat = a * b - 0.5 * a**2
        span = r - b
        if span > 0:
            t = np.clip((r - ax) / span, 0.0, 1.0)
            tail = flat + 0.5 * a * span * (1.0 - t**2)
        else:
            tail = np.full_like(ax, flat)
        out = np.where(
            ax <= a, 0.5 * arr**2, np.where(ax <= b, a * ax - 0.5 * a**2, tail)
        )
    elif f == "pinball":
        q = p["q"]
        out = arr * (q - (arr < 0))
    elif f == "absolute":
        out = ax
    else:
        out = 0.5 * arr**2
    return _out(out, x)


def psi(spec: LossSpec, x):
    """First derivative of :func:`rho`.

    At kinks (Huber ``|x| = gamma``, pinball and absolute at 0, Hampel
    corners) the average of the one-sided derivatives is returned.
    """
    arr = _check(x)
    f, p = spec.family, spec.params
    ax, s = np.abs(arr), np.sign(arr)
    if f == "welsch":
        out = arr * np.exp(-0.5 * p["tau"] * arr**2)
    elif f == "huber":
        out = np.clip(arr, -p["gamma"], p["gamma"])
    elif f == "tukey":
        c = p["c"]
        out = np.where(ax < c, arr * (1.0 - (arr / c) ** 2) ** 2, 0.0)
    elif f == "hampel":
        a, b, r = p["a"], p["b"], p["r"]
        if r > b:
            desc = a * s * np.clip((r - ax) / (r - b), 0.0, 1.0)
        else:
            desc = np.where(ax == r, 0.5 * a * s, 0.0)
        out = np.where(ax <= a, arr, np.where(ax <= b, a * s, desc))
        if r == b:
            out = np.where(ax == b, 0.5 * a * s, out)
    elif f == "pinball":
        q = p["q"]
        out = np.where(arr > 0, q, np.where(arr < 0, q - 1.0, q - 0.5))
    elif f == "absolute":
        out = s
    else:
        out = arr.copy()
    return _out(out, x)


def weight(spec: LossSpec, x):
    """IRLS weight ``psi(x) / x``, continuously extended by 1 at ``x = 0``.

    Welsch, Huber, Tukey, Hampel and squared weights lie in ``[0, 1]``.
    Absolute and pinball weights grow like ``1/|x|`` near zero; their IRLS
    solvers floor ``|x|`` instead of calling this function.
    """
    arr = _check(x)
    if spec.family == "welsch":
        return _out(np.exp(-0.5 * spec.params["tau"] * arr**2), x)
    ps = np.asarray(psi(spec, arr))
    nz = arr != 0
    out = np.ones_like(arr)
    out[nz] = ps[nz] / arr[nz]
    return _out(out, x)


def curvature(spec: LossSpec, x):
    """Second derivative of :func:`rho` (one-sided average at kinks)."""
    arr = _check(x)
    f, p = spec.family, spec.params
    ax = np.abs(arr)
    if f == "welsch":
        tau = p["tau"]
        out = np.exp(-0.5 * tau * arr**2) * (1.0 - tau * arr**2)
    elif f == "huber":
        g = p["gamma"]
        out = np.where(ax < g, 1.0, np.where(ax > g, 0.0, 0.5))
    elif f == "tukey":
        u2 = (arr / p["c"]) ** 2
        out = np.where(u2 < 1.0, (1.0 - u2) * (1.0 - 5.0 * u2), 0.0)
    elif f == "hampel":
        a, b, r = p["a"], p["b"], p["r"]
        slope = -a / (r - b) if r > b else 0.0
        out = np.select(
            [ax < a, ax == a, ax < b, ax == b, ax < r, ax == r],
            [1.0, 0.5 if a < b else 0.5 * (1.0 + slope), 0.0, 0.5 * slope, slope, 0.5 * slope],
            0.0,
        )
    elif f in ("pinball", "absolute"):
        out = np.zeros_like(arr)
    else:
        out = np.ones_like(arr)
    return _out(out, x)
