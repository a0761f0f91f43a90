"""Regression estimators.

``fit_two_stage`` is the main entry point: a few IRLS steps towards the
least-absolute-deviation fit (stopping once the median absolute residual
drops below ``algorithm1_c``), followed by a full minimization of the
Welsch objective started from that point. OLS, LAD, quantile regression
and Huber/Tukey/Hampel M-estimators are provided as comparators and share
the same first stage.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np

from .dataset import Dataset
from .diagnostics import basin_indicator_fraction
from .errors import ConfigError, DegenerateDataError, SingularityError
from .losses import LossSpec, psi, rho
from .optim import OptimizerConfig, OptimTrace, minimize

SCALE_MODES = ("fixed_unit", "mad_of_lad_residuals")
MAD_CONSISTENCY = 1.4826


@dataclass(frozen=True)
class FitConfig:
    """Inputs of the two-stage procedure.

    ``algorithm1_c`` is the median-absolute-residual threshold that ends the
    LAD stage, in units of the (unit-variance) noise. ``scale_mode`` decides
    whether residuals are used as is (simulations) or divided by the MAD
    scale of the LAD residuals (real data).
    """

    loss: LossSpec = field(default_factory=lambda: LossSpec.welsch(1.0))
    algorithm1_c: float = 1.0
    lad_max_iters: int = 100
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    scale_mode: str = "fixed_unit"

    def __post_init__(self):
        if not self.algorithm1_c > 0:
            raise ConfigError("algorithm1_c must be positive", key="algorithm1_c")
        if self.lad_max_iters < 1:
            raise ConfigError("lad_max_iters must be >= 1", key="lad_max_iters")
        if self.scale_mode not in SCALE_MODES:
            raise ConfigError(f"scale_mode must be one of {SCALE_MODES}", key="scale_mode")

    def with_loss(self, loss: LossSpec) -> "FitConfig":
        return FitConfig(loss, self.algorithm1_c, self.lad_max_iters, self.optimizer, self.scale_mode)

    def to_dict(self) -> dict:
        return {
            "loss": self.loss.to_dict(),
            "algorithm1_c": self.algorithm1_c,
            "lad_max_iters": self.lad_max_iters,
            "optimizer": asdict(self.optimizer),
            "scale_mode": self.scale_mode,
        }


@dataclass
class FitResult:
    beta: np.ndarray
    scale: float
    objective: float
    stage1_iters: int
    stage2_iters: int
    basin_fraction: float
    trace: OptimTrace
    status: str
    loss: LossSpec
    beta_init: np.ndarray | None = None
    basin_fraction_init: float = float("nan")
    warnings: tuple = ()

    @property
    def converged(self) -> bool:
        return self.status.startswith("converged")


class Stage1(NamedTuple):
    beta: np.ndarray
    iters: int
    scale: float
    criterion_met: bool


# ---------------------------------------------------------------- objectives


def welsch_objective(data: Dataset, beta, tau: float, scale: float = 1.0):
    """Welsch objective ``(1/(tau n)) sum (1 - exp(-tau r_i^2 / 2))`` and its gradient.

    Residuals are divided by ``scale`` before entering the loss.
    """
    r = data.residuals(beta) / scale
    w = np.exp(-0.5 * tau * r**2)
    value = -np.sum(np.expm1(-0.5 * tau * r**2)) / (tau * data.n)
    grad = -(data.X.T @ (r * w)) / (data.n * scale)
    return value, grad


def m_objective(data: Dataset, spec: LossSpec, scale: float = 1.0):
    """Callable returning ``(mean rho(r / scale), gradient)`` for a smooth family."""
    if spec.family == "welsch":
        tau = spec["tau"]
        return lambda beta: welsch_objective(data, beta, tau, scale)

    def objective(beta):
        r = data.residuals(beta) / scale
        value = float(np.mean(rho(spec, r)))
        grad = -(data.X.T @ psi(spec, r)) / (data.n * scale)
        return value, grad

    return objective


def _objective_value(data, spec, beta, scale):
    r = data.residuals(beta) / scale
    return float(np.mean(rho(spec, r)))


# ---------------------------------------------------------------- OLS / LAD


def fit_ols(data: Dataset) -> np.ndarray:
    """Least-squares coefficients; raises ``SingularityError`` when rank(X) < p."""
    beta, _, rank, _ = np.linalg.lstsq(data.X, data.y, rcond=None)
    if rank < data.p:
        raise SingularityError(f"design has rank {rank} < p = {data.p}")
    return beta


def _irls_floor(y) -> float:
    spread = MAD_CONSISTENCY * np.median(np.abs(y - np.median(y)))
    if spread <= 0:
        spread = np.std(y)
    return 1e-8 * (spread if spread > 0 else 1.0)


def _check_loss(r, q):
    return float(np.sum(r * (q - (r < 0))))


def _irls_step(X, y, beta, q, eps, iteration):
    r = y - X @ beta
    w = np.where(r >= 0, q, 1.0 - q) / np.maximum(np.abs(r), eps)
    sw = np.sqrt(w)
    new, _, rank, _ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    if rank < X.shape[1]:
        raise SingularityError(f"weighted normal equations singular at IRLS iteration {iteration}")
    return new


def _line_min_check(r, a, q):
    """Minimize ``t -> sum rho_q(r_i - t a_i)`` exactly (weighted quantile of breakpoints)."""
    keep = a != 0
    r, a = r[keep], a[keep]
    t = r / a
    w = np.abs(a)
    qi = np.where(a > 0, q, 1.0 - q)
    order = np.argsort(t, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, np.sum(w * qi)))
    return float(t[order[min(k, t.size - 1)]])


def _polish_vertex(X, y, beta, q, max_steps=100):
    """Exact check-loss minimum by descent along the edges of the current vertex.

    Starts from the basic solution through the ``p`` smallest residuals and
    line-minimizes along each edge until no edge improves the objective.
    """
    n, p = X.shape
    if n <= p:
        return beta
    best = beta
    best_val = _check_loss(y - X @ beta, q)
    idx = np.argsort(np.abs(y - X @ beta), kind="stable")[:p]
    try:
        cur = np.linalg.solve(X[idx], y[idx])
    except np.linalg.LinAlgError:
        return beta
    cur_val = _check_loss(y - X @ cur, q)
    for _ in range(max_steps):
        r = y - X @ cur
        try:
            edges = np.linalg.inv(X[idx])
        except np.linalg.LinAlgError:
            break
        step = None
        for j in range(p):
            d = edges[:, j]
            t = _line_min_check(r, X @ d, q)
            cand = cur + t * d
            val = _check_loss(y - X @ cand, q)
            if val < cur_val - 1e-12 * (1.0 + abs(cur_val)) and (step is None or val < step[1]):
                step = (cand, val)
        if step is None:
            break
        cur, cur_val = step
        idx = np.argsort(np.abs(y - X @ cur), kind="stable")[:p]
    if cur_val <= best_val:
        return cur
    return best


def fit_lad(data: Dataset, init=None, c: float = 1.0, max_iters: int = 100,
            tol: float = 1e-10):
    """IRLS steps towards the LAD fit until ``median |r| < c``.

    Each step solves a weighted least-squares problem with weights
    ``1 / max(|r_i|, eps)``, ``eps = 1e-8 * scale(y)``. Iteration also stops
    when the coefficients stop moving (relative change below ``tol``) or
    after ``max_iters`` steps. Returns ``(beta, n_steps)``.
    """
    X, y = data.X, data.y
    beta = np.zeros(data.p) if init is None else np.array(init, dtype=float)
    eps = _irls_floor(y)
    k = 0
    while k < max_iters and np.median(np.abs(y - X @ beta)) >= c:
        new = _irls_step(X, y, beta, 0.5, eps, k + 1)
        k += 1
        moved = np.linalg.norm(new - beta)
        beta = new
        if moved <= tol * (1.0 + np.linalg.norm(beta)):
            break
    return beta, k


def solve_check_loss(data: Dataset, q: float = 0.5, init=None, max_iters: int = 500,
                     tol: float = 1e-6):
    """Quantile-regression (``q = 0.5``: LAD) fit by smoothed IRLS plus a vertex polish.

    Returns ``(beta, n_steps)``.
    """
    X, y = data.X, data.y
    beta = np.zeros(data.p) if init is None else np.array(init, dtype=float)
    eps = _irls_floor(y)
    k = 0
    while k < max_iters:
        new = _irls_step(X, y, beta, q, eps, k + 1)
        k += 1
        moved = np.linalg.norm(new - beta)
        beta = new
        if moved <= tol * (1.0 + np.linalg.norm(beta)):
            break
    return _polish_vertex(X, y, beta, q), k


def estimate_scale(residuals) -> float:
    """``1.4826 * MAD``; falls back to the standard deviation when the MAD is zero."""
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise DegenerateDataError("scale estimation needs at least two residuals")
    mad = np.median(np.abs(r - np.median(r)))
    if mad > 0:
        return float(MAD_CONSISTENCY * mad)
    sd = float(np.std(r, ddof=1))
    if sd > 0:
        return sd
    raise DegenerateDataError("all residuals are identical")


# ---------------------------------------------------------------- M-estimators


def _result(data, spec, beta, scale, trace, stage1_iters=0, beta_init=None, warn=()):
    tau = spec["tau"] if spec.family == "welsch" else None
    basin = float("nan") if tau is None else basin_indicator_fraction(data, beta, tau, scale)
    basin0 = float("nan")
    if tau is not None and beta_init is not None:
        basin0 = basin_indicator_fraction(data, beta_init, tau, scale)
    return FitResult(
        beta=beta,
        scale=scale,
        objective=_objective_value(data, spec, beta, scale),
        stage1_iters=stage1_iters,
        stage2_iters=trace.n_iter,
        basin_fraction=basin,
        trace=trace,
        status=trace.status,
        loss=spec,
        beta_init=beta_init,
        basin_fraction_init=basin0,
        warnings=tuple(warn),
    )


def fit_welsch(data: Dataset, tau: float, init=None, opt: OptimizerConfig | None = None,
               scale: float = 1.0) -> FitResult:
    """Minimize the Welsch objective from ``init`` (zero vector by default)."""
    if not tau > 0:
        raise ConfigError("tau must be positive", key="tau")
    return fit_m_estimator(data, LossSpec.welsch(tau), init, opt, scale)


def _static_trace(value, status, iters):
    trace = OptimTrace()
    trace.record(0, value, float("nan"))
    if iters:
        trace.record(iters, value, float("nan"))
    trace.status = status
    return trace


def fit_m_estimator(data: Dataset, spec: LossSpec, init=None,
                    opt: OptimizerConfig | None = None, scale: float = 1.0) -> FitResult:
    """M-estimate for any loss family.

    Smooth families go through :func:`~welschreg.optim.minimize`; absolute and
    pinball losses use smoothed IRLS, and squared loss is solved directly.
    """
    init = np.zeros(data.p) if init is None else np.array(init, dtype=float)
    if spec.family == "squared":
        beta = fit_ols(data)
        trace = _static_trace(_objective_value(data, spec, beta, scale), "converged_grad", 0)
        return _result(data, spec, beta, scale, trace, beta_init=init)
    if spec.family in ("absolute", "pinball"):
        q = spec["q"] if spec.family == "pinball" else 0.5
        max_iters = 500 if opt is None else max(opt.max_iters, 1)
        beta, k = solve_check_loss(data, q, init, max_iters=max_iters)
        status = "converged_step" if k < max_iters else "max_iters"
        trace = _static_trace(_objective_value(data, spec, beta, scale), status, k)
        return _result(data, spec, beta, scale, trace, beta_init=init)
    beta, trace = minimize(m_objective(data, spec, scale), init, opt or OptimizerConfig())
    return _result(data, spec, beta, scale, trace, beta_init=init)


def run_stage1(data: Dataset, cfg: FitConfig) -> Stage1:
    """LAD warm start for :func:`fit_two_stage`."""
    if cfg.scale_mode == "fixed_unit":
        beta, k = fit_lad(data, np.zeros(data.p), cfg.algorithm1_c, cfg.lad_max_iters)
        met = bool(np.median(np.abs(data.residuals(beta))) < cfg.algorithm1_c)
        return Stage1(beta, k, 1.0, met)
    # residual units are unknown until the LAD fit exists, so run it to completion
    beta, k = solve_check_loss(data, 0.5, max_iters=cfg.lad_max_iters)
    return Stage1(beta, k, estimate_scale(data.residuals(beta)), True)


def fit_two_stage(data: Dataset, cfg: FitConfig, stage1: Stage1 | None = None) -> FitResult:
    """LAD warm start followed by the M-estimation stage for ``cfg.loss``.

    ``stage1`` may carry a precomputed warm start (see :func:`run_stage1`)
    so several estimators can share it.
    """
    if data.n <= data.p:
        raise DegenerateDataError(f"need n > p (n = {data.n}, p = {data.p})")
    if cfg.loss.family == "squared":
        return fit_m_estimator(data, cfg.loss)
    s1 = stage1 if stage1 is not None else run_stage1(data, cfg)
    warn = ()
    if not s1.criterion_met:
        warnings.warn(
            f"LAD stage stopped after {s1.iters} steps with median |r| >= {cfg.algorithm1_c}",
            RuntimeWarning, stacklevel=2,
        )
        warn = ("stage1_criterion_unmet",)
    res = fit_m_estimator(data, cfg.loss, s1.beta, cfg.optimizer, s1.scale)
    res.stage1_iters = s1.iters
    res.warnings = warn
    return res
