"""Unconstrained smooth minimization: L-BFGS, gradient descent, finite differences."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, LineSearchError, OptimizationError

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

STATUSES = ("converged_grad", "converged_step", "max_iters", "line_search_failure")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "lbfgs"
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-8
    step_tol: float = 1e-12
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    gd_step: float = 0.1
    max_bisections: int = 60
    record_path: bool = False

    def __post_init__(self):
        if self.method not in ("lbfgs", "gradient_descent"):
            raise ConfigError(f"unknown optimizer method {self.method!r}", key="method")
        if self.memory < 1:
            raise ConfigError("memory must be >= 1", key="memory")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1", key="max_iters")
        for name in ("grad_tol", "step_tol", "gd_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive", key=name)
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ConfigError("need 0 < wolfe_c1 < wolfe_c2 < 1", key="wolfe_c1")

    def replace(self, **changes) -> "OptimizerConfig":
        return OptimizerConfig(**{**asdict(self), **changes})


@dataclass
class OptimTrace:
    """Per-iteration record of a minimization run."""

    iterations: list = field(default_factory=list)
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    path: list = field(default_factory=list)
    status: str = "max_iters"

    def record(self, k, value, gnorm, x=None):
        self.iterations.append(k)
        self.values.append(float(value))
        self.grad_norms.append(float(gnorm))
        if x is not None:
            self.path.append(np.array(x, copy=True))

    def __len__(self):
        return len(self.iterations)

    @property
    def n_iter(self) -> int:
        return self.iterations[-1] if self.iterations else 0


def _evaluate(objective, x):
    value, grad = objective(x)
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        return None
    return value, grad


def _line_search(objective, x, d, f0, g0, c1, c2, max_bisections, step=1.0, strict=True):
    """Strong Wolfe search (bracketing, then bisection zoom).

    Returns ``(step, f, g)``. With ``strict=False`` a step meeting the
    approximate Wolfe conditions (decrease within roundoff of ``f0`` and a
    bounded directional derivative) is also accepted, which keeps the search
    usable once objective changes reach machine precision.
    """
    slope0 = float(g0 @ d)
    if not slope0 < 0:
        raise DomainError("line search direction is not a descent direction")
    eps_f = 1e-12 * abs(f0) + 1e-300

    def phi(t):
        ev = _evaluate(objective, x + t * d)
        if ev is None:
            raise OptimizationError("non-finite objective during line search", best=x)
        f_t, g_t = ev
        return f_t, g_t, float(g_t @ d)

    def approx_ok(f_t, slope_t):
        return (not strict and f_t <= f0 + eps_f
                and c2 * slope0 <= slope_t <= -(1.0 - 2.0 * c1) * slope0)

    lo, f_lo, g_lo = 0.0, f0, g0
    hi = None
    t = step
    for _ in range(60):
        f_t, g_t, slope_t = phi(t)
        if approx_ok(f_t, slope_t):
            return t, f_t, g_t
        if f_t > f0 + c1 * t * slope0 or (f_t >= f_lo and lo > 0):
            hi = t
            break
        if abs(slope_t) <= -c2 * slope0:
            return t, f_t, g_t
        if slope_t >= 0:
            hi, lo, f_lo, g_lo = lo, t, f_t, g_t
            break
        lo, f_lo, g_lo = t, f_t, g_t
        t *= 2.0
    else:
        raise LineSearchError("line search failed to bracket a step", best=x)

    for _ in range(max_bisections):
        t = 0.5 * (lo + hi)
        f_t, g_t, slope_t = phi(t)
        if approx_ok(f_t, slope_t):
            return t, f_t, g_t
        if f_t > f0 + c1 * t * slope0 or f_t >= f_lo:
            hi = t
            continue
        if abs(slope_t) <= -c2 * slope0:
            return t, f_t, g_t
        if slope_t * (hi - lo) >= 0:
            hi = lo
        lo, f_lo, g_lo = t, f_t, g_t
    if not strict and lo > 0 and f_lo < f0:
        # sufficient decrease holds, curvature condition unmet
        return lo, f_lo, g_lo
    raise LineSearchError("bisection budget exhausted", best=x)


def wolfe_line_search(objective: Objective, point, direction, c1=1e-4, c2=0.9,
                      max_bisections=60, initial_step=1.0) -> float:
    """Step length along ``direction`` meeting the strong Wolfe conditions.

    Raises ``DomainError`` when ``direction`` is not a descent direction and
    ``LineSearchError`` when the bisection budget is exhausted.
    """
    x = np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)
    ev = _evaluate(objective, x)
    if ev is None:
        raise OptimizationError("non-finite objective at line-search origin", best=x)
    f0, g0 = ev
    t, _, _ = _line_search(objective, x, d, f0, g0, c1, c2, max_bisections, initial_step)
    return t


def lbfgs_direction(grad, s_hist, y_hist):
    """Two-loop recursion: ``-H g`` with the implicit L-BFGS inverse Hessian.

    With empty history this is plain steepest descent ``-g``.
    """
    q = np.array(grad, dtype=float, copy=True)
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        a = (s @ q) / (y @ s)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = (y @ q) / (y @ s)
        q += (a - b) * s
    return -q


def minimize(objective: Objective, init, config: OptimizerConfig | None = None):
    """Minimize ``objective`` (returning value and gradient) from ``init``.

    Returns ``(x, trace)``. The returned point never has a larger objective
    than ``init``; ``trace.status`` records why the run stopped.
    """
    cfg = config or OptimizerConfig()
    x = np.array(init, dtype=float, copy=True)
    x0 = x.copy()
    ev = _evaluate(objective, x)
    trace = OptimTrace()
    if ev is None:
        raise OptimizationError("objective is not finite at the initial point", best=x, trace=trace)
    f, g = ev
    gnorm = float(np.linalg.norm(g))
    trace.record(0, f, gnorm, x if cfg.record_path else None)

    s_hist: list = []
    y_hist: list = []
    eta = cfg.gd_step
    status = "max_iters"
    for k in range(1, cfg.max_iters + 1):
        if gnorm <= cfg.grad_tol:
            status = "converged_grad"
            break
        if cfg.method == "lbfgs":
            d = lbfgs_direction(g, s_hist, y_hist)
            if not g @ d < 0:
                s_hist.clear()
                y_hist.clear()
                d = -g
            try:
                t, f_new, g_new = _line_search(
                    objective, x, d, f, g, cfg.wolfe_c1, cfg.wolfe_c2, cfg.max_bisections,
                    strict=False,
                )
            except LineSearchError:
                status = "line_search_failure"
                break
            except OptimizationError as exc:
                exc.best, exc.trace = x, trace
                raise
            x_new = x + t * d
        else:
            for _ in range(cfg.max_bisections):
                x_new = x - eta * g
                ev = _evaluate(objective, x_new)
                if ev is None:
                    raise OptimizationError("non-finite objective", best=x, trace=trace)
                f_new, g_new = ev
                if f_new <= f:
                    break
                eta *= 0.5
            else:
                status = "line_search_failure"
                break
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        trace.record(k, f, gnorm, x if cfg.record_path else None)
        if np.linalg.norm(s) <= cfg.step_tol:
            status = "converged_grad" if gnorm <= cfg.grad_tol else "converged_step"
            break
    else:
        if gnorm <= cfg.grad_tol:
            status = "converged_grad"
    trace.status = status
    if f > trace.values[0]:
        # only reachable through roundoff-level approximate-Wolfe steps
        x = x0
    return x, trace


def finite_diff_gradient(objective, point, h=1e-6):
    """Central-difference gradient of ``objective`` at ``point``.

    ``objective`` may return a scalar or a ``(value, grad)`` pair.
    """
    if not h > 0:
        raise DomainError("finite-difference step must be positive")
    x = np.asarray(point, dtype=float)

    def value(z):
        out = objective(z)
        v = float(out[0] if isinstance(out, tuple) else out)
        if not np.isfinite(v):
            raise DomainError("non-finite objective value in finite differences")
        return v

    grad = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (value(x + e) - value(x - e)) / (2.0 * h)
    return grad
