"""Monte Carlo replicate runner and the named desk-scale experiment presets.

A replicate draws one dataset per (n, contamination) sweep point from the
seed ``mix_seed(base_seed, replicate)`` and fits every estimator on it.
Because the seed does not depend on the sweep point, datasets at
different contamination levels share their design and noise (matched
seeds). Rows are sorted after collection, so serial and parallel runs
produce identical reports.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from ._version import __version__
from .dataset import Dataset
from .diagnostics import TAU_MODES, hessian_min_eigenvalue, theoretical_tau
from .errors import ConfigError, WelschRegError
from .estimators import FitConfig, fit_two_stage, m_objective, run_stage1, solve_check_loss
from .losses import LossSpec
from .optim import OptimizerConfig, minimize
from .simulation import (
    CLEAN, DESIGNS, ContaminationSpec, NoiseSpec, default_beta_star, generate_dataset, mix_seed,
)

KINDS = ("bias_curve", "mse_distribution", "convergence_trace", "rate_curve", "normality")
TAU_RULES = ("fixed",) + TAU_MODES
DEFAULT_SEED = 20240917


@dataclass(frozen=True)
class EstimatorSpec:
    """A named estimator: a fit configuration plus the rule that sets Welsch's ``tau``.

    ``tau_rule`` is ``fixed`` (use the loss parameter as given) or one of
    the :func:`~welschreg.diagnostics.theoretical_tau` modes, evaluated per
    dataset with the true outlier count.
    """

    name: str
    config: FitConfig = field(default_factory=FitConfig)
    tau_rule: str = "fixed"
    tau_C: float = 1.0
    delta: float = 0.01
    ell: float = 2.0

    def __post_init__(self):
        if not self.name:
            raise ConfigError("estimator name must be non-empty", key="estimators.name")
        if self.tau_rule not in TAU_RULES:
            raise ConfigError(f"tau_rule must be one of {TAU_RULES}", key="estimators.tau_rule")
        if self.tau_rule != "fixed" and self.config.loss.family != "welsch":
            raise ConfigError("tau rules apply to the welsch loss only", key="estimators.tau_rule")

    def resolve(self, n: int, o: int) -> FitConfig:
        if self.tau_rule == "fixed":
            return self.config
        tau = theoretical_tau(n, o, self.delta, self.ell, self.tau_C, self.tau_rule)
        return self.config.with_loss(LossSpec.welsch(tau))

    def to_dict(self) -> dict:
        out = {"name": self.name, **self.config.to_dict(), "tau_rule": self.tau_rule}
        if self.tau_rule != "fixed":
            out.update(tau_C=self.tau_C, delta=self.delta, ell=self.ell)
        return out


def estimator(name: str, family: str | None = None, tau_rule: str | None = None,
              **params) -> EstimatorSpec:
    """Shorthand: ``estimator("welsch")`` uses the ``prop2`` rule, others fixed constants.

    Known names without an explicit family: ``welsch``, ``huber``, ``tukey``,
    ``hampel``, ``lad``/``quantile`` (pinball), ``ols``. Unset constants take
    the loss defaults.
    """
    family = family or {"lad": "pinball", "quantile": "pinball", "ols": "squared"}.get(name, name)
    if tau_rule is None:
        tau_rule = "prop2" if family == "welsch" and "tau" not in params else "fixed"
    loss = LossSpec(family, params)
    return EstimatorSpec(name, FitConfig(loss=loss), tau_rule)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one Monte Carlo experiment."""

    kind: str
    n: tuple
    p: int
    estimators: tuple
    replicates: int
    base_seed: int = DEFAULT_SEED
    beta_star: tuple | None = None
    design: str = "gaussian_isotropic"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    contamination: tuple = (CLEAN,)
    trace_iters: int = 100
    trace_step: float = 0.5

    def __post_init__(self):
        n = (self.n,) if isinstance(self.n, (int, np.integer)) else tuple(self.n)
        object.__setattr__(self, "n", tuple(int(v) for v in n))
        cont = self.contamination
        cont = (cont,) if isinstance(cont, ContaminationSpec) else tuple(cont)
        object.__setattr__(self, "contamination", cont)
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.kind not in KINDS:
            raise ConfigError(f"experiment kind must be one of {KINDS}", key="kind")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1", key="replicates")
        if self.p < 1 or not self.n or min(self.n) <= self.p:
            raise ConfigError("need p >= 1 and every n > p", key="n")
        if not self.estimators:
            raise ConfigError("at least one estimator is required", key="estimators")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ConfigError("estimator names must be unique", key="estimators")
        if not cont:
            raise ConfigError("contamination sweep must be non-empty", key="contamination")
        if self.design not in DESIGNS:
            raise ConfigError(f"design must be one of {DESIGNS}", key="design")
        if self.beta_star is not None:
            object.__setattr__(self, "beta_star", tuple(float(v) for v in self.beta_star))
            if len(self.beta_star) != self.p:
                raise ConfigError("beta_star must have length p", key="beta_star")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed must be a 64-bit unsigned integer", key="base_seed")
        if self.trace_iters < 1 or not self.trace_step > 0:
            raise ConfigError("trace_iters and trace_step must be positive", key="trace_iters")
        for c in cont:
            for n_ in self.n:
                c.n_outliers(n_)

    @property
    def truth_beta(self) -> np.ndarray:
        if self.beta_star is None:
            return default_beta_star(self.p)
        return np.array(self.beta_star)

    def replace(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "n": list(self.n),
            "p": self.p,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "beta_star": [float(v) for v in self.truth_beta],
            "design": self.design,
            "noise": self.noise.to_dict(),
            "contamination": [c.to_dict() for c in self.contamination],
            "estimators": [e.to_dict() for e in self.estimators],
        }
        if self.kind == "convergence_trace":
            out.update(trace_iters=self.trace_iters, trace_step=self.trace_step)
        return out


@dataclass
class Table:
    columns: tuple
    rows: list

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def where(self, **equal) -> "Table":
        idx = [self.columns.index(k) for k in equal]
        keep = [r for r in self.rows if all(r[j] == v for j, v in zip(idx, equal.values()))]
        return Table(self.columns, keep)


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: Table
    summary: Table
    provenance: dict


# ----------------------------------------------------------------- fitting


def _fit_columns(p):
    return ("n", "proportion", "replicate", "estimator", "status", "flags", "tau", "o",
            "err_l2", "sq_err", "stage1_iters", "stage2_iters", "basin_fraction",
            "basin_init") + tuple(f"err_{j}" for j in range(p))


TRACE_COLUMNS = ("n", "proportion", "replicate", "estimator", "iteration", "err_l2", "objective")


def _fit_rows(spec: ExperimentSpec, data: Dataset, truth, n, prop, r):
    rows = []
    stage1_cache = {}
    for est in sorted(spec.estimators, key=lambda e: e.name):
        nan_err = (math.nan,) * spec.p
        try:
            cfg = est.resolve(n, truth.o)
            key = (cfg.algorithm1_c, cfg.lad_max_iters, cfg.scale_mode)
            if key not in stage1_cache and cfg.loss.family != "squared":
                stage1_cache[key] = run_stage1(data, cfg)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = fit_two_stage(data, cfg, stage1_cache.get(key))
        except (WelschRegError, np.linalg.LinAlgError) as exc:
            rows.append((n, prop, r, est.name, f"failed:{type(exc).__name__}", "", math.nan,
                         truth.o, math.nan, math.nan, 0, 0, math.nan, math.nan) + nan_err)
            continue
        err = res.beta - truth.beta_star
        tau = cfg.loss["tau"] if cfg.loss.family == "welsch" else math.nan
        rows.append((n, prop, r, est.name, res.status, ";".join(res.warnings), tau, truth.o,
                     float(np.linalg.norm(err)), float(err @ err), res.stage1_iters,
                     res.stage2_iters, res.basin_fraction, res.basin_fraction_init)
                    + tuple(float(v) for v in err))
    return rows


def _trace_rows(spec: ExperimentSpec, data: Dataset, truth, n, prop, r):
    """Gradient-descent error paths from the exact LAD fit."""
    init, _ = solve_check_loss(data, 0.5)
    opt = OptimizerConfig(method="gradient_descent", max_iters=spec.trace_iters,
                          gd_step=spec.trace_step, grad_tol=1e-300, step_tol=1e-300,
                          record_path=True)
    rows = []
    for est in sorted(spec.estimators, key=lambda e: e.name):
        cfg = est.resolve(n, truth.o)
        objective = m_objective(data, cfg.loss, 1.0)
        _, trace = minimize(objective, init, opt)
        path, values = trace.path, trace.values
        # pad runs that stopped early so every trace has trace_iters + 1 points
        for k in range(spec.trace_iters + 1):
            j = min(k, len(path) - 1)
            err = float(np.linalg.norm(path[j] - truth.beta_star))
            rows.append((n, prop, r, est.name, k, err, values[j]))
    return rows


def _replicate(spec: ExperimentSpec, r: int) -> list:
    seed = mix_seed(spec.base_seed, r)
    beta = spec.truth_beta
    rows = []
    for n in spec.n:
        for cont in spec.contamination:
            data, truth = generate_dataset(n, beta, spec.design, spec.noise, cont, seed)
            prop = cont.proportion if cont.count is None else cont.count / n
            make = _trace_rows if spec.kind == "convergence_trace" else _fit_rows
            rows.extend(make(spec, data, truth, n, prop, r))
    return rows


def _sort_key(spec):
    if spec.kind == "convergence_trace":
        return lambda row: (row[0], row[1], row[2], row[3], row[4])
    return lambda row: (row[0], row[1], row[2], row[3])


def run_replicates(spec: ExperimentSpec, workers: int = 1) -> ExperimentReport:
    """Run every replicate of ``spec`` and summarize.

    Fit failures become rows with a ``failed:<error>`` status; they never
    abort the sweep. ``workers > 1`` spreads replicates over processes.
    """
    reps = range(spec.replicates)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_replicate, [spec] * spec.replicates, reps,
                                   chunksize=max(1, spec.replicates // (4 * workers))))
    else:
        chunks = [_replicate(spec, r) for r in reps]
    rows = sorted((row for chunk in chunks for row in chunk), key=_sort_key(spec))
    if spec.kind == "convergence_trace":
        table = Table(TRACE_COLUMNS, rows)
        summary = summarize_traces(table)
    else:
        table = Table(_fit_columns(spec.p), rows)
        summary = summarize_fits(table, spec.p)
    provenance = {
        "spec": spec.to_dict(),
        "base_seed": spec.base_seed,
        "seed_rule": "replicate seed = splitmix64(base_seed XOR replicate)",
        "version": __version__,
    }
    return ExperimentReport(spec, table, summary, provenance)


# ----------------------------------------------------------------- summaries

SUMMARY_COLUMNS = ("n", "proportion", "estimator", "count", "failures", "bias", "mean_err",
                   "median_err", "median_sq_err", "q10_sq_err", "q25_sq_err", "q75_sq_err",
                   "q90_sq_err")


def _groups(table: Table, keys):
    idx = [table.columns.index(k) for k in keys]
    groups: dict = {}
    for row in table.rows:
        groups.setdefault(tuple(row[j] for j in idx), []).append(row)
    return groups


def summarize_fits(table: Table, p: int) -> Table:
    """Per (n, proportion, estimator) aggregates; bias is ``||mean(beta_hat - beta*)||``."""
    cols = table.columns
    status, err_l2, sq = cols.index("status"), cols.index("err_l2"), cols.index("sq_err")
    first_err = cols.index("err_0")
    out = []
    for key, rows in sorted(_groups(table, ("n", "proportion", "estimator")).items()):
        ok = [row for row in rows if not row[status].startswith("failed")]
        if ok:
            errs = np.array([row[first_err:first_err + p] for row in ok], dtype=float)
            sqs = np.array([row[sq] for row in ok])
            l2 = np.array([row[err_l2] for row in ok])
            q = np.quantile(sqs, [0.1, 0.25, 0.75, 0.9])
            stats_ = (float(np.linalg.norm(errs.mean(axis=0))), float(l2.mean()),
                      float(np.median(l2)), float(np.median(sqs))) + tuple(float(v) for v in q)
        else:
            stats_ = (math.nan,) * 8
        out.append(key + (len(ok), len(rows) - len(ok)) + stats_)
    return Table(SUMMARY_COLUMNS, out)


def summarize_traces(table: Table) -> Table:
    """Mean and median error per (n, proportion, estimator, iteration) across replicates."""
    j = table.columns.index("err_l2")
    out = []
    for key, rows in sorted(_groups(table, ("n", "proportion", "estimator", "iteration")).items()):
        errs = np.array([row[j] for row in rows])
        out.append(key + (float(errs.mean()), float(np.median(errs))))
    return Table(("n", "proportion", "estimator", "iteration", "mean_err", "median_err"), out)


def _require(spec, kind):
    if spec.kind != kind:
        raise ConfigError(f"expected a {kind} experiment, got {spec.kind}", key="kind")


def bias_curve(spec: ExperimentSpec, workers: int = 1):
    """``(report, table)``: table rows ``(proportion, bias per estimator...)`` sorted by proportion."""
    _require(spec, "bias_curve")
    report = run_replicates(spec, workers)
    names = sorted(e.name for e in spec.estimators)
    s = report.summary
    table = []
    for prop in sorted(set(s.column("proportion"))):
        sub = s.where(proportion=prop)
        bias = dict(zip(sub.column("estimator"), sub.column("bias")))
        table.append((prop,) + tuple(bias[nm] for nm in names))
    return report, Table(("proportion",) + tuple(f"bias_{nm}" for nm in names), table)


def mse_distribution(spec: ExperimentSpec, workers: int = 1):
    """``(report, {(proportion, estimator): squared errors per replicate})``."""
    _require(spec, "mse_distribution")
    report = run_replicates(spec, workers)
    rows = report.rows
    out: dict = {}
    for prop, name, st, sq in zip(rows.column("proportion"), rows.column("estimator"),
                                  rows.column("status"), rows.column("sq_err")):
        if not st.startswith("failed"):
            out.setdefault((prop, name), []).append(sq)
    return report, {k: np.array(v) for k, v in out.items()}


def convergence_trace_experiment(spec: ExperimentSpec, workers: int = 1):
    """``(report, table)`` with rows ``(iteration, estimator, mean error)``."""
    _require(spec, "convergence_trace")
    report = run_replicates(spec, workers)
    s = report.summary
    rows = sorted(zip(s.column("iteration"), s.column("estimator"), s.column("mean_err")))
    return report, Table(("iteration", "estimator", "mean_err"), rows)


def rate_experiment(spec: ExperimentSpec, workers: int = 1):
    """``(report, table)`` with rows ``(n, estimator, median error)`` sorted by n."""
    _require(spec, "rate_curve")
    report = run_replicates(spec, workers)
    s = report.summary
    rows = sorted(zip(s.column("n"), s.column("estimator"), s.column("median_err")))
    return report, Table(("n", "estimator", "median_err"), rows)


@dataclass
class NormalitySummary:
    z: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray
    ks: np.ndarray


def normality_summary(report: ExperimentReport, estimator_name: str = "welsch") -> NormalitySummary:
    """Moments and KS distances of ``sqrt(n) (beta_hat - beta*)`` across replicates."""
    rows = report.rows.where(estimator=estimator_name)
    p = report.spec.p
    j = rows.columns.index("err_0")
    ok = [r for r in rows.rows if not r[rows.columns.index("status")].startswith("failed")]
    if not ok:
        raise ConfigError(f"no successful {estimator_name} fits in report", key="estimators")
    n = np.array([r[0] for r in ok], dtype=float)
    z = np.sqrt(n)[:, None] * np.array([r[j:j + p] for r in ok], dtype=float)
    cov = np.cov(z, rowvar=False, ddof=1).reshape(p, p)
    ks = np.array([stats.kstest(z[:, k], "norm").statistic for k in range(p)])
    return NormalitySummary(z, z.mean(axis=0), np.diag(cov).copy(), cov, ks)


def normality_experiment(n: int = 5000, p: int = 3, replicates: int = 1000,
                         base_seed: int = DEFAULT_SEED, noise: NoiseSpec | None = None,
                         workers: int = 1):
    """Clean-data Welsch fits with ``tau = log(n)/n``; returns ``(report, summary)``."""
    spec = ExperimentSpec(
        kind="normality", n=n, p=p, replicates=replicates, base_seed=base_seed,
        noise=noise or NoiseSpec("gaussian"), estimators=(estimator("welsch", tau_rule="asymptotic"),),
    )
    report = run_replicates(spec, workers)
    return report, normality_summary(report)


def basin_convexity_experiment(n: int = 500, p: int = 5, proportion: float = 0.05,
                               magnitude: float = 100.0, datasets: int = 100, points: int = 50,
                               radius: float = 0.5, base_seed: int = DEFAULT_SEED,
                               noise: NoiseSpec | None = None) -> np.ndarray:
    """Smallest Hessian eigenvalue at uniform points of the ball ``||beta - beta*|| <= radius``.

    ``tau`` follows the ``prop2`` rule with the true outlier count. Returns
    an array of shape ``(datasets, points)``.
    """
    beta = default_beta_star(p)
    cont = ContaminationSpec(proportion, magnitude)
    out = np.empty((datasets, points))
    for d in range(datasets):
        seed = mix_seed(base_seed, d)
        data, truth = generate_dataset(n, beta, "gaussian_isotropic", noise, cont, seed)
        tau = theoretical_tau(n, truth.o, 0.01, 2.0, 1.0, "prop2")
        rng = np.random.default_rng(mix_seed(seed, 0x5EED))
        u = rng.standard_normal((points, p))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        radii = radius * rng.random(points) ** (1.0 / p)
        for k in range(points):
            out[d, k] = hessian_min_eigenvalue(data, beta + radii[k] * u[k], tau)
    return out


# ----------------------------------------------------------------- presets


def _sign_aligned(prop, magnitude=100.0):
    return ContaminationSpec(prop, magnitude, "sign_aligned")


PRESETS = {
    "fig1a-desk": ExperimentSpec(
        kind="bias_curve", n=1000, p=5, replicates=500,
        contamination=tuple(_sign_aligned(q) for q in (0.02, 0.04, 0.06, 0.08, 0.10)),
        estimators=(estimator("welsch"), estimator("huber"), estimator("quantile", q=0.5)),
    ),
    "fig4-desk": ExperimentSpec(
        kind="convergence_trace", n=1000, p=5, replicates=50,
        contamination=(_sign_aligned(0.10),),
        estimators=(estimator("welsch"), estimator("huber")),
    ),
    "fig5-desk": ExperimentSpec(
        kind="mse_distribution", n=1000, p=5, replicates=1000,
        contamination=(_sign_aligned(0.10),),
        estimators=(estimator("welsch"), estimator("huber"), estimator("tukey"),
                    estimator("hampel")),
    ),
    "fig7-desk": ExperimentSpec(
        kind="mse_distribution", n=1000, p=5, replicates=1000,
        contamination=(_sign_aligned(0.20),),
        estimators=(estimator("welsch"), estimator("huber"), estimator("tukey"),
                    estimator("hampel")),
    ),
    "debias-desk": ExperimentSpec(
        kind="mse_distribution", n=1000, p=5, replicates=200,
        contamination=(CLEAN, _sign_aligned(0.10, 1000.0)),
        estimators=(estimator("welsch", tau_rule="debias"),),
    ),
    "rate-desk": ExperimentSpec(
        kind="rate_curve", n=(500, 2000), p=5, replicates=200, noise=NoiseSpec("gaussian"),
        estimators=(estimator("welsch"),),
    ),
    "normality-desk": ExperimentSpec(
        kind="normality", n=5000, p=3, replicates=1000, noise=NoiseSpec("gaussian"),
        estimators=(estimator("welsch", tau_rule="asymptotic"),),
    ),
}

PRESET_KIND = {
    "bias-curve": "bias_curve", "mse": "mse_distribution", "trace": "convergence_trace",
    "rate": "rate_curve", "normality": "normality",
}


def preset(name: str, **overrides) -> ExperimentSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", key="preset")
    return PRESETS[name].replace(**overrides) if overrides else PRESETS[name]
