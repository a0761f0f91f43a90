"""Build validated configuration objects from nested mappings (parsed YAML).

Schema (every section optional)::

    seed: 20240917               # shared default for randomized commands (the default)
    fit:
      loss: {family: welsch, tau: 0.1}     # tau may be "auto" for cross-validation
      algorithm1_c: 1.0
      lad_max_iters: 100
      scale_mode: mad_of_lad_residuals     # or fixed_unit
      optimizer: {method: lbfgs, memory: 10, max_iters: 500, grad_tol: 1.0e-8,
                  step_tol: 1.0e-12, wolfe_c1: 1.0e-4, wolfe_c2: 0.9, gd_step: 0.1}
    data:
      path: data.csv
      target: y
      delimiter: ","
      standardize: true
      intercept: true
      drop_non_numeric: false
    cv: {folds: 5, grid: [0.01, 0.1, 1.0], shuffle_seed: 7}
    experiment:
      preset: fig1a-desk         # start from a preset, then override below
      kind: bias_curve
      n: 1000                    # or a list for rate curves
      p: 5
      replicates: 500
      base_seed: 7
      beta_star: [..]            # default (1, ..., 1) / sqrt(p)
      design: gaussian_isotropic
      noise: {kind: pareto, shape: 2.5}
      contamination: [{proportion: 0.1, magnitude: 100, strategy: sign_aligned}]
      estimators: [{name: welsch, tau_rule: prop2}, {name: huber, gamma: 1.0}]
      trace_iters: 100
      trace_step: 0.5
      workers: 1

Every error is a :class:`~welschreg.errors.ConfigError` whose ``key`` is
the dotted path of the offending entry.
"""
from __future__ import annotations

from dataclasses import fields

from .errors import ConfigError
from .estimators import FitConfig
from .experiments import EstimatorSpec, ExperimentSpec, preset
from .losses import DEFAULTS, FAMILIES, LossSpec
from .model_selection import CvSpec
from .optim import OptimizerConfig
from .simulation import ContaminationSpec, NoiseSpec


def _mapping(obj, where):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping", key=where)
    return obj


def _reject_unknown(obj, allowed, where):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        key = f"{where}.{unknown[0]}" if where else unknown[0]
        raise ConfigError(f"unknown configuration key {key!r}", key=key)


def _build(cls, obj, where, **extra):
    obj = _mapping(obj, where)
    _reject_unknown(obj, [f.name for f in fields(cls)], where)
    try:
        return cls(**{**obj, **extra})
    except ConfigError as exc:
        key = f"{where}.{exc.key}" if exc.key else where
        raise ConfigError(str(exc), key=key) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", key=where) from None


def build_loss(obj, where="fit.loss", allow_auto=False):
    """``{family: huber, gamma: 2}`` or a bare family name. Returns ``(LossSpec, auto)``."""
    if isinstance(obj, str):
        obj = {"family": obj}
    obj = dict(_mapping(obj, where))
    family = obj.pop("family", "welsch")
    if family not in FAMILIES:
        raise ConfigError(f"unknown loss family {family!r}", key=f"{where}.family")
    _reject_unknown(obj, DEFAULTS[family], where)
    auto = [k for k, v in obj.items() if v == "auto"]
    if auto and not allow_auto:
        raise ConfigError("'auto' is only valid for the fit command", key=f"{where}.{auto[0]}")
    params = {k: v for k, v in obj.items() if v != "auto"}
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}.{k} must be a number", key=f"{where}.{k}")
    try:
        return LossSpec(family, params), bool(auto)
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"{where}.{exc.key}") from None


def build_fit_config(obj, where="fit", allow_auto=False, default_scale="fixed_unit"):
    """Returns ``(FitConfig, auto_tune)``."""
    obj = dict(_mapping(obj, where))
    _reject_unknown(obj, ["loss", "algorithm1_c", "lad_max_iters", "scale_mode", "optimizer"], where)
    loss, auto = build_loss(obj.pop("loss", None), f"{where}.loss", allow_auto)
    opt = _build(OptimizerConfig, obj.pop("optimizer", None), f"{where}.optimizer")
    obj.setdefault("scale_mode", default_scale)
    cfg = _build(FitConfig, obj, where, loss=loss, optimizer=opt)
    return cfg, auto


ESTIMATOR_KEYS = ("name", "family", "tau_rule", "tau_C", "delta", "ell", "algorithm1_c",
                  "lad_max_iters", "scale_mode")


def build_estimator(obj, where) -> EstimatorSpec:
    from .experiments import estimator

    obj = dict(_mapping(obj, where))
    if "name" not in obj:
        raise ConfigError("estimator needs a name", key=f"{where}.name")
    name = obj.pop("name")
    family = obj.pop("family", None)
    family = family or {"lad": "pinball", "quantile": "pinball", "ols": "squared"}.get(name, name)
    if family not in FAMILIES:
        raise ConfigError(f"unknown loss family {family!r}", key=f"{where}.family")
    loss_keys = set(DEFAULTS[family])
    _reject_unknown(obj, set(ESTIMATOR_KEYS) | loss_keys, where)
    loss_params = {k: obj.pop(k) for k in list(obj) if k in loss_keys}
    try:
        base = estimator(name, family, obj.pop("tau_rule", None), **loss_params)
        cfg_keys = {k: obj.pop(k) for k in list(obj)
                    if k in ("algorithm1_c", "lad_max_iters", "scale_mode")}
        cfg = FitConfig(base.config.loss, **cfg_keys) if cfg_keys else base.config
        return EstimatorSpec(base.name, cfg, base.tau_rule, **obj)
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"{where}.{(exc.key or '').split('.')[-1]}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", key=where) from None


EXPERIMENT_KEYS = ("preset", "kind", "n", "p", "replicates", "base_seed", "beta_star", "design",
                   "noise", "contamination", "estimators", "trace_iters", "trace_step", "workers")


def build_experiment(obj, where="experiment", seed=None):
    """Returns ``(ExperimentSpec, workers)``; ``seed`` (if given) overrides ``base_seed``."""
    obj = dict(_mapping(obj, where))
    _reject_unknown(obj, EXPERIMENT_KEYS, where)
    workers = obj.pop("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer", key=f"{where}.workers")
    changes = {}
    if "noise" in obj:
        changes["noise"] = _build(NoiseSpec, obj.pop("noise"), f"{where}.noise")
    if "contamination" in obj:
        cont = obj.pop("contamination")
        cont = cont if isinstance(cont, list) else [cont]
        built = []
        for i, c in enumerate(cont):
            c = dict(_mapping(c, f"{where}.contamination[{i}]"))
            if "direction" in c and c["direction"] is not None:
                c["direction"] = tuple(c["direction"])
            built.append(_build(ContaminationSpec, c, f"{where}.contamination[{i}]"))
        changes["contamination"] = tuple(built)
    if "estimators" in obj:
        ests = obj.pop("estimators")
        if not isinstance(ests, list):
            raise ConfigError("estimators must be a list", key=f"{where}.estimators")
        changes["estimators"] = tuple(
            build_estimator(e, f"{where}.estimators[{i}]") for i, e in enumerate(ests))
    name = obj.pop("preset", None)
    changes.update(obj)
    if seed is not None:
        changes["base_seed"] = seed
    try:
        if name is not None:
            return preset(name, **changes), workers
        for required in ("kind", "n", "p", "replicates", "estimators"):
            if required not in changes:
                raise ConfigError(f"missing required key {required!r}", key=required)
        return ExperimentSpec(**changes), workers
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"{where}.{exc.key}" if exc.key else where) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", key=where) from None


def build_cv(obj, where="cv", seed=None) -> CvSpec:
    obj = dict(_mapping(obj, where))
    if "grid" in obj and obj["grid"] is not None:
        obj["grid"] = tuple(obj["grid"])
    if seed is not None:
        obj["shuffle_seed"] = seed
    return _build(CvSpec, obj, where)

