"""Command-line front end: ``welschreg <command> [options]``.

Exit status: 0 on success, 1 on a runtime failure, 2 on a configuration
or usage error. Every randomized command takes ``--seed``; without it the
fixed default seed is used, so runs are reproducible.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from ._version import __version__
from .diagnostics import (
    augmented_outlier_count, basin_indicator_fraction, d_condition, hessian_min_eigenvalue,
    theoretical_tau,
)
from .errors import ConfigError, WelschRegError
from .estimators import fit_two_stage
from .experiments import (
    DEFAULT_SEED, PRESET_KIND, Table, bias_curve, convergence_trace_experiment,
    normality_summary, rate_experiment, run_replicates,
)
from .io import load_csv, load_yaml, output_dir, write_provenance, write_report, write_table
from .losses import FAMILIES, TUNING_PARAM
from .model_selection import median_cv
from .simulation import STRATEGIES, ContaminationSpec, NoiseSpec, default_beta_star, generate_dataset

COMMAND_PRESETS = {
    "bias-curve": "fig1a-desk", "mse": "fig5-desk", "trace": "fig4-desk",
    "rate": "rate-desk", "normality": "normality-desk",
}
LOSS_FLAGS = ("tau", "gamma", "c", "q")


def _number_or_auto(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _grid(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers: {text!r}") from None


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


# ----------------------------------------------------------------- config merging


def _section(conf: dict, name: str) -> dict:
    sec = conf.get(name)
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name} must be a mapping", key=name)
    return dict(sec)


def _load_conf(args) -> dict:
    conf = load_yaml(args.config) if getattr(args, "config", None) else {}
    allowed = ("seed", "fit", "data", "cv", "experiment")
    unknown = sorted(set(conf) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown configuration key {unknown[0]!r}", key=unknown[0])
    return conf


def _resolved_seed(args, conf) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    seed = conf.get("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer", key="seed")
    return seed


def _fit_section(args, conf) -> dict:
    fit = _section(conf, "fit")
    loss = fit.get("loss", {"family": "welsch"})
    loss = {"family": loss} if isinstance(loss, str) else dict(loss or {})
    if args.loss is not None and args.loss != loss.get("family", "welsch"):
        loss = {"family": args.loss}
    for name in LOSS_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            loss[name] = value
    fit["loss"] = loss
    for flag, key in (("algorithm1_c", "algorithm1_c"), ("scale_mode", "scale_mode"),
                      ("lad_max_iters", "lad_max_iters")):
        value = getattr(args, flag, None)
        if value is not None:
            fit[key] = value
    return fit


def _data_section(args, conf) -> dict:
    data = _section(conf, "data")
    allowed = ("path", "target", "delimiter", "standardize", "intercept", "drop_non_numeric")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown configuration key 'data.{unknown[0]}'", key=f"data.{unknown[0]}")
    for flag, key in (("data", "path"), ("target", "target"), ("delimiter", "delimiter")):
        if getattr(args, flag, None) is not None:
            data[key] = getattr(args, flag)
    if args.no_standardize:
        data["standardize"] = False
    if args.no_intercept:
        data["intercept"] = False
    if args.drop_non_numeric:
        data["drop_non_numeric"] = True
    data.setdefault("target", "y")
    data.setdefault("delimiter", ",")
    data.setdefault("standardize", True)
    data.setdefault("intercept", True)
    data.setdefault("drop_non_numeric", False)
    if "path" not in data:
        raise ConfigError("no data file given (--data or data.path)", key="data.path")
    return data


def _load_data(data: dict):
    return load_csv(data["path"], target=data["target"], delimiter=data["delimiter"],
                    standardize=bool(data["standardize"]), add_intercept=bool(data["intercept"]),
                    drop_non_numeric=bool(data["drop_non_numeric"]))


def _cv_section(args, conf, seed) -> dict:
    cv = _section(conf, "cv")
    if getattr(args, "folds", None) is not None:
        cv["folds"] = args.folds
    if getattr(args, "grid", None) is not None:
        cv["grid"] = args.grid
    cv.setdefault("shuffle_seed", seed)
    if getattr(args, "seed", None) is not None:
        cv["shuffle_seed"] = args.seed
    return cv


def _out_path(args, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return output_dir(getattr(args, "out_dir", None)) / default_name


# ----------------------------------------------------------------- commands


def _tune(data, fit_cfg, cv_spec, family):
    if family not in TUNING_PARAM:
        raise ConfigError(f"'auto' tuning is not available for {family}", key="fit.loss")
    return median_cv(data, family, cv_spec, fit_cfg)


def cmd_fit(args) -> int:
    conf = _load_conf(args)
    seed = _resolved_seed(args, conf)
    fit_dict = _fit_section(args, conf)
    data_dict = _data_section(args, conf)
    cv_dict = _cv_section(args, conf, seed)
    fit_cfg, auto = cfgmod.build_fit_config(fit_dict, allow_auto=True,
                                            default_scale="mad_of_lad_residuals")
    cv_spec = cfgmod.build_cv(cv_dict)
    data, transform = _load_data(data_dict)

    family = fit_cfg.loss.family
    cv_table = None
    if auto:
        chosen, cv_table = _tune(data, fit_cfg, cv_spec, family)
        fit_cfg = fit_cfg.with_loss(fit_cfg.loss.tuned(chosen))
        print(f"cross-validated {TUNING_PARAM[family]} = {chosen:.6g}")
    res = fit_two_stage(data, fit_cfg)

    b0, slopes = transform.to_original(res.beta)
    names = transform.column_names
    rows = []
    if not transform.intercept:
        rows.append(("intercept", 0.0, b0))
    for j, name in enumerate(names):
        orig = b0 if name == "intercept" and transform.intercept else slopes[j - transform.intercept]
        rows.append((name, float(res.beta[j]), float(orig)))
    coef = Table(("term", "coef", "coef_original"), rows)
    resid = data.residuals(res.beta)
    res_table = Table(("row", "y", "fitted", "residual", "scaled_residual"),
                      [(i, float(data.y[i]), float(data.y[i] - resid[i]), float(resid[i]),
                        float(resid[i] / res.scale)) for i in range(data.n)])

    coef_path = _out_path(args, "coefficients.csv")
    resid_path = Path(args.residuals) if args.residuals else coef_path.with_name(
        coef_path.stem + ".residuals.csv")
    write_table(coef, coef_path)
    write_table(res_table, resid_path)
    provenance = {"command": "fit", "seed": seed, "version": __version__,
                  "fit": fit_cfg.to_dict(), "data": data_dict,
                  "cv": {"folds": cv_spec.folds, "shuffle_seed": cv_spec.shuffle_seed,
                         "grid": list(cv_spec.grid) if cv_spec.grid else "default"} if auto else None,
                  "status": res.status, "warnings": list(res.warnings)}
    write_provenance(coef_path, provenance)
    if cv_table is not None:
        write_table(cv_table, coef_path.with_name(coef_path.stem + ".cv.csv"))

    print(f"loss: {family} {fit_cfg.loss.params}  scale: {res.scale:.6g}  status: {res.status}")
    if family == "welsch":
        print(f"basin fraction at fit: {res.basin_fraction:.4f}")
    width = max(len(r[0]) for r in rows)
    print(f"{'term':<{width}}  {'coef':>14}  {'coef_original':>14}")
    for name, c, o in rows:
        print(f"{name:<{width}}  {c:>14.6g}  {o:>14.6g}")
    print(f"wrote {coef_path} and {resid_path}")
    return 0


def cmd_cv(args) -> int:
    conf = _load_conf(args)
    seed = _resolved_seed(args, conf)
    fit_dict = _fit_section(args, conf)
    fit_dict["loss"] = {"family": fit_dict["loss"].get("family", "welsch")}
    data_dict = _data_section(args, conf)
    fit_cfg, _ = cfgmod.build_fit_config(fit_dict, default_scale="mad_of_lad_residuals")
    cv_spec = cfgmod.build_cv(_cv_section(args, conf, seed))
    data, _ = _load_data(data_dict)
    family = fit_cfg.loss.family
    chosen, table = _tune(data, fit_cfg, cv_spec, family)
    out = _out_path(args, "cv.csv")
    write_report(table, out, {"command": "cv", "seed": seed, "version": __version__,
                              "family": family, "chosen": chosen, "data": data_dict,
                              "folds": cv_spec.folds, "shuffle_seed": cv_spec.shuffle_seed})
    for row in table.rows:
        mark = "  <- chosen" if row[0] == chosen else ""
        print(f"{TUNING_PARAM[family]} = {row[0]:<12.6g} median |residual| = {row[-2]:.6g}{mark}")
    print(f"wrote {out}")
    return 0


def _experiment_from(args, conf, default_preset=None):
    exp = _section(conf, "experiment")
    if args.preset:
        exp = {k: v for k, v in exp.items() if k not in ("kind",)}
        exp["preset"] = args.preset
    elif "preset" not in exp and "kind" not in exp:
        if default_preset is None:
            raise ConfigError("give --preset or an experiment section in --config",
                              key="experiment")
        exp["preset"] = default_preset
    if args.replicates is not None:
        exp["replicates"] = args.replicates
    if args.workers is not None:
        exp["workers"] = args.workers
    # --seed beats the config's top-level seed, which beats the spec's own base_seed
    seed = _resolved_seed(args, conf) if args.seed is not None or "seed" in conf else None
    spec, workers = cfgmod.build_experiment(exp, seed=seed)
    return spec, workers


def cmd_simulate(args) -> int:
    conf = _load_conf(args)
    spec, workers = _experiment_from(args, conf)
    report = run_replicates(spec, workers)
    out = _out_path(args, f"{spec.kind}.csv")
    write_report(report, out, {"command": "simulate"})
    print(f"{spec.kind}: {len(report.rows.rows)} rows, seed {spec.base_seed}; wrote {out}")
    _print_table(report.summary, limit=40)
    return 0


def _print_table(table: Table, limit=None):
    rows = table.rows if limit is None else table.rows[:limit]
    print("  ".join(table.columns))
    for row in rows:
        print("  ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    if limit is not None and len(table.rows) > limit:
        print(f"... ({len(table.rows) - limit} more rows)")


def cmd_preset(args) -> int:
    command = args.command
    conf = _load_conf(args)
    spec, workers = _experiment_from(args, conf, COMMAND_PRESETS[command])
    want = PRESET_KIND[command]
    if spec.kind != want:
        raise ConfigError(f"{command} needs a {want} experiment, got {spec.kind}",
                          key="experiment.kind")
    out = _out_path(args, f"{command}.csv")
    if command == "bias-curve":
        report, table = bias_curve(spec, workers)
    elif command == "trace":
        report, table = convergence_trace_experiment(spec, workers)
    elif command == "rate":
        report, table = rate_experiment(spec, workers)
    else:
        report = run_replicates(spec, workers)
        if command == "normality":
            s = normality_summary(report, spec.estimators[0].name)
            table = Table(("coordinate", "mean", "variance", "ks"),
                          [(j, float(s.mean[j]), float(s.variance[j]), float(s.ks[j]))
                           for j in range(spec.p)])
            off = s.covariance[~np.eye(spec.p, dtype=bool)]
            print(f"max |off-diagonal covariance| = {np.abs(off).max() if off.size else 0.0:.4g}")
        else:
            table = report.summary
    write_table(table, out)
    write_table(report.rows, out.with_name(out.stem + ".rows.csv"))
    write_table(report.summary, out.with_name(out.stem + ".summary.csv"))
    write_provenance(out, {**report.provenance, "command": command})
    _print_table(table, limit=40)
    print(f"wrote {out}")
    return 0


def cmd_diagnose(args) -> int:
    conf = _load_conf(args)
    seed = _resolved_seed(args, conf)
    truth = None
    if args.data is None and not _section(conf, "data"):
        # simulated data: the augmented outlier set is known exactly
        cont = ContaminationSpec(args.proportion, args.magnitude, args.strategy)
        noise = NoiseSpec(args.noise)
        data, truth = generate_dataset(args.n, default_beta_star(args.p), noise=noise,
                                       contamination=cont, seed=seed)
        tau = args.tau if isinstance(args.tau, float) else theoretical_tau(data.n, truth.o)
        fit_dict = _fit_section(args, conf)
        fit_dict["loss"] = {"family": "welsch", "tau": tau}
        fit_cfg, _ = cfgmod.build_fit_config(fit_dict)
        source = f"simulated n={args.n} p={args.p} proportion={args.proportion} seed={seed}"
    else:
        fit_dict = _fit_section(args, conf)
        fit_dict["loss"] = {"family": "welsch",
                            "tau": "auto" if args.tau is None else args.tau}
        data_dict = _data_section(args, conf)
        fit_cfg, auto = cfgmod.build_fit_config(fit_dict, allow_auto=True,
                                                default_scale="mad_of_lad_residuals")
        data, _ = _load_data(data_dict)
        if auto:
            chosen, _ = median_cv(data, "welsch", cfgmod.build_cv(_cv_section(args, conf, seed)),
                                  fit_cfg)
            fit_cfg = fit_cfg.with_loss(fit_cfg.loss.tuned(chosen))
        source = str(data_dict["path"])
    tau = fit_cfg.loss["tau"]
    res = fit_two_stage(data, fit_cfg)
    lam = hessian_min_eigenvalue(data, res.beta, tau, res.scale)
    r = data.residuals(res.beta) / res.scale
    if truth is not None:
        o_prime = augmented_outlier_count(data, truth, tau)
        o_label = "o' (exact, from truth)"
    else:
        o_prime = int(np.sum(tau * r**2 >= 0.5))
        o_label = "o' (estimated from fitted residuals)"
    if 1 <= o_prime <= data.n / 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            d_min = d_condition(data.n, data.p, o_prime)
    else:
        d_min = math.nan
    frac = basin_indicator_fraction(data, res.beta, tau, res.scale)
    items = [
        ("data", source), ("tau", tau), ("scale", res.scale), ("status", res.status),
        ("basin_fraction", frac), ("basin_fraction_at_lad", res.basin_fraction_init),
        ("hessian_min_eigenvalue", lam), (o_label, o_prime), ("D_min (C=1)", d_min),
        ("D_min < basin_fraction", bool(d_min < frac) if not math.isnan(d_min) else "n/a"),
    ]
    width = max(len(k) for k, _ in items)
    for k, v in items:
        print(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    if args.out:
        write_table(Table(("quantity", "value"), items), args.out)
    return 0


# ----------------------------------------------------------------- parser


def _add_seed(p):
    p.add_argument("--seed", type=_seed, default=None,
                   help=f"random seed (default {DEFAULT_SEED})")


def _add_data(p, required_loss=True):
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--target", help="response column (default y)")
    p.add_argument("--delimiter", help="field delimiter (default ,)")
    p.add_argument("--no-standardize", action="store_true", help="keep raw feature units")
    p.add_argument("--no-intercept", action="store_true", help="do not add a column of ones")
    p.add_argument("--drop-non-numeric", action="store_true",
                   help="drop categorical columns instead of failing")


def _add_fit(p):
    p.add_argument("--loss", choices=FAMILIES, default=None, help="loss family (default welsch)")
    p.add_argument("--tau", type=_number_or_auto, help="Welsch tau, or 'auto'")
    p.add_argument("--gamma", type=_number_or_auto, help="Huber gamma, or 'auto'")
    p.add_argument("--c", type=_number_or_auto, help="Tukey c, or 'auto'")
    p.add_argument("--q", type=float, help="pinball quantile level")
    p.add_argument("--algorithm1-c", dest="algorithm1_c", type=float,
                   help="median |residual| threshold ending the LAD stage (default 1)")
    p.add_argument("--lad-max-iters", dest="lad_max_iters", type=int)
    p.add_argument("--scale-mode", choices=("fixed_unit", "mad_of_lad_residuals"))


def _add_experiment(p, default_preset=None):
    from .experiments import PRESETS

    help_ = "experiment preset" + (f" (default {default_preset})" if default_preset else "")
    p.add_argument("--preset", choices=sorted(PRESETS), help=help_)
    p.add_argument("--replicates", type=int, help="override the replicate count")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--out", help="output CSV path")
    _add_seed(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="welschreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("fit", help="fit one estimator on a CSV file")
    p.add_argument("--config", help="YAML configuration file")
    _add_data(p)
    _add_fit(p)
    p.add_argument("--folds", type=int, help="cross-validation folds for 'auto' (default 5)")
    p.add_argument("--grid", type=_grid, help="comma-separated candidate values for 'auto'")
    p.add_argument("--out", help="coefficient CSV path (default <output dir>/coefficients.csv)")
    p.add_argument("--out-dir", help="output directory (default $WELSCHREG_OUTPUT_DIR or .)")
    p.add_argument("--residuals", help="residual CSV path")
    _add_seed(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("cv", help="median cross-validation of a tuning parameter")
    p.add_argument("--config", help="YAML configuration file")
    _add_data(p)
    _add_fit(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--grid", type=_grid)
    p.add_argument("--out", help="CV table path")
    p.add_argument("--out-dir")
    _add_seed(p)
    p.set_defaults(handler=cmd_cv)

    p = sub.add_parser("simulate", help="run an experiment from a config file or preset")
    p.add_argument("--config", help="YAML file with an experiment section")
    _add_experiment(p)
    p.add_argument("--out-dir")
    p.set_defaults(handler=cmd_simulate)

    for command, default in COMMAND_PRESETS.items():
        p = sub.add_parser(command, help=f"{PRESET_KIND[command]} experiment ({default})")
        p.add_argument("--config", help="YAML file with an experiment section")
        _add_experiment(p, default)
        p.add_argument("--out-dir")
        p.set_defaults(handler=cmd_preset)

    p = sub.add_parser("diagnose", help="basin, curvature and o' diagnostics for a Welsch fit")
    p.add_argument("--config", help="YAML configuration file")
    _add_data(p)
    p.add_argument("--tau", type=_number_or_auto,
                   help="Welsch tau (default: theory value on simulated data, 'auto' on files)")
    p.add_argument("--algorithm1-c", dest="algorithm1_c", type=float)
    p.add_argument("--lad-max-iters", dest="lad_max_iters", type=int)
    p.add_argument("--scale-mode", choices=("fixed_unit", "mad_of_lad_residuals"))
    p.add_argument("--folds", type=int)
    p.add_argument("--grid", type=_grid)
    p.add_argument("--n", type=int, default=1000, help="simulated sample size")
    p.add_argument("--p", type=int, default=5, help="simulated dimension")
    p.add_argument("--proportion", type=float, default=0.0, help="simulated outlier proportion")
    p.add_argument("--magnitude", type=float, default=100.0)
    p.add_argument("--strategy", choices=STRATEGIES, default="sign_aligned")
    p.add_argument("--noise", choices=("gaussian", "pareto", "student"), default="pareto")
    p.add_argument("--out", help="write the diagnostics as a two-column CSV")
    _add_seed(p)
    p.set_defaults(handler=cmd_diagnose, loss=None, gamma=None, c=None, q=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.handler(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"welschreg: configuration error{key}: {exc}", file=sys.stderr)
        return 2
    except (WelschRegError, OSError, np.linalg.LinAlgError) as exc:
        print(f"welschreg: error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
