import math

import numpy as np
import pytest

import welschreg.experiments as ex
from welschreg.errors import ConfigError, SingularityError
from welschreg.experiments import (
    PRESETS, EstimatorSpec, ExperimentSpec, Table, basin_convexity_experiment, bias_curve,
    convergence_trace_experiment, estimator, mse_distribution, normality_experiment, preset,
    rate_experiment, run_replicates,
)
from welschreg.estimators import solve_check_loss
from welschreg.io import format_value
from welschreg.simulation import CLEAN, ContaminationSpec, NoiseSpec, generate_dataset, mix_seed


def small(kind="mse_distribution", **kw):
    base = dict(kind=kind, n=200, p=3, replicates=6,
                estimators=(estimator("welsch"), estimator("huber"), estimator("ols")),
                contamination=(ContaminationSpec(0.1),), base_seed=99)
    return ExperimentSpec(**{**base, **kw})


def body(table: Table) -> str:
    return "\n".join(",".join(format_value(v) for v in row) for row in table.rows)


class TestRunReplicates:
    def test_one_replicate_ols(self):
        spec = small(replicates=1, estimators=(estimator("ols"),), contamination=(CLEAN,))
        report = run_replicates(spec)
        assert len(report.rows.rows) == 1
        err = report.rows.column("err_l2")[0]
        assert math.isfinite(err) and err > 0

    def test_row_layout_and_order(self):
        report = run_replicates(small())
        rows = report.rows
        assert len(rows.rows) == 6 * 3
        keys = [(r[2], r[3]) for r in rows.rows]
        assert keys == sorted(keys)
        assert set(rows.column("estimator")) == {"welsch", "huber", "ols"}

    def test_deterministic(self):
        a, b = run_replicates(small()), run_replicates(small())
        assert body(a.rows) == body(b.rows) and body(a.summary) == body(b.summary)

    def test_parallel_matches_serial(self):
        spec = small(replicates=8)
        assert body(run_replicates(spec, workers=2).rows) == body(run_replicates(spec).rows)

    def test_rows_match_direct_fit(self):
        spec = small(replicates=2)
        report = run_replicates(spec)
        data, truth = generate_dataset(200, spec.truth_beta, noise=spec.noise,
                                       contamination=spec.contamination[0],
                                       seed=mix_seed(spec.base_seed, 1))
        est = spec.estimators[0]
        res = ex.fit_two_stage(data, est.resolve(200, truth.o))
        row = report.rows.where(replicate=1, estimator="welsch").rows[0]
        assert row[report.rows.columns.index("err_l2")] == np.linalg.norm(res.beta - truth.beta_star)

    def test_bias_recomputed_from_rows(self):
        report = run_replicates(small(replicates=20))
        cols = report.rows.columns
        j = cols.index("err_0")
        for name in ("welsch", "huber", "ols"):
            rows = report.rows.where(estimator=name).rows
            mean_err = np.mean([r[j:j + 3] for r in rows], axis=0)
            bias = report.summary.where(estimator=name).column("bias")[0]
            assert abs(bias - np.linalg.norm(mean_err)) <= 1e-12

    def test_failures_are_recorded(self, monkeypatch):
        real = ex.fit_two_stage

        def flaky(data, cfg, stage1=None):
            if cfg.loss.family == "huber":
                raise SingularityError("forced")
            return real(data, cfg, stage1)

        monkeypatch.setattr(ex, "fit_two_stage", flaky)
        report = run_replicates(small(replicates=3))
        huber = report.rows.where(estimator="huber")
        assert huber.column("status") == ["failed:SingularityError"] * 3
        assert all(math.isnan(v) for v in huber.column("err_l2"))
        s = report.summary.where(estimator="huber")
        assert s.column("failures") == [3] and s.column("count") == [0]
        assert report.summary.where(estimator="welsch").column("count") == [3]

    def test_provenance(self):
        report = run_replicates(small())
        assert report.provenance["base_seed"] == 99
        assert report.provenance["spec"]["estimators"][0]["name"] == "welsch"

    def test_tau_rule_uses_true_outlier_count(self):
        report = run_replicates(small(replicates=1))
        row = report.rows.where(estimator="welsch")
        assert row.column("o") == [20]
        assert row.column("tau")[0] == pytest.approx((20 + math.log(100)) / 200)


class TestSpecs:
    @pytest.mark.parametrize("bad", [
        {"kind": "nope"}, {"replicates": 0}, {"n": 3}, {"estimators": ()},
        {"estimators": (estimator("huber"), estimator("huber"))}, {"design": "x"},
        {"beta_star": (1.0,)}, {"base_seed": -1}, {"contamination": ()},
        {"contamination": (ContaminationSpec(count=150),)},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            small(**bad)

    def test_estimator_shorthand(self):
        assert estimator("welsch").tau_rule == "prop2"
        assert estimator("welsch", tau=0.3).tau_rule == "fixed"
        assert estimator("lad").config.loss.family == "pinball"
        assert estimator("huber").config.loss["gamma"] == 1.0
        with pytest.raises(ConfigError):
            EstimatorSpec("h", estimator("huber").config, "prop2")

    def test_presets_are_valid(self):
        for name, spec in PRESETS.items():
            assert preset(name) is spec
        assert preset("fig5-desk", replicates=3).replicates == 3
        with pytest.raises(ConfigError):
            preset("fig9")


class TestWrappers:
    def test_bias_curve_clean_band(self):
        reps, n = 200, 200
        spec = ExperimentSpec(kind="bias_curve", n=n, p=2, replicates=reps, noise=NoiseSpec("gaussian"),
                              contamination=(CLEAN,), base_seed=5,
                              estimators=(estimator("welsch"), estimator("huber"),
                                          estimator("quantile", q=0.5)))
        _, table = bias_curve(spec)
        assert table.columns == ("proportion", "bias_huber", "bias_quantile", "bias_welsch")
        assert all(v <= 3 / math.sqrt(reps * n) for v in table.rows[0][1:])

    def test_bias_curve_sorted(self):
        spec = small(kind="bias_curve", contamination=(ContaminationSpec(0.1), CLEAN, ContaminationSpec(0.05)))
        _, table = bias_curve(spec)
        assert table.column("proportion") == [0.0, 0.05, 0.1]

    def test_ols_mse_near_p_over_n(self):
        spec = ExperimentSpec(kind="mse_distribution", n=1000, p=5, replicates=200,
                              estimators=(estimator("ols"),), contamination=(CLEAN,), base_seed=7)
        _, mse = mse_distribution(spec)
        med = np.median(mse[(0.0, "ols")])
        assert 0.5 * 5 / 1000 <= med <= 2 * 5 / 1000

    def test_rate_with_fixed_outlier_count(self):
        spec = ExperimentSpec(kind="rate_curve", n=(250, 1000, 4000), p=3, replicates=40,
                              estimators=(estimator("welsch"),),
                              contamination=(ContaminationSpec(magnitude=100.0, count=20),), base_seed=8)
        _, table = rate_experiment(spec)
        errs = table.column("median_err")
        assert errs[0] > errs[1] > errs[2]

    def test_doubling_p(self):
        errs = []
        for p in (5, 10):
            spec = ExperimentSpec(kind="rate_curve", n=1000, p=p, replicates=200, noise=NoiseSpec("gaussian"),
                                  estimators=(estimator("welsch"),), base_seed=9)
            errs.append(rate_experiment(spec)[1].column("median_err")[0])
        assert 1.2 <= errs[1] / errs[0] <= 1.7

    def test_trace_starts_at_lad(self):
        spec = small(kind="convergence_trace", replicates=2, trace_iters=10,
                     estimators=(estimator("welsch"), estimator("huber")))
        report, table = convergence_trace_experiment(spec)
        data, truth = generate_dataset(200, spec.truth_beta, noise=spec.noise,
                                       contamination=spec.contamination[0],
                                       seed=mix_seed(spec.base_seed, 0))
        lad_err = np.linalg.norm(solve_check_loss(data)[0] - truth.beta_star)
        rows = report.rows.where(replicate=0, iteration=0)
        assert rows.column("err_l2") == [pytest.approx(lad_err, abs=1e-14)] * 2
        assert len(report.rows.rows) == 2 * 2 * 11
        assert sorted(set(table.column("iteration"))) == list(range(11))

    def test_normality_small(self):
        report, summary = normality_experiment(n=400, p=2, replicates=30, base_seed=3)
        assert summary.z.shape == (30, 2)
        assert summary.covariance.shape == (2, 2)
        assert np.all((0 <= summary.ks) & (summary.ks <= 1))

    def test_wrong_kind(self):
        with pytest.raises(ConfigError):
            bias_curve(small())

    def test_basin_convexity_shape(self):
        out = basin_convexity_experiment(n=200, p=3, datasets=3, points=4)
        assert out.shape == (3, 4) and np.all(np.isfinite(out))
