import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import welschreg.model_selection as ms
from welschreg.errors import ConfigError, SelectionError
from welschreg.estimators import FitConfig
from welschreg.losses import LossSpec
from welschreg.model_selection import CvSpec, default_grid, fold_indices, median_cv, train_test_split
from welschreg.simulation import NoiseSpec, default_beta_star, generate_dataset

from conftest import gaussian_data


def clean_gaussian(n, p, seed):
    data, _ = generate_dataset(n, default_beta_star(p), noise=NoiseSpec("gaussian"), seed=seed)
    return data


class TestMedianCv:
    def test_single_candidate(self):
        data, _ = gaussian_data(60, 2, 0)
        chosen, table = median_cv(data, "welsch", CvSpec(grid=(0.3,)))
        assert chosen == 0.3 and len(table.rows) == 1

    @pytest.mark.xfail(strict=True, reason=(
        "held-out median |residual| barely separates tau candidates on clean data; "
        "tau=10 wins in roughly a quarter of seeds at every n tried"))
    def test_avoids_overaggressive_tau(self):
        picks = [median_cv(clean_gaussian(200, 3, seed), "welsch",
                           CvSpec(grid=(1e-6, 0.1, 10.0), shuffle_seed=seed))[0]
                 for seed in range(50)]
        assert sum(v != 10.0 for v in picks) >= 45

    @pytest.mark.xfail(strict=True, reason=(
        "the aggregate curve over the default grid is flat to ~1% on clean data, "
        "so the argmin moves with the fold assignment"))
    def test_stable_across_shuffles(self):
        data = clean_gaussian(2000, 5, 123)
        picks = [median_cv(data, "welsch", CvSpec(shuffle_seed=s))[0] for s in range(20)]
        assert Counter(picks).most_common(1)[0][1] >= 18

    def test_table_layout_and_minimum(self):
        data, _ = gaussian_data(120, 3, 1)
        chosen, table = median_cv(data, "huber", CvSpec(folds=4))
        assert table.columns == ("candidate", "fold_1", "fold_2", "fold_3", "fold_4",
                                 "aggregate", "failed_folds")
        assert chosen in default_grid("huber", 120, 3)
        agg = dict(zip(table.column("candidate"), table.column("aggregate")))
        assert all(agg[chosen] <= v for v in agg.values())
        for row in table.rows:
            assert row[5] == pytest.approx(np.median(row[1:5]))

    def test_ties_go_to_smaller_candidate(self, monkeypatch):
        data, beta = gaussian_data(50, 2, 2)

        def constant_fit(train, cfg, stage1=None):
            class R:
                pass
            r = R()
            r.beta = beta
            return r

        monkeypatch.setattr(ms, "fit_two_stage", constant_fit)
        chosen, _ = median_cv(data, "welsch", CvSpec(grid=(0.5, 1.0, 2.0)))
        assert chosen == 0.5

    def test_failed_candidate_excluded(self, monkeypatch):
        data, _ = gaussian_data(80, 2, 3)
        real = ms.fit_two_stage

        def flaky(train, cfg, stage1=None):
            if cfg.loss["tau"] == 0.1:
                raise SelectionError("forced")
            return real(train, cfg, stage1)

        monkeypatch.setattr(ms, "fit_two_stage", flaky)
        with pytest.warns(UserWarning, match="excluded"):
            chosen, table = median_cv(data, "welsch", CvSpec(grid=(0.1, 0.5)))
        assert chosen == 0.5
        assert table.where(candidate=0.1).column("failed_folds") == [5]
        assert math.isnan(table.where(candidate=0.1).column("aggregate")[0])

    def test_all_fail(self, monkeypatch):
        data, _ = gaussian_data(80, 2, 4)

        def broken(*args, **kwargs):
            raise SelectionError("forced")

        monkeypatch.setattr(ms, "fit_two_stage", broken)
        with pytest.warns(UserWarning), pytest.raises(SelectionError):
            median_cv(data, "welsch", CvSpec(grid=(0.1, 0.5)))

    def test_keeps_template_settings(self):
        data, _ = gaussian_data(80, 2, 5)
        template = FitConfig(LossSpec.hampel(2.0, 4.0, 8.0), algorithm1_c=0.5)
        chosen, _ = median_cv(data, "hampel", CvSpec(grid=(1.0, 2.0)), template)
        assert chosen in (1.0, 2.0)

    def test_preconditions(self):
        data, _ = gaussian_data(9, 2, 6)
        with pytest.raises(ConfigError):
            median_cv(data, "welsch", CvSpec(folds=5))
        with pytest.raises(ConfigError):
            median_cv(gaussian_data(50, 2, 6)[0], "squared")


class TestCvSpec:
    @pytest.mark.parametrize("bad", [
        {"folds": 1}, {"grid": ()}, {"grid": (0.1, 0.1)}, {"grid": (0.2, 0.1)},
        {"grid": (-1.0, 1.0)}, {"statistic": "mean"}, {"shuffle_seed": -1},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            CvSpec(**bad)


class TestDefaultGrid:
    def test_anchor(self):
        grid = np.array(default_grid("welsch", 1000, 5))
        anchor = 0.05 + math.log(20) / 1000
        step = math.log(grid[1] / grid[0])
        assert np.min(np.abs(np.log(grid / anchor))) <= step
        assert np.min(np.abs(grid - 0.055)) <= grid[np.searchsorted(grid, 0.055)] - grid[np.searchsorted(grid, 0.055) - 1]

    @pytest.mark.parametrize("family", ["welsch", "huber", "tukey", "hampel"])
    def test_shape(self, family):
        grid = default_grid(family, 500, 3)
        assert len(grid) == 12 and all(b > a > 0 for a, b in zip(grid, grid[1:]))

    def test_anchor_shrinks_with_n(self):
        assert default_grid("welsch", 10_000, 3)[0] < default_grid("welsch", 100, 3)[0]

    def test_comparator_centered_on_default(self):
        grid = default_grid("huber", 100, 2)
        assert grid[0] == pytest.approx(0.1) and grid[-1] == pytest.approx(10.0)

    def test_untunable(self):
        with pytest.raises(ConfigError):
            default_grid("pinball", 100, 2)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(4, 500), folds=st.integers(2, 10), seed=st.integers(0, 2**63))
def test_folds_partition(n, folds, seed):
    parts = fold_indices(n, folds, seed)
    assert len(parts) == folds
    assert np.array_equal(np.sort(np.concatenate(parts)), np.arange(n))


def test_train_test_split():
    data, _ = gaussian_data(100, 2, 7)
    train, test, idx = train_test_split(data, 0.25, seed=3)
    assert test.n == 25 and train.n == 75
    assert np.array_equal(test.y, data.y[idx])
    again = train_test_split(data, 0.25, seed=3)[2]
    assert np.array_equal(idx, again)
    with pytest.raises(ConfigError):
        train_test_split(data, 1.0)
