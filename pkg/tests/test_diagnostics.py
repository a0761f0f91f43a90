import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from welschreg.dataset import Dataset
from welschreg.diagnostics import (
    BasinParams, TruthMeta, augmented_outlier_count, augmented_outlier_set, ball_membership,
    basin_indicator_fraction, d_condition, deviation_bound, hessian_min_eigenvalue, in_basin,
    theoretical_tau, welsch_hessian,
)
from welschreg.errors import DomainError
from welschreg.estimators import welsch_objective
from welschreg.optim import finite_diff_gradient


def data_with_residuals(r):
    r = np.asarray(r, dtype=float)
    return Dataset(np.ones((r.size, 1)), r), np.zeros(1)


def truth_for(noise, theta, p=1):
    theta = np.asarray(theta, dtype=float)
    return TruthMeta(np.zeros(p), np.flatnonzero(theta), theta, np.asarray(noise, dtype=float))


class TestBasinFraction:
    def test_zero_residuals(self):
        data, beta = data_with_residuals(np.zeros(5))
        assert basin_indicator_fraction(data, beta, 3.0) == 1.0

    def test_one_large_residual(self):
        data, beta = data_with_residuals([0, 0, 0, 10])
        assert basin_indicator_fraction(data, beta, 1.0) == 0.75

    def test_tiny_tau(self):
        data, beta = data_with_residuals([1e3, -5e2, 7.0])
        assert basin_indicator_fraction(data, beta, 1e-12) == 1.0

    def test_boundary_inclusive(self):
        data, beta = data_with_residuals([0.5, 1.0])
        assert basin_indicator_fraction(data, beta, 2.0) == 0.5

    def test_in_basin(self):
        data, beta = data_with_residuals([0, 0, 0, 10])
        assert in_basin(data, beta, BasinParams(1.0, 0.75))
        assert not in_basin(data, beta, BasinParams(1.0, 0.8))
        with pytest.raises(DomainError):
            BasinParams(1.0, 1.0)
        with pytest.raises(DomainError):
            basin_indicator_fraction(data, beta, 0.0)


@settings(max_examples=1000, deadline=None)
@given(r=st.floats(-1e3, 1e3, allow_nan=False), tau=st.floats(1e-6, 1e3))
def test_basin_characterizations_agree(r, tau):
    by_weight = math.exp(-tau * r * r / 2) >= math.exp(-0.25)
    by_square = tau * r * r <= 0.5
    # the two tests differ only when tau r^2 sits within rounding of 1/2
    if abs(tau * r * r - 0.5) > 1e-12:
        assert by_weight == by_square


def test_basin_characterizations_on_random_draws():
    rng = np.random.default_rng(0)
    r = rng.standard_normal(1000) * 3
    tau = rng.uniform(0.01, 5, 1000)
    s = tau * r**2
    keep = np.abs(s - 0.5) > 1e-12
    a = np.exp(-s / 2) >= math.exp(-0.25)
    assert np.array_equal(a[keep], (s <= 0.5)[keep])


class TestBall:
    def test_center(self):
        assert ball_membership(np.ones(3), np.ones(3), 1e-9)

    def test_closed(self):
        assert ball_membership(np.array([0.0, 0.5]), np.zeros(2), 0.5)

    def test_outside(self):
        assert not ball_membership(np.array([1.0, 0.0]), np.zeros(2), 0.5)

    def test_radius(self):
        with pytest.raises(DomainError):
            ball_membership(np.zeros(1), np.zeros(1), 0.0)


class TestAugmentedOutliers:
    def test_tiny_tau_gives_outlier_count(self):
        rng = np.random.default_rng(1)
        noise = rng.standard_normal(50)
        theta = np.zeros(50)
        theta[[3, 9, 27]] = 40.0
        data, _ = data_with_residuals(noise + theta)
        assert augmented_outlier_count(data, truth_for(noise, theta), 1e-12) == 3

    def test_direct_count(self):
        noise = np.array([0.0, 0.0, 3.0])
        data, _ = data_with_residuals(noise)
        truth = truth_for(noise, np.zeros(3))
        assert augmented_outlier_count(data, truth, 1.0) == 1
        assert list(augmented_outlier_set(data, truth, 1.0)) == [2]

    def test_bounded_by_n(self):
        noise = np.random.default_rng(2).standard_normal(20)
        theta = np.full(20, 1e6)
        data, _ = data_with_residuals(noise + theta)
        assert augmented_outlier_count(data, truth_for(noise, theta), 1.0) == 20

    def test_contains_outliers(self):
        # an outlier whose shift cancels its noise still belongs to O'
        noise = np.array([0.0, 1.0, 0.0])
        theta = np.array([0.0, -1.0, 0.0])
        data, _ = data_with_residuals(noise + theta)
        assert augmented_outlier_count(data, truth_for(noise, theta), 1.0) == 1

    def test_dimension_mismatch(self):
        data, _ = data_with_residuals(np.zeros(3))
        with pytest.raises(DomainError):
            augmented_outlier_count(data, truth_for(np.zeros(4), np.zeros(4)), 1.0)

    def test_truth_meta_validates_support(self):
        with pytest.raises(DomainError):
            TruthMeta(np.zeros(1), np.array([0]), np.zeros(3), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), taus=st.lists(st.floats(1e-4, 10), min_size=2, max_size=6))
def test_augmented_count_nondecreasing_in_tau(seed, taus):
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(40) * 2
    theta = np.where(rng.random(40) < 0.1, 25.0, 0.0)
    data, _ = data_with_residuals(noise + theta)
    truth = truth_for(noise, theta)
    counts = [augmented_outlier_count(data, truth, t) for t in sorted(taus)]
    assert counts == sorted(counts)
    assert counts[0] >= truth.o


class TestDCondition:
    def test_example(self):
        assert d_condition(1000, 5, 10) == pytest.approx((5 + 20 * (1 + math.log(50))) / 1000, rel=1e-14)
        assert d_condition(1000, 5, 10) == pytest.approx(0.1032, abs=5e-5)

    def test_half_n_is_vacuous(self):
        with pytest.warns(RuntimeWarning):
            assert d_condition(100, 5, 50) == pytest.approx(105 / 100)

    def test_constant_scaling(self):
        assert d_condition(1000, 5, 10, C=2.0) == pytest.approx(4 * d_condition(1000, 5, 10))

    @pytest.mark.parametrize("o_prime", [0, 51])
    def test_domain(self, o_prime):
        with pytest.raises(DomainError):
            d_condition(100, 5, o_prime)


class TestTheoreticalTau:
    def test_prop2(self):
        assert theoretical_tau(1000, 10, 0.01, 2, 1, "prop2") == pytest.approx((10 + math.log(100)) / 1000, rel=1e-14)
        assert theoretical_tau(1000, 10, 0.01, 2, 1, "prop2") == pytest.approx(0.014605, abs=5e-7)

    def test_prop2_heavier_moment(self):
        base = (10 + math.log(100)) / 1000
        assert theoretical_tau(1000, 10, 0.01, 4, 1, "prop2") == pytest.approx(base ** 0.5)
        assert theoretical_tau(1000, 10, 0.01, math.inf, 3.0, "prop2") == 3.0

    def test_debias(self):
        assert theoretical_tau(1000, 0, 0.01, 2, 1, "debias") == pytest.approx(0.00460517, abs=5e-9)

    def test_asymptotic(self):
        n = round(math.exp(10))
        assert theoretical_tau(n, mode="asymptotic") == pytest.approx(math.log(n) / n, rel=1e-14)
        assert theoretical_tau(n, mode="asymptotic") == pytest.approx(4.540e-4, abs=5e-7)

    @pytest.mark.parametrize("kwargs", [
        {"ell": 1.5}, {"delta": 0.0}, {"delta": 1.0}, {"C": 0.0}, {"o": -1}, {"mode": "other"},
    ])
    def test_domain(self, kwargs):
        with pytest.raises(DomainError):
            theoretical_tau(1000, **{"o": 10, **kwargs})


class TestDeviationBound:
    def test_example(self):
        n, p, o, ld = 1000, 5, 10, math.log(100)
        ref = (
            math.sqrt(o / n) * math.sqrt(math.log(math.e * n / (2 * o)))
            + math.sqrt(p / n)
            + math.sqrt(ld / n * math.log(math.e * n / (2 * ld)))
        )
        assert deviation_bound(n, p, o, 0.01, 2, 1) == pytest.approx(ref, rel=1e-14)
        assert deviation_bound(n, p, o, 0.01, 2, 1) == pytest.approx(0.4542, abs=5e-4)

    def test_clean_drops_contamination_term(self):
        ld = math.log(100)
        ref = math.sqrt(5 / 1000) + math.sqrt(ld / 1000 * math.log(math.e * 1000 / (2 * ld)))
        assert deviation_bound(1000, 5, 0) == pytest.approx(ref, rel=1e-14)

    def test_parametric_term_halves(self):
        # with o = 0 and a large delta the confidence term is tiny; isolate sqrt(p/n)
        a = deviation_bound(1000, 5, 0, 0.99, 1e6) - deviation_bound(1000, 0, 0, 0.99, 1e6)
        b = deviation_bound(4000, 5, 0, 0.99, 1e6) - deviation_bound(4000, 0, 0, 0.99, 1e6)
        assert b == pytest.approx(a / 2, rel=1e-12)

    def test_constant(self):
        assert deviation_bound(1000, 5, 10, C1=3) == pytest.approx(3 * deviation_bound(1000, 5, 10))


class TestHessian:
    def test_zero_residuals_is_gram(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((40, 3))
        beta = rng.standard_normal(3)
        data = Dataset(X, X @ beta)
        assert np.allclose(welsch_hessian(data, beta, 0.7), X.T @ X / 40, atol=1e-14)
        lam = np.linalg.eigvalsh(X.T @ X / 40)[0]
        assert hessian_min_eigenvalue(data, beta, 0.7) == pytest.approx(lam, rel=1e-12)

    def test_scalar(self):
        data = Dataset(np.ones((1, 1)), np.array([1.0]))
        assert welsch_hessian(data, np.zeros(1), 1.0)[0, 0] == pytest.approx(0.0, abs=1e-16)

    def test_two_by_two_closed_form(self):
        # rows e1, e2 with residuals a, b: diagonal Hessian
        a, b, tau = 0.3, 1.2, 0.8
        data = Dataset(np.eye(2), np.array([a, b]))
        h = lambda r: math.exp(-tau * r * r / 2) * (1 - tau * r * r) / 2
        H = welsch_hessian(data, np.zeros(2), tau)
        assert np.allclose(H, np.diag([h(a), h(b)]), atol=1e-15)
        assert hessian_min_eigenvalue(data, np.zeros(2), tau) == pytest.approx(min(h(a), h(b)))

    def test_finite_difference(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            data = Dataset(rng.standard_normal((30, 3)), 2 * rng.standard_normal(30))
            beta, tau = rng.standard_normal(3), float(rng.uniform(0.1, 2))
            H = welsch_hessian(data, beta, tau)
            fd = np.column_stack([
                finite_diff_gradient(lambda b: welsch_objective(data, b, tau)[1][j], beta)
                for j in range(3)
            ])
            assert np.array_equal(H, H.T)
            big = np.abs(H) > 1e-3
            assert np.all(np.abs(fd - H)[big] <= 1e-5 * np.abs(H)[big])
            assert np.abs(fd - H).max() <= 1e-7

    def test_far_outside_basin_is_finite(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        data = Dataset(X, np.array([0.0, 0.0, 1.3]))
        assert math.isfinite(hessian_min_eigenvalue(data, np.zeros(2), 1.0))

    def test_scale_matches_rescaled_data(self):
        rng = np.random.default_rng(5)
        data = Dataset(rng.standard_normal((20, 2)), rng.standard_normal(20))
        s = 3.0
        scaled = Dataset(data.X / s, data.y / s)
        assert np.allclose(welsch_hessian(data, np.ones(2), 0.5, s),
                           welsch_hessian(scaled, np.ones(2), 0.5), atol=1e-14)
