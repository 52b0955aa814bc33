"""Kernel contracts: SVD, pseudo-inverse, operator norm, Gaussian sampling, RNG streams."""

import numpy as np
import pytest
from scipy import stats

from loralab import (
    RngKey,
    ensure_generator,
    operator_norm,
    pinv,
    sample_gaussian,
    smallest_singular_value,
    svd,
)


class TestSvd:
    def test_identity_singular_values(self):
        res = svd(np.eye(3))
        np.testing.assert_allclose(res.singular_values, [1.0, 1.0, 1.0], atol=1e-14)

    def test_diagonal_singular_values(self):
        res = svd(np.diag([3.0, 0.0]))
        np.testing.assert_allclose(res.singular_values, [3.0, 0.0], atol=1e-14)

    def test_random_reconstruction(self):
        m = RngKey(11).generator().standard_normal((5, 2))
        res = svd(m)
        err = np.linalg.norm(res.reconstruct() - m)
        assert err <= 1e-10 * max(1.0, np.linalg.norm(m))

    def test_descending_nonnegative(self):
        m = RngKey(12).generator().standard_normal((7, 4))
        s = svd(m).singular_values
        assert np.all(s >= 0)
        assert np.all(np.diff(s) <= 0)

    def test_orthonormal_factors(self):
        m = RngKey(13).generator().standard_normal((6, 3))
        res = svd(m)
        k = min(m.shape)
        assert np.linalg.norm(res.u.T @ res.u - np.eye(k)) <= 1e-10
        assert np.linalg.norm(res.v.T @ res.v - np.eye(k)) <= 1e-10

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            svd(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            svd(np.zeros((0, 3)))


class TestPinv:
    def test_identity(self):
        np.testing.assert_allclose(pinv(np.eye(4)), np.eye(4), atol=1e-12)

    def test_rank_deficient_diagonal(self):
        np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-14)

    def test_tall_full_rank_left_inverse(self):
        m = RngKey(21).generator().standard_normal((6, 2))
        np.testing.assert_allclose(pinv(m) @ m, np.eye(2), atol=1e-8)

    def test_matches_normal_equations_oracle(self):
        # independent oracle for full-column-rank input: (M^T M)^{-1} M^T
        m = RngKey(22).generator().standard_normal((6, 2))
        oracle = np.linalg.solve(m.T @ m, m.T)
        np.testing.assert_allclose(pinv(m), oracle, atol=1e-10)

    def test_double_pinv_restores_full_rank_matrix(self):
        m = RngKey(23).generator().standard_normal((5, 5))
        assert np.linalg.norm(pinv(pinv(m)) - m) <= 1e-8

    @pytest.mark.parametrize("shape", [(3, 3), (8, 5), (5, 8), (32, 32), (32, 7)])
    def test_moore_penrose_conditions(self, shape):
        m = RngKey(hash(shape) % 1000 + 24).generator().standard_normal(shape)
        p = pinv(m)
        scale = max(1.0, np.linalg.norm(m))
        assert np.linalg.norm(m @ p @ m - m) <= 1e-8 * scale
        assert np.linalg.norm(p @ m @ p - p) <= 1e-8 * scale
        assert np.linalg.norm((m @ p).T - m @ p) <= 1e-8 * scale
        assert np.linalg.norm((p @ m).T - p @ m) <= 1e-8 * scale

    def test_negative_tolerance_rejected(self):
        with pytest.raises(ValueError, match="rank_tol"):
            pinv(np.eye(2), rank_tol=-1.0)


class TestOperatorNorm:
    def test_diagonal(self):
        assert operator_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, abs=1e-12)

    def test_zero_matrix(self):
        assert operator_norm(np.zeros((4, 2))) == 0.0

    def test_matches_svd_max(self):
        m = RngKey(31).generator().standard_normal((4, 4))
        assert abs(operator_norm(m) - svd(m).singular_values[0]) <= 1e-9

    def test_submultiplicative(self):
        gen = RngKey(32).generator()
        for _ in range(20):
            a = gen.standard_normal((5, 4))
            b = gen.standard_normal((4, 6))
            assert operator_norm(a @ b) <= operator_norm(a) * operator_norm(b) + 1e-9

    def test_smallest_singular_value(self):
        m = np.diag([5.0, 2.0, 0.5])
        assert smallest_singular_value(m) == pytest.approx(0.5, abs=1e-12)


class TestSampleGaussian:
    def test_moments_unit_scale(self):
        m = sample_gaussian(RngKey(41), 1000, 1000, 1.0)
        assert abs(m.mean()) <= 4e-3
        assert abs(m.var() - 1.0) <= 0.01

    def test_moments_half_scale(self):
        m = sample_gaussian(RngKey(42), 1000, 1000, 0.5)
        assert abs(m.var() - 0.25) <= 0.01 * 0.25

    def test_deterministic_under_fixed_key(self):
        a = sample_gaussian(RngKey(43), 8, 8, 1.0)
        b = sample_gaussian(RngKey(43), 8, 8, 1.0)
        np.testing.assert_array_equal(a, b)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError, match="scale"):
            sample_gaussian(RngKey(44), 2, 2, 0.0)

    def test_chi_square_goodness_of_fit(self):
        # 16 equiprobable bins, 1e5 draws, significance 0.001
        draws = sample_gaussian(RngKey(45), 100_000, 1, 1.0).ravel()
        edges = stats.norm.ppf(np.linspace(0, 1, 17))
        observed, _ = np.histogram(draws, bins=edges)
        expected = len(draws) / 16
        chi2_stat = np.sum((observed - expected) ** 2 / expected)
        assert chi2_stat < stats.chi2.ppf(0.999, df=15)


class TestRngStreams:
    def test_same_key_same_stream(self):
        g1 = RngKey(5, (1, 2)).generator()
        g2 = RngKey(5, (1, 2)).generator()
        np.testing.assert_array_equal(g1.standard_normal(16), g2.standard_normal(16))

    def test_split_streams_differ(self):
        a = RngKey(5).split(0).generator().standard_normal(16)
        b = RngKey(5).split(1).generator().standard_normal(16)
        assert not np.array_equal(a, b)

    def test_split_is_order_independent(self):
        direct = RngKey(5).split(3, 1).generator().standard_normal(4)
        stepwise = RngKey(5).split(3).split(1).generator().standard_normal(4)
        np.testing.assert_array_equal(direct, stepwise)

    def test_ensure_generator_accepts_int_key_generator(self):
        assert isinstance(ensure_generator(3), np.random.Generator)
        assert isinstance(ensure_generator(RngKey(3)), np.random.Generator)
        gen = RngKey(3).generator()
        assert ensure_generator(gen) is gen

    def test_rejects_bad_seed(self):
        with pytest.raises(ValueError):
            RngKey(-1)
        with pytest.raises(ValueError):
            RngKey(2**64)
