import itertools
import json

import numpy as np
import pytest

from conftest import random_psd
from isserlis.errors import ValidationError
from isserlis.gaussian import (
    CholeskyFactor,
    CovarianceMatrix,
    MomentResult,
    cholesky_factor,
    gaussian_even_moment,
    isserlis_moment,
    load_covariance,
    mc_moment,
    sample_gaussian,
    vector_moment,
)
from isserlis.tensor import DenseTensor, expectation_via_sigma_contraction


def elementary(indices, d):
    t = np.zeros((d,) * len(indices))
    t[tuple(i - 1 for i in indices)] = 1.0
    return DenseTensor(t)


class TestLoadCovariance:
    def test_identity(self):
        assert load_covariance(np.eye(2)).dim == 2

    def test_correlated(self):
        load_covariance([[1, 0.5], [0.5, 1]])

    def test_indefinite(self):
        with pytest.raises(ValidationError, match="-1"):
            load_covariance([[1, 2], [2, 1]])

    def test_non_square(self):
        with pytest.raises(ValidationError):
            load_covariance([[1, 0, 0], [0, 1, 0]])

    def test_symmetrizes(self):
        cov = load_covariance([[1, 0.3 + 1e-14], [0.3, 1]])
        assert cov.sigma[0, 1] == cov.sigma[1, 0]

    def test_tolerates_rounding_noise(self):
        sigma = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-12 * np.eye(2)
        load_covariance(sigma)

    def test_json_round_trip(self, rng):
        cov = load_covariance(random_psd(rng, 3))
        again = CovarianceMatrix.from_json(json.dumps(cov.to_json()))
        assert np.array_equal(again.sigma, cov.sigma)

    def test_json_dim_mismatch(self):
        with pytest.raises(ValidationError):
            CovarianceMatrix.from_json({"dim": 3, "sigma": [[1]]})


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky_factor(load_covariance(np.eye(3))).matrix, np.eye(3))

    def test_hand_example(self):
        a = cholesky_factor(load_covariance([[4, 2], [2, 2]])).matrix
        np.testing.assert_allclose(a, [[2, 0], [1, 1]], atol=1e-15)

    def test_rank_one(self):
        sigma = np.ones((2, 2))
        a = cholesky_factor(load_covariance(sigma)).matrix
        assert np.max(np.abs(a @ a.T - sigma)) <= 1e-10

    def test_zero_matrix(self):
        a = cholesky_factor(load_covariance(np.zeros((2, 2)))).matrix
        np.testing.assert_array_equal(a, np.zeros((2, 2)))

    def test_reconstruction_random(self, rng):
        for trial in range(100):
            d = int(rng.integers(1, 9))
            rank = int(rng.integers(1, d + 1)) if trial % 3 == 0 else d
            sigma = random_psd(rng, d, rank) * 10.0 ** rng.uniform(-3, 3)
            cov = load_covariance(sigma)
            a = cholesky_factor(cov).matrix
            assert np.max(np.abs(a @ a.T - cov.sigma)) <= 1e-10 * max(1.0, np.max(np.abs(cov.sigma)))

    def test_factor_json_round_trip(self, rng):
        f = cholesky_factor(load_covariance(random_psd(rng, 3)))
        again = CholeskyFactor.from_json(json.dumps(f.to_json()))
        assert np.array_equal(again.matrix, f.matrix)


class TestIsserlisMoment:
    def test_odd_is_zero(self, rng):
        cov = load_covariance(random_psd(rng, 3))
        assert isserlis_moment(cov, (1, 2, 3)).value == 0.0

    def test_four_point_formula(self, rng):
        s = random_psd(rng, 4)
        expected = s[0, 1] * s[2, 3] + s[0, 2] * s[1, 3] + s[0, 3] * s[1, 2]
        got = isserlis_moment(load_covariance(s), (1, 2, 3, 4)).value
        assert got == pytest.approx(expected, rel=1e-15)

    def test_repeated_indices(self):
        rho = 0.3
        got = isserlis_moment(load_covariance([[1, rho], [rho, 1]]), (1, 1, 2, 2))
        assert got.value == pytest.approx(1 + 2 * rho ** 2, rel=1e-15)
        assert got.provenance == "analytic" and got.stderr is None

    def test_sixth_moment(self):
        assert isserlis_moment(load_covariance([[1.0]]), (1,) * 6).value == 15.0

    def test_empty_product(self):
        assert isserlis_moment(load_covariance([[2.0]]), ()).value == 1.0

    def test_index_out_of_range(self):
        with pytest.raises(ValidationError):
            isserlis_moment(load_covariance(np.eye(2)), (1, 3))

    def test_permutation_symmetry(self, rng):
        for n in (2, 4, 6):
            d = int(rng.integers(1, 5))
            cov = load_covariance(random_psd(rng, d))
            idx = tuple(int(i) for i in rng.integers(1, d + 1, size=n))
            base = isserlis_moment(cov, idx).value
            for perm in itertools.islice(itertools.permutations(idx), 50):
                assert isserlis_moment(cov, perm).value == pytest.approx(base, rel=1e-14, abs=1e-300)

    def test_scaling(self, rng):
        for n in (2, 4, 6):
            cov = load_covariance(random_psd(rng, 3))
            idx = tuple(int(i) for i in rng.integers(1, 4, size=n))
            base = isserlis_moment(cov, idx).value
            scaled = isserlis_moment(load_covariance(4.0 * cov.sigma), idx).value
            assert scaled == pytest.approx(2.0 ** n * base, rel=1e-12)

    def test_contraction_oracle(self, rng):
        for _ in range(40):
            d = int(rng.integers(1, 4))
            n = int(rng.choice([0, 1, 2, 3, 4, 5, 6]))
            cov = load_covariance(random_psd(rng, d))
            idx = tuple(int(i) for i in rng.integers(1, d + 1, size=n))
            oracle = expectation_via_sigma_contraction(elementary(idx, d), cov).value
            got = isserlis_moment(cov, idx).value
            assert got == pytest.approx(oracle, rel=1e-12, abs=1e-300)

    def test_threads(self, rng):
        cov = load_covariance(random_psd(rng, 4))
        idx = (1, 2, 3, 4, 1, 2, 3, 4, 1, 2)
        assert isserlis_moment(cov, idx, threads=1).value == isserlis_moment(cov, idx, threads=3).value


class TestVectorMoment:
    def test_basis_vectors(self, rng):
        cov = load_covariance(random_psd(rng, 3))
        idx = (1, 3, 3, 2)
        basis = np.eye(3)[[i - 1 for i in idx]]
        assert vector_moment(cov, basis).value == pytest.approx(isserlis_moment(cov, idx).value, rel=1e-15)

    def test_odd(self, rng):
        cov = load_covariance(random_psd(rng, 2))
        assert vector_moment(cov, rng.standard_normal((3, 2))).value == 0.0

    def test_hand_example(self):
        assert vector_moment(load_covariance(np.eye(2)), [[1, 1]] * 4).value == 12.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            vector_moment(load_covariance(np.eye(2)), [[1, 0, 0], [0, 1, 0]])

    def test_multilinear(self, rng):
        cov = load_covariance(random_psd(rng, 3))
        for n in (2, 4, 6):
            vecs = rng.standard_normal((n, 3))
            u, w = rng.standard_normal(3), rng.standard_normal(3)
            alpha, beta = 1.7, -0.4
            for slot in range(n):
                mix, a, b = vecs.copy(), vecs.copy(), vecs.copy()
                mix[slot] = alpha * u + beta * w
                a[slot], b[slot] = u, w
                lhs = vector_moment(cov, mix).value
                rhs = alpha * vector_moment(cov, a).value + beta * vector_moment(cov, b).value
                scale = abs(alpha * vector_moment(cov, a).value) + abs(beta * vector_moment(cov, b).value)
                assert abs(lhs - rhs) <= 1e-12 * max(1.0, scale)


class TestEvenMoment:
    @pytest.mark.parametrize("k, expected", [(1, 1), (2, 3), (3, 15), (4, 105)])
    def test_values(self, k, expected):
        assert gaussian_even_moment(k) == expected

    def test_k_zero(self):
        with pytest.raises(ValidationError):
            gaussian_even_moment(0)


class TestSampling:
    def test_zero_factor(self):
        y = sample_gaussian(CholeskyFactor(np.zeros((2, 2))), 1, 100)
        assert not np.any(y)

    def test_deterministic_and_prefix(self):
        f = cholesky_factor(load_covariance([[2, 0.5], [0.5, 1]]))
        a = sample_gaussian(f, 9, 70_000)
        assert np.array_equal(a, sample_gaussian(f, 9, 70_000, threads=4))
        assert np.array_equal(a[:1000], sample_gaussian(f, 9, 1000))

    def test_identity_covariance(self):
        y = sample_gaussian(cholesky_factor(load_covariance(np.eye(2))), 42, 10 ** 6)
        np.testing.assert_allclose(y.T @ y / len(y), np.eye(2), atol=0.01)


class TestMonteCarloMoment:
    def test_agrees_with_analytic(self, rng):
        for n in (2, 4, 6):
            d = int(rng.integers(1, 5))
            cov = load_covariance(random_psd(rng, d))
            idx = tuple(int(i) for i in rng.integers(1, d + 1, size=n))
            exact = isserlis_moment(cov, idx).value
            mc = mc_moment(cholesky_factor(cov), idx, seed=1000 + n, samples=10 ** 6)
            assert mc.provenance == "monte-carlo" and mc.samples == 10 ** 6
            assert abs(mc.value - exact) < 5 * mc.stderr

    def test_threads_bit_identical(self):
        f = cholesky_factor(load_covariance([[1, 0.2], [0.2, 3]]))
        a = mc_moment(f, (1, 2, 2, 2), 5, 200_000, threads=1)
        b = mc_moment(f, (1, 2, 2, 2), 5, 200_000, threads=4)
        assert a == b


class TestMomentResult:
    def test_stderr_iff_mc(self):
        with pytest.raises(ValidationError):
            MomentResult(1.0, "analytic", stderr=0.1)
        with pytest.raises(ValidationError):
            MomentResult(1.0, "monte-carlo", samples=10)

    def test_json(self):
        r = MomentResult(2.5, "monte-carlo", samples=100, stderr=0.25)
        assert json.loads(json.dumps(r.to_json())) == {
            "value": 2.5, "provenance": "monte-carlo", "samples": 100, "stderr": 0.25,
        }
