import math

import numpy as np
import pytest
from scipy import stats

from wdbo.gp import (
    Dataset,
    GramState,
    MleSettings,
    block_inverse,
    block_inverse_fast,
    diff_coefficients,
    effective_noise,
    fit_mle,
    log_marginal_likelihood,
    posterior,
)
from wdbo.kernels import (
    Hyperparameters,
    KernelFamily,
    Observation,
    SpaceTimePoint,
    cross_covariance,
)

FAMILIES = [
    KernelFamily(),
    KernelFamily("se", 2.5, "se"),
    KernelFamily("matern", 0.5, "matern", 0),
    KernelFamily("matern", 1.5, "matern", 2),
]


def random_data(n, d=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.random((n, d)), rng.random(n), rng.standard_normal(n))


def dense_posterior(data, h, X, t):
    K = cross_covariance(data.X, data.t, data.X, data.t, h) + effective_noise(h) * np.eye(data.n)
    Kinv = np.linalg.inv(K)
    Kq = cross_covariance(X, t, data.X, data.t, h)
    mu = Kq @ Kinv @ data.y
    var = h.lam - np.einsum("ij,jk,ik->i", Kq, Kinv, Kq)
    return mu, var


class TestDataset:
    def test_roundtrip_observations(self):
        obs = [Observation(SpaceTimePoint([0.1, 0.2], 0.0), 1.0),
               Observation(SpaceTimePoint([0.3, 0.4], 0.5), -2.0)]
        data = Dataset.from_observations(obs)
        assert data.n == 2 and data.d == 2
        back = data.observations()
        assert back[1].y == -2.0 and back[1].point.t == 0.5

    def test_append_remove_preserve_order(self):
        data = random_data(4)
        data2 = data.append([0.9, 0.9], 1.0, 3.0).remove(1)
        np.testing.assert_array_equal(data2.y, [data.y[0], data.y[2], data.y[3], 3.0])

    def test_immutable(self):
        data = random_data(3)
        with pytest.raises(ValueError):
            data.y[0] = 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 1)), np.zeros(2), np.zeros(3))


class TestPosterior:
    def test_prior(self):
        state = GramState.build(Dataset.empty(2), Hyperparameters(lam=1.7))
        assert posterior(state, SpaceTimePoint([0.3, 0.3], 0.0)) == (0.0, 1.7)

    def test_single_observation(self):
        data = Dataset(np.array([[0.5]]), np.array([0.2]), np.array([2.0]))
        h = Hyperparameters(lam=1.0, sigma2=0.1)
        mu, var = posterior(GramState.build(data, h), SpaceTimePoint([0.5], 0.2))
        assert mu == pytest.approx(2.0 / 1.1, rel=1e-14)
        assert var == pytest.approx(1 - 1 / 1.1, rel=1e-12)
        assert var == pytest.approx(0.0909, abs=1e-4)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_dense_oracle(self, fam):
        data = random_data(5, seed=1)
        h = Hyperparameters(1.3, 0.3, 0.4, 0.05, fam)
        state = GramState.build(data, h)
        rng = np.random.default_rng(2)
        X, t = rng.random((30, 2)), rng.random(30)
        mu, var = state.predict(X, t)
        mu2, var2 = dense_posterior(data, h, X, t)
        np.testing.assert_allclose(mu, mu2, atol=1e-10)
        np.testing.assert_allclose(var, var2, atol=1e-10)
        assert np.all(var <= h.lam)

    def test_dimension_mismatch(self):
        state = GramState.build(random_data(3), Hyperparameters())
        with pytest.raises(ValueError):
            posterior(state, SpaceTimePoint([0.1], 0.0))

    def test_variance_clamped(self):
        # duplicate points with a tiny noise: cancellation must not go negative
        data = Dataset(np.full((4, 1), 0.5), np.zeros(4), np.ones(4))
        state = GramState.build(data, Hyperparameters(sigma2=0.0))
        _, var = state.predict(np.array([[0.5]]), [0.0])
        assert var[0] >= 0.0

    def test_variance_monotonicity(self):
        data = random_data(8, seed=4)
        h = Hyperparameters(1.0, 0.3, 0.3, 0.02)
        full = GramState.build(data, h)
        rng = np.random.default_rng(5)
        X, t = rng.random((200, 2)), rng.random(200) + 0.5
        for i in range(data.n):
            red = GramState.build(data.remove(i), h)
            assert np.all(np.sqrt(full.predict(X, t)[1]) <= np.sqrt(red.predict(X, t)[1]) + 1e-10)

    def test_interpolation_at_noise_floor(self):
        X = np.array([[0.1], [0.5], [0.9]])
        data = Dataset(X, np.zeros(3), np.array([1.0, -2.0, 0.5]))
        state = GramState.build(data, Hyperparameters(1.0, 0.05, 0.3, 0.0))
        mu, _ = state.predict(X, np.zeros(3))
        np.testing.assert_allclose(mu, data.y, atol=1e-4)

    def test_exchangeability(self):
        data = random_data(7, seed=6)
        h = Hyperparameters(1.0, 0.3, 0.3, 0.02)
        perm = np.random.default_rng(0).permutation(7)
        rng = np.random.default_rng(1)
        X, t = rng.random((50, 2)), rng.random(50)
        a = GramState.build(data, h).predict(X, t)
        b = GramState.build(data.subset(perm), h).predict(X, t)
        np.testing.assert_allclose(a[0], b[0], atol=1e-10)
        np.testing.assert_allclose(a[1], b[1], atol=1e-10)


def reorder(state, i):
    idx = [i] + [k for k in range(state.n) if k != i]
    return state.delta[np.ix_(idx, idx)]


class TestBlockInverse:
    def test_single(self):
        data = Dataset(np.array([[0.2]]), np.array([0.0]), np.array([1.0]))
        h = Hyperparameters(lam=2.0, sigma2=0.5)
        parts = block_inverse(GramState.build(data, h), 0)
        assert parts.E == pytest.approx(1 / 2.5)
        assert parts.F.shape == (0, 0) and parts.G.size == 0 and parts.H.size == 0

    def test_uncorrelated_pair(self):
        data = Dataset(np.array([[0.0], [1.0]]), np.array([0.0, 0.0]), np.array([1.0, 2.0]))
        h = Hyperparameters(lam=1.0, l_s=1e-3, sigma2=0.1, family=KernelFamily("se", 2.5, "se"))
        parts = block_inverse(GramState.build(data, h), 0)
        assert parts.E == pytest.approx(1 / 1.1)
        np.testing.assert_allclose(parts.G, 0.0, atol=1e-300)
        np.testing.assert_allclose(parts.H, 0.0, atol=1e-300)
        np.testing.assert_allclose(parts.F, [[1 / 1.1]])

    @pytest.mark.parametrize("n", [2, 6, 12])
    def test_dense_inverse(self, n):
        data = random_data(n, seed=n)
        state = GramState.build(data, Hyperparameters(1.0, 0.3, 0.3, 0.01))
        for i in range(n):
            parts = block_inverse(state, i)
            full = parts.assemble()
            D = reorder(state, i)
            np.testing.assert_allclose(full @ D, np.eye(n), atol=1e-8)
            np.testing.assert_allclose(full, np.linalg.inv(D), atol=1e-8)
            np.testing.assert_allclose(parts.H, parts.G, atol=1e-10)
            fast = block_inverse_fast(state, i)
            np.testing.assert_allclose(fast.assemble(), full, atol=1e-8)

    def test_index_errors(self):
        state = GramState.build(random_data(3), Hyperparameters())
        with pytest.raises(IndexError):
            block_inverse(state, 3)
        with pytest.raises(ValueError):
            block_inverse(GramState.build(Dataset.empty(1), Hyperparameters()), 0)


class TestDiffCoefficients:
    def test_single(self):
        data = Dataset(np.array([[0.2]]), np.array([0.0]), np.array([1.5]))
        h = Hyperparameters(lam=2.0, sigma2=0.5)
        co = diff_coefficients(GramState.build(data, h), 0)
        assert co.a == pytest.approx(1.5 / 2.5)
        assert co.b.size == 0 and co.c.size == 0 and co.M.shape == (0, 0)

    @pytest.mark.parametrize("fam", FAMILIES)
    @pytest.mark.parametrize("literal", [False, True])
    def test_two_posterior_oracle(self, fam, literal):
        data = random_data(8, seed=9)
        h = Hyperparameters(1.2, 0.35, 0.3, 0.03, fam)
        state = GramState.build(data, h)
        rng = np.random.default_rng(10)
        X, t = rng.random((200, 2)), 1.0 + rng.random(200)
        mu_d, var_d = state.predict(X, t)
        for i in range(data.n):
            parts = block_inverse(state, i) if literal else None
            co = diff_coefficients(state, i, parts)
            red = GramState.build(data.remove(i), h)
            mu_r, var_r = red.predict(X, t)
            k1 = cross_covariance(X, t, data.X[i:i + 1], data.t[i:i + 1], h)[:, 0]
            kr = cross_covariance(X, t, red.data.X, red.data.t, h)
            np.testing.assert_allclose(co.a * k1 + kr @ co.b, mu_d - mu_r, atol=1e-8)
            E = parts.E if literal else state.inv[i, i]
            quad = E * k1 ** 2 + k1 * (kr @ co.c) + np.einsum("ij,jk,ik->i", kr, co.M, kr)
            np.testing.assert_allclose(quad, var_r - var_d, atol=1e-8)
            np.testing.assert_allclose(co.M, co.M.T, atol=1e-10)

    def test_far_query_vanishes(self):
        data = Dataset(np.array([[0.0], [1.0]]), np.array([0.0, 0.0]), np.array([1.0, -1.0]))
        h = Hyperparameters(lam=1.0, l_s=1e-2, sigma2=0.1, family=KernelFamily("se", 2.5, "se"))
        state = GramState.build(data, h)
        co = diff_coefficients(state, 0)
        X = np.array([[0.5]])
        k1 = cross_covariance(X, [0.0], data.X[:1], data.t[:1], h)[0, 0]
        assert abs(co.a * k1) < 1e-100


class TestLikelihood:
    def test_standard_normal_at_zero(self):
        data = Dataset(np.array([[0.3]]), np.array([0.0]), np.array([0.0]))
        h = Hyperparameters(lam=0.9, sigma2=0.1)
        assert log_marginal_likelihood(data, h) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
        assert log_marginal_likelihood(data, h) == pytest.approx(-0.9189385, abs=1e-7)

    def test_scalar_gaussian(self):
        data = Dataset(np.array([[0.3]]), np.array([0.0]), np.array([2.0]))
        h = Hyperparameters(lam=0.9, sigma2=0.1)
        assert log_marginal_likelihood(data, h) == pytest.approx(-2.9189385, abs=1e-7)

    def test_multivariate_normal_oracle(self):
        data = random_data(3, seed=12)
        h = Hyperparameters(1.1, 0.3, 0.5, 0.05)
        K = cross_covariance(data.X, data.t, data.X, data.t, h) + h.sigma2 * np.eye(3)
        expected = stats.multivariate_normal(np.zeros(3), K).logpdf(data.y)
        assert log_marginal_likelihood(data, h) == pytest.approx(expected, abs=1e-10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_marginal_likelihood(Dataset.empty(1), Hyperparameters())


def sample_gp(h, n, d, seed):
    rng = np.random.default_rng(seed)
    X, t = rng.random((n, d)), rng.random(n)
    K = cross_covariance(X, t, X, t, h) + h.sigma2 * np.eye(n)
    y = np.linalg.cholesky(K) @ rng.standard_normal(n)
    return Dataset(X, t, y)


class TestFitMle:
    def test_recovers_spatial_lengthscale(self):
        truth = Hyperparameters(1.0, 0.2, 0.3, 0.01)
        hits = 0
        for seed in range(10):
            data = sample_gp(truth, 60, 2, seed)
            fit = fit_mle(data, truth.family, Hyperparameters(family=truth.family, l_s=0.5, l_t=0.5), seed=seed)
            hits += 0.5 <= fit.l_s / truth.l_s <= 2.0
        assert hits >= 8

    def test_never_worse_than_warm_start(self):
        data = random_data(20, seed=3)
        prev = Hyperparameters(1.0, 0.3, 0.3, 0.1)
        fit = fit_mle(data, prev.family, prev, seed=0)
        assert log_marginal_likelihood(data, fit) >= log_marginal_likelihood(data, prev) - 1e-9

    def test_constant_zero_data(self):
        data = Dataset(np.random.default_rng(0).random((10, 2)), np.linspace(0, 1, 10), np.zeros(10))
        fit = fit_mle(data, KernelFamily(), Hyperparameters(), seed=0)
        s = MleSettings()
        assert fit.lam == pytest.approx(s.lam_bounds[0], rel=1e-6)
        assert fit.sigma2 == pytest.approx(s.sigma2_bounds[0], rel=1e-6)

    def test_deterministic(self):
        data = random_data(15, seed=8)
        a = fit_mle(data, KernelFamily(), Hyperparameters(), seed=4)
        b = fit_mle(data, KernelFamily(), Hyperparameters(), seed=4)
        assert a == b

    def test_bounds_respected(self):
        data = random_data(15, seed=8)
        fit = fit_mle(data, KernelFamily(), Hyperparameters(), seed=0)
        var = float(np.var(data.y))
        s = MleSettings()
        assert s.lam_bounds[0] * var * (1 - 1e-9) <= fit.lam <= s.lam_bounds[1] * var * (1 + 1e-9)
        assert s.l_s_bounds[0] * (1 - 1e-9) <= fit.l_s <= s.l_s_bounds[1] * (1 + 1e-9)
        assert s.l_t_bounds[0] * (1 - 1e-9) <= fit.l_t <= s.l_t_bounds[1] * (1 + 1e-9)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            fit_mle(random_data(1), KernelFamily(), Hyperparameters())

    def test_ard(self):
        fam = KernelFamily("se", 2.5, "se")
        data = random_data(20, seed=2)
        fit = fit_mle(data, fam, Hyperparameters(family=fam, ard=(0.3, 0.3)), seed=0)
        assert len(fit.ard) == 2
