import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from valdesign import closed_form as cf
from valdesign.kernels import ConditionalKernel, ValidationKernel, matern32
from valdesign.measures import DiscreteMu, UniformMu
from valdesign.testbed import sobol_points

SQ3 = np.sqrt(3.0)


class TestUnivariate:
    def test_potential_quadrature(self):
        assert_allclose(cf.potential_uniform_1d(10.0, 0.5), oracles.potential_1d(10.0, 0.5),
                        rtol=0, atol=1e-10)

    def test_potential_symmetry_and_endpoint(self):
        x = np.linspace(0, 1, 11)
        assert_allclose(cf.potential_uniform_1d(4.0, x), cf.potential_uniform_1d(4.0, 1 - x),
                        atol=1e-15)
        assert_allclose(cf.potential_uniform_1d(4.0, 0.0), cf._S(4.0, 1.0), rtol=1e-15)
        assert cf._S(3.0, 0.0) == 0.0 and cf._T(3.0, 0.0) == 0.0

    def test_energy_quadrature(self):
        assert_allclose(cf.energy_uniform_1d(10.0), oracles.energy_1d(10.0), atol=1e-8)

    def test_energy_small_rate(self):
        assert abs(cf.energy_uniform_1d(1e-4) - 1.0) < 1e-3

    def test_energy_sq_quadrature(self):
        assert_allclose(cf.energy_sq_uniform_1d(7.0), oracles.energy_sq_1d(7.0), atol=1e-8)

    @pytest.mark.parametrize("rate,x", [(5, 0.25), (10, 0.5), (20, 0.9)])
    def test_potential_sq_quadrature(self, rate, x):
        assert_allclose(cf.potential_sq_uniform_1d(rate, x), oracles.potential_sq_1d(rate, x),
                        atol=1e-8)

    def test_potential_sq_peaks_at_center(self):
        grid = np.round(np.arange(1, 10) / 10, 12)
        vals = cf.potential_sq_uniform_1d(6.0, grid)
        assert np.argmax(vals) == 4

    def test_beta(self):
        assert_allclose(cf.beta_1d(10.0, 0.2, 0.7), oracles.beta_1d(10.0, 0.2, 0.7), atol=1e-8)
        assert_allclose(cf.beta_1d(3.0, 0.2, 0.7), cf.beta_1d(3.0, 0.7, 0.2), rtol=1e-14)

    def test_beta_diagonal_is_sq_potential(self, rng):
        u = rng.random(20)
        assert_allclose(cf.beta_1d(8.0, u, u), cf.potential_sq_uniform_1d(8.0, u), rtol=1e-12)

    def test_gamma(self):
        assert_allclose(cf.gamma_1d(10.0, 0.3, 0.6), oracles.gamma_1d(10.0, 0.3, 0.6), atol=1e-7)

    def test_gamma_symmetries(self, rng):
        u, v = rng.random(10), rng.random(10)
        g = cf.gamma_1d(5.0, u, v)
        assert_allclose(g, cf.gamma_1d(5.0, v, u), rtol=1e-13)
        assert_allclose(g, cf.gamma_1d(5.0, 1 - u, 1 - v), rtol=1e-12)

    def test_random_triples(self, rng):
        for _ in range(5):
            r, u, v = rng.uniform(1, 30), rng.random(), rng.random()
            assert_allclose(cf.beta_1d(r, u, v), oracles.beta_1d(r, u, v), atol=1e-7)
            assert_allclose(cf.potential_uniform_1d(r, u), oracles.potential_1d(r, u), atol=1e-7)

    def test_no_overflow_large_rate(self):
        vals = [cf.potential_uniform_1d(200.0, 0.3), cf.energy_uniform_1d(200.0),
                cf.energy_sq_uniform_1d(200.0), cf.beta_1d(200.0, 0.0, 1.0),
                cf.gamma_1d(200.0, 0.0, 1.0)]
        assert np.all(np.isfinite(vals))

    def test_domain(self):
        with pytest.raises(cf.DomainError):
            cf.potential_uniform_1d(1.0, 1.5)
        with pytest.raises(cf.DomainError):
            cf.beta_1d(1.0, -0.1, 0.5)
        with pytest.raises(ValueError):
            cf.energy_uniform_1d(0.0)


class TestProduct:
    def test_energy_factorizes(self):
        K = matern32(2, 1.7, "product")
        assert_allclose(cf.energy_product(K), cf.energy_uniform_1d(K.rate) ** 2, rtol=1e-12)

    def test_potential_against_discrete(self):
        K = matern32(2, 3.0, "product")
        S = sobol_points(2, 1 << 14, 1)
        X = np.random.default_rng(0).random((10, 2))
        assert_allclose(cf.potential_product(K, X), K(X, S).mean(axis=1), rtol=5e-3)


class TestSeparableCache:
    def test_single_point(self):
        cond = ConditionalKernel(matern32(1, 4.0, "product"), [[0.3]])
        c = cf.SeparableMuCache(cond)
        r = cond.base.rate
        assert_allclose(c.omega, [[cf.beta_1d(r, 0.3, 0.3)]])
        assert_allclose(c.gamma, [[cf.gamma_1d(r, 0.3, 0.3)]])

    def test_matrices_symmetric(self, rng):
        c = cf.build_mu_cache(matern32(3, 2.0, "product"), rng.random((5, 3)))
        assert_allclose(c.omega, c.omega.T, rtol=1e-14)
        assert_allclose(c.gamma, c.gamma.T, rtol=1e-14)

    def test_omega_gamma_monte_carlo(self, rng):
        K = matern32(2, 2.0, "product")
        X = rng.random((3, 2))
        c = cf.build_mu_cache(K, X)
        T = rng.random((1_000_000, 2))
        S = rng.random((1_000_000, 2))
        KT = K(T, X)                                     # (N, n)
        KS = K(S, X)
        kts = np.exp(-K.rate * np.abs(T - S).sum(1)) * np.prod(1 + K.rate * np.abs(T - S), 1)
        for j in range(3):
            for k in range(3):
                om = KT[:, j] * KT[:, k]
                assert abs(om.mean() - c.omega[j, k]) < 3 * om.std() / 1e3
                ga = KT[:, j] * KS[:, k] * kts
                assert abs(ga.mean() - c.gamma[j, k]) < 3 * ga.std() / 1e3

    def test_requires_product_kernel(self, rng):
        with pytest.raises(TypeError):
            cf.SeparableMuCache(ConditionalKernel(matern32(2, 1.0), rng.random((3, 2))))

    def test_empty_design(self, rng):
        K = matern32(2, 3.0, "product")
        c = cf.SeparableMuCache(ConditionalKernel(K, np.zeros((0, 2))))
        X = rng.random((4, 2))
        assert_allclose(c.potential_validation(X), 2 * cf.potential_sq_product(K, X) + 1)
        assert_allclose(c.energy_validation(), 2 * cf.energy_sq_product(K) + 1)

    def test_conditional_potential_energy(self, rng):
        K = matern32(2, 3.0, "product")
        Xn = rng.random((6, 2))
        cond = ConditionalKernel(K, Xn)
        c = cf.SeparableMuCache(cond)
        S = sobol_points(2, 1 << 14, 5)
        X = rng.random((8, 2))
        assert_allclose(c.potential_conditional(X), cond(X, S).mean(1), rtol=5e-3, atol=1e-6)
        assert np.all(c.potential_conditional(Xn) == 0.0)
        assert_allclose(c.energy_conditional(), cond(S[:4096]).mean(), rtol=5e-3)

    def test_validation_potential_discrete(self, rng):
        K = matern32(2, 3.0, "product")
        Xn = rng.random((5, 2))
        V = ValidationKernel(ConditionalKernel(K, Xn))
        c = cf.SeparableMuCache(V.cond)
        X = np.vstack([rng.random((20, 2)), Xn[:2]])
        ref = DiscreteMu(sobol_points(2, 1 << 16, 9)).potential(V, X)
        assert_allclose(c.potential_validation(X), ref, rtol=5e-3)

    def test_validation_energy_discrete(self):
        V = ValidationKernel(ConditionalKernel(matern32(1, 10 / SQ3, "product"), [[0.3], [0.8]]))
        c = cf.SeparableMuCache(V.cond)
        ref = DiscreteMu(sobol_points(1, 1 << 12, 2)).energy(V)
        assert_allclose(c.energy_validation(), ref, rtol=5e-3)

    def test_printed_quadratic_term_disagrees(self, rng):
        # the quadratic term must integrate to tr[(K^-1 Omega)^2]; the Gamma
        # version differs from brute force by far more than discretization error
        V = ValidationKernel(ConditionalKernel(matern32(2, 2.0, "product"), rng.random((8, 2))))
        c = cf.SeparableMuCache(V.cond)
        ref = DiscreteMu(sobol_points(2, 1 << 12, 4)).energy(V)
        assert abs(c.energy_validation() / ref - 1) < 5e-3
        assert abs(c.energy_validation_as_printed() / ref - 1) > 0.1

    def test_validation_energy_nonnegative(self, rng):
        for _ in range(50):
            d, n = rng.integers(1, 4), rng.integers(1, 21)
            c = cf.build_mu_cache(matern32(d, rng.uniform(0.5, 5), "product"), rng.random((n, d)))
            assert c.energy_validation() >= 0.0

    def test_uniform_mu_dispatch(self, rng):
        K = matern32(2, 2.0, "product")
        Xn = rng.random((4, 2))
        cond = ConditionalKernel(K, Xn)
        mu = UniformMu(2)
        X = rng.random((3, 2))
        assert_allclose(mu.potential(ValidationKernel(cond), X),
                        cf.potential_validation_mu(cf.SeparableMuCache(cond), X))
        assert_allclose(mu.energy(K), cf.energy_product(K))
        with pytest.raises(TypeError):
            mu.potential(matern32(2, 2.0), X)
