import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import conditional_dense, matern_dense
from valdesign.gp import (GpModel, IseReport, default_bracket, fit_theta_loo, ise_hat,
                          ise_reference, loo_ise, relative_error)
from valdesign.kernels import ConditionalKernel, FactorizationError, matern32
from valdesign.testbed import random_polynomial, sobol_points


def dense_predict(theta, X, y, A, form):
    yb = y.mean()
    Kn = matern_dense(theta, X, X, form)
    return matern_dense(theta, A, X, form) @ np.linalg.solve(Kn, y - yb) + yb


def brute_loo(X, y, theta, form):
    """Refit on ``n - 1`` points for every ``i``; centering from all ``n`` points."""
    yb = y.mean()
    res = []
    for i in range(len(y)):
        keep = np.arange(len(y)) != i
        Kn = matern_dense(theta, X[keep], X[keep], form)
        k = matern_dense(theta, X[i:i + 1], X[keep], form)[0]
        pred = k @ np.linalg.solve(Kn, y[keep] - yb) + yb
        res.append(y[i] - pred)
    return float(np.mean(np.square(res)))


class TestPredictor:
    def test_dense_oracle_1d(self, rng):
        X, y, A = rng.random((12, 1)), rng.standard_normal(12), rng.random((30, 1))
        m = GpModel(X, y, 4.0)
        assert_allclose(m.predict(A), dense_predict(4.0, X, y, A, "product"), atol=1e-10)

    def test_dense_oracle_random(self, rng):
        for _ in range(20):
            d, n = rng.integers(1, 4), rng.integers(2, 31)
            form = ["isotropic", "product"][rng.integers(2)]
            theta = rng.uniform(1, 6)
            X, y, A = rng.random((n, d)), rng.standard_normal(n), rng.random((10, d))
            m = GpModel(X, y, theta, form)
            assert_allclose(m.predict(A), dense_predict(theta, X, y, A, form), atol=1e-10)
            assert_allclose(m.posterior_variance(A),
                            np.diag(conditional_dense(theta, X, A, A, form)), atol=1e-10)

    def test_interpolates(self, rng):
        X, y = rng.random((25, 2)), rng.standard_normal(25) * 5
        m = GpModel(X, y, 3.0)
        assert np.all(np.abs(m.predict(X) - y) <= 1e-8 * np.abs(y).max())

    def test_constant_data(self, rng):
        X = rng.random((10, 2))
        m = GpModel(X, np.full(10, 2.5), 3.0)
        assert_allclose(m.predict(rng.random((7, 2))), 2.5, rtol=1e-14)

    def test_uncentered(self, rng):
        X, y, A = rng.random((8, 1)), rng.standard_normal(8), rng.random((4, 1))
        m = GpModel(X, y, 3.0, center=False)
        K = matern_dense(3.0, A, X, "product")
        ref = K @ np.linalg.solve(matern_dense(3.0, X, X, "product"), y)
        assert_allclose(m.predict(A), ref, atol=1e-10)

    def test_variance_identity(self, rng):
        X, A = rng.random((9, 2)), rng.random((15, 2))
        m = GpModel(X, rng.standard_normal(9), 2.0)
        cond = ConditionalKernel(matern32(2, 2.0, "product"), X)
        assert np.array_equal(m.posterior_variance(A), cond.diag(A))
        assert np.all(m.posterior_variance(X) == 0.0)

    def test_empty_design_variance(self, rng):
        m = GpModel(np.zeros((0, 2)), np.zeros(0), 2.0)
        assert_allclose(m.posterior_variance(rng.random((3, 2))), 1.0)

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            GpModel(rng.random((4, 2)), np.zeros(3), 1.0)


class TestImse:
    def test_subset_of_design(self, rng):
        X = rng.random((10, 2))
        m = GpModel(X, rng.standard_normal(10), 2.0)
        assert m.imse_hat(X[:4]) == 0.0

    def test_uniform_weights(self, rng):
        X, Z = rng.random((10, 2)), rng.random((6, 2))
        m = GpModel(X, rng.standard_normal(10), 2.0)
        assert_allclose(m.imse_hat(Z, np.full(6, 1 / 6)), m.imse_hat(Z), rtol=1e-14)

    def test_signed_value_kept(self, rng):
        X, Z = rng.random((10, 2)), rng.random((3, 2))
        m = GpModel(X, rng.standard_normal(10), 2.0)
        assert m.imse_hat(Z, [-1.0, 0.0, 0.0]) < 0

    def test_weight_length(self, rng):
        m = GpModel(rng.random((5, 2)), rng.standard_normal(5), 2.0)
        with pytest.raises(ValueError):
            m.imse_hat(rng.random((3, 2)), [1.0])


class TestLoo:
    def test_dubrule_identity(self, rng):
        for _ in range(10):
            d, n = rng.integers(1, 4), rng.integers(5, 41)
            form = ["isotropic", "product"][rng.integers(2)]
            theta = rng.uniform(1, 5)
            X, y = rng.random((n, d)), rng.standard_normal(n)
            assert_allclose(loo_ise(GpModel(X, y, theta, form)), brute_loo(X, y, theta, form),
                            rtol=1e-8)

    def test_constant_data(self, rng):
        assert GpModel(rng.random((8, 2)), np.ones(8), 2.0).loo_ise() < 1e-28

    def test_permutation_invariant(self, rng):
        X, y = rng.random((15, 2)), rng.standard_normal(15)
        p = rng.permutation(15)
        assert_allclose(GpModel(X, y, 2.0).loo_ise(), GpModel(X[p], y[p], 2.0).loo_ise(),
                        rtol=1e-11)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            GpModel([[0.5]], [1.0], 1.0).loo_ise()


class TestFitTheta:
    def test_gp_draw_recovery(self):
        rng = np.random.default_rng(2024)
        X = np.sort(rng.random((100, 1)), axis=0)
        K = matern_dense(10.0, X, X, "product") + 1e-10 * np.eye(100)
        y = np.linalg.cholesky(K) @ rng.standard_normal(100)
        theta, _ = fit_theta_loo(X, y)
        assert 10 / 3 <= theta <= 30

    def test_scale_invariance(self, rng):
        X = sobol_points(2, 30, 1)
        y = np.sin(5 * X[:, 0]) + X[:, 1] ** 2
        t1, v1 = fit_theta_loo(X, y)
        t2, v2 = fit_theta_loo(X, 3.0 * y)
        assert_allclose(t1, t2, rtol=1e-6)
        assert_allclose(v2, 9.0 * v1, rtol=1e-6)

    def test_single_grid_point(self, rng):
        X = rng.random((10, 2))
        theta, val = fit_theta_loo(X, rng.standard_normal(10), bracket=(2.0, 2.0), n_grid=1)
        assert theta == 2.0

    def test_grid_minimum_is_refined(self, rng):
        X = sobol_points(2, 30, 2)
        y = np.cos(4 * X.sum(1))
        lo, hi = default_bracket(30, 2)
        theta, val = fit_theta_loo(X, y)
        grid = np.geomspace(lo, hi, 25)
        assert val <= min(GpModel(X, y, t).loo_ise() for t in grid) + 1e-15

    def test_errors(self, rng, monkeypatch):
        with pytest.raises(ValueError):
            fit_theta_loo(rng.random((2, 2)), [0.0, 1.0])

        def singular(self):
            raise FactorizationError("singular")

        monkeypatch.setattr(GpModel, "loo_ise", singular)
        with pytest.raises(FactorizationError, match="every theta"):
            fit_theta_loo(rng.random((5, 2)), rng.standard_normal(5), n_grid=3)


class TestIse:
    def test_loop_oracle(self, rng):
        f = random_polynomial(2, 20, rng=5)
        X = sobol_points(2, 20, 0)
        m = GpModel(X, f(X), 3.0)
        Z = rng.random((15, 2))
        ref = 0.0
        for z in Z:
            ref += (f(z[None])[0] - m.predict(z[None])[0]) ** 2
        assert ise_hat(m, f, Z) == pytest.approx(ref / 15, rel=1e-14)
        assert ise_hat(m, f, Z) >= 0
        w = rng.random(15)
        assert_allclose(ise_hat(m, f, Z, w), w @ (f(Z) - m.predict(Z)) ** 2, rtol=1e-14)

    def test_design_points_give_zero(self, rng):
        f = random_polynomial(2, 10, rng=2)
        X = rng.random((12, 2))
        m = GpModel(X, f(X), 3.0)
        assert ise_hat(m, f, X[:5]) < 1e-20

    def test_degenerate_reference(self, rng):
        X = rng.random((10, 2))
        m = GpModel(X, rng.standard_normal(10), 3.0)
        ref = ise_reference(m, m.predict, rng.random((50, 2)))
        rep = IseReport(ref)
        rep.add("a", 0.3)
        assert rep.degenerate
        assert np.isnan(rep.rho["a"])

    def test_relative_error(self):
        rep = IseReport(2.0)
        rep.add(("x", True), 1.5)
        assert rep.rho[("x", True)] == -0.25
        assert relative_error(3.0, 2.0) == 0.5
