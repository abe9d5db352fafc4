"""Closed-form potentials and energies of Matérn 3/2 kernels for uniform mu.

The univariate functions take the kernel *rate* ``r = sqrt(3) * theta``, so
that the univariate kernel reads ``(1 + r|x-x'|) exp(-r|x-x'|)``. Each
exponential is computed once and reused; for large rates the exponentials
underflow to zero, which is the correct limit.

For a product kernel ``K = prod_i K_i`` and ``mu`` uniform on ``[0, 1]^d`` the
potential and the energy of the validation kernel built on ``K|n`` are
assembled from these univariate pieces by :class:`SeparableMuCache`.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import ConditionalKernel, ProductMatern32, as_points


class DomainError(ValueError):
    """Raised when an argument lies outside ``[0, 1]``."""


def _unit(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return x


def _rate(rate):
    rate = float(rate)
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate!r}")
    return rate


# -- univariate primitives -------------------------------------------------

def _S(r, x):
    return (2.0 - (2.0 + r * x) * np.exp(-r * x)) / r


def _T(r, x):
    rx = r * x
    return (5.0 - (5.0 + 6.0 * rx + 2.0 * rx * rx) * np.exp(-2.0 * rx)) / (4.0 * r)


def _B(r, u, v):
    a = r * np.abs(u - v)
    return np.exp(-a) / (6.0 * r) * (15.0 * (1.0 + a) + 6.0 * a**2 + a**3)


def _C(r, u, v):
    return np.exp(-r * (u + v)) / (4.0 * r) * (5.0 + 3.0 * r * (u + v) + 2.0 * r * r * u * v)


def _G(r, u, v):
    s, p = u + v, u * v
    poly = 21.0 + r * (9.0 + 13.0 * s) + r * r * (6.0 * s + 8.0 * p) + 4.0 * r**3 * p
    return np.exp(-r * (1.0 + s)) / (16.0 * r * r) * poly


def _H(r, u, v):
    s, p = u + v, u * v
    rs = r * s
    poly = (126.0 + 96.0 * rs + 24.0 * rs**2 + 3.0 * rs**3
            + r * r * p * (24.0 + 6.0 * rs + 2.0 * r * r * (u * u + v * v)))
    return np.exp(-rs) / (24.0 * r * r) * poly


def _I(r, u, v):
    a = r * np.abs(u - v)
    poly = 945.0 + 945.0 * a + 420.0 * a**2 + 105.0 * a**3 + 15.0 * a**4 + a**5
    return np.exp(-a) / (120.0 * r * r) * poly


def potential_uniform_1d(rate, x):
    """``int_0^1 K(x, t) dt`` for the univariate kernel."""
    r, x = _rate(rate), _unit(x)
    return _S(r, x) + _S(r, 1.0 - x)


def energy_uniform_1d(rate):
    """``int int K(s, t) ds dt`` over the unit square."""
    r = _rate(rate)
    return 2.0 / r**2 * ((r + 3.0) * np.exp(-r) + 2.0 * r - 3.0)


def potential_sq_uniform_1d(rate, x):
    """``int_0^1 K(x, t)**2 dt``."""
    r, x = _rate(rate), _unit(x)
    return _T(r, x) + _T(r, 1.0 - x)


def energy_sq_uniform_1d(rate):
    """``int int K(s, t)**2 ds dt``."""
    r = _rate(rate)
    return ((2.0 * r * r + 8.0 * r + 9.0) * np.exp(-2.0 * r) + 10.0 * r - 9.0) / (4.0 * r * r)


def beta_1d(rate, u, v):
    """``int_0^1 K(u, t) K(v, t) dt``."""
    r, u, v = _rate(rate), _unit(u, "u"), _unit(v, "v")
    return _B(r, u, v) - _C(r, u, v) - _C(r, 1.0 - u, 1.0 - v)


def gamma_1d(rate, u, v):
    """``int int K(u, t) K(v, s) K(t, s) dt ds``."""
    r, u, v = _rate(rate), _unit(u, "u"), _unit(v, "v")
    return (_G(r, u, 1.0 - v) + _G(r, v, 1.0 - u)
            - _H(r, u, v) - _H(r, 1.0 - u, 1.0 - v) + _I(r, u, v))


# -- separable assembly ----------------------------------------------------

def potential_product(kernel, X):
    """``P_{K,mu}(x)`` for a product Matérn kernel and uniform ``mu``."""
    X = _unit(as_points(X, kernel.dim))
    return np.prod(potential_uniform_1d(kernel.rate, X), axis=1)


def energy_product(kernel):
    return energy_uniform_1d(kernel.rate) ** kernel.dim


def potential_sq_product(kernel, X):
    X = _unit(as_points(X, kernel.dim))
    return np.prod(potential_sq_uniform_1d(kernel.rate, X), axis=1)


def energy_sq_product(kernel):
    return energy_sq_uniform_1d(kernel.rate) ** kernel.dim


def _pairwise(fn, rate, A, B):
    # prod over axes of fn(a_i, b_i), shape (len(A), len(B))
    return np.prod(fn(rate, A[:, None, :], B[None, :, :]), axis=2)


class SeparableMuCache:
    """Everything needed for closed-form ``P_{Kbar|n,mu}`` and ``E_{Kbar|n}(mu)``.

    ``cond`` is a :class:`ConditionalKernel` whose base is a
    :class:`ProductMatern32`. The matrices ``omega`` and ``gamma`` hold the
    products over axes of ``beta_1d`` and ``gamma_1d`` on pairs of design
    points.
    """

    def __init__(self, cond):
        if not isinstance(cond, ConditionalKernel) or not isinstance(cond.base, ProductMatern32):
            raise TypeError("closed forms need a conditional product Matérn 3/2 kernel")
        self.cond = cond
        self.kernel = cond.base
        self.rate = cond.base.rate
        self.dim = cond.dim
        X = _unit(cond.design, "design")
        self.n = X.shape[0]
        self.omega = _pairwise(beta_1d, self.rate, X, X)
        self.gamma = _pairwise(gamma_1d, self.rate, X, X)
        self.energy_sq = energy_sq_product(self.kernel)
        self.energy = energy_product(self.kernel)
        # tr(K_n^{-1} Omega) and K_n^{-1} Omega K_n^{-1} through triangular solves
        if self.n:
            L = cond.chol
            M = solve_triangular(L, self.omega, lower=True)
            self._LiOLt = solve_triangular(L, M.T, lower=True)  # L^{-1} Omega L^{-T}
            N = solve_triangular(L, self.gamma, lower=True)
            self._LiGLt = solve_triangular(L, N.T, lower=True)  # L^{-1} Gamma L^{-T}
        else:
            self._LiOLt = np.zeros((0, 0))
            self._LiGLt = np.zeros((0, 0))
        self.trace_omega = float(np.trace(self._LiOLt))
        self.trace_gamma = float(np.trace(self._LiGLt))

    def omega_vector(self, X):
        """``omega_{K,n}(x)`` for each row of ``X``, shape ``(q, n)``."""
        X = _unit(as_points(X, self.dim))
        return _pairwise(beta_1d, self.rate, X, self.cond.design)

    def potential_conditional(self, X):
        """``P_{K|n,mu}(x) = P_{K,mu}(x) - k_n(x)^T K_n^{-1} p_{K,n}(mu)``."""
        X = as_points(X, self.dim)
        p = potential_product(self.kernel, X)
        if self.n == 0:
            return p
        pn = potential_product(self.kernel, self.cond.design)
        F = self.cond.features(X)
        b = solve_triangular(self.cond.chol, pn, lower=True)
        out = p - F @ b
        out[self.cond.on_design(X)] = 0.0
        return out

    def energy_conditional(self):
        if self.n == 0:
            return self.energy
        pn = potential_product(self.kernel, self.cond.design)
        b = solve_triangular(self.cond.chol, pn, lower=True)
        return float(self.energy - b @ b)

    def potential_validation(self, X):
        """Closed-form potential of the validation kernel at the rows of ``X``."""
        X = as_points(X, self.dim)
        p2 = potential_sq_product(self.kernel, X)
        if self.n == 0:
            return 2.0 * p2 + 1.0
        F = self.cond.features(X)                       # rows: L^{-1} k_n(x)
        W = solve_triangular(self.cond.chol, self.omega_vector(X).T, lower=True).T
        quad_w = np.einsum("ij,ij->i", F, W)            # k^T K^{-1} omega
        quad_o = np.einsum("ij,jk,ik->i", F, self._LiOLt, F)  # k^T K^{-1} Om K^{-1} k
        var = 1.0 - np.einsum("ij,ij->i", F, F)
        hit = self.cond.on_design(X)
        var[hit] = 0.0
        out = 2.0 * p2 - 4.0 * quad_w + 2.0 * quad_o + var * (1.0 - self.trace_omega)
        out[hit] = 0.0
        return out

    def energy_validation(self):
        """Closed-form energy of the validation kernel for uniform ``mu``.

        The quadratic term integrates ``k_n^T K_n^{-1} Omega K_n^{-1} k_n``,
        which gives ``tr[(K_n^{-1} Omega)^2]``.
        """
        if self.n == 0:
            return 2.0 * self.energy_sq + 1.0
        tr_oo = float(np.sum(self._LiOLt * self._LiOLt.T))
        return (2.0 * self.energy_sq - 4.0 * self.trace_gamma + 2.0 * tr_oo
                + (1.0 - self.trace_omega) ** 2)

    def energy_validation_as_printed(self):
        """Variant with ``tr[(K_n^{-1} Gamma)^2]`` in the quadratic term.

        Kept only so the test suite can show that it disagrees with brute-force
        integration; use :meth:`energy_validation`.
        """
        if self.n == 0:
            return 2.0 * self.energy_sq + 1.0
        tr_gg = float(np.sum(self._LiGLt * self._LiGLt.T))
        return (2.0 * self.energy_sq - 4.0 * self.trace_gamma + 2.0 * tr_gg
                + (1.0 - self.trace_omega) ** 2)


def build_mu_cache(kernel, design):
    """Convenience wrapper: condition ``kernel`` on ``design`` and build the cache."""
    return SeparableMuCache(ConditionalKernel(kernel, design))


def potential_validation_mu(cache, X):
    return cache.potential_validation(X)


def energy_validation_mu(cache):
    return cache.energy_validation()
