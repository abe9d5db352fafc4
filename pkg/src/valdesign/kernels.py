"""Matérn 3/2 kernels and the kernels derived from them by conditioning.

All kernels work on arrays of points with shape ``(q, d)`` and return Gram
matrices. The public constructors take the Matérn parameter ``theta`` in the
usual convention

    K(x, x') = (1 + sqrt(3) * theta * r) * exp(-sqrt(3) * theta * r)

and store the *rate* ``sqrt(3) * theta`` internally, which is the parameter
used by the closed-form integrals in :mod:`valdesign.closed_form`.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

SQRT3 = np.sqrt(3.0)

#: jitter levels tried when factorizing a Gram matrix, in units of trace/n
JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8)

#: posterior variances in (-CLAMP_TOL, 0) are reported as 0
CLAMP_TOL = 1e-12


class KernelParameterError(ValueError):
    """Raised for invalid kernel parameters or mismatched dimensions."""


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a Gram matrix cannot be factorized, even with jitter."""


def _check_theta(theta):
    theta = float(theta)
    if not np.isfinite(theta) or theta <= 0:
        raise KernelParameterError(f"theta must be positive, got {theta!r}")
    return theta


def as_points(X, dim=None):
    """Return ``X`` as a float array of shape ``(q, d)``.

    A 1-d input is read as a single point unless ``dim == 1``, in which case
    it is read as ``q`` scalar points.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1) if dim == 1 else X.reshape(1, -1)
    if X.ndim != 2:
        raise KernelParameterError(f"points must be 2-d, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim and X.shape[0] > 0:
        raise KernelParameterError(
            f"dimension mismatch: kernel has d={dim}, points have d={X.shape[1]}")
    if X.shape[0] == 0 and dim is not None:
        X = X.reshape(0, dim)
    return X


def matern32_rate(rate, r):
    """Matérn 3/2 profile ``(1 + rate*r) exp(-rate*r)`` for distances ``r``."""
    s = rate * np.abs(r)
    return (1.0 + s) * np.exp(-s)


def matern32_univariate(theta, x, x_prime):
    """Univariate Matérn 3/2 kernel with parameter ``theta``."""
    theta = _check_theta(theta)
    return matern32_rate(SQRT3 * theta, np.subtract(x, x_prime))


def matern32_isotropic(theta, x, x_prime):
    """Isotropic Matérn 3/2 kernel: the univariate profile of ``||x - x'||``."""
    theta = _check_theta(theta)
    x, x_prime = np.asarray(x, float), np.asarray(x_prime, float)
    if x.shape != x_prime.shape:
        raise KernelParameterError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    return float(matern32_rate(SQRT3 * theta, np.linalg.norm(x - x_prime)))


def matern32_product(theta, x, x_prime):
    """Tensor product of univariate Matérn 3/2 kernels with a shared ``theta``."""
    theta = _check_theta(theta)
    x, x_prime = np.asarray(x, float), np.asarray(x_prime, float)
    if x.shape != x_prime.shape:
        raise KernelParameterError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    return float(np.prod(matern32_rate(SQRT3 * theta, x - x_prime)))


def factorize_gram(K, label="design"):
    """Lower Cholesky factor of ``K`` with jitter escalation.

    Returns ``(L, jitter)`` where ``jitter`` is the absolute value added to the
    diagonal. Raises :class:`FactorizationError` naming ``label`` if every
    jitter level fails.
    """
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = np.trace(K) / n
    for level in JITTER_LEVELS:
        jitter = level * scale
        try:
            L = cholesky(K + jitter * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)) and np.min(np.diag(L)) > 0:
            return L, jitter
    raise FactorizationError(
        f"Gram matrix of {label} (n={n}) is not positive definite after jitter "
        f"{JITTER_LEVELS[-1]:g}*trace/n; check for duplicated points")


class Kernel:
    """Base class. Subclasses implement :meth:`gram` and :meth:`diag`."""

    dim: int

    def __call__(self, X, Y=None):
        return self.gram(X, Y)

    def gram(self, X, Y=None):
        raise NotImplementedError

    def diag(self, X):
        raise NotImplementedError

    def eval(self, x, x_prime):
        """Kernel value for a single pair of points."""
        x = as_points(x, None).reshape(1, -1)
        x_prime = as_points(x_prime, None).reshape(1, -1)
        return float(self.gram(x, x_prime)[0, 0])

    def bind(self, points):
        """Evaluator of ``C(points, .)`` with per-point work cached."""
        return BoundKernel(self, points)


class Matern32(Kernel):
    """Common part of the isotropic and product Matérn 3/2 kernels."""

    stationary = True

    def __init__(self, dim, theta):
        if int(dim) < 1:
            raise KernelParameterError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self.theta = _check_theta(theta)
        self.rate = SQRT3 * self.theta

    def diag(self, X):
        X = as_points(X, self.dim)
        return np.ones(X.shape[0])

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, theta={self.theta:g})"


class IsotropicMatern32(Matern32):
    def gram(self, X, Y=None):
        X = as_points(X, self.dim)
        Y = X if Y is None else as_points(Y, self.dim)
        D = cdist(X, Y)
        D *= self.rate
        G = np.exp(-D)
        D += 1.0
        G *= D
        return G


class ProductMatern32(Matern32):
    def gram(self, X, Y=None):
        X = as_points(X, self.dim)
        Y = X if Y is None else as_points(Y, self.dim)
        # one exp of the summed rate-scaled distances instead of d of them
        E = cdist(X, Y, "cityblock")
        E *= -self.rate
        np.exp(E, out=E)
        for i in range(self.dim):
            s = np.abs(np.subtract.outer(X[:, i], Y[:, i]))
            s *= self.rate
            s += 1.0
            E *= s
        return E


def matern32(dim, theta, form="isotropic"):
    """Build a Matérn 3/2 kernel; ``form`` is ``"isotropic"`` or ``"product"``."""
    if form == "isotropic":
        return IsotropicMatern32(dim, theta)
    if form == "product":
        return ProductMatern32(dim, theta)
    raise KernelParameterError(f"unknown kernel form {form!r}")


class SquaredKernel(Kernel):
    """Pointwise square ``C(x, x')**2`` of a base kernel."""

    def __init__(self, base):
        self.base = base
        self.dim = base.dim

    def gram(self, X, Y=None):
        return self.base.gram(X, Y) ** 2

    def diag(self, X):
        return self.base.diag(X) ** 2


class ConditionalKernel(Kernel):
    """Posterior covariance of a GP with covariance ``base`` given ``design``.

        K|n(x, x') = K(x, x') - k_n(x)^T K_n^{-1} k_n(x')

    The Cholesky factor of ``K_n`` is computed once here. Rows and columns
    belonging to points that coincide exactly with a design point are set to
    zero, so the interpolation property holds without roundoff.
    """

    def __init__(self, base, design):
        self.base = base
        self.dim = base.dim
        self.design = as_points(design, self.dim).copy()
        self.design.setflags(write=False)
        self.n = self.design.shape[0]
        if self.n:
            self.chol, self.jitter = factorize_gram(self.base.gram(self.design))
        else:
            self.chol, self.jitter = np.zeros((0, 0)), 0.0

    def features(self, X):
        """``L^{-1} k_n(X)`` transposed, shape ``(q, n)``."""
        X = as_points(X, self.dim)
        if self.n == 0:
            return np.zeros((X.shape[0], 0))
        kn = self.base.gram(self.design, X)
        return solve_triangular(self.chol, kn, lower=True, check_finite=False).T

    def on_design(self, X):
        """Boolean mask of the rows of ``X`` equal to a design point."""
        X = as_points(X, self.dim)
        if self.n == 0 or X.shape[0] == 0:
            return np.zeros(X.shape[0], dtype=bool)
        return np.any(cdist(X, self.design, "sqeuclidean") == 0.0, axis=1)

    def _combine(self, KXY, FX, FY, hitX, hitY):
        G = KXY - FX @ FY.T
        G[hitX, :] = 0.0
        G[:, hitY] = 0.0
        return G

    def gram(self, X, Y=None):
        X = as_points(X, self.dim)
        FX, hitX = self.features(X), self.on_design(X)
        if Y is None:
            G = self._combine(self.base.gram(X), FX, FX, hitX, hitX)
            d = np.diag(G).copy()
            d[(d < 0) & (d > -CLAMP_TOL)] = 0.0
            np.fill_diagonal(G, d)
            return G
        Y = as_points(Y, self.dim)
        return self._combine(self.base.gram(X, Y), FX, self.features(Y),
                             hitX, self.on_design(Y))

    def diag(self, X):
        X = as_points(X, self.dim)
        FX = self.features(X)
        d = self.base.diag(X) - np.einsum("ij,ij->i", FX, FX)
        d[self.on_design(X)] = 0.0
        d[(d < 0) & (d > -CLAMP_TOL)] = 0.0
        return d

    def solve(self, b):
        """``K_n^{-1} b`` through the stored factor."""
        y = solve_triangular(self.chol, b, lower=True, check_finite=False)
        return solve_triangular(self.chol, y, lower=True, trans="T", check_finite=False)

    def bind(self, points):
        return _BoundConditional(self, points)


class ValidationKernel(Kernel):
    """``2 K|n(x, x')**2 + K|n(x, x) K|n(x', x')`` for a conditional kernel.

    Its MMD between a validation measure and ``mu`` is the mean squared error
    of the corresponding ISE estimator under the GP model.
    """

    def __init__(self, cond):
        if not isinstance(cond, ConditionalKernel):
            raise KernelParameterError("ValidationKernel needs a ConditionalKernel")
        self.cond = cond
        self.dim = cond.dim

    def gram(self, X, Y=None):
        X = as_points(X, self.dim)
        Kc = self.cond.gram(X, Y)
        dX = np.diag(Kc).copy() if Y is None else self.cond.diag(X)
        dY = dX if Y is None else self.cond.diag(Y)
        return 2.0 * Kc**2 + np.outer(dX, dY)

    def diag(self, X):
        return 3.0 * self.cond.diag(X) ** 2

    def bind(self, points):
        return _BoundValidation(self, points)


def conditional_eval(base, design, x, x_prime):
    """One-off ``K|n(x, x')``; builds the factorization of ``K_n`` on each call."""
    return ConditionalKernel(base, design).eval(x, x_prime)


def validation_eval(cond, x, x_prime):
    """One-off value of the validation kernel built on ``cond``."""
    return ValidationKernel(cond).eval(x, x_prime)


class BoundKernel:
    """Columns ``C(points, z)`` of a kernel against a fixed point set."""

    def __init__(self, kernel, points):
        self.kernel = kernel
        self.points = as_points(points, kernel.dim)

    def columns(self, idx):
        """``C(points, points[idx])``, shape ``(q, len(idx))``."""
        return self.kernel.gram(self.points, self.points[np.atleast_1d(idx)])

    def against(self, Z):
        return self.kernel.gram(self.points, Z)

    def diag(self):
        return self.kernel.diag(self.points)


class _BoundConditional(BoundKernel):
    def __init__(self, kernel, points):
        super().__init__(kernel, points)
        self.base = kernel.base.bind(self.points)
        self.F = kernel.features(self.points)
        self.hit = kernel.on_design(self.points)
        self._diag = None

    def columns(self, idx):
        idx = np.atleast_1d(idx)
        G = self.base.columns(idx) - self.F @ self.F[idx].T
        G[self.hit, :] = 0.0
        G[:, self.hit[idx]] = 0.0
        return G

    def diag(self):
        if self._diag is None:
            d = self.base.diag() - np.einsum("ij,ij->i", self.F, self.F)
            d[self.hit] = 0.0
            d[(d < 0) & (d > -CLAMP_TOL)] = 0.0
            self._diag = d
        return self._diag


class _BoundValidation(BoundKernel):
    def __init__(self, kernel, points):
        super().__init__(kernel, points)
        self.cond = kernel.cond.bind(self.points)

    def columns(self, idx):
        idx = np.atleast_1d(idx)
        d = self.cond.diag()
        return 2.0 * self.cond.columns(idx) ** 2 + np.outer(d, d[idx])

    def diag(self):
        return 3.0 * self.cond.diag() ** 2
