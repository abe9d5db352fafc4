"""Discrete signed measures, energies, MMD and optimal weights.

``mu`` (the target measure) is represented either by :class:`DiscreteMu`, the
uniform measure on a finite candidate set, or by :class:`UniformMu`, the
uniform measure on ``[0, 1]^d`` with closed-form potentials (product Matérn
kernels only). Anything accepting ``mu`` also accepts a plain
:class:`DiscreteMeasure`.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky

from . import closed_form
from .kernels import (ConditionalKernel, ProductMatern32, SquaredKernel,
                      ValidationKernel, as_points)

log = logging.getLogger(__name__)

#: rows of a Gram matrix with all entries below this are pruned by the free solver
ZERO_ROW_TOL = 1e-12

#: largest number of matrix entries materialized at once by the potential sums
CHUNK_ENTRIES = 1 << 22


class WeightSolveError(np.linalg.LinAlgError):
    """The Gram matrix on a support is singular, so weights cannot be solved."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported signed measure ``sum_i w_i delta_{s_i}``."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        S = as_points(self.support)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if S.shape[0] != w.shape[0]:
            raise ValueError(f"{S.shape[0]} support points but {w.shape[0]} weights")
        object.__setattr__(self, "support", S)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points):
        points = as_points(points)
        k = points.shape[0]
        return cls(points, np.full(k, 1.0 / k) if k else np.zeros(0))

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.support.shape[1]

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def __sub__(self, other):
        if self.size and other.size and self.dim != other.dim:
            raise ValueError("measures live in different dimensions")
        return DiscreteMeasure(np.vstack([self.support, other.support]),
                               np.concatenate([self.weights, -other.weights]))

    def mix(self, other, alpha):
        """``(1 - alpha) * self + alpha * other``."""
        return DiscreteMeasure(np.vstack([self.support, other.support]),
                               np.concatenate([(1 - alpha) * self.weights,
                                               alpha * other.weights]))


def kernel_sum(kernel, X, support, weights):
    """``sum_j w_j C(x, s_j)`` for every row ``x`` of ``X``, in fixed chunks."""
    X = as_points(X, kernel.dim)
    support = as_points(support, kernel.dim)
    out = np.zeros(X.shape[0])
    if support.shape[0] == 0:
        return out
    rows = max(1, CHUNK_ENTRIES // support.shape[0])
    for start in range(0, X.shape[0], rows):
        out[start:start + rows] = kernel(X[start:start + rows], support) @ weights
    return out


class DiscreteMu:
    """Target measure supported on a finite candidate set (uniform by default).

    Potentials on the own support are cached per kernel object, so repeated
    energy and herding calls with the same kernel pay the ``O(Q^2)`` cost once.
    """

    def __init__(self, points, weights=None):
        points = as_points(points)
        if points.shape[0] < 1:
            raise ValueError("a discrete mu needs at least one point")
        if weights is None:
            weights = np.full(points.shape[0], 1.0 / points.shape[0])
        self.measure = DiscreteMeasure(points, weights)
        self.points = self.measure.support
        self.weights = self.measure.weights
        self.dim = self.points.shape[1]
        self._own = weakref.WeakKeyDictionary()

    def __len__(self):
        return self.points.shape[0]

    def _is_own(self, X):
        return X is self.points or (X.shape == self.points.shape
                                    and np.array_equal(X, self.points))

    def potential(self, kernel, X):
        X = as_points(X, kernel.dim)
        if self._is_own(X):
            if kernel not in self._own:
                self._own[kernel] = kernel_sum(kernel, self.points, self.points, self.weights)
            return self._own[kernel].copy()
        return kernel_sum(kernel, X, self.points, self.weights)

    def energy(self, kernel):
        return float(self.weights @ self.potential(kernel, self.points))


class UniformMu:
    """Uniform measure on ``[0, 1]^d`` with closed-form potentials.

    Supported kernels: :class:`ProductMatern32`, its square, a conditional
    kernel built on it, and the validation kernel built on the latter.
    """

    def __init__(self, dim):
        self.dim = int(dim)
        self._caches = weakref.WeakKeyDictionary()

    def _cache(self, cond):
        if cond not in self._caches:
            self._caches[cond] = closed_form.SeparableMuCache(cond)
        return self._caches[cond]

    @staticmethod
    def supports(kernel):
        if isinstance(kernel, ValidationKernel):
            kernel = kernel.cond
        if isinstance(kernel, (ConditionalKernel, SquaredKernel)):
            kernel = kernel.base
        return isinstance(kernel, ProductMatern32)

    def _check(self, kernel):
        if kernel.dim != self.dim or not self.supports(kernel):
            raise TypeError(f"no closed form for {kernel!r} in d={self.dim}; "
                            "use DiscreteMu")

    def potential(self, kernel, X):
        self._check(kernel)
        if isinstance(kernel, ValidationKernel):
            return self._cache(kernel.cond).potential_validation(X)
        if isinstance(kernel, ConditionalKernel):
            return self._cache(kernel).potential_conditional(X)
        if isinstance(kernel, SquaredKernel):
            return closed_form.potential_sq_product(kernel.base, X)
        return closed_form.potential_product(kernel, X)

    def energy(self, kernel):
        self._check(kernel)
        if isinstance(kernel, ValidationKernel):
            return float(self._cache(kernel.cond).energy_validation())
        if isinstance(kernel, ConditionalKernel):
            return self._cache(kernel).energy_conditional()
        if isinstance(kernel, SquaredKernel):
            return float(closed_form.energy_sq_product(kernel.base))
        return float(closed_form.energy_product(kernel))


def as_mu(mu):
    """Accept a :class:`DiscreteMeasure` wherever a mu representation is expected."""
    if isinstance(mu, DiscreteMeasure):
        return DiscreteMu(mu.support, mu.weights)
    return mu


class MmdSquared(float):
    """Squared MMD clamped at zero; ``raw`` keeps the unclamped value.

    ``clamped`` is true when roundoff drove the raw value below zero.
    """

    def __new__(cls, raw):
        raw = float(raw)
        obj = super().__new__(cls, max(raw, 0.0))
        obj.raw = raw
        obj.clamped = raw < 0.0
        if raw < -1e-9:
            log.warning("squared MMD of %.3e is negative beyond roundoff", raw)
        return obj


def energy(kernel, xi):
    """``sum_ij w_i w_j C(s_i, s_j)``."""
    if xi.size == 0:
        return 0.0
    return float(xi.weights @ kernel_sum(kernel, xi.support, xi.support, xi.weights))


def potential(kernel, xi, X):
    """Potential of ``xi`` (a discrete measure or a mu representation) at ``X``."""
    if isinstance(xi, DiscreteMeasure):
        return kernel_sum(kernel, X, xi.support, xi.weights)
    return xi.potential(kernel, X)


def cross_energy(kernel, xi, nu):
    """``int int C d(xi) d(nu)``; ``nu`` may be a mu representation."""
    if xi.size == 0:
        return 0.0
    return float(xi.weights @ potential(kernel, nu, xi.support))


def mmd_squared(kernel, zeta, mu):
    """``w^T C w - 2 w^T p(mu) + E(mu)`` as an :class:`MmdSquared`."""
    mu = as_mu(mu)
    if zeta.size == 0:
        return MmdSquared(mu.energy(kernel))
    w = zeta.weights
    C = kernel(zeta.support)
    p = mu.potential(kernel, zeta.support)
    return MmdSquared(w @ C @ w - 2.0 * w @ p + mu.energy(kernel))


def directional_derivative(kernel, xi, mu, X):
    """Derivative of ``MMD^2(., mu)`` at ``xi`` towards ``delta_x``, per row of ``X``."""
    mu = as_mu(mu)
    X = as_points(X, kernel.dim)
    return 2.0 * (potential(kernel, xi, X) - mu.potential(kernel, X)
                  - energy(kernel, xi) + cross_energy(kernel, xi, mu))


def strict_cholesky(C, what="support", rtol=1e-13):
    """Cholesky factor without jitter; raises :class:`WeightSolveError` if singular."""
    k = C.shape[0]
    try:
        L = cholesky(C, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise WeightSolveError(f"Gram matrix on the {what} (k={k}) is singular") from exc
    scale = max(float(np.max(np.diag(C))), np.finfo(float).tiny)
    if np.min(np.diag(L)) ** 2 <= rtol * scale:
        raise WeightSolveError(f"Gram matrix on the {what} (k={k}) is numerically singular")
    return L


def optimal_weights_sum1(kernel, support, mu, p_mu=None):
    """Weights summing to one that minimize ``MMD^2`` on a fixed support.

    Raises :class:`WeightSolveError` when the Gram matrix is singular, which
    happens for the validation kernel as soon as the support meets the
    conditioning design; use :func:`optimal_weights_free` there.
    """
    S = as_points(support, kernel.dim)
    if S.shape[0] == 0:
        raise ValueError("empty support")
    p = as_mu(mu).potential(kernel, S) if p_mu is None else np.asarray(p_mu, float)
    L = strict_cholesky(kernel(S), "support (use the free weights for conditional kernels)")
    a = cho_solve((L, True), np.ones(S.shape[0]))
    b = cho_solve((L, True), p)
    return b - a * (b.sum() - 1.0) / a.sum()


def optimal_weights_free(kernel, support, mu, p_mu=None, return_pruned=False):
    """Unconstrained MMD-optimal weights ``C^{-1} p(mu)``.

    Support points whose Gram row vanishes (points of the conditioning design
    under a conditional kernel) carry no information; they get weight 0 and
    are reported in the optional ``pruned`` mask.
    """
    S = as_points(support, kernel.dim)
    k = S.shape[0]
    p = as_mu(mu).potential(kernel, S) if p_mu is None else np.asarray(p_mu, float)
    w = np.zeros(k)
    pruned = np.zeros(k, dtype=bool)
    if k:
        C = kernel(S)
        pruned = np.max(np.abs(C), axis=1) < ZERO_ROW_TOL
        keep = ~pruned
        if keep.any():
            L = strict_cholesky(C[np.ix_(keep, keep)], "pruned support")
            w[keep] = cho_solve((L, True), p[keep])
    if return_pruned:
        return w, pruned
    return w
