"""Kriging predictor, IMSE and ISE criteria, and LOO estimation of theta."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize_scalar

from .kernels import ConditionalKernel, FactorizationError, as_points, matern32

log = logging.getLogger(__name__)


class GpModel:
    """Interpolating GP predictor (unit process variance).

    With ``center=True`` (the default) the empirical mean of ``y`` is removed
    before kriging and added back to predictions; ``center=False`` gives the
    zero-mean model.
    """

    def __init__(self, X, y, theta, form="product", center=True, kernel=None):
        self.kernel = matern32(as_points(X).shape[1], theta, form) if kernel is None else kernel
        self.cond = ConditionalKernel(self.kernel, X)
        self.X = self.cond.design
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.y.shape[0] != self.X.shape[0]:
            raise ValueError("X and y have different lengths")
        self.center = center
        self.mean = float(self.y.mean()) if center and self.y.size else 0.0
        self.y_centered = self.y - self.mean
        self.alpha = self.cond.solve(self.y_centered) if self.y.size else np.zeros(0)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def theta(self):
        return self.kernel.theta

    def predict(self, X):
        X = as_points(X, self.kernel.dim)
        if self.n == 0:
            return np.full(X.shape[0], self.mean)
        return self.kernel(X, self.X) @ self.alpha + self.mean

    def posterior_variance(self, X):
        return self.cond.diag(X)

    def imse_hat(self, Z, weights=None):
        """``mean_i K|n(z_i, z_i)``, or ``sum_i w_i K|n(z_i, z_i)``; no clamping."""
        v = self.posterior_variance(Z)
        if weights is None:
            return float(v.mean()) if v.size else 0.0
        weights = np.asarray(weights, dtype=float)
        if weights.shape != v.shape:
            raise ValueError(f"{v.size} points but {weights.size} weights")
        return float(weights @ v)

    def loo_ise(self):
        """Mean squared LOO residual, computed without refitting.

        Uses ``y_i - eta_{-i}(x_i) = {K^{-1} y}_i / {K^{-1}}_{ii}`` on the
        centered data, with the centering computed once from all ``n`` points.
        """
        if self.n < 2:
            raise ValueError("LOO needs at least 2 points")
        Kinv = cho_solve((self.cond.chol, True), np.eye(self.n))
        resid = self.alpha / np.diag(Kinv)
        return float(resid @ resid / self.n)


def loo_ise(model):
    return model.loo_ise()


def default_bracket(n, d):
    base = n ** (1.0 / d)
    return 0.1 * base, 10.0 * base


def fit_theta_loo(X, y, bracket=None, n_grid=25, form="product", rtol=1e-3):
    """Theta minimizing the LOO criterion.

    A log-spaced grid over ``bracket`` (default ``[0.1, 10] * n**(1/d)``) is
    refined by golden-section search on ``log theta`` around the best grid
    point. Grid points where ``K_n`` cannot be factorized are skipped.
    Returns ``(theta, loo_value)``.
    """
    X = as_points(X)
    n, d = X.shape
    if n < 3:
        raise ValueError("fitting theta by LOO needs at least 3 points")
    lo, hi = default_bracket(n, d) if bracket is None else bracket
    grid = np.array([lo]) if n_grid == 1 or lo == hi else np.geomspace(lo, hi, n_grid)

    def crit(log_theta):
        try:
            return GpModel(X, y, math.exp(log_theta), form).loo_ise()
        except (FactorizationError, np.linalg.LinAlgError):
            return np.inf

    logs = np.log(grid)
    vals = np.array([crit(t) for t in logs])
    if not np.any(np.isfinite(vals)):
        raise FactorizationError("K_n is singular for every theta on the grid")
    i = int(np.argmin(vals))
    if 0 < i < len(grid) - 1 and np.isfinite(vals[i - 1]) and np.isfinite(vals[i + 1]):
        res = minimize_scalar(crit, bracket=(logs[i - 1], logs[i], logs[i + 1]),
                              method="golden", tol=rtol)
        if res.fun <= vals[i]:
            return float(math.exp(res.x)), float(res.fun)
    return float(grid[i]), float(vals[i])


def ise_reference(model, truth, points):
    """Discrete approximation of the ISE: mean squared error over ``points``."""
    err = model.predict(points) - truth(points)
    return float(np.mean(err**2))


def ise_hat(model, truth, Z, weights=None):
    """ISE estimate on a validation design, unweighted or weighted."""
    err2 = (model.predict(Z) - truth(Z)) ** 2
    if weights is None:
        return float(err2.mean())
    return float(np.asarray(weights, float) @ err2)


def relative_error(estimate, reference):
    """``(estimate - reference) / reference``; NaN when the reference is 0."""
    if reference == 0:
        return float("nan")
    return (estimate - reference) / reference


@dataclass
class IseReport:
    """ISE reference value and its estimates for one model and one truth."""

    ise_ref: float
    estimates: dict = field(default_factory=dict)

    @property
    def degenerate(self):
        return self.ise_ref == 0

    def add(self, name, value):
        self.estimates[name] = float(value)

    @property
    def rho(self):
        return {k: relative_error(v, self.ise_ref) for k, v in self.estimates.items()}
