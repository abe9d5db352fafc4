"""Sequential design construction by kernel herding and its variants.

Variants
--------
``kh``
    Plain kernel herding with uniform weights ``1/(k + k1)``.
``kh-exclude``
    Plain kernel herding, run until ``m`` selections fall outside a given
    design ``X_n`` (and, optionally, are pairwise distinct).
``mn``
    Minimum-norm variant: the selection uses the weights summing to one that
    minimize the MMD on the current support.
``mn2``
    Same with unconstrained optimal weights. Equivalent to kernel herding
    with the kernel conditioned on the current support, which is how it is
    computed here: the table ``L^{-1} C(support, candidates)`` is extended by
    one row per iteration.

All searches are over a finite candidate set. Ties within ``tie_tol`` go to
the lowest candidate index, so runs are deterministic and nested.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .kernels import Kernel, as_points
from .measures import DiscreteMeasure, WeightSolveError, as_mu

VARIANTS = ("kh", "kh-exclude", "mn", "mn2")


class HerdingCapError(RuntimeError):
    """``kh-exclude`` hit its iteration cap; ``trace`` holds the partial run."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class HerdingMemoryError(MemoryError):
    """The candidate-by-support table would exceed the configured memory cap."""


@dataclass
class HerdingConfig:
    kernel: Kernel
    mu: object
    candidates: np.ndarray
    n_iter: int
    variant: str = "kh"
    initial: np.ndarray | None = None
    exclude: np.ndarray | None = None
    distinct: bool = True
    max_iter: int | None = None
    tie_tol: float = 1e-12
    prune_tol: float = 1e-12
    memory_cap: int = 2 << 30

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        self.candidates = as_points(self.candidates, self.kernel.dim)
        if self.candidates.shape[0] == 0:
            raise ValueError("empty candidate set")
        d = self.kernel.dim
        self.initial = as_points(np.zeros((0, d)) if self.initial is None else self.initial, d)
        if self.exclude is not None:
            self.exclude = as_points(self.exclude, d)
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")
        if self.variant == "kh-exclude" and self.exclude is None:
            raise ValueError("kh-exclude needs the design to exclude")
        self.mu = as_mu(self.mu)


@dataclass
class HerdingTrace:
    """Result of a herding run.

    ``points``/``indices`` list the selections in order (the initial design
    is kept separately). ``mmd2[t]`` is the squared MMD of the measure used
    by the algorithm after ``t + 1`` selections. ``weights[t]`` (MN variants)
    are the optimal weights on ``initial + points[:t+1]``. ``design`` is the
    validation design: the selections themselves, or for ``kh-exclude`` the
    counted ones, with ``design_weights`` their aggregated masses.
    """

    variant: str
    initial: np.ndarray
    points: np.ndarray
    indices: np.ndarray
    mmd2: np.ndarray
    in_design: np.ndarray
    repeated: np.ndarray
    measure: DiscreteMeasure
    design: np.ndarray
    design_weights: np.ndarray
    weights: list = field(default_factory=list)
    total_mass: np.ndarray | None = None
    pruned: np.ndarray | None = None

    @property
    def iterations(self):
        return len(self.indices)


def select_min(objective, tie_tol=1e-12):
    """Index of the minimum; ties within ``tie_tol`` go to the lowest index."""
    best = objective.min()
    return int(np.flatnonzero(objective <= best + tie_tol)[0])


def _coincide(candidates, design):
    if design is None or design.shape[0] == 0:
        return np.zeros(candidates.shape[0], dtype=bool)
    return np.any(cdist(candidates, design, "sqeuclidean") == 0.0, axis=1)


class KHState:
    """Running sums for plain kernel herding over a candidate set.

    ``running[j] = sum_i C(c_j, z_i)`` over the current support, which makes
    each step ``O(Q)`` kernel evaluations.
    """

    def __init__(self, kernel, mu, candidates, initial=None):
        self.kernel = kernel
        self.candidates = as_points(candidates, kernel.dim)
        self.bound = kernel.bind(self.candidates)
        mu = as_mu(mu)
        self.p_mu = mu.potential(kernel, self.candidates)
        self.e_mu = mu.energy(kernel)
        Z0 = as_points(np.zeros((0, kernel.dim)) if initial is None else initial, kernel.dim)
        self.size = Z0.shape[0]
        if self.size:
            self.running = kernel(self.candidates, Z0).sum(axis=1)
            self.gram_sum = float(kernel(Z0).sum())
            self.p_sum = float(mu.potential(kernel, Z0).sum())
        else:
            self.running = np.zeros(self.candidates.shape[0])
            self.gram_sum = 0.0
            self.p_sum = 0.0

    def objective(self):
        """``P_{C,zeta}(c) - P_{C,mu}(c)`` over candidates."""
        if self.size == 0:
            return -self.p_mu
        return self.running / self.size - self.p_mu

    def add(self, j):
        col = self.bound.columns(j)[:, 0]
        self.gram_sum += 2.0 * self.running[j] + col[j]
        self.p_sum += self.p_mu[j]
        self.running += col
        self.size += 1

    def mmd2(self):
        s = self.size
        return self.gram_sum / s**2 - 2.0 * self.p_sum / s + self.e_mu


def kh_step(state, tie_tol=1e-12):
    """One herding iteration: pick the minimizer of the objective and add it."""
    j = select_min(state.objective(), tie_tol)
    state.add(j)
    return j


def _uniform_measure(initial, points):
    return DiscreteMeasure.uniform(np.vstack([initial, points]))


def run_kh(config):
    """``KH(Z_{k1}, C, k)``: ``k`` iterations of plain kernel herding."""
    cfg = config
    state = KHState(cfg.kernel, cfg.mu, cfg.candidates, cfg.initial)
    idx, mmd2 = [], []
    for _ in range(cfg.n_iter):
        idx.append(kh_step(state, cfg.tie_tol))
        mmd2.append(state.mmd2())
    return _kh_trace(cfg, idx, mmd2)


def _kh_trace(cfg, idx, mmd2, variant="kh"):
    idx = np.array(idx, dtype=int)
    pts = cfg.candidates[idx]
    in_x = _coincide(cfg.candidates, cfg.exclude)[idx]
    repeated = np.array([j in set(idx[:t]) for t, j in enumerate(idx)], dtype=bool)
    measure = _uniform_measure(cfg.initial, pts)
    return HerdingTrace(variant, cfg.initial, pts, idx, np.array(mmd2), in_x, repeated,
                        measure, pts, measure.weights[cfg.initial.shape[0]:])


def run_kh_exclude(config):
    """``KH(Z_{k1}, C, k, m, \\ X_n)``: herd until ``m`` selections avoid ``X_n``.

    ``config.n_iter`` is the target ``m``. Every selection keeps weight
    ``1/k`` in the herding measure; the returned design holds the counted
    points with their aggregated masses, so its total mass is at most one.
    """
    cfg = config
    m = cfg.n_iter
    cap = 50 * m if cfg.max_iter is None else cfg.max_iter
    excluded = _coincide(cfg.candidates, cfg.exclude)
    state = KHState(cfg.kernel, cfg.mu, cfg.candidates, cfg.initial)
    idx, mmd2, counted = [], [], []
    chosen = set()
    while len(counted) < m:
        if len(idx) >= cap:
            trace = _exclude_trace(cfg, idx, mmd2, counted)
            raise HerdingCapError(
                f"kh-exclude reached {cap} iterations with {len(counted)} of {m} points", trace)
        j = kh_step(state, cfg.tie_tol)
        idx.append(j)
        mmd2.append(state.mmd2())
        if not excluded[j] and not (cfg.distinct and j in chosen):
            counted.append(j)
        chosen.add(j)
    return _exclude_trace(cfg, idx, mmd2, counted)


def _exclude_trace(cfg, idx, mmd2, counted):
    trace = _kh_trace(cfg, idx, mmd2, "kh-exclude")
    k = len(idx) + cfg.initial.shape[0]
    counted = np.array(counted, dtype=int)
    if cfg.distinct:
        mult = np.array([np.count_nonzero(np.array(idx) == j) for j in counted], dtype=float)
    else:
        mult = np.ones(len(counted))
    trace.design = cfg.candidates[counted]
    trace.design_weights = mult / k if k else mult
    return trace


class _MinNormState:
    """Incremental Cholesky data for the MN and MN2 variants."""

    def __init__(self, cfg, constrained):
        self.cfg = cfg
        self.constrained = constrained
        kernel, C = cfg.kernel, cfg.candidates
        self.Q = C.shape[0]
        rows = cfg.initial.shape[0] + cfg.n_iter
        if rows * self.Q * 8 > cfg.memory_cap:
            raise HerdingMemoryError(
                f"{rows} x {self.Q} table needs {rows * self.Q * 8} bytes, "
                f"cap is {cfg.memory_cap}")
        self.bound = kernel.bind(C)
        self.p_mu = cfg.mu.potential(kernel, C)
        self.e_mu = cfg.mu.energy(kernel)
        self.scale = max(float(np.max(self.bound.diag())), np.finfo(float).tiny)
        self.L = np.zeros((rows, rows))
        self.V = np.zeros((rows, self.Q))   # L^{-1} C(active, candidates)
        self.bp = np.zeros(rows)            # L^{-1} p_mu(active)
        self.b1 = np.zeros(rows)            # L^{-1} 1
        self.Vbp = np.zeros(self.Q)
        self.Vb1 = np.zeros(self.Q)
        self.active = []                    # positions in the support list
        self.support_size = 0
        self.pruned = []

    @property
    def a(self):
        return len(self.active)

    def add(self, col, l, czz, pz):
        """Append a support point given ``C(candidates, z)``, ``L^{-1} C(active, z)``."""
        a = self.a
        pivot2 = czz - l @ l
        pos = self.support_size
        self.support_size += 1
        if pivot2 <= self.cfg.prune_tol * self.scale:
            if self.constrained:
                raise WeightSolveError(
                    "support Gram matrix became singular (a selected point carries no new "
                    "information, e.g. it lies in the conditioning design); the sum-to-one "
                    "minimum-norm variant cannot continue, use mn2")
            self.pruned.append(pos)
            return
        piv = np.sqrt(pivot2)
        self.L[a, :a] = l
        self.L[a, a] = piv
        v = (col - l @ self.V[:a]) / piv
        self.V[a] = v
        self.bp[a] = (pz - l @ self.bp[:a]) / piv
        self.b1[a] = (1.0 - l @ self.b1[:a]) / piv
        self.Vbp += v * self.bp[a]
        self.Vb1 += v * self.b1[a]
        self.active.append(pos)

    def lagrange(self):
        a = self.a
        b1 = self.b1[:a]
        return (b1 @ self.bp[:a] - 1.0) / (b1 @ b1)

    def objective(self):
        if self.a == 0:
            return -self.p_mu
        if self.constrained:
            return self.Vbp - self.lagrange() * self.Vb1 - self.p_mu
        return self.Vbp - self.p_mu

    def _u(self):
        a = self.a
        if self.constrained:
            return self.bp[:a] - self.lagrange() * self.b1[:a]
        return self.bp[:a]

    def weights(self):
        a = self.a
        w = np.zeros(self.support_size)
        if a:
            w[self.active] = solve_triangular(self.L[:a, :a], self._u(), lower=True, trans="T")
        return w

    def mmd2(self):
        u = self._u()
        return float(u @ u - 2.0 * u @ self.bp[:self.a] + self.e_mu)


def _run_min_norm(cfg, constrained):
    state = _MinNormState(cfg, constrained)
    kernel, C = cfg.kernel, cfg.candidates
    Z0 = cfg.initial
    if Z0.shape[0]:
        cols0 = kernel(C, Z0)
        G0 = kernel(Z0)
        p0 = cfg.mu.potential(kernel, Z0)
        for i in range(Z0.shape[0]):
            a = state.a
            act = state.active
            l = solve_triangular(state.L[:a, :a], G0[act, i], lower=True) if a else np.zeros(0)
            state.add(cols0[:, i], l, G0[i, i], p0[i])
    idx, mmd2, weights, mass = [], [], [], []
    for _ in range(cfg.n_iter):
        j = select_min(state.objective(), cfg.tie_tol)
        col = state.bound.columns(j)[:, 0]
        state.add(col, state.V[:state.a, j].copy(), col[j], state.p_mu[j])
        idx.append(j)
        mmd2.append(state.mmd2())
        w = state.weights()
        weights.append(w)
        mass.append(w.sum())
    idx = np.array(idx, dtype=int)
    pts = C[idx]
    k1 = Z0.shape[0]
    w_final = weights[-1] if weights else state.weights()
    measure = DiscreteMeasure(np.vstack([Z0, pts]), w_final)
    pruned = np.zeros(state.support_size, dtype=bool)
    pruned[state.pruned] = True
    repeated = np.array([j in set(idx[:t]) for t, j in enumerate(idx)], dtype=bool)
    return HerdingTrace("mn" if constrained else "mn2", Z0, pts, idx, np.array(mmd2),
                        _coincide(C, cfg.exclude)[idx], repeated, measure, pts,
                        w_final[k1:], weights, np.array(mass), pruned)


def run_mn(config):
    """``MN(Z_{k1}, C, k)``: selection with sum-to-one optimal weights."""
    return _run_min_norm(config, constrained=True)


def run_mn2(config):
    """``MN_2(Z_{k1}, C, k)``: selection with unconstrained optimal weights."""
    return _run_min_norm(config, constrained=False)


def run(config):
    """Dispatch on ``config.variant``."""
    return {"kh": run_kh, "kh-exclude": run_kh_exclude,
            "mn": run_mn, "mn2": run_mn2}[config.variant](config)


def herd(kernel, mu, candidates, k, variant="kh", **kwargs):
    """Shortcut for ``run(HerdingConfig(kernel, mu, candidates, k, variant, ...))``."""
    return run(HerdingConfig(kernel, mu, candidates, k, variant, **kwargs))
