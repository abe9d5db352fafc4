"""Point sets and random test functions.

Scrambled Sobol' points come from :class:`scipy.stats.qmc.Sobol`. Random
truths are multivariate polynomials in shifted orthonormal Legendre
polynomials with Gaussian coefficients, evaluated after a random affine map
of the input.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .kernels import as_points

MAX_SOBOL_DIM = 20
MAX_LEGENDRE_DEGREE = 12


def sobol_points(d, count, seed=None, scrambled=True, skip=0):
    """First ``count`` points (after ``skip``) of a Sobol' sequence in ``[0,1)^d``.

    The scrambled sequence is fully determined by ``(d, seed)``.
    """
    if not 1 <= d <= MAX_SOBOL_DIM:
        raise ValueError(f"Sobol' points supported for 1 <= d <= {MAX_SOBOL_DIM}, got {d}")
    if count < 0 or skip < 0:
        raise ValueError("count and skip must be nonnegative")
    engine = qmc.Sobol(d, scramble=scrambled, seed=seed)
    with warnings.catch_warnings():
        # balance properties of non powers of two are not our concern here
        warnings.simplefilter("ignore", UserWarning)
        if skip:
            engine.fast_forward(skip)
        return engine.random(count) if count else np.zeros((0, d))


class SobolStream:
    """Cursor over one Sobol' sequence; ``take`` returns consecutive blocks."""

    def __init__(self, d, seed=None, scrambled=True, cursor=0):
        self.d, self.seed, self.scrambled, self.cursor = d, seed, scrambled, cursor

    def take(self, count):
        pts = sobol_points(self.d, count, self.seed, self.scrambled, skip=self.cursor)
        self.cursor += count
        return pts

    def clone(self, cursor=None):
        return SobolStream(self.d, self.seed, self.scrambled,
                           self.cursor if cursor is None else cursor)


def legendre_table(p, x):
    """Shifted orthonormal Legendre polynomials ``P_0..P_p`` at ``x``.

    Returns an array of shape ``x.shape + (p + 1,)``. Arguments outside
    ``[0, 1]`` are evaluated by polynomial extension.
    """
    if not 0 <= p <= MAX_LEGENDRE_DEGREE:
        raise ValueError(f"Legendre degree must be in [0, {MAX_LEGENDRE_DEGREE}], got {p}")
    t = 2.0 * np.asarray(x, dtype=float) - 1.0
    out = np.empty(t.shape + (p + 1,))
    out[..., 0] = 1.0
    if p >= 1:
        out[..., 1] = t
    for i in range(1, p):
        out[..., i + 1] = ((2 * i + 1) * t * out[..., i] - i * out[..., i - 1]) / (i + 1)
    out *= np.sqrt(2.0 * np.arange(p + 1) + 1.0)
    return out


def legendre(i, x):
    """Degree-``i`` Legendre polynomial, orthonormal for the uniform measure on [0, 1]."""
    return legendre_table(i, x)[..., i]


def lambda_schedule(gamma=2.0, tau=1.0):
    """``lambda_i = 1 / ((i + 1)**gamma * tau**i)``."""
    return lambda i: 1.0 / ((i + 1.0) ** gamma * tau**i)


def _weight(ell, lam):
    # product over sorted indices so that permuted multi-indices tie exactly
    return math.prod(lam(i) for i in sorted(ell))


def build_index_set(d, N, p, p_T, lam=None, rtol=1e-12):
    """Multi-indices with the largest weights ``Lambda_l = prod_i lambda_{l_i}``.

    Candidates satisfy ``l_i <= p`` and ``sum(l) <= p_T``. They are taken in
    decreasing ``Lambda`` order until at least ``N`` are kept and the next one
    has a strictly smaller weight (ties within ``rtol`` stay together).
    Returns ``(indices, weights)`` with ``indices`` of shape ``(M, d)``.

    ``lam`` must be decreasing in its argument, which makes a best-first
    search over the lattice enumerate candidates in the right order without
    listing all of them.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if p < 0 or p_T < 0:
        raise ValueError("infeasible degree constraints: empty index set")
    lam = lambda_schedule() if lam is None else lam
    start = (0,) * d
    heap = [(-_weight(start, lam), start)]
    seen = {start}
    kept, weights = [], []
    while heap:
        negw, ell = heapq.heappop(heap)
        w = -negw
        if len(kept) >= N and w < weights[-1] * (1.0 - rtol):
            break
        kept.append(ell)
        weights.append(w)
        for i in range(d):
            nxt = ell[:i] + (ell[i] + 1,) + ell[i + 1:]
            if nxt[i] <= p and sum(nxt) <= p_T and nxt not in seen:
                seen.add(nxt)
                heapq.heappush(heap, (-_weight(nxt, lam), nxt))
    return np.array(kept, dtype=int).reshape(-1, d), np.array(weights)


def random_rotation(d, rng):
    """Random orthogonal ``d x d`` matrix built by Householder recursion.

    The 2-d base case is a rotation by a uniform angle with the second row
    multiplied by a random sign, ``[[cos t, -sin t], [a sin t, a cos t]]``
    (the minus sign is what makes it orthogonal). Each further dimension
    left-multiplies the block-embedded lower-dimensional matrix by the
    reflection mapping ``e_1`` to a uniform unit vector.
    """
    if d < 2:
        raise ValueError("rotations need d >= 2")
    rng = np.random.default_rng(rng)
    t = rng.uniform(0.0, 2.0 * np.pi)
    a = 1.0 if rng.random() < 0.5 else -1.0
    Q = np.array([[np.cos(t), -np.sin(t)], [a * np.sin(t), a * np.cos(t)]])
    for k in range(3, d + 1):
        v = rng.standard_normal(k)
        u = v / np.linalg.norm(v)
        h = -u
        h[0] += 1.0
        nh = h @ h
        H = np.eye(k) if nh == 0 else np.eye(k) - 2.0 * np.outer(h, h) / nh
        block = np.eye(k)
        block[1:, 1:] = Q
        Q = H @ block
    return Q


@dataclass
class RandomPolynomial:
    """``f(x) = P(Q (x - 1/2) + 1/2)`` with ``P = sum_l beta_l Psi_l``."""

    indices: np.ndarray
    coefficients: np.ndarray
    variances: np.ndarray
    transform: np.ndarray
    alpha: float = 0.5
    tau: float = 1.0
    rotation: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self):
        return self.indices.shape[1]

    def __call__(self, X):
        return eval_truth(self, X)


def transform_matrix(rotation, alpha):
    """``alpha * Q_R + (1 - alpha) * I``."""
    return alpha * rotation + (1.0 - alpha) * np.eye(rotation.shape[0])


def random_polynomial(d, N, p=7, p_T=25, alpha=0.5, gamma=2.0, rng=None):
    """Draw a random polynomial truth.

    ``tau`` is the largest absolute row sum of the transform matrix, and
    ``lambda_i = 1 / ((i + 1)**gamma tau**i)`` damps high degrees to account
    for transformed points leaving the unit cube.
    """
    rng = np.random.default_rng(rng)
    if d >= 2:
        R = random_rotation(d, rng)
    else:
        R = np.eye(1)
    Q = transform_matrix(R, alpha)
    tau = float(np.max(np.abs(Q).sum(axis=1)))
    idx, lam_w = build_index_set(d, N, p, p_T, lambda_schedule(gamma, tau))
    beta = rng.standard_normal(len(lam_w)) * np.sqrt(lam_w)
    return RandomPolynomial(idx, beta, lam_w, Q, alpha, tau, R)


def eval_polynomial(indices, coefficients, X):
    """``sum_l beta_l prod_i P_{l_i}(x_i)`` at the rows of ``X`` (no transform)."""
    X = as_points(X, indices.shape[1])
    if indices.size == 0:
        return np.zeros(X.shape[0])
    tab = legendre_table(int(indices.max()), X)          # (q, d, p+1)
    d = indices.shape[1]
    psi = np.ones((X.shape[0], indices.shape[0]))
    for i in range(d):
        psi *= tab[:, i, indices[:, i]]
    return psi @ coefficients


def eval_truth(poly, X):
    X = as_points(X, poly.dim)
    Y = (X - 0.5) @ poly.transform.T + 0.5
    return eval_polynomial(poly.indices, poly.coefficients, Y)
