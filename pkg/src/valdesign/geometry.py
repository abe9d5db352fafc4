"""Covering and packing radii of designs in the unit cube."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .kernels import as_points
from .testbed import sobol_points

DEFAULT_PROBE_LOG2 = 16


def packing_radius(design):
    """Half the smallest pairwise distance."""
    X = as_points(design)
    if X.shape[0] < 2:
        raise ValueError("packing radius needs at least 2 points")
    return 0.5 * float(pdist(X).min())


def factorial_grid(d, levels=3):
    """Full factorial design with ``levels`` equispaced levels in ``[0, 1]``."""
    axis = np.linspace(0.0, 1.0, levels)
    return np.array(list(itertools.product(axis, repeat=d)))


def default_probes(d, count=1 << DEFAULT_PROBE_LOG2, seed=12345):
    """Scrambled Sobol' points completed by the ``3^d`` factorial design."""
    return np.vstack([sobol_points(d, count, seed), factorial_grid(d)])


def covering_radius_approx(design, probes=None):
    """Largest distance from a probe point to its nearest design point.

    This is a lower bound on the covering radius over the whole cube, and is
    exact when the probes contain the farthest point.
    """
    X = as_points(design)
    if X.shape[0] == 0:
        raise ValueError("covering radius of an empty design")
    P = default_probes(X.shape[1]) if probes is None else as_points(probes, X.shape[1])
    if P.shape[0] == 0:
        raise ValueError("empty probe set")
    dist, _ = cKDTree(X).query(P, k=1)
    return float(dist.max())


@dataclass
class SpaceFillingReport:
    size: int
    dim: int
    covering_radius: float
    packing_radius: float
    probe_count: int

    @property
    def cr_renormalized(self):
        return self.size ** (1.0 / self.dim) * self.covering_radius

    @property
    def pr_renormalized(self):
        return self.size ** (1.0 / self.dim) * self.packing_radius


def space_filling(design, probes=None):
    X = as_points(design)
    P = default_probes(X.shape[1]) if probes is None else as_points(probes, X.shape[1])
    pr = packing_radius(X) if X.shape[0] >= 2 else float("nan")
    return SpaceFillingReport(X.shape[0], X.shape[1], covering_radius_approx(X, P), pr,
                              P.shape[0])
