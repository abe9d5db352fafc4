"""Desk-scale versions of the two numerical studies.

``delta_experiment``
    Space-filling and IMSE-based comparison of validation designs for a
    herded training design ``X_n`` (isotropic kernel, discrete ``mu_Q``).
``ise_experiment``
    Relative error of ISE estimates for random polynomial truths, comparing
    Sobol', herded and random validation designs, with and without optimal
    weights, against LOO cross validation (product kernel, closed-form mu).
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import geometry
from .gp import GpModel, IseReport, fit_theta_loo, ise_hat, ise_reference
from .herding import herd
from .kernels import ConditionalKernel, ValidationKernel, matern32
from .measures import (DiscreteMeasure, DiscreteMu, UniformMu, mmd_squared,
                       optimal_weights_free)
from .testbed import random_polynomial, sobol_points

log = logging.getLogger(__name__)

DELTA_COLUMNS = ("design", "size", "total_mass", "delta_bar", "delta", "imse_hat",
                 "imse_ref", "cr", "pr", "cr_renorm", "pr_renorm", "iterations")
ISE_COLUMNS = ("d", "replicate", "method", "weighted", "ise_ref", "ise_hat", "rho")
SUMMARY_COLUMNS = ("d", "method", "weighted", "count", "mean_abs_rho", "mean_rho")


def auto_theta(n, d):
    return n ** (1.0 / d)


def _seeds(seed, *key, count=4):
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in key]])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(count)]


@dataclass
class DesignCriteria:
    design: str
    size: int
    total_mass: float
    delta_bar: float
    delta: float
    imse_hat: float
    imse_ref: float
    cr: float
    pr: float
    cr_renorm: float
    pr_renorm: float
    iterations: int

    def row(self):
        return [getattr(self, c) for c in DELTA_COLUMNS]


def design_criteria(name, Z, weights, cond, mu, imse_ref, probes, iterations=None):
    """Criteria of one validation design ``[Z, weights]`` for training design ``cond.design``."""
    Z = np.asarray(Z, float)
    m = Z.shape[0]
    w = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, float)
    V = ValidationKernel(cond)
    zeta = DiscreteMeasure(Z, w)
    dbar = float(np.sqrt(mmd_squared(V, zeta, mu)))
    var = cond.diag(Z)
    imse_w = float(w @ var)
    sf = geometry.space_filling(Z, probes)
    return DesignCriteria(name, m, float(w.sum()), dbar, abs(imse_w - imse_ref), imse_w,
                          imse_ref, sf.covering_radius, sf.packing_radius,
                          sf.cr_renormalized, sf.pr_renormalized,
                          m if iterations is None else iterations)


def imse_reference(cond, points):
    """IMSE of the design behind ``cond``, as a mean over ``points``."""
    return float(cond.diag(points).mean())


def delta_experiment(d=2, n=50, m=50, q=1 << 12, q_ref=1 << 16, seed=0, theta=None,
                     probe_count=1 << 16):
    """Compare validation designs for ``X_n = KH(empty, K, n)``.

    Returns ``(criteria, extras)`` where ``criteria`` is a list of
    :class:`DesignCriteria` (one per design) and ``extras`` holds the designs.
    """
    s_cand, s_sobol, s_ref, s_probe = _seeds(seed, d, n, m)
    theta = auto_theta(n, d) if theta is None else theta
    K = matern32(d, theta, "isotropic")
    cands = sobol_points(d, q, s_cand)
    mu = DiscreteMu(cands)
    Xn = herd(K, mu, cands, n).points
    cond = ConditionalKernel(K, Xn)
    V = ValidationKernel(cond)
    imse_ref = imse_reference(cond, sobol_points(d, q_ref, s_ref))
    probes = np.vstack([sobol_points(d, probe_count, s_probe), geometry.factorial_grid(d)])

    kh = herd(K, mu, cands, m, initial=Xn)
    excl = herd(V, mu, cands, m, "kh-exclude", exclude=Xn)
    mn2 = herd(V, mu, cands, m, "mn2", exclude=Xn)
    S = sobol_points(d, m, s_sobol)

    designs = {
        "xn": (Xn, None, n),
        "kh": (kh.points, None, m),
        "kh+w": (kh.points, optimal_weights_free(V, kh.points, mu), m),
        "kh-exclude": (excl.design, excl.design_weights, excl.iterations),
        "mn2": (mn2.points, mn2.design_weights, m),
        "sobol": (S, None, m),
        "sobol+w": (S, optimal_weights_free(V, S, mu), m),
    }
    out = [design_criteria(name, Z, w, cond, mu, imse_ref, probes, it)
           for name, (Z, w, it) in designs.items()]
    return out, {"xn": Xn, "designs": designs, "theta": theta}


ISE_METHODS = (("sobol", False), ("sobol", True), ("kh", False), ("kh", True),
               ("random", False), ("random", True), ("loo", False))


def ise_replicate(d, j, n=100, m=50, q=1 << 12, q_ref=1 << 16, seed=0, alpha=0.5,
                  p=7, p_T=25):
    """One replicate of the ISE study; returns a list of output rows."""
    s_poly, s_design, s_cand, s_ref = _seeds(seed, d, j)
    rng = np.random.default_rng(s_poly)
    f = random_polynomial(d, n // 2, p, p_T, alpha, rng=rng)
    XS = sobol_points(d, n + m, s_design)
    Xn, S = XS[:n], XS[n:]
    R = rng.random((m, d))
    uniform = UniformMu(d)
    K_sf = matern32(d, auto_theta(n, d), "product")
    Z = herd(K_sf, uniform, sobol_points(d, q, s_cand), m, initial=Xn).points

    y = f(Xn)
    theta, loo = fit_theta_loo(Xn, y)
    model = GpModel(Xn, y, theta, "product")
    report = IseReport(ise_reference(model, f, sobol_points(d, q_ref, s_ref)))
    V = ValidationKernel(model.cond)
    for name, pts in (("sobol", S), ("kh", Z), ("random", R)):
        report.add((name, False), ise_hat(model, f, pts))
        report.add((name, True), ise_hat(model, f, pts, optimal_weights_free(V, pts, uniform)))
    report.add(("loo", False), loo)
    if report.degenerate:
        log.warning("d=%d replicate %d: zero reference ISE, rho undefined", d, j)
    rho = report.rho
    return [[d, j, name, weighted, report.ise_ref, report.estimates[(name, weighted)],
             rho[(name, weighted)]] for name, weighted in ISE_METHODS]


def _replicate_job(args):
    d, j, kw = args
    try:
        return d, j, ise_replicate(d, j, **kw), None
    except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
        return d, j, [], f"{type(exc).__name__}: {exc}"


def ise_experiment(dims=(2, 3), reps=20, jobs=1, **kw):
    """Run ``reps`` replicates per dimension.

    Returns ``(rows, summary, failures)``. Rows are ordered by dimension then
    replicate whatever ``jobs`` is, so the output does not depend on it.
    """
    tasks = [(d, j, kw) for d in dims for j in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_replicate_job, tasks))
    else:
        results = [_replicate_job(t) for t in tasks]
    rows, failures = [], []
    for d, j, r, err in sorted(results, key=lambda t: (t[0], t[1])):
        if err:
            log.warning("d=%d replicate %d failed: %s", d, j, err)
            failures.append({"d": d, "replicate": j, "error": err})
        rows.extend(r)
    return rows, summarize(rows), failures


def summarize(rows):
    """Mean ``|rho|`` and mean ``rho`` per dimension and method."""
    out = []
    keys = sorted({(r[0], r[2], r[3]) for r in rows},
                  key=lambda k: (k[0], [m for m, _ in ISE_METHODS].index(k[1]), k[2]))
    for d, method, weighted in keys:
        rho = np.array([r[6] for r in rows if (r[0], r[2], r[3]) == (d, method, weighted)])
        rho = rho[np.isfinite(rho)]
        out.append([d, method, weighted, rho.size,
                    float(np.mean(np.abs(rho))) if rho.size else float("nan"),
                    float(np.mean(rho)) if rho.size else float("nan")])
    return out
